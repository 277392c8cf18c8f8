import csv
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
import yaml

from lfim import models
from lfim.cli import main
from lfim.io import read_contour_csv
from lfim.models import GenerativeModel

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


class TwoPoint(GenerativeModel):
    """Normal location model; ``far`` shifts the observed data away from the simulator."""

    name = "two_point"
    param_names = ("mu",)

    def __init__(self, far: float = 0.0, explode_above: float = float("inf")):
        self.far = far
        self.explode_above = explode_above

    def check_theta(self, theta):
        return self._theta(theta)

    def simulate_data(self, theta, size, rng):
        # observed datasets come from here
        return rng.normal(self.check_theta(theta)[0] + self.far, 1.0, size=(size, 1))

    def simulate_summaries(self, theta, size, rng):
        mu = self.check_theta(theta)[0]
        if mu > self.explode_above:
            raise RuntimeError("simulator diverged")
        return rng.normal(mu, 1.0, size=(size, 1))

    def summarize(self, data):
        return np.asarray(data, dtype=float).reshape(-1, 1)


class Scripted(TwoPoint):
    """Deterministic summaries 0..M-1 shifted per grid point; ranks 2 and 5 of 10 at M = 9."""

    name = "scripted"

    def simulate_summaries(self, theta, size, rng):
        shift = 0.5 if self.check_theta(theta)[0] == 0.0 else -1.0
        return (np.arange(size) + shift)[:, None]


@pytest.fixture
def stub_registry(monkeypatch):
    monkeypatch.setitem(models.REGISTRY, "two_point", TwoPoint)
    monkeypatch.setitem(models.REGISTRY, "scripted", Scripted)


def write_yaml(path, doc):
    path.write_text(yaml.safe_dump(doc, sort_keys=False))
    return str(path)


def stub_config(tmp_path, grid=(0.0, 1.0), **model):
    return write_yaml(
        tmp_path / "stub.yaml",
        {
            "seed": 1,
            "model": {"name": "two_point", **model},
            "inference": {"measure": "neg_abs_dev", "M": 9, "grid": {"mu": list(grid)}},
            "observed": {"summary": [0.2]},
            "claims": ["mu > 0.5"],
            "calibrate": {"truth": [0.0], "R": 200, "alphas": [0.1, 0.25, 0.5]},
        },
    )


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


# ---------------------------------------------------------------------------
# contour and downstream commands
# ---------------------------------------------------------------------------

def test_dp_contour_has_201_rows(tmp_path):
    out = tmp_path / "dp.csv"
    assert main(["contour", str(CONFIGS / "dp_bernoulli.yaml"), "-o", str(out), "--seed", "3"]) == 0
    rows = read_csv(out)
    assert rows[0] == ["theta_1", "delta", "pi"] and len(rows) == 202
    t = read_contour_csv(out)
    assert t.pi.max() == 1.0 and np.all(t.delta >= 1 / 1001)


def test_stub_contour(tmp_path, stub_registry):
    out = tmp_path / "c.csv"
    assert main(["contour", stub_config(tmp_path), "-o", str(out)]) == 0
    t = read_contour_csv(out)
    assert t.points[:, 0].tolist() == [0.0, 1.0]
    assert t.meta["model"] == "two_point" and t.meta["measure"]["name"] == "neg_abs_dev"


def test_two_point_normalization_example(tmp_path, stub_registry):
    doc = yaml.safe_load(open(stub_config(tmp_path)).read())
    doc["model"] = {"name": "scripted"}
    doc["observed"] = {"summary": [0.0]}
    out = tmp_path / "c.csv"
    assert main(["contour", write_yaml(tmp_path / "s.yaml", doc), "-o", str(out)]) == 0
    assert read_csv(out)[1:] == [["0.0", "0.2", "0.4"], ["1.0", "0.5", "1.0"]]


def test_rerun_is_byte_identical_and_thread_free(tmp_path):
    cfg = str(CONFIGS / "correlation.yaml")
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["contour", cfg, "-o", str(a)]) == 0
    assert main(["--threads", "4", "contour", cfg, "-o", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_seed_override_changes_output(tmp_path):
    cfg = str(CONFIGS / "correlation.yaml")
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    main(["contour", cfg, "-o", str(a)])
    main(["contour", cfg, "-o", str(b), "--seed", "99"])
    assert a.read_bytes() != b.read_bytes()
    assert json.loads((tmp_path / "b.csv.meta.json").read_text())["master_seed"] == 99


@pytest.fixture(scope="module")
def corr_contour(tmp_path_factory):
    out = tmp_path_factory.mktemp("corr") / "corr.csv"
    assert main(["contour", str(CONFIGS / "correlation.yaml"), "-o", str(out)]) == 0
    return out


def test_levelset(tmp_path, corr_contour):
    out = tmp_path / "ls.csv"
    assert main(["levelset", str(CONFIGS / "correlation.yaml"), "--contour", str(corr_contour), "-o", str(out), "--alpha", "0.1"]) == 0
    rows = read_csv(out)
    assert rows[0] == ["alpha", "theta_1"]
    t = read_contour_csv(corr_contour)
    assert len(rows) - 1 == int((t.pi > 0.1).sum())
    assert all(r[0] == "0.1" for r in rows[1:])


def test_levelset_default_alphas(tmp_path, corr_contour):
    out = tmp_path / "ls.csv"
    assert main(["levelset", str(CONFIGS / "correlation.yaml"), "--contour", str(corr_contour), "-o", str(out)]) == 0
    assert {r[0] for r in read_csv(out)[1:]} == {"0.05", "0.1", "0.2"}


def test_claims_output(tmp_path, corr_contour):
    out = tmp_path / "claims.json"
    assert main(["claims", str(CONFIGS / "correlation.yaml"), "--contour", str(corr_contour), "-o", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert [d["label"] for d in doc] == ["rho < 0", "strong"]
    for d in doc:
        assert 0 <= d["belief"] <= d["plausibility"] <= 1 and d["undefined_points"] == 0


def test_marginal_output(tmp_path, corr_contour):
    out = tmp_path / "m.csv"
    assert main(["marginal", str(CONFIGS / "correlation.yaml"), "--contour", str(corr_contour), "-o", str(out)]) == 0
    rows = read_csv(out)
    assert rows[0] == ["feature", "bin_low", "bin_high", "center", "pi"]
    t = read_contour_csv(corr_contour)
    assert [float(r[4]) for r in rows[1:]] == t.pi.tolist()


def test_gk_ratio_marginal_has_missing_bins(tmp_path):
    doc = yaml.safe_load((CONFIGS / "gk.yaml").read_text())
    doc["inference"]["M"] = 10
    doc["observed"]["data"] = str(CONFIGS / "data" / "gk_n100.csv")
    cfg = write_yaml(tmp_path / "gk.yaml", doc)
    c = tmp_path / "gk.csv"
    assert main(["contour", cfg, "-o", str(c)]) == 0
    out = tmp_path / "m.csv"
    assert main(["marginal", cfg, "--contour", str(c), "-o", str(out)]) == 0
    rows = read_csv(out)[1:]
    assert {r[0] for r in rows} == {"g", "k", "g/k"}
    ratio = [r for r in rows if r[0] == "g/k"]
    assert len(ratio) == 40 and all(r[4] == "" or 0 < float(r[4]) <= 1 for r in ratio)
    claims = tmp_path / "cl.json"
    assert main(["claims", cfg, "--contour", str(c), "-o", str(claims)]) == 0
    c3 = json.loads(claims.read_text())[2]
    assert c3["label"] == "C3" and c3["undefined_points"] == 21


def test_claims_on_two_point_table(tmp_path):
    cfg = write_yaml(
        tmp_path / "c.yaml",
        {
            "seed": 0,
            "model": {"name": "correlation", "n": 30},
            "inference": {"measure": "tukey", "M": 5, "grid": {"rho": [0.0, 0.5]}},
            "claims": ["rho < 0.25"],
        },
    )
    contour = tmp_path / "t.csv"
    contour.write_text("theta_1,delta,pi\n0.0,0.5,1.0\n0.5,0.4,0.8\n")
    out = tmp_path / "o.json"
    assert main(["claims", cfg, "--contour", str(contour), "-o", str(out)]) == 0
    (doc,) = json.loads(out.read_text())
    assert doc["plausibility"] == 1.0 and doc["belief"] == pytest.approx(0.2)


def test_sweep_belief_nonincreasing(tmp_path):
    doc = yaml.safe_load((CONFIGS / "ising_4x4.yaml").read_text())
    doc["inference"]["M"] = 40
    doc["observed"]["data"] = str(CONFIGS / "data" / "ising_4x4.txt")
    cfg = write_yaml(tmp_path / "i.yaml", doc)
    c = tmp_path / "c.csv"
    assert main(["contour", cfg, "-o", str(c)]) == 0
    out = tmp_path / "cl.json"
    assert main(["claims", cfg, "--contour", str(c), "-o", str(out)]) == 0
    bel = [d["belief"] for d in json.loads(out.read_text())]
    assert len(bel) == 26
    assert all(b <= a for a, b in zip(bel, bel[1:]))
    # brute force: belief of beta > gamma is 1 - max pi over beta <= gamma
    t = read_contour_csv(c)
    for gamma, b in zip(np.round(np.arange(0, 0.501, 0.02), 2), bel):
        low = t.pi[t.points[:, 0] <= gamma]
        assert b == (1.0 - low.max() if low.size else 1.0)


def test_odds_ratio_relabel(tmp_path):
    doc = yaml.safe_load((CONFIGS / "ising_4x4.yaml").read_text())
    doc["inference"]["M"] = 10
    doc["observed"]["data"] = str(CONFIGS / "data" / "ising_4x4.txt")
    cfg = write_yaml(tmp_path / "i.yaml", doc)
    c = tmp_path / "c.csv"
    assert main(["contour", cfg, "-o", str(c)]) == 0
    out = tmp_path / "m.csv"
    assert main(["marginal", cfg, "--contour", str(c), "-o", str(out)]) == 0
    rows = read_csv(out)[1:]
    t = read_contour_csv(c)
    assert [float(r[3]) for r in rows] == pytest.approx(np.exp(4 * t.points[:, 0]).tolist(), rel=1e-12)
    assert [float(r[4]) for r in rows] == t.pi.tolist()


def test_correlation_smoke_calibration_passes(tmp_path):
    doc = yaml.safe_load((CONFIGS / "correlation.yaml").read_text())
    assert doc["calibrate"]["R"] == 300 and doc["inference"]["M"] == 50
    doc["observed"]["data"] = str(CONFIGS / "data" / "correlation_n30.csv")
    out = tmp_path / "rep.json"
    assert main(["--threads", "2", "calibrate", write_yaml(tmp_path / "c.yaml", doc), "-o", str(out)]) == 0
    assert json.loads(out.read_text())["verdict"] == "pass"


def test_models_list(capsys):
    assert main(["models", "list"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert [l.split("\t")[0] for l in lines] == ["correlation", "dp_bernoulli", "gk", "ising"]
    assert "params=g,k" in lines[2] or "params=" in lines[2]


# ---------------------------------------------------------------------------
# calibrate and exit codes
# ---------------------------------------------------------------------------

def test_calibrate_pass(tmp_path, stub_registry):
    out = tmp_path / "rep.json"
    assert main(["calibrate", stub_config(tmp_path), "-o", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["verdict"] == "pass"
    assert len(doc["measures"]["neg_abs_dev"]["pi_at_truth"]) == 200


def test_calibrate_fail_exit_3(tmp_path, stub_registry, capsys):
    out = tmp_path / "rep.json"
    assert main(["calibrate", stub_config(tmp_path, grid=(0.0, 1.0, 2.0, 3.0, 4.0, 5.0), far=4.0), "-o", str(out)]) == 3
    assert json.loads(out.read_text())["verdict"] == "fail"
    assert "verdict: fail" in capsys.readouterr().err


def test_runtime_error_exit_2(tmp_path, stub_registry, capsys):
    cfg = stub_config(tmp_path, explode_above=0.5)
    assert main(["--error-json", "contour", cfg, "-o", str(tmp_path / "c.csv")]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["exit_code"] == 2 and err["grid_index"] == 1 and "diverged" in err["message"]


def test_config_error_exit_1(tmp_path, capsys):
    cfg = write_yaml(tmp_path / "bad.yaml", {"seed": 1, "model": {"name": "nope"}, "inference": {}})
    assert main(["contour", cfg, "-o", str(tmp_path / "x.csv"), "--error-json"]) == 1
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "config" and err["key"] == "model.name"


def test_missing_config_key(tmp_path, capsys):
    doc = yaml.safe_load((CONFIGS / "correlation.yaml").read_text())
    del doc["inference"]["M"]
    cfg = write_yaml(tmp_path / "c.yaml", doc)
    assert main(["contour", cfg, "-o", str(tmp_path / "x.csv")]) == 1
    assert "inference.M" in capsys.readouterr().err


def test_malformed_contour_exit_1(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("theta_1,delta,pi\n0.0,0.5,1.0\n0.1,0.5\n")
    rc = main(["levelset", str(CONFIGS / "correlation.yaml"), "--contour", str(bad), "-o", str(tmp_path / "o.csv"), "--error-json"])
    assert rc == 1
    err = json.loads(capsys.readouterr().err)
    assert err["row"] == 3 and err["error"] == "format"


def test_bad_threads(tmp_path):
    assert main(["--threads", "0", "contour", str(CONFIGS / "correlation.yaml"), "-o", str(tmp_path / "x.csv")]) == 1


def test_console_entry_point(tmp_path):
    out = tmp_path / "c.csv"
    res = subprocess.run(
        [sys.executable, "-m", "lfim.cli", "contour", str(CONFIGS / "correlation.yaml"), "-o", str(out)],
        capture_output=True, text=True,
    )
    assert res.returncode == 0, res.stderr
    assert len(read_csv(out)) == 192


# ---------------------------------------------------------------------------
# shipped configs at smoke scale
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("name", sorted(p.name for p in CONFIGS.glob("*.yaml")))
def test_shipped_config_smoke(tmp_path, name):
    doc = yaml.safe_load((CONFIGS / name).read_text())
    doc["inference"]["M"] = 6
    for key in ("data",):
        if key in doc.get("observed", {}):
            doc["observed"][key] = str(CONFIGS / doc["observed"][key])
    adj = doc["model"].get("adjacency", "")
    if adj and not adj.startswith("lattice:"):
        doc["model"]["adjacency"] = str(CONFIGS / adj)
    if "calibrate" in doc:
        doc["calibrate"]["R"] = 2
        if doc["calibrate"].get("abc"):
            doc["calibrate"]["abc"]["draws"] = 500
    cfg = write_yaml(tmp_path / name, doc)
    c = tmp_path / "c.csv"
    assert main(["contour", cfg, "-o", str(c)]) == 0
    measures = doc["inference"].get("measures")
    contour = tmp_path / f"c.{measures[0]['name']}.csv" if measures else c
    for cmd, key in (("levelset", "levelset"), ("marginal", "marginal"), ("claims", "claims")):
        if key in doc or cmd == "levelset":
            assert main([cmd, cfg, "--contour", str(contour), "-o", str(tmp_path / f"{cmd}.out")]) == 0
    if "calibrate" in doc:
        assert main(["calibrate", cfg, "-o", str(tmp_path / "rep.json")]) in (0, 3)
        assert json.loads((tmp_path / "rep.json").read_text())["verdict"] in ("pass", "fail")
