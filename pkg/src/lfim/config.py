"""YAML experiment configs.

Everything is validated up front, before any simulation runs, and each
error names the offending key (dotted path).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .calibration import DEFAULT_ALPHAS, MarginalSpec, PlanError, ReplicationPlan
from .claims import ClaimExpression, ClaimSyntaxError, threshold_sweep
from .depth import MEASURES, ConformityMeasure
from .engine import ParameterGrid, axis_from_range, edges_from_centers, projection, ratio
from .models import REGISTRY, AdjacencySpec, ModelError
from .models.ising import odds_ratio_transform


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}" if key else message)
        self.key = key


def _need(block: dict, key: str, where: str):
    if key not in block:
        raise ConfigError(f"{where}.{key}" if where else key, "required key is missing")
    return block[key]


def _mapping(value, key: str) -> dict:
    if not isinstance(value, dict):
        raise ConfigError(key, f"expected a mapping, got {type(value).__name__}")
    return value


def _number(value, key: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError(key, f"expected a finite number, got {value!r}")
    return float(value)


def _int(value, key: str, minimum: int | None = None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(key, f"expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(key, f"must be >= {minimum}, got {value}")
    return value


def _unknown(block: dict, allowed: set[str], where: str):
    extra = sorted(set(block) - allowed)
    if extra:
        raise ConfigError(f"{where}.{extra[0]}" if where else extra[0], f"unknown key (allowed: {', '.join(sorted(allowed))})")


# ---------------------------------------------------------------------------
# blocks
# ---------------------------------------------------------------------------

MODEL_KEYS = {
    "correlation": {"n", "summary_choice"},
    "gk": {"n", "summary_choice", "mu", "sigma", "g", "k", "c", "free"},
    "dp_bernoulli": {"n", "summary_choice", "epsilon"},
    "ising": {"summary_choice", "adjacency", "node_count", "zero_field", "burn_in", "sweeps", "allow_zero_beta"},
}


def build_model(block, base_dir: Path, registry=None):
    registry = REGISTRY if registry is None else registry
    block = dict(_mapping(block, "model"))
    name = _need(block, "name", "model")
    if name not in registry:
        raise ConfigError("model.name", f"unknown model {name!r}; available: {', '.join(sorted(registry))}")
    block.pop("name")
    cls = registry[name]
    allowed = MODEL_KEYS.get(name)
    if allowed is not None:
        _unknown(block, allowed, "model")
    kwargs = dict(block)
    if name == "ising":
        src = kwargs.pop("adjacency", "lattice:4x4")
        count = kwargs.pop("node_count", None)
        if not str(src).startswith("lattice:"):
            src = str((base_dir / src).resolve()) if not Path(src).is_absolute() else src
        try:
            kwargs["adjacency"] = AdjacencySpec.parse(str(src), count)
        except (ModelError, OSError) as exc:
            raise ConfigError("model.adjacency", str(exc)) from exc
    if name == "gk" and "free" in kwargs:
        kwargs["free"] = tuple(kwargs["free"])
    try:
        return cls(**kwargs)
    except (ModelError, TypeError, ValueError) as exc:
        raise ConfigError("model", str(exc)) from exc


def build_measure(value, key: str) -> ConformityMeasure:
    if isinstance(value, str):
        value = {"name": value}
    value = dict(_mapping(value, key))
    _unknown(value, {"name", "ridge", "directions", "direction_seed"}, key)
    name = _need(value, "name", key)
    if name not in MEASURES:
        raise ConfigError(f"{key}.name", f"unknown measure {name!r}; expected one of {', '.join(MEASURES)}")
    kwargs = {"name": name}
    if "ridge" in value:
        kwargs["ridge"] = _number(value["ridge"], f"{key}.ridge")
        if kwargs["ridge"] < 0:
            raise ConfigError(f"{key}.ridge", "must be >= 0")
    if "directions" in value:
        kwargs["directions"] = _int(value["directions"], f"{key}.directions", 1)
    if "direction_seed" in value:
        kwargs["direction_seed"] = _int(value["direction_seed"], f"{key}.direction_seed", 0)
    return ConformityMeasure(**kwargs)


def build_grid(block, model) -> ParameterGrid:
    block = _mapping(block, "inference.grid")
    names = tuple(model.param_names)
    if set(block) != set(names):
        missing = [n for n in names if n not in block]
        key = f"inference.grid.{missing[0]}" if missing else f"inference.grid.{sorted(set(block) - set(names))[0]}"
        raise ConfigError(key, f"grid axes must be exactly the model parameters {list(names)}")
    axes = []
    for n in names:
        key = f"inference.grid.{n}"
        spec = block[n]
        if isinstance(spec, list):
            vals = [_number(v, key) for v in spec]
            axes.append(np.array(vals))
            continue
        spec = _mapping(spec, key)
        _unknown(spec, {"min", "max", "step"}, key)
        lo, hi, step = (_number(_need(spec, k, key), f"{key}.{k}") for k in ("min", "max", "step"))
        try:
            axes.append(axis_from_range(lo, hi, step))
        except ValueError as exc:
            raise ConfigError(key, str(exc)) from exc
    try:
        grid = ParameterGrid(tuple(axes), names)
    except ValueError as exc:
        raise ConfigError("inference.grid", str(exc)) from exc
    for j, n in enumerate(names):
        # the admissible box is a product of intervals, so checking each axis value with the others fixed suffices
        base = np.array([a[0] for a in grid.axes])
        for v in grid.axes[j]:
            theta = base.copy()
            theta[j] = v
            try:
                model.check_theta(theta)
            except ValueError as exc:
                raise ConfigError(f"inference.grid.{n}", f"grid value {v} is not admissible: {exc}") from exc
    return grid


def build_claims(items, names) -> list[ClaimExpression]:
    if items is None:
        return []
    if not isinstance(items, list):
        raise ConfigError("claims", "expected a list of claim expressions")
    out = []
    for i, item in enumerate(items):
        key = f"claims[{i}]"
        try:
            if isinstance(item, str):
                out.append(ClaimExpression(item, names))
                continue
            item = _mapping(item, key)
            if "sweep" in item:
                sw = _mapping(item["sweep"], f"{key}.sweep")
                _unknown(sw, {"param", "min", "max", "step"}, f"{key}.sweep")
                gammas = axis_from_range(*(_number(_need(sw, k, f"{key}.sweep"), f"{key}.sweep.{k}") for k in ("min", "max", "step")))
                out.extend(threshold_sweep(_need(sw, "param", f"{key}.sweep"), gammas, names))
            else:
                _unknown(item, {"expr", "label"}, key)
                out.append(ClaimExpression(_need(item, "expr", key), names, item.get("label")))
        except (ClaimSyntaxError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(key, str(exc)) from exc
    return out


@dataclass(frozen=True)
class MarginalRequest:
    spec: MarginalSpec
    centers: np.ndarray
    relabel: str | None = None  # "odds_ratio" maps bin coordinates through exp(4 beta)


def _edges(value, key) -> np.ndarray:
    if isinstance(value, list):
        edges = np.array([_number(v, key) for v in value])
    else:
        value = _mapping(value, key)
        _unknown(value, {"min", "max", "step"}, key)
        try:
            edges = axis_from_range(*(_number(_need(value, k, key), f"{key}.{k}") for k in ("min", "max", "step")))
        except ValueError as exc:
            raise ConfigError(key, str(exc)) from exc
    if edges.size < 2 or np.any(np.diff(edges) <= 0):
        raise ConfigError(key, "bin edges must be strictly increasing with at least two entries")
    return edges


def build_marginals(items, grid: ParameterGrid) -> list[MarginalRequest]:
    if items is None:
        return []
    if not isinstance(items, list):
        raise ConfigError("marginal", "expected a list of marginal specifications")
    names = grid.names
    out = []

    def index(name, key):
        if name not in names:
            raise ConfigError(key, f"unknown parameter {name!r}; known: {', '.join(names)}")
        return names.index(name)

    for i, item in enumerate(items):
        key = f"marginal[{i}]"
        item = _mapping(item, key)
        kind = _need(item, "type", key)
        if kind in ("projection", "odds_ratio"):
            _unknown(item, {"type", "param", "label"}, key)
            j = index(_need(item, "param", key), f"{key}.param")
            axis = grid.axes[j]
            label = item.get("label", names[j] if kind == "projection" else f"exp(4*{names[j]})")
            spec = MarginalSpec(label, projection(j), edges_from_centers(axis))
            out.append(MarginalRequest(spec, axis, "odds_ratio" if kind == "odds_ratio" else None))
        elif kind == "ratio":
            _unknown(item, {"type", "num", "den", "edges", "label"}, key)
            a = index(_need(item, "num", key), f"{key}.num")
            b = index(_need(item, "den", key), f"{key}.den")
            edges = _edges(_need(item, "edges", key), f"{key}.edges")
            spec = MarginalSpec(item.get("label", f"{names[a]}/{names[b]}"), ratio(a, b), edges)
            out.append(MarginalRequest(spec, (edges[1:] + edges[:-1]) / 2))
        else:
            raise ConfigError(f"{key}.type", f"unknown marginal type {kind!r}; expected projection, ratio or odds_ratio")
    return out


def relabel(values: np.ndarray, how: str | None) -> np.ndarray:
    return odds_ratio_transform(values) if how == "odds_ratio" else values


def _alphas(value, key, default):
    if value is None:
        return tuple(default)
    if not isinstance(value, list) or not value:
        raise ConfigError(key, "expected a nonempty list of levels")
    out = tuple(_number(v, key) for v in value)
    if any(not 0.0 <= a <= 1.0 for a in out):
        raise ConfigError(key, "levels must lie in [0, 1]")
    return out


# ---------------------------------------------------------------------------
# whole config
# ---------------------------------------------------------------------------

TOP_KEYS = {"seed", "model", "inference", "observed", "levelset", "marginal", "claims", "calibrate"}


@dataclass
class ExperimentConfig:
    path: Path
    seed: int
    model: object
    measures: list[ConformityMeasure]
    M: int
    grid: ParameterGrid
    observed_data: object = None
    observed_summary: np.ndarray | None = None
    alphas: tuple = (0.05,)
    marginals: list[MarginalRequest] = field(default_factory=list)
    claims: list[ClaimExpression] = field(default_factory=list)
    calibrate: dict | None = None

    @property
    def measure(self) -> ConformityMeasure:
        return self.measures[0]

    def replication_plan(self, workers: int = 1) -> ReplicationPlan:
        if self.calibrate is None:
            raise ConfigError("calibrate", "required block is missing")
        c = self.calibrate
        try:
            return ReplicationPlan(
                model=self.model,
                truth=c["truth"],
                grid=self.grid,
                M=self.M,
                measures=self.measures,
                R=c["R"],
                alphas=c["alphas"],
                claims=self.claims if c["claims"] else (),
                marginals=[m.spec for m in self.marginals] if c["marginals"] else (),
                master_seed=self.seed,
                confidence=c["confidence"],
                workers=workers,
            )
        except PlanError as exc:
            raise ConfigError("calibrate", str(exc)) from exc


def _observed(block, model, base_dir: Path):
    block = _mapping(block, "observed")
    _unknown(block, {"data", "summary"}, "observed")
    if ("data" in block) == ("summary" in block):
        raise ConfigError("observed", "give exactly one of 'data' (raw-data file) or 'summary' (summary vector)")
    if "summary" in block:
        vals = block["summary"]
        vals = vals if isinstance(vals, list) else [vals]
        s = np.array([_number(v, "observed.summary") for v in vals])
        if s.size != model.summary_dim:
            raise ConfigError("observed.summary", f"expected {model.summary_dim} value(s) for {model.summary_choice}, got {s.size}")
        return None, s
    path = Path(block["data"])
    path = path if path.is_absolute() else base_dir / path
    if not path.exists():
        raise ConfigError("observed.data", f"file not found: {path}")
    try:
        data = model.load_data(str(path))
        summary = model.summary_of(data)
    except (ValueError, OSError) as exc:
        raise ConfigError("observed.data", str(exc)) from exc
    return data, summary


def _calibrate_block(block, model) -> dict:
    block = _mapping(block, "calibrate")
    _unknown(block, {"truth", "R", "alphas", "confidence", "claims", "marginals", "abc"}, "calibrate")
    truth = _need(block, "truth", "calibrate")
    names = tuple(model.param_names)
    if isinstance(truth, dict):
        if set(truth) != set(names):
            raise ConfigError("calibrate.truth", f"expected values for {list(names)}")
        truth = [truth[n] for n in names]
    truth = truth if isinstance(truth, list) else [truth]
    truth = [_number(v, "calibrate.truth") for v in truth]
    if len(truth) != len(names):
        raise ConfigError("calibrate.truth", f"expected {len(names)} value(s) for {list(names)}")
    try:
        model.check_theta(truth)
    except ValueError as exc:
        raise ConfigError("calibrate.truth", str(exc)) from exc
    conf = _number(block.get("confidence", 0.99), "calibrate.confidence")
    if not 0 < conf < 1:
        raise ConfigError("calibrate.confidence", "must lie in (0, 1)")
    out = {
        "truth": truth,
        "R": _int(_need(block, "R", "calibrate"), "calibrate.R", 1),
        "alphas": _alphas(block.get("alphas"), "calibrate.alphas", DEFAULT_ALPHAS),
        "confidence": conf,
        "claims": bool(block.get("claims", True)),
        "marginals": bool(block.get("marginals", True)),
        "abc": None,
    }
    if "abc" in block:
        abc = _mapping(block["abc"], "calibrate.abc")
        _unknown(abc, {"draws", "keep_fraction", "priors"}, "calibrate.abc")
        priors = _mapping(_need(abc, "priors", "calibrate.abc"), "calibrate.abc.priors")
        if set(priors) != set(names):
            raise ConfigError("calibrate.abc.priors", f"need uniform bounds for {list(names)}")
        bounds = []
        for n in names:
            b = priors[n]
            if not isinstance(b, list) or len(b) != 2 or not _number(b[0], f"calibrate.abc.priors.{n}") < _number(b[1], f"calibrate.abc.priors.{n}"):
                raise ConfigError(f"calibrate.abc.priors.{n}", "expected [low, high] with low < high")
            bounds.append((float(b[0]), float(b[1])))
        keep = _number(abc.get("keep_fraction", 0.01), "calibrate.abc.keep_fraction")
        if not 0 < keep <= 1:
            raise ConfigError("calibrate.abc.keep_fraction", "must lie in (0, 1]")
        out["abc"] = {"draws": _int(abc.get("draws", 10000), "calibrate.abc.draws", 1), "keep_fraction": keep, "priors": bounds}
    return out


def parse_config(raw, path=".", require_observed=False, registry=None) -> ExperimentConfig:
    path = Path(path)
    base_dir = path.parent if path.suffix else path
    raw = _mapping(raw if raw is not None else {}, "")
    _unknown(raw, TOP_KEYS, "")
    seed = _int(raw.get("seed", 0), "seed", 0)
    if seed >= 2**64:
        raise ConfigError("seed", "must fit in 64 bits")
    model = build_model(_need(raw, "model", ""), base_dir, registry)
    inf = _mapping(_need(raw, "inference", ""), "inference")
    _unknown(inf, {"measure", "measures", "M", "grid"}, "inference")
    if ("measure" in inf) == ("measures" in inf):
        raise ConfigError("inference.measure", "give exactly one of 'measure' or 'measures'")
    if "measure" in inf:
        measures = [build_measure(inf["measure"], "inference.measure")]
    else:
        items = inf["measures"]
        if not isinstance(items, list) or not items:
            raise ConfigError("inference.measures", "expected a nonempty list")
        measures = [build_measure(m, f"inference.measures[{i}]") for i, m in enumerate(items)]
    if model.summary_dim > 1:
        for i, m in enumerate(measures):
            if m.name == "neg_abs_dev":
                raise ConfigError("inference.measure" if len(measures) == 1 else f"inference.measures[{i}]", "neg_abs_dev needs a 1-D summary")
    M = _int(_need(inf, "M", "inference"), "inference.M", 1)
    grid = build_grid(_need(inf, "grid", "inference"), model)

    data = summary = None
    if "observed" in raw:
        data, summary = _observed(raw["observed"], model, base_dir)
    elif require_observed:
        raise ConfigError("observed", "required block is missing")

    lv = raw.get("levelset") or {}
    lv = _mapping(lv, "levelset")
    _unknown(lv, {"alphas"}, "levelset")
    alphas = _alphas(lv.get("alphas"), "levelset.alphas", (0.05,))

    cfg = ExperimentConfig(
        path=path,
        seed=seed,
        model=model,
        measures=measures,
        M=M,
        grid=grid,
        observed_data=data,
        observed_summary=summary,
        alphas=alphas,
        marginals=build_marginals(raw.get("marginal"), grid),
        claims=build_claims(raw.get("claims"), grid.names),
        calibrate=_calibrate_block(raw["calibrate"], model) if "calibrate" in raw else None,
    )
    return cfg


def load_config(path, require_observed=False, registry=None, seed: int | None = None) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigError("", f"cannot read config {path}: {exc.strerror}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError("", f"{path} is not valid YAML: {exc}") from exc
    if seed is not None:
        raw = dict(raw or {})
        raw["seed"] = seed
    return parse_config(raw, path, require_observed, registry)
