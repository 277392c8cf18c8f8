"""``lfim`` command line.

Exit codes: 0 success, 1 configuration or input-format error, 2 runtime
or simulation error, 3 calibration verdict "fail".
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings

import numpy as np

from . import __version__
from .calibration import abc_claim_study, calibration_report, check_stochastic_dominance, run_replicates, uniform_prior
from .config import ConfigError, load_config, relabel
from .engine import belief, compute_contours, level_set, marginal_contour, plausibility
from .io import ContourFormatError, dumps_json, read_contour_csv, write_contour_csv, write_json, write_rows
from .models import REGISTRY

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_CALIBRATION = 0, 1, 2, 3


class CommandError(Exception):
    def __init__(self, code: int, message: str, **extra):
        super().__init__(message)
        self.code = code
        self.extra = extra


def _config(args, require_observed=False):
    return load_config(args.config, require_observed=require_observed, seed=args.seed)


def _contour_in(args, cfg):
    table = read_contour_csv(args.contour)
    if table.grid.ndim != cfg.grid.ndim:
        raise ContourFormatError(f"{args.contour} has {table.grid.ndim} parameter column(s), config has {cfg.grid.ndim}")
    # carry the config's parameter names; CSV headers are positional
    table.grid = type(table.grid)(table.grid.axes, cfg.grid.names)
    return table


def cmd_contour(args) -> int:
    cfg = _config(args, require_observed=True)
    tables = compute_contours(cfg.model, cfg.observed_summary, cfg.grid, cfg.M, cfg.measures, cfg.seed, 0, args.threads)
    if len(tables) == 1:
        write_contour_csv(tables[0], args.output)
    else:
        # one file per measure: out.csv -> out.mahalanobis.csv, out.tukey.csv
        stem, dot, ext = args.output.rpartition(".")
        for m, t in zip(cfg.measures, tables):
            write_contour_csv(t, f"{stem}.{m.name}.{ext}" if dot else f"{args.output}.{m.name}")
    return EXIT_OK


def cmd_levelset(args) -> int:
    cfg = _config(args)
    table = _contour_in(args, cfg)
    alphas = args.alpha or cfg.alphas
    header = ["alpha"] + [f"theta_{j + 1}" for j in range(table.grid.ndim)]
    rows = [[float(a)] + list(pt) for a in alphas for pt in level_set(table, a)]
    write_rows(args.output, header, rows)
    return EXIT_OK


def cmd_marginal(args) -> int:
    cfg = _config(args)
    if not cfg.marginals:
        raise ConfigError("marginal", "no marginal specifications in config")
    table = _contour_in(args, cfg)
    rows = []
    for req in cfg.marginals:
        mc = marginal_contour(table, req.spec.feature, req.spec.edges, req.centers, req.spec.label)
        lo = relabel(mc.edges[:-1], req.relabel)
        hi = relabel(mc.edges[1:], req.relabel)
        centers = relabel(mc.centers, req.relabel)
        for a, b, c, v in zip(lo, hi, centers, mc.values):
            rows.append([req.spec.label, float(a), float(b), float(c), "" if np.isnan(v) else float(v)])
    write_rows(args.output, ["feature", "bin_low", "bin_high", "center", "pi"], rows)
    return EXIT_OK


def cmd_claims(args) -> int:
    cfg = _config(args)
    if not cfg.claims:
        raise ConfigError("claims", "no claims in config")
    table = _contour_in(args, cfg)
    out = []
    for c in cfg.claims:
        mask = c.mask(table.points)
        out.append(
            {
                "label": c.label,
                "belief": belief(table, mask),
                "plausibility": plausibility(table, mask),
                "undefined_points": int(c.undefined_mask(table.points).sum()),
            }
        )
    write_json(out, args.output)
    return EXIT_OK


def cmd_calibrate(args) -> int:
    cfg = _config(args)
    if cfg.calibrate is None:
        raise ConfigError("calibrate", "required block is missing")
    plan = cfg.replication_plan(workers=args.threads)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        run = run_replicates(plan)
    for w in caught:
        print(f"lfim: warning: {w.message}", file=sys.stderr)
    report = calibration_report(run)
    doc = report.to_dict()
    abc = cfg.calibrate["abc"]
    if abc is not None and plan.claims:
        samples = abc_claim_study(run, uniform_prior(abc["priors"]), abc["draws"], abc["keep_fraction"])
        # diagnostic only: does not enter the verdict
        doc["abc_diagnostic"] = {
            label: {
                "samples": s.tolist(),
                "checks": [
                    {"alpha": c.alpha, "fraction": c.fraction, "bound": c.bound, "pass": c.passed}
                    for c in check_stochastic_dominance(s, plan.alphas, plan.confidence)
                ],
            }
            for label, s in samples.items()
        }
    write_json(doc, args.output)
    print(f"calibration verdict: {doc['verdict']}", file=sys.stderr)
    return EXIT_OK if report.verdict else EXIT_CALIBRATION


def cmd_models(args) -> int:
    if args.action != "list":
        raise CommandError(EXIT_CONFIG, f"unknown models action {args.action!r}; expected 'list'")
    for name, cls in sorted(REGISTRY.items()):
        try:
            m = cls()
            params = ",".join(m.param_names)
        except Exception:
            params = "?"
        print(f"{name}\tparams={params}")
    return EXIT_OK


def _add_globals(p, suppress: bool):
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--seed", type=int, default=d, help="master seed (overrides the config's 'seed')")
    p.add_argument("--threads", type=int, default=argparse.SUPPRESS if suppress else 1, help="worker threads; results do not depend on it")
    p.add_argument("--error-json", action="store_true", default=argparse.SUPPRESS if suppress else False, help="print errors as JSON on stderr")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lfim", description="Likelihood-free inferential model contours and calibration studies.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _add_globals(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, fn, help_, contour_in=False):
        p = sub.add_parser(name, help=help_)
        _add_globals(p, suppress=True)
        p.add_argument("config", help="YAML experiment config")
        if contour_in:
            p.add_argument("--contour", required=True, help="contour CSV written by 'lfim contour'")
        p.add_argument("-o", "--output", required=True)
        p.set_defaults(fn=fn)
        return p

    command("contour", cmd_contour, "evaluate the possibility contour on the config grid")
    lv = command("levelset", cmd_levelset, "grid points with pi > alpha", contour_in=True)
    lv.add_argument("--alpha", type=float, action="append", help="level (repeatable); defaults to levelset.alphas")
    command("marginal", cmd_marginal, "marginal contours for the config's 'marginal' specs", contour_in=True)
    command("claims", cmd_claims, "belief and plausibility of the config's claims", contour_in=True)
    command("calibrate", cmd_calibrate, "replication study; exit 3 when calibration fails")

    m = sub.add_parser("models", help="model registry")
    _add_globals(m, suppress=True)
    m.add_argument("action", choices=["list"])
    m.set_defaults(fn=cmd_models)
    return parser


def _report_error(args, code: int, kind: str, message: str, **extra) -> int:
    if getattr(args, "error_json", False):
        print(json.dumps({"error": kind, "message": message, "exit_code": code, **extra}, sort_keys=True), file=sys.stderr)
    else:
        print(f"lfim: error: {message}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads < 1:
        return _report_error(args, EXIT_CONFIG, "config", "--threads must be >= 1", key="--threads")
    if args.seed is not None and not 0 <= args.seed < 2**64:
        return _report_error(args, EXIT_CONFIG, "config", "--seed must be a 64-bit unsigned integer", key="--seed")
    try:
        return args.fn(args)
    except ConfigError as exc:
        return _report_error(args, EXIT_CONFIG, "config", str(exc), key=exc.key)
    except ContourFormatError as exc:
        return _report_error(args, EXIT_CONFIG, "format", str(exc), row=exc.row)
    except CommandError as exc:
        return _report_error(args, exc.code, "usage", str(exc), **exc.extra)
    except OSError as exc:
        return _report_error(args, EXIT_RUNTIME, "io", f"{exc.filename or ''}: {exc.strerror or exc}".lstrip(": "))
    except Exception as exc:  # simulation and scoring failures
        extra = {"grid_index": exc.grid_index} if getattr(exc, "grid_index", None) is not None else {}
        return _report_error(args, EXIT_RUNTIME, "runtime", f"{type(exc).__name__}: {exc}", **extra)


if __name__ == "__main__":
    sys.exit(main())
