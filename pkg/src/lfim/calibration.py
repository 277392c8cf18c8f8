"""Replication studies that check calibration of likelihood-free contours empirically.

A :class:`ReplicationPlan` fixes the model, truth, grid and measure(s).
Replicate ``r`` draws its observed dataset from the stream
``(seed, "calibration", 0, r)`` and its contour from
``(seed, "contour", g, r)``, so every study is bit-reproducible and
independent of the worker count.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .depth import ConformityMeasure
from .engine import (
    ContourTable,
    ParameterGrid,
    belief,
    compute_contours,
    level_set_mask,
    marginal_contour,
)
from .streams import stream

DEFAULT_ALPHAS = tuple(np.round(np.arange(0.05, 0.951, 0.05), 2))


class PlanError(ValueError):
    pass


class TruthSnapWarning(UserWarning):
    pass


@dataclass(frozen=True)
class MarginalSpec:
    label: str
    feature: Callable[[np.ndarray], np.ndarray]
    edges: np.ndarray


@dataclass
class ReplicationPlan:
    model: object
    truth: Sequence[float]
    grid: ParameterGrid
    M: int
    measures: Sequence[ConformityMeasure]
    R: int
    alphas: Sequence[float] = DEFAULT_ALPHAS
    claims: Sequence = ()
    marginals: Sequence[MarginalSpec] = ()
    master_seed: int = 0
    confidence: float = 0.99
    workers: int = 1

    def __post_init__(self):
        if isinstance(self.measures, ConformityMeasure):
            self.measures = (self.measures,)
        self.measures = tuple(self.measures)
        if not self.measures:
            raise PlanError("plan needs at least one conformity measure")
        if self.R < 1:
            raise PlanError("replicates R must be >= 1")
        if self.M < 1:
            raise PlanError("M must be >= 1")
        if any(not 0.0 <= a <= 1.0 for a in self.alphas):
            raise PlanError("alpha levels must lie in [0, 1]")
        if not 0.0 < self.confidence < 1.0:
            raise PlanError("confidence must lie in (0, 1)")
        self.truth = tuple(float(t) for t in np.atleast_1d(self.truth))
        if len(self.truth) != self.grid.ndim:
            raise PlanError(f"truth has {len(self.truth)} coordinates, grid has {self.grid.ndim}")
        try:
            self.model.check_theta(self.truth)
        except ValueError as exc:
            raise PlanError(f"truth {list(self.truth)} is not admissible: {exc}") from exc
        for claim in self.claims:
            if claim.holds_at(self.truth):
                raise PlanError(f"claim {getattr(claim, 'label', claim)!r} is true at the truth; calibration needs false claims")

    def echo(self) -> dict:
        return {
            **self.model.describe(),
            "truth": list(self.truth),
            "params": list(self.model.param_names),
            "grid": self.grid.to_dict(),
            "M": self.M,
            "measures": [m.to_dict() for m in self.measures],
            "R": self.R,
            "alphas": [float(a) for a in self.alphas],
            "claims": [getattr(c, "label", str(c)) for c in self.claims],
            "marginals": [m.label for m in self.marginals],
            "master_seed": self.master_seed,
            "confidence": self.confidence,
        }


# ---------------------------------------------------------------------------
# replicate runs
# ---------------------------------------------------------------------------

def snap_truth(grid: ParameterGrid, truth) -> tuple[int, float]:
    idx, dist = grid.nearest_index(truth)
    if dist > 1e-9:
        warnings.warn(
            f"truth {list(np.atleast_1d(truth))} is off the grid; using {grid.points[idx].tolist()} (distance {dist:.4g})",
            TruthSnapWarning,
            stacklevel=3,
        )
    return idx, dist


def simulate_observed(plan: ReplicationPlan, r: int):
    """Raw observed dataset and its summary for replicate ``r``."""
    rng = stream(plan.master_seed, "calibration", 0, r)
    data = plan.model.simulate_data(plan.truth, 1, rng)[0]
    return data, plan.model.summary_of(data)


@dataclass(eq=False)
class ReplicationRun:
    plan: ReplicationPlan
    truth_index: int
    snap_distance: float
    tables: list[list[ContourTable]]  # [measure][replicate]
    observed: list  # (data, summary) per replicate

    def pi_at_truth(self, measure: int = 0) -> np.ndarray:
        return np.array([t.pi[self.truth_index] for t in self.tables[measure]])


def run_replicates(plan: ReplicationPlan) -> ReplicationRun:
    idx, dist = snap_truth(plan.grid, plan.truth)

    def one(r):
        data, summary = simulate_observed(plan, r)
        try:
            tables = compute_contours(plan.model, summary, plan.grid, plan.M, plan.measures, plan.master_seed, r)
        except Exception as exc:
            raise RuntimeError(f"replicate {r}: {exc}") from exc
        return (data, summary), tables

    if plan.workers > 1:
        with ThreadPoolExecutor(max_workers=plan.workers) as pool:
            results = list(pool.map(one, range(plan.R)))
    else:
        results = [one(r) for r in range(plan.R)]
    tables = [[res[1][j] for res in results] for j in range(len(plan.measures))]
    return ReplicationRun(plan, idx, dist, tables, [res[0] for res in results])


def _as_run(plan_or_run) -> ReplicationRun:
    return plan_or_run if isinstance(plan_or_run, ReplicationRun) else run_replicates(plan_or_run)


# ---------------------------------------------------------------------------
# dominance
# ---------------------------------------------------------------------------

def dkw_epsilon(R: int, confidence: float) -> float:
    return math.sqrt(math.log(1.0 / (1.0 - confidence)) / (2.0 * R))


@dataclass(frozen=True)
class DominanceCheck:
    alpha: float
    fraction: float
    bound: float
    passed: bool


def check_stochastic_dominance(samples, alphas=DEFAULT_ALPHAS, confidence: float = 0.99) -> list[DominanceCheck]:
    """Per alpha: pass iff ``#{samples <= alpha} / R <= alpha + eps`` with the DKW ``eps``."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("dominance check needs at least one sample")
    eps = dkw_epsilon(x.size, confidence)
    out = []
    for a in alphas:
        frac = float(np.count_nonzero(x <= a) / x.size)
        out.append(DominanceCheck(float(a), frac, float(a) + eps, frac <= float(a) + eps))
    return out


def all_passed(checks: Sequence[DominanceCheck]) -> bool:
    return all(c.passed for c in checks)


# ---------------------------------------------------------------------------
# studies
# ---------------------------------------------------------------------------

def validity_ecdf(plan_or_run, measure: int = 0) -> np.ndarray:
    """``pi`` at the (snapped) truth for each replicate."""
    return _as_run(plan_or_run).pi_at_truth(measure)


@dataclass(frozen=True)
class CoverageRow:
    alpha: float
    rate: float
    mean_width: float | None


def coverage_study(plan_or_run, measure: int = 0) -> list[CoverageRow]:
    """Coverage of ``{pi > alpha}`` and, on 1-D grids, its mean total cell length."""
    run = _as_run(plan_or_run)
    tables = run.tables[measure]
    one_d = run.plan.grid.ndim == 1
    cells = run.plan.grid.cell_lengths() if one_d else None
    rows = []
    for a in run.plan.alphas:
        covered = np.mean([t.pi[run.truth_index] > a for t in tables])
        width = float(np.mean([cells[level_set_mask(t, a)].sum() for t in tables])) if one_d else None
        rows.append(CoverageRow(float(a), float(covered), width))
    return rows


def claim_calibration_study(plan_or_run, measure: int = 0) -> dict[str, np.ndarray]:
    """Per claim: the ``R`` values ``1 - belief`` (uniform-dominating when calibrated)."""
    run = _as_run(plan_or_run)
    out = {}
    for claim in run.plan.claims:
        mask = claim.mask(run.plan.grid.points)
        out[getattr(claim, "label", str(claim))] = np.array([1.0 - belief(t, mask) for t in run.tables[measure]])
    return out


def marginal_validity_study(plan_or_run, measure: int = 0) -> dict[str, np.ndarray]:
    """Per marginal spec: marginal contour at the feature value of the truth."""
    run = _as_run(plan_or_run)
    truth = run.plan.grid.points[run.truth_index][None, :]
    out = {}
    for spec in run.plan.marginals:
        phi = float(spec.feature(truth)[0])
        vals = [marginal_contour(t, spec.feature, spec.edges).value_at(phi) for t in run.tables[measure]]
        out[spec.label] = np.array(vals)
    return out


# ---------------------------------------------------------------------------
# ABC rejection baseline
# ---------------------------------------------------------------------------

def uniform_prior(bounds: Sequence[tuple[float, float]]):
    lo = np.array([b[0] for b in bounds], dtype=float)
    hi = np.array([b[1] for b in bounds], dtype=float)

    def sample(rng, size):
        return rng.uniform(lo, hi, size=(size, lo.size))

    return sample


@dataclass(eq=False)
class ABCResult:
    thetas: np.ndarray
    distances: np.ndarray
    draws: int

    def claim_probability(self, claim) -> float:
        if len(self.thetas) == 0:
            return float("nan")
        return float(np.mean(claim.mask(self.thetas)))


def abc_rejection(model, prior_sampler, observed_summary, draws: int, rng, keep_fraction=None, tolerance=None, batch=10_000) -> ABCResult:
    """Rejection ABC with Euclidean distance on raw summaries.

    Keeps the ``ceil(keep_fraction * draws)`` closest draws, or every draw
    within ``tolerance`` when that is given instead.
    """
    if (keep_fraction is None) == (tolerance is None):
        raise ValueError("give exactly one of keep_fraction and tolerance")
    if keep_fraction is not None and not 0.0 < keep_fraction <= 1.0:
        raise ValueError("keep_fraction must lie in (0, 1]")
    obs = np.atleast_1d(np.asarray(observed_summary, dtype=float))
    thetas = prior_sampler(rng, draws)
    dist = np.empty(draws)
    for start in range(0, draws, batch):
        stop = min(start + batch, draws)
        s = model.simulate_at(thetas[start:stop], rng)
        dist[start:stop] = np.linalg.norm(s - obs[None, :], axis=1)
    dist[~np.isfinite(dist)] = np.inf
    if tolerance is not None:
        keep = np.flatnonzero(dist <= tolerance)
    else:
        k = math.ceil(keep_fraction * draws)
        keep = np.sort(np.argsort(dist, kind="stable")[:k])
    return ABCResult(thetas[keep], dist[keep], draws)


def abc_claim_study(plan_or_run, prior_sampler, draws: int, keep_fraction: float) -> dict[str, np.ndarray]:
    """Per claim: ``1 - P_ABC(claim)`` per replicate, for comparison with :func:`claim_calibration_study`."""
    run = _as_run(plan_or_run)
    plan = run.plan
    out = {getattr(c, "label", str(c)): [] for c in plan.claims}
    for r, (_, summary) in enumerate(run.observed):
        res = abc_rejection(plan.model, prior_sampler, summary, draws, stream(plan.master_seed, "abc", 0, r), keep_fraction=keep_fraction)
        for c in plan.claims:
            out[getattr(c, "label", str(c))].append(1.0 - res.claim_probability(c))
    return {k: np.array(v) for k, v in out.items()}


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

def _checks_dict(checks):
    return [{"alpha": c.alpha, "fraction": c.fraction, "bound": c.bound, "pass": c.passed} for c in checks]


@dataclass(eq=False)
class CalibrationReport:
    plan: dict
    snap_distance: float
    pi_at_truth: dict[str, np.ndarray]
    ecdf_checks: dict[str, list[DominanceCheck]]
    coverage: dict[str, list[CoverageRow]]
    claim_ecdfs: dict[str, dict[str, np.ndarray]]
    claim_checks: dict[str, dict[str, list[DominanceCheck]]]
    marginal_samples: dict[str, dict[str, np.ndarray]] = field(default_factory=dict)
    marginal_checks: dict[str, dict[str, list[DominanceCheck]]] = field(default_factory=dict)

    @property
    def verdict(self) -> bool:
        groups = list(self.ecdf_checks.values())
        groups += [c for d in self.claim_checks.values() for c in d.values()]
        groups += [c for d in self.marginal_checks.values() for c in d.values()]
        return all(all_passed(g) for g in groups)

    def to_dict(self) -> dict:
        return {
            "plan": self.plan,
            "snap_distance": self.snap_distance,
            "measures": {
                name: {
                    "pi_at_truth": self.pi_at_truth[name].tolist(),
                    "ecdf_checks": _checks_dict(self.ecdf_checks[name]),
                    "coverage": [{"alpha": c.alpha, "rate": c.rate, "mean_width": c.mean_width} for c in self.coverage[name]],
                    "claims": {
                        label: {"samples": s.tolist(), "checks": _checks_dict(self.claim_checks[name][label])}
                        for label, s in self.claim_ecdfs[name].items()
                    },
                    "marginals": {
                        label: {"samples": s.tolist(), "checks": _checks_dict(self.marginal_checks[name][label])}
                        for label, s in self.marginal_samples.get(name, {}).items()
                    },
                }
                for name in self.pi_at_truth
            },
            "verdict": "pass" if self.verdict else "fail",
        }


def _measure_key(measure: ConformityMeasure, j: int, all_measures) -> str:
    names = [m.name for m in all_measures]
    return measure.name if names.count(measure.name) == 1 else f"{measure.name}#{j}"


def calibration_report(plan_or_run) -> CalibrationReport:
    run = _as_run(plan_or_run)
    plan = run.plan
    pis, ecdf, cov, claims, claim_checks, margs, marg_checks = {}, {}, {}, {}, {}, {}, {}
    for j, m in enumerate(plan.measures):
        key = _measure_key(m, j, plan.measures)
        pis[key] = run.pi_at_truth(j)
        ecdf[key] = check_stochastic_dominance(pis[key], plan.alphas, plan.confidence)
        cov[key] = coverage_study(run, j)
        claims[key] = claim_calibration_study(run, j)
        claim_checks[key] = {k: check_stochastic_dominance(v, plan.alphas, plan.confidence) for k, v in claims[key].items()}
        margs[key] = marginal_validity_study(run, j)
        marg_checks[key] = {k: check_stochastic_dominance(v, plan.alphas, plan.confidence) for k, v in margs[key].items()}
    return CalibrationReport(plan.echo(), run.snap_distance, pis, ecdf, cov, claims, claim_checks, margs, marg_checks)
