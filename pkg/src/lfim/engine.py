"""Likelihood-free possibility contours.

For a candidate ``theta`` the observed summary is pooled with ``M``
summaries simulated under ``theta``.  The validified ranking is the
fraction of pooled members whose leave-one-out conformity score is no
larger than the observed one; dividing by its maximum over the grid gives
the possibility contour ``pi``.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from .depth import ConformityMeasure, as_summary_set, as_summary_vector
from .streams import stream

BRUTE_FORCE_MAX_M = 5


class ContourError(RuntimeError):
    """Simulation or scoring failed at a grid point."""

    def __init__(self, message: str, grid_index: int | None = None):
        super().__init__(message)
        self.grid_index = grid_index


# ---------------------------------------------------------------------------
# grid
# ---------------------------------------------------------------------------

def axis_from_range(lo: float, hi: float, step: float) -> np.ndarray:
    """Evenly spaced axis ``lo, lo + step, ..., hi``; ``hi - lo`` must be a step multiple."""
    if step <= 0:
        raise ValueError("grid step must be positive")
    if hi < lo:
        raise ValueError(f"grid max {hi} is below min {lo}")
    count = (hi - lo) / step
    n = int(round(count))
    if abs(count - n) > 1e-9 * max(1.0, abs(count)):
        raise ValueError(f"range [{lo}, {hi}] is not a whole number of steps of {step}")
    # rounding keeps values like 0.5 exact instead of 0.5000000000000001
    return np.round(np.linspace(lo, hi, n + 1), 12)


@dataclass(frozen=True, eq=False)
class ParameterGrid:
    axes: tuple[np.ndarray, ...]
    names: tuple[str, ...] = ()

    def __post_init__(self):
        axes = tuple(np.asarray(a, dtype=float).ravel() for a in self.axes)
        if not axes:
            raise ValueError("grid needs at least one axis")
        for j, a in enumerate(axes):
            if a.size < 1:
                raise ValueError(f"grid axis {j} is empty")
            if not np.all(np.isfinite(a)) or np.any(np.diff(a) <= 0):
                raise ValueError(f"grid axis {j} must be finite and strictly increasing")
        names = tuple(self.names) or tuple(f"theta_{j + 1}" for j in range(len(axes)))
        if len(names) != len(axes):
            raise ValueError("one name per grid axis required")
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "names", names)

    @classmethod
    def from_ranges(cls, ranges: dict[str, tuple[float, float, float]]) -> "ParameterGrid":
        return cls(tuple(axis_from_range(*r) for r in ranges.values()), tuple(ranges))

    @property
    def ndim(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(a.size for a in self.axes)

    @property
    def size(self) -> int:
        return math.prod(self.shape)

    @cached_property
    def points(self) -> np.ndarray:
        """All grid points in lexicographic order (first axis slowest)."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=1)
        pts.setflags(write=False)
        return pts

    def nearest_index(self, theta) -> tuple[int, float]:
        """Flat index of the grid point nearest ``theta`` and its Euclidean distance."""
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if theta.size != self.ndim:
            raise ValueError(f"point has {theta.size} coordinates, grid has {self.ndim}")
        idx = [int(np.argmin(np.abs(a - t))) for a, t in zip(self.axes, theta)]
        flat = int(np.ravel_multi_index(idx, self.shape))
        return flat, float(np.linalg.norm(self.points[flat] - theta))

    def cell_lengths(self) -> np.ndarray:
        """1-D only: length of each point's Voronoi cell clipped to the axis range."""
        if self.ndim != 1:
            raise ValueError("cell lengths are defined for 1-D grids only")
        a = self.axes[0]
        if a.size == 1:
            return np.zeros(1)
        mid = (a[1:] + a[:-1]) / 2
        edges = np.concatenate([[a[0]], mid, [a[-1]]])
        return np.diff(edges)

    def to_dict(self) -> dict:
        return {"names": list(self.names), "axes": [a.tolist() for a in self.axes]}

    @classmethod
    def from_dict(cls, data: dict) -> "ParameterGrid":
        return cls(tuple(np.asarray(a, dtype=float) for a in data["axes"]), tuple(data["names"]))


# ---------------------------------------------------------------------------
# validified ranking
# ---------------------------------------------------------------------------

def _pooled(sim, observed) -> np.ndarray:
    sim = as_summary_set(sim)
    obs = as_summary_vector(observed, sim.shape[1])
    return np.vstack([sim, obs[None, :]])


def _loo_scores(measure, pooled: np.ndarray) -> np.ndarray:
    if hasattr(measure, "loo_scores"):
        return measure.loo_scores(pooled)
    return np.array([measure(np.delete(pooled, i, axis=0), pooled[i]) for i in range(pooled.shape[0])])


def validified_rank(sim, observed, measure) -> int:
    """``#{i : T_i <= T_{M+1}}`` over the pooled set, ties counted."""
    pooled = _pooled(sim, observed)
    t = _loo_scores(measure, pooled)
    return int(np.count_nonzero(t <= t[-1]))


def validified_ranking(sim, observed, measure) -> float:
    """Validified ranking ``delta`` in ``{1/(M+1), ..., 1}``.

    ``measure`` is a :class:`~lfim.depth.ConformityMeasure` or any callable
    ``(ref, candidate) -> float``.
    """
    m = as_summary_set(sim).shape[0]
    return validified_rank(sim, observed, measure) / (m + 1)


def brute_force_permutation_ranking(sim, observed, measure) -> float:
    """Average over all ``(M+1)!`` orderings of the pooled summaries.

    Reference implementation for tests; capped at ``M <= 5``.
    """
    pooled = _pooled(sim, observed)
    m = pooled.shape[0] - 1
    if m > BRUTE_FORCE_MAX_M:
        raise ValueError(f"brute-force ranking enumerates (M+1)! orderings; M={m} exceeds {BRUTE_FORCE_MAX_M}")
    observed_score = measure(pooled[:m], pooled[m])
    hits = 0
    total = 0
    for perm in itertools.permutations(range(m + 1)):
        perm = list(perm)
        hits += measure(pooled[perm[:m]], pooled[perm[m]]) <= observed_score
        total += 1
    return hits / total


# ---------------------------------------------------------------------------
# contour
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class ContourTable:
    grid: ParameterGrid
    delta: np.ndarray
    pi: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def normalization(self) -> float:
        return float(np.max(self.delta))

    @property
    def points(self) -> np.ndarray:
        return self.grid.points

    def value_at(self, theta) -> float:
        idx, dist = self.grid.nearest_index(theta)
        if dist > 1e-9:
            raise ValueError(f"{np.atleast_1d(theta).tolist()} is not a grid point (nearest is {dist:.3g} away)")
        return float(self.pi[idx])

    def argmax_center(self) -> np.ndarray:
        """Mean of the grid points where ``pi`` attains its maximum."""
        return self.points[self.pi == self.pi.max()].mean(axis=0)


def normalize(delta: np.ndarray) -> np.ndarray:
    delta = np.asarray(delta, dtype=float)
    return delta / delta.max()


def _map(fn, items, workers: int):
    if workers <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def compute_contours(
    model,
    observed_summary,
    grid: ParameterGrid,
    M: int,
    measures: Sequence[ConformityMeasure],
    master_seed: int,
    replicate_index: int = 0,
    workers: int = 1,
) -> list[ContourTable]:
    """Contours for several measures sharing one set of simulations.

    Each grid point draws its ``M`` summaries from the stream keyed by
    ``(master_seed, "contour", grid_index, replicate_index)``, so the result
    for any single measure is the same as :func:`compute_contour`.
    """
    if M < 1:
        raise ValueError("M must be at least 1")
    obs = as_summary_vector(observed_summary, model.summary_dim)
    points = grid.points
    for g, theta in enumerate(points):
        try:
            model.check_theta(theta)
        except ValueError as exc:
            raise ContourError(f"grid point {g} {theta.tolist()} is not admissible: {exc}", g) from exc

    def work(g: int) -> list[int]:
        theta = points[g]
        try:
            rng = stream(master_seed, "contour", g, replicate_index)
            sims = model.simulate_summaries(theta, M, rng)
            return [validified_rank(sims, obs, m) for m in measures]
        except Exception as exc:
            raise ContourError(f"grid point {g} {theta.tolist()}: {exc}", g) from exc

    counts = np.array(_map(work, range(grid.size), workers), dtype=np.int64).reshape(grid.size, len(measures))
    tables = []
    for j, measure in enumerate(measures):
        delta = counts[:, j] / (M + 1)
        meta = dict(model.describe())
        meta.update(
            measure=measure.to_dict(),
            M=int(M),
            master_seed=int(master_seed),
            replicate_index=int(replicate_index),
            normalization=float(delta.max()),
            params=list(model.param_names),
            grid=grid.to_dict(),
        )
        tables.append(ContourTable(grid, delta, normalize(delta), meta))
    return tables


def compute_contour(model, observed_summary, grid, M, measure, master_seed, replicate_index=0, workers=1) -> ContourTable:
    return compute_contours(model, observed_summary, grid, M, [measure], master_seed, replicate_index, workers)[0]


# ---------------------------------------------------------------------------
# queries
# ---------------------------------------------------------------------------

def level_set_mask(table: ContourTable, alpha: float) -> np.ndarray:
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    return table.pi > alpha


def level_set(table: ContourTable, alpha: float) -> np.ndarray:
    """Grid points with ``pi > alpha``."""
    return table.points[level_set_mask(table, alpha)]


def level_set_width(table: ContourTable, alpha: float) -> float:
    """1-D grids: total cell length of the points in the level set."""
    return float(table.grid.cell_lengths()[level_set_mask(table, alpha)].sum())


@dataclass(frozen=True)
class Claim:
    """Assertion ``theta in C`` given as a vectorized predicate on grid points."""

    predicate: Callable[[np.ndarray], np.ndarray]
    label: str = ""

    def mask(self, points: np.ndarray) -> np.ndarray:
        out = np.asarray(self.predicate(np.atleast_2d(points)), dtype=bool)
        if out.shape != (np.atleast_2d(points).shape[0],):
            raise ValueError(f"claim {self.label!r} must return one boolean per point")
        return out

    def holds_at(self, theta) -> bool:
        return bool(self.mask(np.atleast_2d(np.asarray(theta, dtype=float)))[0])


def _claim_mask(table: ContourTable, claim) -> np.ndarray:
    if isinstance(claim, Claim) or hasattr(claim, "mask"):
        return claim.mask(table.points)
    mask = np.asarray(claim, dtype=bool)
    if mask.shape != (table.grid.size,):
        raise ValueError("claim mask must have one entry per grid point")
    return mask


def plausibility(table: ContourTable, claim) -> float:
    """``max pi`` over grid points in the claim; 0 for an empty claim."""
    mask = _claim_mask(table, claim)
    return float(table.pi[mask].max()) if mask.any() else 0.0


def belief(table: ContourTable, claim) -> float:
    """``1 - plausibility(complement)``."""
    mask = _claim_mask(table, claim)
    return 1.0 - plausibility(table, ~mask)


# ---------------------------------------------------------------------------
# marginals
# ---------------------------------------------------------------------------

def edges_from_centers(centers) -> np.ndarray:
    c = np.asarray(centers, dtype=float)
    if c.size == 1:
        return np.array([c[0] - 0.5, c[0] + 0.5])
    mid = (c[1:] + c[:-1]) / 2
    return np.concatenate([[c[0] - (mid[0] - c[0])], mid, [c[-1] + (c[-1] - mid[-1])]])


@dataclass(eq=False)
class MarginalContour:
    edges: np.ndarray
    values: np.ndarray  # NaN marks a bin without grid points
    centers: np.ndarray
    label: str = ""
    excluded: int = 0  # grid points with undefined or out-of-range feature

    def value_at(self, phi: float) -> float:
        j = _bin_index(self.edges, np.array([phi]))[0]
        if j < 0:
            raise ValueError(f"{phi} lies outside the marginal's bins")
        return float(self.values[j])


def _bin_index(edges: np.ndarray, values: np.ndarray) -> np.ndarray:
    idx = np.searchsorted(edges, values, side="right") - 1
    idx[values == edges[-1]] = edges.size - 2
    bad = ~np.isfinite(values) | (values < edges[0]) | (values > edges[-1])
    idx[bad] = -1
    return idx


def marginal_contour(table: ContourTable, feature, edges, centers=None, label: str = "") -> MarginalContour:
    """Discretized ``sup {pi(theta) : feature(theta) = phi}`` per bin of ``edges``.

    ``feature`` maps the ``(G, p)`` grid points to ``G`` values; NaN or
    infinite values are excluded.  Bins are ``[e_k, e_{k+1})`` with the last
    one closed.
    """
    edges = np.asarray(edges, dtype=float)
    if edges.ndim != 1 or edges.size < 2 or np.any(np.diff(edges) <= 0):
        raise ValueError("marginal bin edges must be strictly increasing with at least two entries")
    phi = np.asarray(feature(table.points), dtype=float)
    idx = _bin_index(edges, phi)
    values = np.full(edges.size - 1, np.nan)
    keep = idx >= 0
    np.fmax.at(values, idx[keep], table.pi[keep])
    if centers is None:
        centers = (edges[1:] + edges[:-1]) / 2
    return MarginalContour(edges, values, np.asarray(centers, dtype=float), label, int((~keep).sum()))


def projection(j: int) -> Callable[[np.ndarray], np.ndarray]:
    return lambda pts: pts[:, j]


def ratio(num: int, den: int) -> Callable[[np.ndarray], np.ndarray]:
    """``theta_num / theta_den``; NaN where the denominator is zero."""

    def f(pts):
        d = pts[:, den]
        out = np.full(pts.shape[0], np.nan)
        nz = d != 0
        out[nz] = pts[nz, num] / d[nz]
        return out

    return f


def projection_marginal(table: ContourTable, j: int) -> MarginalContour:
    axis = table.grid.axes[j]
    return marginal_contour(table, projection(j), edges_from_centers(axis), axis, table.grid.names[j])
