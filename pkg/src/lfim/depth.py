"""Permutation-invariant conformity measures.

Each measure scores how central a candidate summary is within a reference
cloud of simulated summaries; larger means more central.  Reference sets
are put in a canonical (lexicographic) row order before any floating point
reduction, so every measure is invariant to member order bit-for-bit.

The compiled kernels take a ``skip`` row index so that leave-one-out scores
run the exact same arithmetic as a direct call on the reduced set.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numba
import numpy as np
from scipy.special import ndtri
from scipy.stats import qmc

from .streams import stream

MEASURES = ("mahalanobis", "tukey", "neg_abs_dev")

# relative Cholesky pivot below which a covariance counts as singular
_PIVOT_RTOL = 1e-12


class DegenerateReferenceError(ValueError):
    """Regularized covariance of the reference set is singular."""


class UnsupportedMeasureError(ValueError):
    pass


def as_summary_set(ref) -> np.ndarray:
    arr = np.asarray(ref, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"summary set must be a nonempty (M, d) array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("summary set contains non-finite entries")
    return arr


def as_summary_vector(x, d: int | None = None) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if arr.ndim != 1 or arr.size < 1:
        raise ValueError(f"summary vector must be 1-D and nonempty, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("summary vector contains non-finite entries")
    if d is not None and arr.size != d:
        raise ValueError(f"dimension mismatch: candidate has d={arr.size}, reference has d={d}")
    return arr


def canonical_order(points: np.ndarray) -> np.ndarray:
    """Row permutation sorting ``points`` lexicographically (first column major)."""
    return np.lexsort(points.T[::-1])


# ---------------------------------------------------------------------------
# compiled kernels
# ---------------------------------------------------------------------------

@numba.njit(cache=True, nogil=True)
def _mahalanobis_kernel(pts, skip, cand, ridge):
    n_all, d = pts.shape
    m = n_all - 1 if skip >= 0 else n_all
    mean = np.zeros(d)
    for i in range(n_all):
        if i == skip:
            continue
        for a in range(d):
            mean[a] += pts[i, a]
    for a in range(d):
        mean[a] /= m

    first = 0 if skip != 0 else 1
    identical = True
    for i in range(n_all):
        if i == skip:
            continue
        for a in range(d):
            if pts[i, a] != pts[first, a]:
                identical = False
                break
        if not identical:
            break

    cov = np.zeros((d, d))
    if not identical and m > 1:
        for i in range(n_all):
            if i == skip:
                continue
            for a in range(d):
                da = pts[i, a] - mean[a]
                for b in range(a + 1):
                    cov[a, b] += da * (pts[i, b] - mean[b])
        for a in range(d):
            for b in range(a + 1):
                cov[a, b] /= m - 1
                cov[b, a] = cov[a, b]
    for a in range(d):
        cov[a, a] += ridge

    # Cholesky with a relative pivot check
    chol = np.zeros((d, d))
    for a in range(d):
        for b in range(a + 1):
            s = cov[a, b]
            for k in range(b):
                s -= chol[a, k] * chol[b, k]
            if a == b:
                if s <= 0.0 or s <= _PIVOT_RTOL * cov[a, a]:
                    return np.nan
                chol[a, a] = np.sqrt(s)
            else:
                chol[a, b] = s / chol[b, b]

    q = 0.0
    y = np.zeros(d)
    for a in range(d):
        s = cand[a] - mean[a]
        for k in range(a):
            s -= chol[a, k] * y[k]
        y[a] = s / chol[a, a]
        q += y[a] * y[a]
    return 1.0 / (1.0 + q)


@numba.njit(cache=True, nogil=True)
def _neg_abs_dev_kernel(pts, skip, cand):
    n_all = pts.shape[0]
    m = n_all - 1 if skip >= 0 else n_all
    total = 0.0
    for i in range(n_all):
        if i != skip:
            total += pts[i, 0]
    return -abs(cand[0] - total / m)


@numba.njit(cache=True, nogil=True)
def _tukey1d_kernel(pts, skip, cand):
    n_all = pts.shape[0]
    m = n_all - 1 if skip >= 0 else n_all
    le = 0
    ge = 0
    c = cand[0]
    for i in range(n_all):
        if i == skip:
            continue
        if pts[i, 0] <= c:
            le += 1
        if pts[i, 0] >= c:
            ge += 1
    return min(le, ge) / m


@numba.njit(cache=True, nogil=True)
def _tukey2d_kernel(pts, skip, cand):
    # Each nonzero offset v is stored as (side, base): base is a monotone
    # pseudo-angle in [-1, 1) of v or of -v, whichever lies in the upper
    # half plane, so opposite and parallel offsets compare exactly.  The
    # closed-halfplane minimum equals min_j #{angles in (phi_j, phi_j + pi]}.
    n_all = pts.shape[0]
    m = n_all - 1 if skip >= 0 else n_all
    base = np.empty(n_all)
    side = np.empty(n_all, dtype=np.int64)
    coincident = 0
    k = 0
    for i in range(n_all):
        if i == skip:
            continue
        vx = pts[i, 0] - cand[0]
        vy = pts[i, 1] - cand[1]
        if vx == 0.0 and vy == 0.0:
            coincident += 1
            continue
        if vy > 0.0 or (vy == 0.0 and vx > 0.0):
            side[k] = 0
            base[k] = -vx / (abs(vx) + vy)
        else:
            side[k] = 1
            base[k] = vx / (abs(vx) - vy)
        k += 1
    if k == 0:
        return coincident / m
    # sweep groups of equal base angle in ascending order, keeping the
    # number of side-0 / side-1 angles at or below the current one
    order = np.argsort(base[:k], kind="mergesort")
    n0 = 0
    for j in range(k):
        n0 += 1 - side[j]
    n1 = k - n0
    le0 = 0
    le1 = 0
    best = k
    g = 0
    while g < k:
        b = base[order[g]]
        h = g
        has0 = False
        has1 = False
        while h < k and base[order[h]] == b:
            if side[order[h]] == 0:
                le0 += 1
                has0 = True
            else:
                le1 += 1
                has1 = True
            h += 1
        if has0 and (n0 - le0) + le1 < best:
            best = (n0 - le0) + le1
        if has1 and (n1 - le1) + le0 < best:
            best = (n1 - le1) + le0
        g = h
    return (coincident + best) / m


@numba.njit(cache=True, nogil=True)
def _tukey_directional_kernel(pts, skip, cand, dirs):
    n_all, d = pts.shape
    m = n_all - 1 if skip >= 0 else n_all
    best = m
    for u in range(dirs.shape[0]):
        cnt = 0
        for i in range(n_all):
            if i == skip:
                continue
            s = 0.0
            for a in range(d):
                s += (pts[i, a] - cand[a]) * dirs[u, a]
            if s >= 0.0:
                cnt += 1
        if cnt < best:
            best = cnt
    return best / m


@numba.njit(cache=True, nogil=True)
def _loo_mahalanobis(pts, ridge):
    out = np.empty(pts.shape[0])
    for i in range(pts.shape[0]):
        out[i] = _mahalanobis_kernel(pts, i, pts[i], ridge)
    return out


@numba.njit(cache=True, nogil=True)
def _loo_neg_abs_dev(pts):
    out = np.empty(pts.shape[0])
    for i in range(pts.shape[0]):
        out[i] = _neg_abs_dev_kernel(pts, i, pts[i])
    return out


@numba.njit(cache=True, nogil=True)
def _loo_tukey1d(pts):
    out = np.empty(pts.shape[0])
    for i in range(pts.shape[0]):
        out[i] = _tukey1d_kernel(pts, i, pts[i])
    return out


@numba.njit(cache=True, nogil=True)
def _loo_tukey2d(pts):
    out = np.empty(pts.shape[0])
    for i in range(pts.shape[0]):
        out[i] = _tukey2d_kernel(pts, i, pts[i])
    return out


@numba.njit(cache=True, nogil=True)
def _loo_tukey_directional(pts, dirs):
    out = np.empty(pts.shape[0])
    for i in range(pts.shape[0]):
        out[i] = _tukey_directional_kernel(pts, i, pts[i], dirs)
    return out


# ---------------------------------------------------------------------------
# public measures
# ---------------------------------------------------------------------------

@lru_cache(maxsize=32)
def tukey_directions(d: int, count: int, seed: int) -> np.ndarray:
    """``count`` quasi-uniform unit vectors in R^d from a scrambled Sobol net."""
    rng = stream(seed, "tukey-directions", d, count)
    scramble_seed = int(rng.integers(0, 2**63 - 1))
    u = qmc.Sobol(d, scramble=True, seed=scramble_seed).random(count)
    u = np.clip(u, 1e-12, 1 - 1e-12)
    z = ndtri(u)
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    z.setflags(write=False)
    return z


def _prepare(ref, candidate):
    ref = as_summary_set(ref)
    cand = as_summary_vector(candidate, ref.shape[1])
    return np.ascontiguousarray(ref[canonical_order(ref)]), cand


def mahalanobis_depth(ref, candidate, ridge: float = 0.0) -> float:
    """Mahalanobis depth ``1 / (1 + (c - mean)' (S + ridge I)^-1 (c - mean))``.

    ``S`` is the sample covariance with denominator ``M - 1``.  A
    reference set with a single member has ``S = 0``, so it needs
    ``ridge > 0``.
    """
    if ridge < 0:
        raise ValueError("ridge must be nonnegative")
    pts, cand = _prepare(ref, candidate)
    value = _mahalanobis_kernel(pts, -1, cand, float(ridge))
    if np.isnan(value):
        raise DegenerateReferenceError(
            f"regularized covariance of the {pts.shape[0]}-member reference set is singular (ridge={ridge})"
        )
    return float(value)


def tukey_depth(ref, candidate, directions: int = 512, direction_seed: int = 0) -> float:
    """Halfspace depth of ``candidate`` among ``ref`` using closed halfspaces.

    Exact for d = 1 and d = 2.  For d >= 3 the minimum is taken over
    ``directions`` deterministic directions, which gives an upper bound on
    the exact depth.
    """
    pts, cand = _prepare(ref, candidate)
    d = pts.shape[1]
    if d == 1:
        return float(_tukey1d_kernel(pts, -1, cand))
    if d == 2:
        return float(_tukey2d_kernel(pts, -1, cand))
    dirs = tukey_directions(d, int(directions), int(direction_seed))
    return float(_tukey_directional_kernel(pts, -1, cand, dirs))


def neg_abs_deviation(ref, candidate) -> float:
    """``-|candidate - mean(ref)|`` for scalar summaries."""
    pts, cand = _prepare(ref, candidate)
    if pts.shape[1] != 1:
        raise UnsupportedMeasureError(f"neg_abs_dev needs d = 1, got d = {pts.shape[1]}")
    return float(_neg_abs_dev_kernel(pts, -1, cand))


@dataclass(frozen=True)
class ConformityMeasure:
    """A named conformity measure with its options."""

    name: str = "mahalanobis"
    ridge: float = 0.0
    directions: int = 512
    direction_seed: int = 0

    def __post_init__(self):
        if self.name not in MEASURES:
            raise UnsupportedMeasureError(f"unknown measure {self.name!r}; expected one of {MEASURES}")
        if self.ridge < 0:
            raise ValueError("ridge must be nonnegative")
        if self.directions < 1:
            raise ValueError("directions must be a positive integer")

    def __call__(self, ref, candidate) -> float:
        if self.name == "mahalanobis":
            return mahalanobis_depth(ref, candidate, self.ridge)
        if self.name == "tukey":
            return tukey_depth(ref, candidate, self.directions, self.direction_seed)
        return neg_abs_deviation(ref, candidate)

    def loo_scores(self, pooled) -> np.ndarray:
        """Scores ``T_i = Psi(pooled without i, pooled[i])`` for every row.

        Bit-identical to calling the measure on each reduced set.
        """
        pooled = as_summary_set(pooled)
        if pooled.shape[0] < 2:
            raise ValueError("leave-one-out scoring needs at least two pooled summaries")
        order = canonical_order(pooled)
        pts = np.ascontiguousarray(pooled[order])
        d = pts.shape[1]
        if self.name == "mahalanobis":
            t_sorted = _loo_mahalanobis(pts, float(self.ridge))
            bad = np.flatnonzero(np.isnan(t_sorted))
            if bad.size:
                idx = int(order[bad[0]])
                raise DegenerateReferenceError(
                    f"regularized covariance singular when leaving out pooled summary {idx} "
                    f"(ridge={self.ridge})"
                )
        elif self.name == "neg_abs_dev":
            if d != 1:
                raise UnsupportedMeasureError(f"neg_abs_dev needs d = 1, got d = {d}")
            t_sorted = _loo_neg_abs_dev(pts)
        elif d == 1:
            t_sorted = _loo_tukey1d(pts)
        elif d == 2:
            t_sorted = _loo_tukey2d(pts)
        else:
            dirs = tukey_directions(d, int(self.directions), int(self.direction_seed))
            t_sorted = _loo_tukey_directional(pts, dirs)
        out = np.empty_like(t_sorted)
        out[order] = t_sorted
        return out

    def to_dict(self) -> dict:
        out = {"name": self.name}
        if self.name == "mahalanobis":
            out["ridge"] = self.ridge
        elif self.name == "tukey":
            out["directions"] = self.directions
            out["direction_seed"] = self.direction_seed
        return out
