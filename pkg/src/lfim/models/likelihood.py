"""Likelihood-based reference contours for models with a tractable likelihood.

The contour at ``theta`` is the Monte Carlo fraction of ``L`` datasets drawn
under ``theta`` whose relative likelihood at ``theta`` is no larger than the
observed one.  MLEs are grid argmaxima over the same grid.  Only the
correlation model and small zero-field Ising models qualify; this path is a
comparison oracle, not a user-facing method.
"""

from __future__ import annotations

import numpy as np
from scipy.special import logsumexp

from ..streams import stream
from .base import ModelError
from .correlation import CorrelationModel, simulate_pairs
from .ising import MAX_ENUMERATION_NODES, IsingModel, edge_sum_distribution, edge_sums


class CorrelationLikelihood:
    """Unit-variance, zero-mean bivariate normal; sufficient statistics ``(sum x^2 + y^2, sum xy)``."""

    def __init__(self, n: int):
        self.n = n

    def statistic(self, data) -> np.ndarray:
        data = np.asarray(data, dtype=float)
        if data.ndim == 2:
            data = data[None]
        x, y = data[..., 0], data[..., 1]
        return np.stack([(x * x + y * y).sum(-1), (x * y).sum(-1)], axis=-1)

    def loglik(self, stats: np.ndarray, rho: np.ndarray) -> np.ndarray:
        """``(K, G)`` log-likelihoods for ``K`` statistics and ``G`` values of rho."""
        a = stats[:, 0:1]
        b = stats[:, 1:2]
        one_m = 1.0 - rho[None, :] ** 2
        return -0.5 * self.n * np.log(one_m) - (a - 2.0 * rho[None, :] * b) / (2.0 * one_m)

    def simulate(self, theta: float, size: int, rng) -> np.ndarray:
        return self.statistic(simulate_pairs(theta, self.n, size, rng))


class IsingZeroFieldLikelihood:
    """Exponential family in the edge sum ``t``; ``log Z`` from the exact edge-sum histogram."""

    def __init__(self, adjacency):
        self.adjacency = adjacency
        self.values, counts = edge_sum_distribution(adjacency)
        self.log_counts = np.log(counts)

    def statistic(self, data) -> np.ndarray:
        return edge_sums(np.atleast_2d(data), self.adjacency).astype(float)[:, None]

    def log_partition(self, beta: np.ndarray) -> np.ndarray:
        return logsumexp(self.log_counts[:, None] + self.values[:, None] * beta[None, :], axis=0)

    def loglik(self, stats: np.ndarray, beta: np.ndarray) -> np.ndarray:
        return stats[:, 0:1] * beta[None, :] - self.log_partition(beta)[None, :]

    def simulate(self, theta: float, size: int, rng) -> np.ndarray:
        # draw t exactly from its enumerated distribution
        logp = self.log_counts + self.values * theta
        p = np.exp(logp - logsumexp(logp))
        return rng.choice(self.values, size=size, p=p)[:, None]


def likelihood_for(model):
    if isinstance(model, CorrelationModel):
        return CorrelationLikelihood(model.n)
    if isinstance(model, IsingModel):
        if not model.zero_field:
            raise ModelError("the Ising likelihood oracle needs the zero-field model")
        if model.adjacency.node_count > MAX_ENUMERATION_NODES:
            raise ModelError(f"the Ising likelihood oracle is capped at {MAX_ENUMERATION_NODES} nodes")
        return IsingZeroFieldLikelihood(model.adjacency)
    raise ModelError(f"model {getattr(model, 'name', model)!r} has no tractable likelihood")


def _relative_loglik(lik, stats: np.ndarray, axis: np.ndarray, g: int) -> np.ndarray:
    ll = lik.loglik(stats, axis)
    return ll[:, g] - ll.max(axis=1)


def likelihood_contour_values(model, data, grid, L: int, master_seed: int, replicate_index: int = 0, indices=None):
    """Oracle contour at the grid points in ``indices`` (all points by default)."""
    if grid.ndim != 1:
        raise ModelError("the likelihood oracle works on 1-D grids only")
    if L < 1:
        raise ValueError("L must be at least 1")
    lik = likelihood_for(model)
    axis = grid.axes[0]
    for theta in axis:
        model.check_theta(theta)
    obs = lik.statistic(data)
    indices = range(grid.size) if indices is None else indices
    out = []
    for g in indices:
        observed = _relative_loglik(lik, obs, axis, g)[0]
        rng = stream(master_seed, "likelihood-oracle", g, replicate_index)
        sims = _relative_loglik(lik, lik.simulate(axis[g], L, rng), axis, g)
        out.append(np.count_nonzero(sims <= observed) / L)
    return np.array(out)


def likelihood_based_contour_mc(model, data, grid, L: int, master_seed: int, replicate_index: int = 0):
    """Full oracle :class:`~lfim.engine.ContourTable` (``pi`` is the MC fraction itself)."""
    from ..engine import ContourTable

    values = likelihood_contour_values(model, data, grid, L, master_seed, replicate_index)
    meta = dict(model.describe())
    meta.update(
        measure={"name": "relative_likelihood"},
        L=int(L),
        master_seed=int(master_seed),
        replicate_index=int(replicate_index),
        normalization=1.0,
        params=list(model.param_names),
        grid=grid.to_dict(),
    )
    return ContourTable(grid, values, values.copy(), meta)
