"""Bernoulli mean observed through a Tulap-privatized count."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .base import GenerativeModel, ModelError


def tulap_sample(rng: np.random.Generator, size=None, epsilon: float = 1.0):
    """Draw ``Tulap(0, exp(-epsilon), 0)`` noise as ``G1 - G2 + U``.

    ``G1, G2`` count failures before the first success with success
    probability ``1 - exp(-epsilon)``; ``U ~ Unif(-1/2, 1/2)``.
    """
    p = -math.expm1(-epsilon)
    g1 = rng.geometric(p, size=size)
    g2 = rng.geometric(p, size=size)
    u = rng.uniform(-0.5, 0.5, size=size)
    # numpy's geometric counts trials; the shift cancels in the difference
    return (g1 - g2) + u


def tulap_variance(epsilon: float = 1.0) -> float:
    b = math.exp(-epsilon)
    return 2.0 * b / (1.0 - b) ** 2 + 1.0 / 12.0


def dp_simulate_summary(theta: float, n: int, rng: np.random.Generator, epsilon: float = 1.0) -> np.ndarray:
    return DPBernoulliModel(n=n, epsilon=epsilon).simulate_summary(theta, rng)


@dataclass(frozen=True)
class DPBernoulliModel(GenerativeModel):
    n: int = 25
    epsilon: float = 1.0
    summary_choice: str = "privatized_sum"

    name = "dp_bernoulli"
    param_names = ("theta",)
    summary_dim = 1

    def __post_init__(self):
        if self.n < 1:
            raise ModelError("dp_bernoulli needs n >= 1")
        if self.epsilon <= 0:
            raise ModelError("privacy level epsilon must be positive")
        if self.summary_choice != "privatized_sum":
            raise ModelError(f"unknown dp summary {self.summary_choice!r}; expected 'privatized_sum'")

    def check_theta(self, theta):
        arr = self._theta(theta)
        if not 0.0 <= arr[0] <= 1.0:
            raise ModelError(f"Bernoulli mean must lie in [0, 1], got {arr[0]}")
        return arr

    def simulate_data(self, theta, size, rng):
        p = self.check_theta(theta)[0]
        counts = rng.binomial(self.n, p, size=size)
        return counts + tulap_sample(rng, size=size, epsilon=self.epsilon)

    def summarize(self, data):
        return np.asarray(data, dtype=float).reshape(-1, 1)

    def simulate_at(self, thetas, rng):
        p = np.atleast_2d(np.asarray(thetas, dtype=float))[:, 0]
        if np.any((p < 0) | (p > 1)):
            raise ModelError("Bernoulli mean must lie in [0, 1]")
        return (rng.binomial(self.n, p) + tulap_sample(rng, size=p.size, epsilon=self.epsilon))[:, None]

    def load_data(self, path):
        values = np.loadtxt(path, comments="#", ndmin=1).ravel()
        if values.size != 1:
            raise ModelError(f"{path}: expected a single privatized release, got {values.size} values")
        return values

    def describe(self):
        out = super().describe()
        out["epsilon"] = self.epsilon
        return out
