"""Bivariate normal with zero means, unit variances and unknown correlation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .base import GenerativeModel, ModelError

SUMMARIES = ("sample_corr", "sufficient_2d", "crossprod_1d")


def _check_rho(rho: float) -> float:
    if not -1.0 < rho < 1.0:
        raise ModelError(f"correlation rho must lie in (-1, 1), got {rho}")
    return float(rho)


def simulate_pairs(rho: float, n: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """``size`` datasets of ``n`` iid pairs, shape ``(size, n, 2)``."""
    rho = _check_rho(rho)
    z = rng.standard_normal((size, n, 2))
    out = np.empty_like(z)
    out[..., 0] = z[..., 0]
    out[..., 1] = rho * z[..., 0] + np.sqrt(1.0 - rho * rho) * z[..., 1]
    return out


def pair_summaries(data: np.ndarray, summary_choice: str) -> np.ndarray:
    data = np.asarray(data, dtype=float)
    x = data[..., 0]
    y = data[..., 1]
    if summary_choice == "sample_corr":
        xc = x - x.mean(axis=-1, keepdims=True)
        yc = y - y.mean(axis=-1, keepdims=True)
        r = (xc * yc).sum(-1) / np.sqrt((xc * xc).sum(-1) * (yc * yc).sum(-1))
        return r[:, None]
    if summary_choice == "sufficient_2d":
        return np.stack([(x * x + y * y).sum(-1), (x * y).sum(-1)], axis=-1)
    if summary_choice == "crossprod_1d":
        return (x * y).sum(-1)[:, None]
    raise ModelError(f"unknown correlation summary {summary_choice!r}; expected one of {SUMMARIES}")


def corr_simulate_summary(rho: float, n: int, summary_choice: str, rng: np.random.Generator) -> np.ndarray:
    return pair_summaries(simulate_pairs(rho, n, 1, rng), summary_choice)[0]


@dataclass(frozen=True)
class CorrelationModel(GenerativeModel):
    n: int = 30
    summary_choice: str = "sample_corr"

    name = "correlation"
    param_names = ("rho",)

    def __post_init__(self):
        if self.n < 3:
            raise ModelError("correlation model needs n >= 3")
        if self.summary_choice not in SUMMARIES:
            raise ModelError(f"unknown correlation summary {self.summary_choice!r}; expected one of {SUMMARIES}")

    @property
    def summary_dim(self) -> int:
        return 2 if self.summary_choice == "sufficient_2d" else 1

    def check_theta(self, theta) -> np.ndarray:
        arr = self._theta(theta)
        _check_rho(arr[0])
        return arr

    def simulate_data(self, theta, size, rng):
        return simulate_pairs(self.check_theta(theta)[0], self.n, size, rng)

    def summarize(self, data):
        return pair_summaries(data, self.summary_choice)

    def load_data(self, path):
        data = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
        if data.shape[1] != 2:
            raise ModelError(f"{path}: correlation data must have two columns, got {data.shape[1]}")
        return data
