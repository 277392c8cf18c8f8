"""The g-and-k family, defined through its quantile function."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

from .base import DegenerateSummaryError, GenerativeModel, ModelError

GK_PARAMS = ("mu", "sigma", "g", "k")


def _gk_transform(w, mu, sigma, g, k, c=0.8):
    # (1 - e^{-gw}) / (1 + e^{-gw}) == tanh(gw / 2), without overflow
    return mu + sigma * w * (1.0 + c * np.tanh(0.5 * g * w)) * (1.0 + w * w) ** k


def gk_quantile(u, mu=0.0, sigma=1.0, g=0.0, k=0.0, c=0.8):
    """Quantile function of the g-and-k distribution at probability ``u``."""
    u = np.asarray(u, dtype=float)
    if np.any((u <= 0.0) | (u >= 1.0)):
        raise ModelError("g-and-k quantile needs 0 < u < 1")
    _check_params(mu, sigma, g, k)
    out = _gk_transform(ndtri(u), mu, sigma, g, k, c)
    return float(out) if out.ndim == 0 else out


def _check_params(mu, sigma, g, k):
    if not np.all(np.asarray(sigma) > 0):
        raise ModelError(f"g-and-k sigma must be > 0, got {sigma}")
    if not np.all(np.asarray(k) > -0.5):
        raise ModelError(f"g-and-k k must be > -1/2, got {k}")


def skew_kurtosis(x: np.ndarray) -> np.ndarray:
    """Moment skewness ``m3 / m2^1.5`` and excess kurtosis ``m4 / m2^2 - 3`` per row."""
    x = np.asarray(x, dtype=float)
    xc = x - x.mean(axis=-1, keepdims=True)
    x2 = xc * xc
    m2 = x2.mean(-1)
    if np.any(m2 <= 0.0) or not np.all(np.isfinite(m2)):
        raise DegenerateSummaryError("g-and-k sample with zero or non-finite variance")
    m3 = (x2 * xc).mean(-1)
    m4 = (x2 * x2).mean(-1)
    return np.stack([m3 / m2**1.5, m4 / (m2 * m2) - 3.0], axis=-1)


def gk_simulate_summary(theta, n: int, rng: np.random.Generator, mu=0.0, sigma=1.0, c=0.8) -> np.ndarray:
    """(skewness, excess kurtosis) of ``n`` draws with ``theta = (g, k)``."""
    g, k = theta
    return GKModel(n=n, mu=mu, sigma=sigma, c=c).simulate_summary((g, k), rng)


@dataclass(frozen=True)
class GKModel(GenerativeModel):
    """g-and-k model with any subset of ``(mu, sigma, g, k)`` free.

    Quantiles are evaluated at standard normal draws ``w`` directly, which
    is the same as ``Q(U)`` with ``w = Phi^{-1}(U)``.
    """

    n: int = 100
    mu: float = 0.0
    sigma: float = 1.0
    g: float = 0.0
    k: float = 0.0
    c: float = 0.8
    free: tuple[str, ...] = ("g", "k")
    summary_choice: str = "skew_kurtosis"

    name = "gk"
    summary_dim = 2

    def __post_init__(self):
        if self.n < 4:
            raise ModelError("g-and-k model needs n >= 4")
        if not self.free or any(p not in GK_PARAMS for p in self.free) or len(set(self.free)) != len(self.free):
            raise ModelError(f"free parameters must be distinct names from {GK_PARAMS}, got {self.free}")
        if self.summary_choice != "skew_kurtosis":
            raise ModelError(f"unknown g-and-k summary {self.summary_choice!r}; expected 'skew_kurtosis'")

    @property
    def param_names(self) -> tuple[str, ...]:
        return tuple(self.free)

    def full_params(self, theta) -> dict:
        params = {p: getattr(self, p) for p in GK_PARAMS}
        params.update(zip(self.free, self.check_theta(theta)))
        return params

    def check_theta(self, theta) -> np.ndarray:
        arr = self._theta(theta)
        vals = {p: getattr(self, p) for p in GK_PARAMS}
        vals.update(zip(self.free, arr))
        _check_params(vals["mu"], vals["sigma"], vals["g"], vals["k"])
        return arr

    def simulate_data(self, theta, size, rng):
        p = self.full_params(theta)
        w = rng.standard_normal((size, self.n))
        return _gk_transform(w, p["mu"], p["sigma"], p["g"], p["k"], self.c)

    def summarize(self, data):
        return skew_kurtosis(data)

    def simulate_at(self, thetas, rng):
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        cols = {p: np.full((thetas.shape[0], 1), getattr(self, p), dtype=float) for p in GK_PARAMS}
        for j, p in enumerate(self.free):
            cols[p] = thetas[:, j : j + 1]
        _check_params(cols["mu"], cols["sigma"], cols["g"], cols["k"])
        w = rng.standard_normal((thetas.shape[0], self.n))
        return skew_kurtosis(_gk_transform(w, cols["mu"], cols["sigma"], cols["g"], cols["k"], self.c))

    def load_data(self, path):
        return np.loadtxt(path, delimiter=",", comments="#", ndmin=1).ravel()

    def describe(self):
        out = super().describe()
        out.update({p: getattr(self, p) for p in GK_PARAMS if p not in self.free})
        out["c"] = self.c
        return out
