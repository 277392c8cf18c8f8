from __future__ import annotations

import numpy as np


class ModelError(ValueError):
    """Invalid model configuration or parameter outside the admissible box."""


class DegenerateSummaryError(ValueError):
    """A simulated dataset produced an undefined summary (e.g. zero variance)."""


class GenerativeModel:
    """Simulate summaries of ``n``-observation datasets from ``P_theta``.

    Subclasses set ``name``, ``param_names`` and ``summary_dim`` and implement
    ``check_theta``, ``simulate_data`` and ``summarize``.  All simulation is a
    pure function of ``(theta, rng state)``.
    """

    name: str = ""
    param_names: tuple[str, ...] = ()
    summary_dim: int = 1
    summary_choice: str = ""

    def check_theta(self, theta) -> np.ndarray:
        raise NotImplementedError

    def simulate_data(self, theta, size: int, rng: np.random.Generator):
        raise NotImplementedError

    def summarize(self, data) -> np.ndarray:
        """Map a batch of raw datasets to an ``(size, summary_dim)`` array."""
        raise NotImplementedError

    def simulate_summaries(self, theta, size: int, rng: np.random.Generator) -> np.ndarray:
        return self.summarize(self.simulate_data(theta, size, rng))

    def simulate_summary(self, theta, rng: np.random.Generator) -> np.ndarray:
        return self.simulate_summaries(theta, 1, rng)[0]

    def simulate_at(self, thetas, rng: np.random.Generator) -> np.ndarray:
        """One summary per row of ``thetas`` (used by the ABC baseline)."""
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        return np.vstack([self.simulate_summaries(t, 1, rng) for t in thetas])

    def summary_of(self, data) -> np.ndarray:
        """Summary vector of one observed raw dataset."""
        return self.summarize(np.asarray(data)[None, ...])[0]

    def load_data(self, path: str):
        raise ModelError(f"model {self.name!r} has no raw-data reader")

    def describe(self) -> dict:
        return {"model": self.name, "summary_choice": self.summary_choice, "n": getattr(self, "n", None)}

    def _theta(self, theta) -> np.ndarray:
        arr = np.atleast_1d(np.asarray(theta, dtype=float))
        if arr.shape != (len(self.param_names),):
            raise ModelError(
                f"{self.name}: expected {len(self.param_names)} parameter(s) {self.param_names}, got {arr.tolist()}"
            )
        if not np.all(np.isfinite(arr)):
            raise ModelError(f"{self.name}: non-finite parameter {arr.tolist()}")
        return arr
