"""Ising model on an arbitrary undirected graph.

``P(z) ∝ exp(beta * sum_{(i,j) in E} z_i z_j + B * sum_i z_i)`` for
``z in {-1, +1}^N``, which is ``exp((beta/2) z'Az + B sum z)`` with ``A``
the symmetric 0/1 adjacency matrix.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from functools import cached_property

import numba
import numpy as np
from scipy.special import logsumexp

from .base import GenerativeModel, ModelError

MAX_ENUMERATION_NODES = 20

_LATTICE_RE = re.compile(r"^\s*lattice\s*:\s*(\d+)\s*[x×X]\s*(\d+)\s*$")


@dataclass(frozen=True, eq=False)
class AdjacencySpec:
    node_count: int
    edges: np.ndarray  # (E, 2) int64, each pair stored once with i < j
    source: str = ""

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if self.node_count < 1:
            raise ModelError("adjacency needs at least one node")
        if edges.size:
            if edges.min() < 0 or edges.max() >= self.node_count:
                raise ModelError(f"edge index out of range [0, {self.node_count})")
            if np.any(edges[:, 0] == edges[:, 1]):
                bad = edges[edges[:, 0] == edges[:, 1]][0]
                raise ModelError(f"self-loop at node {int(bad[0])}")
        edges = np.sort(edges, axis=1)
        uniq, counts = np.unique(edges, axis=0, return_counts=True)
        if np.any(counts > 1):
            dup = uniq[counts > 1][0]
            raise ModelError(f"duplicate edge ({int(dup[0])}, {int(dup[1])})")
        object.__setattr__(self, "edges", edges)

    @classmethod
    def lattice(cls, rows: int, cols: int) -> "AdjacencySpec":
        """Free-boundary nearest-neighbour lattice, nodes numbered row-major."""
        if rows < 1 or cols < 1:
            raise ModelError("lattice dimensions must be positive")
        idx = np.arange(rows * cols).reshape(rows, cols)
        horiz = np.stack([idx[:, :-1].ravel(), idx[:, 1:].ravel()], axis=1)
        vert = np.stack([idx[:-1, :].ravel(), idx[1:, :].ravel()], axis=1)
        return cls(rows * cols, np.vstack([horiz, vert]), source=f"lattice:{rows}x{cols}")

    @classmethod
    def from_edge_list(cls, text: str, node_count: int | None = None, source: str = "") -> "AdjacencySpec":
        """Parse ``i j`` pairs, one per line, 0-based, ``#`` comments."""
        pairs = []
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ModelError(f"edge list line {lineno}: expected 'i j', got {raw!r}")
            try:
                pairs.append((int(parts[0]), int(parts[1])))
            except ValueError:
                raise ModelError(f"edge list line {lineno}: non-integer node index in {raw!r}") from None
        edges = np.array(pairs, dtype=np.int64).reshape(-1, 2)
        if node_count is None:
            node_count = int(edges.max()) + 1 if edges.size else 0
        return cls(int(node_count), edges, source=source)

    @classmethod
    def parse(cls, spec: str, node_count: int | None = None) -> "AdjacencySpec":
        """``lattice:RxC`` or a path to an edge-list file."""
        m = _LATTICE_RE.match(spec)
        if m:
            return cls.lattice(int(m.group(1)), int(m.group(2)))
        with open(spec) as fh:
            return cls.from_edge_list(fh.read(), node_count, source=spec)

    @cached_property
    def csr(self) -> tuple[np.ndarray, np.ndarray]:
        """Neighbour lists as ``(indptr, indices)``."""
        both = np.vstack([self.edges, self.edges[:, ::-1]])
        order = np.lexsort((both[:, 1], both[:, 0]))
        both = both[order]
        indptr = np.zeros(self.node_count + 1, dtype=np.int64)
        np.add.at(indptr, both[:, 0] + 1, 1)
        return np.cumsum(indptr), np.ascontiguousarray(both[:, 1])

    @cached_property
    def padded_neighbours(self) -> np.ndarray:
        """``(N, max_degree)`` neighbour table padded with the index ``N``."""
        indptr, indices = self.csr
        width = max(self.max_degree(), 1)
        table = np.full((self.node_count, width), self.node_count, dtype=np.int64)
        for i in range(self.node_count):
            nb = indices[indptr[i] : indptr[i + 1]]
            table[i, : nb.size] = nb
        return table

    def matrix(self) -> np.ndarray:
        a = np.zeros((self.node_count, self.node_count), dtype=np.int64)
        a[self.edges[:, 0], self.edges[:, 1]] = 1
        a[self.edges[:, 1], self.edges[:, 0]] = 1
        return a

    def max_degree(self) -> int:
        if not self.edges.size:
            return 0
        return int(np.bincount(self.edges.ravel(), minlength=self.node_count).max())


_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_UNIT = 9007199254740992.0  # 2**53


@numba.njit(cache=True, nogil=True)
def _gibbs_chains(nbr, thresholds, max_deg, total_sweeps, seeds):
    # Chains advance in lockstep, site by site; each chain only ever reads
    # its own column and its own SplitMix64 counter.  Row n_nodes of the
    # spin table is a zero pad for short neighbour lists.
    n_nodes, width = nbr.shape
    n_chains = seeds.size
    spins = np.zeros((n_nodes + 1, n_chains), dtype=np.int64)
    state = seeds.copy()
    half = np.uint64(1) << np.uint64(52)
    for i in range(n_nodes):
        for c in range(n_chains):
            s = state[c] + _GOLDEN
            state[c] = s
            z = (s ^ (s >> np.uint64(30))) * _MIX1
            z = (z ^ (z >> np.uint64(27))) * _MIX2
            z = z ^ (z >> np.uint64(31))
            spins[i, c] = 1 - 2 * np.int64((z >> np.uint64(11)) >= half)
    for _ in range(total_sweeps):
        for i in range(n_nodes):
            for c in range(n_chains):
                m = 0
                for e in range(width):
                    m += spins[nbr[i, e], c]
                s = state[c] + _GOLDEN
                state[c] = s
                z = (s ^ (s >> np.uint64(30))) * _MIX1
                z = (z ^ (z >> np.uint64(27))) * _MIX2
                z = z ^ (z >> np.uint64(31))
                spins[i, c] = 1 - 2 * np.int64((z >> np.uint64(11)) >= thresholds[m + max_deg])
    out = np.empty((n_chains, n_nodes), dtype=np.int8)
    for c in range(n_chains):
        for i in range(n_nodes):
            out[c, i] = spins[i, c]
    return out


def _conditional_table(beta: float, field_: float, max_deg: int) -> np.ndarray:
    m = np.arange(-max_deg, max_deg + 1, dtype=float)
    return 1.0 / (1.0 + np.exp(-2.0 * (beta * m + field_)))


def ising_gibbs_chains(beta, field_, adjacency: AdjacencySpec, size, sweeps, burn_in, rng) -> np.ndarray:
    """``size`` independent chains; returns ``(size, N)`` int8 spins.

    Each chain starts from iid fair spins, updates sites in index (raster)
    order and is read after ``burn_in + sweeps`` full sweeps.  Per-chain
    uniforms come from a SplitMix64 counter seeded from ``rng``, so a
    chain's trajectory does not depend on how many chains run beside it.
    """
    if sweeps < 1 or burn_in < 0:
        raise ModelError("Gibbs sampling needs sweeps >= 1 and burn_in >= 0")
    max_deg = adjacency.max_degree()
    seeds = rng.integers(0, np.iinfo(np.uint64).max, size=size, dtype=np.uint64, endpoint=True)
    # u < p  <=>  (53-bit integer draw) < p * 2^53
    table = _conditional_table(float(beta), float(field_), max_deg)
    thresholds = np.minimum(np.ceil(table * _UNIT), _UNIT).astype(np.uint64)
    return _gibbs_chains(adjacency.padded_neighbours, thresholds, max_deg, int(burn_in + sweeps), seeds)


def ising_gibbs_simulate(theta, adjacency: AdjacencySpec, sweeps: int, burn_in: int, rng) -> np.ndarray:
    beta, field_ = theta
    return ising_gibbs_chains(beta, field_, adjacency, 1, sweeps, burn_in, rng)[0]


def edge_sums(spins: np.ndarray, adjacency: AdjacencySpec) -> np.ndarray:
    spins = np.atleast_2d(spins).astype(np.int64)
    e = adjacency.edges
    return (spins[:, e[:, 0]] * spins[:, e[:, 1]]).sum(axis=1)


def ising_summaries(spins: np.ndarray, adjacency: AdjacencySpec, summary_choice: str) -> np.ndarray:
    spins = np.atleast_2d(spins)
    es = edge_sums(spins, adjacency).astype(float)
    if summary_choice == "edge_sum_1d":
        return es[:, None]
    if summary_choice == "edge_and_site_2d":
        return np.stack([es, spins.sum(axis=1, dtype=np.int64).astype(float)], axis=1)
    raise ModelError(f"unknown Ising summary {summary_choice!r}; expected 'edge_sum_1d' or 'edge_and_site_2d'")


def ising_simulate_summary(theta, adjacency, summary_choice, sweeps, burn_in, rng) -> np.ndarray:
    return ising_summaries(ising_gibbs_simulate(theta, adjacency, sweeps, burn_in, rng), adjacency, summary_choice)[0]


def enumeration_configs(node_count: int) -> np.ndarray:
    """All ``2^N`` spin vectors; row ``b`` has ``z_i = 1 - 2 * bit_i(b)``."""
    if node_count > MAX_ENUMERATION_NODES:
        raise ModelError(f"exact enumeration is capped at {MAX_ENUMERATION_NODES} nodes, got {node_count}")
    b = np.arange(2**node_count, dtype=np.int64)[:, None]
    bits = (b >> np.arange(node_count, dtype=np.int64)) & 1
    return (1 - 2 * bits).astype(np.int8)


def ising_exact_enumeration(beta: float, field_: float, adjacency: AdjacencySpec) -> np.ndarray:
    """Normalized probabilities of every configuration (ordering of :func:`enumeration_configs`)."""
    configs = enumeration_configs(adjacency.node_count)
    logw = beta * edge_sums(configs, adjacency) + field_ * configs.sum(axis=1, dtype=np.int64)
    logw = logw.astype(float)
    return np.exp(logw - logsumexp(logw))


def edge_sum_distribution(adjacency: AdjacencySpec) -> tuple[np.ndarray, np.ndarray]:
    """Distinct edge-sum values and their configuration counts."""
    values, counts = np.unique(edge_sums(enumeration_configs(adjacency.node_count), adjacency), return_counts=True)
    return values.astype(float), counts.astype(float)


def odds_ratio_transform(beta):
    """Conditional odds ratio ``exp(4 beta)`` for a neighbour flipping from -1 to +1."""
    return np.exp(4.0 * np.asarray(beta, dtype=float)) if np.ndim(beta) else math.exp(4.0 * beta)


@dataclass(frozen=True, eq=False)
class IsingModel(GenerativeModel):
    adjacency: AdjacencySpec = field(default_factory=lambda: AdjacencySpec.lattice(4, 4))
    summary_choice: str = "edge_sum_1d"
    zero_field: bool = False
    burn_in: int = 200
    sweeps: int = 1
    allow_zero_beta: bool = False

    name = "ising"

    def __post_init__(self):
        if self.summary_choice not in ("edge_sum_1d", "edge_and_site_2d"):
            raise ModelError(f"unknown Ising summary {self.summary_choice!r}")
        if self.sweeps < 1 or self.burn_in < 0:
            raise ModelError("Gibbs sampling needs sweeps >= 1 and burn_in >= 0")

    @property
    def n(self) -> int:
        return self.adjacency.node_count

    @property
    def param_names(self):
        return ("beta",) if self.zero_field else ("beta", "B")

    @property
    def summary_dim(self):
        return 1 if self.summary_choice == "edge_sum_1d" else 2

    def check_theta(self, theta):
        arr = self._theta(theta)
        beta = arr[0]
        if beta < 0 or (beta == 0 and not self.allow_zero_beta):
            bound = ">= 0" if self.allow_zero_beta else "> 0"
            raise ModelError(f"Ising beta must be {bound}, got {beta}")
        return arr

    def _beta_field(self, theta):
        arr = self.check_theta(theta)
        return (arr[0], 0.0) if self.zero_field else (arr[0], arr[1])

    def simulate_data(self, theta, size, rng):
        beta, field_ = self._beta_field(theta)
        return ising_gibbs_chains(beta, field_, self.adjacency, size, self.sweeps, self.burn_in, rng)

    def summarize(self, data):
        return ising_summaries(data, self.adjacency, self.summary_choice)

    def load_data(self, path):
        """Whitespace-separated +/-1 values, read row-major."""
        spins = np.loadtxt(path, comments="#", ndmin=1).ravel()
        if spins.size != self.adjacency.node_count:
            raise ModelError(f"{path}: expected {self.adjacency.node_count} spins, got {spins.size}")
        if not np.all(np.isin(spins, (-1, 1))):
            raise ModelError(f"{path}: spins must be -1 or +1")
        return spins.astype(np.int8)

    def describe(self):
        out = super().describe()
        out.update(
            adjacency=self.adjacency.source or f"{self.adjacency.node_count} nodes / {len(self.adjacency.edges)} edges",
            zero_field=self.zero_field,
            burn_in=self.burn_in,
            sweeps=self.sweeps,
        )
        return out
