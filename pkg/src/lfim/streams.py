"""Deterministic derivation of independent random streams.

Every unit of simulation work (one grid point of one replicate, one ABC
run, one set of Tukey directions) owns a stream derived from a
:class:`StreamKey`.  Results therefore do not depend on how the work is
scheduled across workers.

Derivation
----------
The four key fields are folded into 128 bits of Philox key material with
the SplitMix64 finalizer::

    h = mix64(master_seed ^ C0)
    h = mix64(h ^ fnv1a64(purpose))
    h = mix64(h ^ grid_index)
    h = mix64(h ^ replicate_index)
    key = (h, mix64(h ^ C1))

where ``mix64`` is the SplitMix64 output function, ``fnv1a64`` is 64-bit
FNV-1a over the UTF-8 bytes of the purpose tag and ``C0``/``C1`` are fixed
odd constants.  The key seeds a counter-based Philox4x64 generator whose
counter starts at zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MASK64 = (1 << 64) - 1

_C0 = 0x9E3779B97F4A7C15
_C1 = 0xD1B54A32D192ED03
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def mix64(x: int) -> int:
    """SplitMix64 finalizer on a 64-bit integer."""
    x = (x + _C0) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def fnv1a64(text: str) -> int:
    h = _FNV_OFFSET
    for byte in text.encode("utf-8"):
        h ^= byte
        h = (h * _FNV_PRIME) & MASK64
    return h


@dataclass(frozen=True)
class StreamKey:
    master_seed: int
    purpose: str
    grid_index: int = 0
    replicate_index: int = 0

    def __post_init__(self):
        if not 0 <= self.master_seed <= MASK64:
            raise ValueError(f"master_seed must be a 64-bit unsigned integer, got {self.master_seed}")
        if self.grid_index < 0 or self.replicate_index < 0:
            raise ValueError("grid_index and replicate_index must be nonnegative")

    def key_material(self) -> tuple[int, int]:
        h = mix64(self.master_seed ^ _C0)
        h = mix64(h ^ fnv1a64(self.purpose))
        h = mix64(h ^ (self.grid_index & MASK64))
        h = mix64(h ^ (self.replicate_index & MASK64))
        return h, mix64(h ^ _C1)


def derive_stream(key: StreamKey) -> np.random.Generator:
    """Return a fresh Philox generator for ``key``.

    Same key, same sequence: on every run, thread count and platform.
    """
    lo, hi = key.key_material()
    return np.random.Generator(np.random.Philox(key=lo | (hi << 64)))


def stream(master_seed: int, purpose: str, grid_index: int = 0, replicate_index: int = 0) -> np.random.Generator:
    return derive_stream(StreamKey(int(master_seed), purpose, int(grid_index), int(replicate_index)))
