"""Deterministic sampling, box domains, and a brute-force grid oracle.

The random number generator is SplitMix64 (Steele, Lea & Flood, "Fast
Splittable Pseudorandom Number Generators", OOPSLA 2014), chosen because its
recurrence is tiny, published, and counter-addressable, so any language can
reproduce the exact same stream from the same 64-bit seed:

    state_k = seed + (k + 1) * 0x9E3779B97F4A7C15        (mod 2^64)
    z = state_k
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9             (mod 2^64)
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB             (mod 2^64)
    output_k = z ^ (z >> 31)

Doubles in [0, 1) take the top 53 bits: (output >> 11) * 2**-53.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DimensionMismatch

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_DOUBLE_SCALE = 2.0 ** -53

GRID_DIM_CAP = 4


class Rng:
    """SplitMix64 stream. Identical seed gives a bit-identical stream."""

    def __init__(self, seed: int):
        self.seed = np.uint64(seed & 0xFFFFFFFFFFFFFFFF)
        self._counter = 0

    def next_uint64(self, count: int = 1) -> np.ndarray:
        """Next `count` raw 64-bit outputs as a uint64 array."""
        ks = np.arange(self._counter + 1, self._counter + count + 1, dtype=np.uint64)
        self._counter += count
        with np.errstate(over="ignore"):
            z = self.seed + ks * _GOLDEN
            z = (z ^ (z >> np.uint64(30))) * _MIX1
            z = (z ^ (z >> np.uint64(27))) * _MIX2
            return z ^ (z >> np.uint64(31))

    def uniform(self, count: int = 1) -> np.ndarray:
        """`count` doubles uniform in [0, 1)."""
        return (self.next_uint64(count) >> np.uint64(11)).astype(np.float64) * _DOUBLE_SCALE

    def uniform_in(self, low: float, high: float, count: int = 1) -> np.ndarray:
        return low + (high - low) * self.uniform(count)

    def shuffle_indices(self, n: int) -> np.ndarray:
        """Fisher-Yates permutation of range(n), driven by this stream."""
        idx = np.arange(n)
        if n < 2:
            return idx
        draws = self.uniform(n - 1)
        for i in range(n - 1, 0, -1):
            j = int(draws[n - 1 - i] * (i + 1))
            idx[i], idx[j] = idx[j], idx[i]
        return idx

    def spawn(self) -> "Rng":
        """Independent child stream seeded from this one."""
        return Rng(int(self.next_uint64(1)[0]))


@dataclass(frozen=True)
class BoxDomain:
    """Axis-aligned box: lower[j] < upper[j] componentwise."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=np.float64)
        hi = np.asarray(self.upper, dtype=np.float64)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if lo.ndim != 1 or hi.shape != lo.shape:
            raise DimensionMismatch("lower and upper must be 1-D with equal length")
        if not (np.isfinite(lo).all() and np.isfinite(hi).all()):
            raise ValueError("box bounds must be finite")
        if not np.all(lo < hi):
            raise ValueError("box requires lower < upper componentwise")

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    @staticmethod
    def symmetric(dim: int, radius: float = 1.0) -> "BoxDomain":
        """[-radius, radius]^dim."""
        r = float(radius)
        return BoxDomain(np.full(dim, -r), np.full(dim, r))

    def contains(self, u: np.ndarray, atol: float = 0.0) -> bool:
        u = np.asarray(u, dtype=np.float64)
        return bool(np.all(u >= self.lower - atol) and np.all(u <= self.upper + atol))


def sample_uniform_box(domain: BoxDomain, count: int, rng: Rng) -> np.ndarray:
    """`count` points uniform in the box, one per row; pure in (domain, seed).

    Draw order is row-major (point by point, coordinate by coordinate), so a
    given seed yields the same matrix regardless of how callers batch.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    m = domain.dim
    flat = rng.uniform(count * m).reshape(count, m)
    return domain.lower + (domain.upper - domain.lower) * flat


def grid_axes(domain: BoxDomain, points_per_axis: int) -> list[np.ndarray]:
    return [
        np.linspace(domain.lower[j], domain.upper[j], points_per_axis)
        for j in range(domain.dim)
    ]


def grid_minimize(
    f,
    domain: BoxDomain,
    points_per_axis: int,
    vectorized: bool = False,
) -> tuple[np.ndarray, float]:
    """Exhaustive minimum of `f` over a regular lattice on the box.

    Ties go to the lexicographically smallest node index (axis 0 major).
    This is an oracle for low dimensions only; the cost is
    points_per_axis ** dim, so dim is capped at GRID_DIM_CAP.

    With vectorized=True, `f` is called once with an (N, dim) array of nodes
    and must return an (N,) array.
    """
    if points_per_axis < 2:
        raise ValueError("points_per_axis must be >= 2")
    m = domain.dim
    if m > GRID_DIM_CAP:
        raise DimensionMismatch(
            f"grid oracle limited to dimension <= {GRID_DIM_CAP}, got {m}"
        )
    axes = grid_axes(domain, points_per_axis)
    if vectorized:
        mesh = np.meshgrid(*axes, indexing="ij")
        nodes = np.stack([g.ravel() for g in mesh], axis=-1)
        values = np.asarray(f(nodes), dtype=np.float64)
        best = int(np.argmin(values))  # argmin takes the first, i.e. lexicographic, tie
        return nodes[best].copy(), float(values[best])
    best_val = np.inf
    best_node = None
    for combo in itertools.product(*axes):
        u = np.array(combo, dtype=np.float64)
        v = float(f(u))
        if v < best_val:
            best_val = v
            best_node = u
    return best_node, best_val
