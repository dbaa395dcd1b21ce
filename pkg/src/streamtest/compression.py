"""Balanced random partitions of [k] into [k'] and the induced distributions.

A partition is a keyed pseudorandom permutation of ``range(k)`` chopped into
consecutive blocks whose sizes differ by at most one. The permutation is a
four-round Feistel network with cycle walking, so projecting a symbol needs
only the key and O(1) scratch space.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterator

import numpy as np

from .core import Pmf, ceil_log2, tv_distance

DEFAULT_C1 = 0.3
DEFAULT_C2 = 0.05

_MASK64 = np.uint64(0xFFFFFFFFFFFFFFFF)
_ROUNDS = 4


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return z ^ (z >> 31)


def _mix(x: np.ndarray) -> np.ndarray:
    # splitmix64 finalizer, vectorized; uint64 arithmetic wraps modulo 2**64
    x = x ^ (x >> np.uint64(30))
    x = x * np.uint64(0xBF58476D1CE4E5B9)
    x = x ^ (x >> np.uint64(27))
    x = x * np.uint64(0x94D049BB133111EB)
    return x ^ (x >> np.uint64(31))


def key_bits_for(k: int) -> int:
    """Width of the partition key: ``2 ceil(log2 k)`` bits."""
    return 2 * max(1, ceil_log2(k))


@dataclass(frozen=True)
class Partition:
    k: int
    k_prime: int
    key: int | None
    """``None`` marks the identity partition (cell ``i`` is ``{i}``)."""

    def __post_init__(self) -> None:
        if not 2 <= self.k_prime <= self.k:
            raise ValueError(f"need 2 <= k' <= k, got k'={self.k_prime}, k={self.k}")
        if self.key is None and self.k_prime != self.k:
            raise ValueError("only k' = k admits the keyless identity partition")

    @classmethod
    def identity(cls, k: int) -> "Partition":
        return cls(k, k, None)

    @property
    def key_bits(self) -> int:
        return 0 if self.key is None else key_bits_for(self.k)

    @cached_property
    def _half_bits(self) -> int:
        return max(1, (ceil_log2(self.k) + 1) // 2)

    @cached_property
    def _round_keys(self) -> list[np.uint64]:
        keys, state = [], int(self.key or 0)
        for _ in range(_ROUNDS):
            state = splitmix64(state)
            keys.append(np.uint64(state))
        return keys

    def _feistel(self, x: np.ndarray) -> np.ndarray:
        h = np.uint64(self._half_bits)
        mask = np.uint64((1 << self._half_bits) - 1)
        left, right = x >> h, x & mask
        for rk in self._round_keys:
            left, right = right, left ^ (_mix(right ^ rk) & mask)
        return (left << h) | right

    def permute(self, x: np.ndarray) -> np.ndarray:
        """Keyed bijection of ``range(k)``."""
        y = self._feistel(np.asarray(x, dtype=np.uint64))
        out_of_range = y >= np.uint64(self.k)
        while out_of_range.any():
            y[out_of_range] = self._feistel(y[out_of_range])
            out_of_range = y >= np.uint64(self.k)
        return y.astype(np.int64)

    def project(self, x: int | np.ndarray) -> int | np.ndarray:
        """Cell index of symbol(s) ``x``."""
        arr = np.asarray(x, dtype=np.int64)
        if arr.size and (arr.min() < 0 or arr.max() >= self.k):
            raise ValueError(f"symbol outside range({self.k})")
        if self.key is None:
            cells = arr
        else:
            pos = self.permute(arr.reshape(-1)).reshape(arr.shape)
            q, r = divmod(self.k, self.k_prime)
            big = r * (q + 1)
            cells = np.where(pos < big, pos // (q + 1), r + (pos - big) // q)
        if np.ndim(x) == 0:
            return int(cells)
        return cells

    @cached_property
    def cell_map(self) -> np.ndarray:
        cells = np.asarray(self.project(np.arange(self.k)))
        cells.setflags(write=False)
        return cells

    def cell_sizes(self) -> np.ndarray:
        return np.bincount(self.cell_map, minlength=self.k_prime)

    def cells(self) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in range(self.k_prime)]
        for symbol, cell in enumerate(self.cell_map.tolist()):
            out[cell].append(symbol)
        return out


def sample_partition(k: int, k_prime: int, seed: int) -> Partition:
    """Balanced partition keyed by ``seed`` hashed down to ``key_bits_for(k)`` bits."""
    if not 2 <= k_prime <= k:
        raise ValueError(f"need 2 <= k' <= k, got k'={k_prime}, k={k}")
    key = splitmix64(seed & 0xFFFFFFFFFFFFFFFF) & ((1 << key_bits_for(k)) - 1)
    return Partition(k, k_prime, key)


def project(pi: Partition, x: int | np.ndarray) -> int | np.ndarray:
    return pi.project(x)


@dataclass(frozen=True, eq=False)
class InducedPmf:
    probs: np.ndarray
    source: Pmf
    partition: Partition

    def as_pmf(self) -> Pmf:
        return Pmf(self.probs)


def induce_weights(weights: np.ndarray, cell_map: np.ndarray, k_prime: int) -> np.ndarray:
    """Cell-wise sums with correctly rounded float accumulation."""
    out = np.zeros(k_prime)
    order = np.argsort(cell_map, kind="stable")
    bounds = np.searchsorted(cell_map[order], np.arange(k_prime + 1))
    sorted_w = np.asarray(weights, dtype=float)[order]
    for i in range(k_prime):
        out[i] = math.fsum(sorted_w[bounds[i]:bounds[i + 1]].tolist())
    return out


def induce_pmf(p: Pmf, pi: Partition) -> InducedPmf:
    if p.k != pi.k:
        raise ValueError(f"pmf over {p.k} symbols, partition over {pi.k}")
    return InducedPmf(induce_weights(p.probs, pi.cell_map, pi.k_prime), p, pi)


def induced_uniform(pi: Partition) -> Pmf:
    """Exact image of uniform_k: cell sizes over k."""
    return Pmf(pi.cell_sizes() / pi.k)


def induced_tv(p: Pmf, q: Pmf, cell_map: np.ndarray, k_prime: int) -> float:
    diff = induce_weights(p.probs - q.probs, cell_map, k_prime)
    return 0.5 * math.fsum(np.abs(diff).tolist())


def count_balanced_partitions(k: int, k_prime: int) -> int:
    q, r = divmod(k, k_prime)
    denom = (
        math.factorial(q + 1) ** r
        * math.factorial(q) ** (k_prime - r)
        * math.factorial(r)
        * math.factorial(k_prime - r)
    )
    return math.factorial(k) // denom


def enumerate_balanced_partitions(k: int, k_prime: int) -> Iterator[np.ndarray]:
    """Every unordered balanced partition once, as a cell map."""
    q, r = divmod(k, k_prime)
    cell_map = np.full(k, -1, dtype=np.int64)

    def rec(remaining: list[int], cell: int, big_left: int) -> Iterator[np.ndarray]:
        if not remaining:
            yield cell_map.copy()
            return
        first, rest = remaining[0], remaining[1:]
        small_left = (k_prime - cell) - big_left
        sizes = []
        if big_left:
            sizes.append(q + 1)
        if small_left and q:
            sizes.append(q)
        for size in sizes:
            for others in itertools.combinations(rest, size - 1):
                members = (first, *others)
                cell_map[list(members)] = cell
                taken = set(others)
                left = [x for x in rest if x not in taken]
                yield from rec(left, cell + 1, big_left - (size == q + 1))
            cell_map[first] = -1

    yield from rec(list(range(k)), 0, r)


def contraction_probability_oracle(
    p: Pmf,
    q: Pmf,
    k_prime: int,
    trials: int,
    seed: int,
    c1: float = DEFAULT_C1,
    max_enumeration: int = 20_000,
    exhaustive: bool | None = None,
) -> float:
    """Probability over partitions that ``TV(p_Pi, q_Pi) >= c1 sqrt(k'/k) TV(p, q)``.

    Small instances are enumerated exactly (every balanced partition is equally
    likely); larger ones sample ``trials`` keyed partitions.
    """
    dist = tv_distance(p, q)
    if dist <= 0.0:
        raise ValueError("contraction probability needs TV(p, q) > 0")
    target = c1 * math.sqrt(k_prime / p.k) * dist
    slack = 1e-12
    if exhaustive is None:
        exhaustive = count_balanced_partitions(p.k, k_prime) <= max_enumeration
    hits = total = 0
    if exhaustive:
        maps = enumerate_balanced_partitions(p.k, k_prime)
    else:
        maps = (
            sample_partition(p.k, k_prime, splitmix64(seed ^ splitmix64(t))).cell_map
            for t in range(trials)
        )
    for cell_map in maps:
        total += 1
        if induced_tv(p, q, cell_map, k_prime) >= target - slack:
            hits += 1
    return hits / total
