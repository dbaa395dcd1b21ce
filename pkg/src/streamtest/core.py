"""Problem parameters, distributions, sample streams and histograms.

Symbols are 0-based throughout: a distribution over a domain of size ``k``
emits values in ``range(k)``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

PMF_TOLERANCE = 1e-12


class Verdict(enum.Enum):
    ACCEPT = "accept"
    REJECT = "reject"


class RegimeError(ValueError):
    """Raised when the memory budget falls outside the interesting regime.

    ``kind`` is ``"REGIME_TOO_SMALL"`` or ``"REGIME_TOO_LARGE"``.
    """

    def __init__(self, kind: str, message: str) -> None:
        super().__init__(message)
        self.kind = kind


class StreamExhausted(RuntimeError):
    pass


def ceil_log2(x: int) -> int:
    """Smallest ``b >= 0`` with ``2**b >= x`` (for integer ``x >= 1``)."""
    if x < 1:
        raise ValueError(f"ceil_log2 needs x >= 1, got {x}")
    return (x - 1).bit_length()


def ceil_log2_real(x: float) -> int:
    if x <= 1.0:
        return 0
    return math.ceil(math.log2(x))


@dataclass(frozen=True)
class ProblemParams:
    k: int
    eps: float
    n: int
    m: int

    def __post_init__(self) -> None:
        if self.k < 2:
            raise ValueError(f"domain size must be >= 2, got {self.k}")
        if not 0.0 < self.eps <= 1.0:
            raise ValueError(f"eps must lie in (0, 1], got {self.eps}")
        if self.n < 1:
            raise ValueError(f"stream length must be positive, got {self.n}")
        if self.m < 1:
            raise ValueError(f"memory budget must be positive, got {self.m}")

    @property
    def regime_bounds(self) -> tuple[int, int]:
        lower = max(ceil_log2(self.n), ceil_log2(self.k), ceil_log2_real(1.0 / self.eps))
        upper = min(self.k * ceil_log2(self.n + 1), self.n * ceil_log2(self.k))
        return lower, upper


def validate_params(params: ProblemParams) -> ProblemParams:
    lower, upper = params.regime_bounds
    if params.m < lower:
        raise RegimeError(
            "REGIME_TOO_SMALL",
            f"m={params.m} is below max(log n, log k, log 1/eps)={lower}",
        )
    if params.m > upper:
        raise RegimeError(
            "REGIME_TOO_LARGE",
            f"m={params.m} exceeds min(k log n, n log k)={upper}; "
            "storing all counts or all samples fits in memory",
        )
    return params


@dataclass(frozen=True, eq=False)
class Pmf:
    """A probability vector over ``range(k)``."""

    probs: np.ndarray

    def __post_init__(self) -> None:
        probs = np.array(self.probs, dtype=float)
        if probs.ndim != 1 or probs.size < 2:
            raise ValueError("a pmf needs a 1-d vector of length >= 2")
        if np.any(probs < 0) or not np.all(np.isfinite(probs)):
            raise ValueError("pmf entries must be finite and nonnegative")
        total = math.fsum(probs.tolist())
        if abs(total - 1.0) > PMF_TOLERANCE:
            raise ValueError(f"pmf entries sum to {total!r}, not 1")
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)

    @property
    def k(self) -> int:
        return int(self.probs.size)

    def __len__(self) -> int:
        return self.k

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Pmf):
            return NotImplemented
        return self.k == other.k and bool(np.array_equal(self.probs, other.probs))

    def __hash__(self) -> int:
        return hash(self.probs.tobytes())


def make_uniform(k: int) -> Pmf:
    if k < 2:
        raise ValueError(f"domain size must be >= 2, got {k}")
    return Pmf(np.full(k, 1.0 / k))


def make_paninski_far(k: int, eps: float) -> Pmf:
    """Alternating ``(1 + 2 eps)/k, (1 - 2 eps)/k`` perturbation of uniform.

    Its TV distance to uniform is exactly ``eps`` and its largest entry is
    ``(1 + 2 eps)/k``.
    """
    if k < 2 or k % 2:
        raise ValueError(f"paninski family needs an even domain size, got {k}")
    if not 0.0 <= eps <= 0.5:
        raise ValueError(f"paninski family needs 0 <= eps <= 1/2, got {eps}")
    probs = np.empty(k)
    probs[0::2] = (1.0 + 2.0 * eps) / k
    probs[1::2] = (1.0 - 2.0 * eps) / k
    return Pmf(probs)


def make_subset_uniform(k: int, support_size: int) -> Pmf:
    if not 1 <= support_size <= k:
        raise ValueError(f"support size must lie in [1, {k}], got {support_size}")
    probs = np.zeros(k)
    probs[:support_size] = 1.0 / support_size
    return Pmf(probs)


def make_point_mass(k: int, symbol: int = 0) -> Pmf:
    if not 0 <= symbol < k:
        raise ValueError(f"symbol {symbol} outside range({k})")
    probs = np.zeros(k)
    probs[symbol] = 1.0
    return Pmf(probs)


def tv_distance(p: Pmf, q: Pmf) -> float:
    if p.k != q.k:
        raise ValueError(f"domain mismatch: {p.k} vs {q.k}")
    return 0.5 * math.fsum(np.abs(p.probs - q.probs).tolist())


@dataclass(eq=False)
class SampleStream:
    """Single-pass iid stream of ``length`` symbols drawn from ``source``.

    Draws use inverse-CDF lookup on a Philox generator keyed by ``seed``, so
    the emitted sequence does not depend on how reads are chunked.
    """

    source: Pmf
    length: int
    seed: int
    cursor: int = 0
    _gen: np.random.Generator = field(init=False, repr=False)
    _cdf: np.ndarray = field(init=False, repr=False)
    _last: int = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if self.length < 0:
            raise ValueError("stream length must be nonnegative")
        self._gen = np.random.Generator(np.random.Philox(key=self.seed & (2**64 - 1)))
        self._cdf = np.cumsum(self.source.probs)
        self._last = int(np.flatnonzero(self.source.probs)[-1])

    @property
    def remaining(self) -> int:
        return self.length - self.cursor

    def take(self, count: int) -> np.ndarray:
        """Consume the next ``count`` symbols as an int64 array."""
        if count < 0:
            raise ValueError("count must be nonnegative")
        if count > self.remaining:
            raise StreamExhausted(
                f"requested {count} samples but only {self.remaining} remain"
            )
        u = self._gen.random(count)
        out = np.searchsorted(self._cdf, u, side="right")
        np.minimum(out, self._last, out=out)
        self.cursor += count
        return out.astype(np.int64, copy=False)

    def chunks(self, chunk_size: int = 1 << 16) -> Iterable[np.ndarray]:
        while self.remaining:
            yield self.take(min(chunk_size, self.remaining))

    def __iter__(self):
        for chunk in self.chunks():
            yield from chunk.tolist()


def draw_stream(p: Pmf, n: int, seed: int) -> SampleStream:
    return SampleStream(source=p, length=n, seed=seed)


@dataclass(frozen=True, eq=False)
class Counts:
    freq: np.ndarray
    total: int

    def __post_init__(self) -> None:
        freq = np.array(self.freq, dtype=np.int64)
        if freq.ndim != 1:
            raise ValueError("counts must be a 1-d vector")
        if np.any(freq < 0):
            raise ValueError("counts must be nonnegative")
        if int(freq.sum()) != self.total:
            raise ValueError(f"counts sum to {int(freq.sum())}, not total={self.total}")
        freq.setflags(write=False)
        object.__setattr__(self, "freq", freq)

    @property
    def k(self) -> int:
        return int(self.freq.size)

    @classmethod
    def from_freq(cls, freq: Sequence[int] | np.ndarray) -> "Counts":
        freq = np.asarray(freq, dtype=np.int64)
        return cls(freq, int(freq.sum()))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Counts):
            return NotImplemented
        return self.total == other.total and bool(np.array_equal(self.freq, other.freq))


def histogram(samples: Sequence[int] | np.ndarray, k: int) -> Counts:
    arr = np.asarray(samples, dtype=np.int64).reshape(-1)
    if arr.size and (arr.min() < 0 or arr.max() >= k):
        raise ValueError(f"sample outside range({k})")
    return Counts(np.bincount(arr, minlength=k), int(arr.size))
