"""Counts-only testers run on the compressed histogram at the end of a pass.

Both statistics are the usual bias-corrected ones for fixed-``n`` sampling.
Thresholds come from Monte Carlo quantiles under the null, see
:func:`null_identity_threshold` and :func:`null_closeness_threshold`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Counts, Pmf, Verdict

NULL_REPLICATES = 20_000
_CHUNK_CELLS = 1 << 22


@dataclass(frozen=True)
class TesterConfig:
    k: int
    eps: float
    delta: float
    threshold: float

    def __post_init__(self) -> None:
        if not 0.0 < self.delta < 0.5:
            raise ValueError(f"delta must lie in (0, 1/2), got {self.delta}")


def identity_chi2_statistic(freq: np.ndarray, n: int, reference: np.ndarray) -> np.ndarray | float:
    """``sum_i ((N_i - n r_i)^2 - N_i) / (n r_i)``; ``freq`` may be batched on axis 0."""
    expected = n * reference
    return (((freq - expected) ** 2 - freq) / expected).sum(axis=-1)


def identity_chi2_test(counts: Counts, reference: Pmf, config: TesterConfig) -> Verdict:
    if counts.total < 1:
        raise ValueError("identity test needs at least one sample")
    if counts.k != reference.k:
        raise ValueError(f"counts over {counts.k} symbols, reference over {reference.k}")
    if np.any(reference.probs <= 0):
        raise ValueError("reference must be strictly positive")
    stat = identity_chi2_statistic(counts.freq, counts.total, reference.probs)
    return Verdict.REJECT if stat > config.threshold else Verdict.ACCEPT


def closeness_statistic(x: np.ndarray, y: np.ndarray) -> np.ndarray | int:
    """``sum_i ((X_i - Y_i)^2 - X_i - Y_i)``; exact in integers."""
    x = np.asarray(x, dtype=np.int64)
    y = np.asarray(y, dtype=np.int64)
    return ((x - y) ** 2 - x - y).sum(axis=-1)


def closeness_scale(x: np.ndarray, y: np.ndarray) -> np.ndarray | float:
    """Square root of an unbiased estimate of the null variance of the statistic.

    For Poisson counts with common mean ``lam`` per symbol the variance is
    ``8 lam^2`` per symbol, and ``(X+Y)^2 - (X+Y)`` estimates ``4 lam^2``.
    """
    s = np.asarray(x, dtype=np.int64) + np.asarray(y, dtype=np.int64)
    est = 2.0 * (s * s - s).sum(axis=-1)
    return np.sqrt(np.maximum(est, 1.0))


def closeness_test(counts_p: Counts, counts_q: Counts, config: TesterConfig) -> Verdict:
    if counts_p.total != counts_q.total:
        raise ValueError(
            f"closeness needs equal sample sizes, got {counts_p.total} and {counts_q.total}"
        )
    if counts_p.k != counts_q.k:
        raise ValueError("counts are over different domains")
    stat = closeness_statistic(counts_p.freq, counts_q.freq)
    scale = closeness_scale(counts_p.freq, counts_q.freq)
    return Verdict.REJECT if stat > config.threshold * scale else Verdict.ACCEPT


def _philox(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed & (2**64 - 1)))


def _row_chunks(replicates: int, k: int):
    rows = max(1, _CHUNK_CELLS // k)
    done = 0
    while done < replicates:
        step = min(rows, replicates - done)
        yield step
        done += step


def simulate_identity_statistic(
    p: np.ndarray, reference: np.ndarray, n: int, replicates: int, seed: int
) -> np.ndarray:
    rng = _philox(seed)
    out = []
    for rows in _row_chunks(replicates, p.size):
        freq = rng.multinomial(n, p, size=rows)
        out.append(identity_chi2_statistic(freq, n, reference))
    return np.concatenate(out)


def simulate_closeness_statistic(
    p: np.ndarray, q: np.ndarray, n: int, replicates: int, seed: int
) -> np.ndarray:
    """Standardized closeness statistic ``C / scale`` over simulated count pairs."""
    rng = _philox(seed)
    out = []
    for rows in _row_chunks(replicates, p.size):
        x = rng.multinomial(n, p, size=rows)
        y = rng.multinomial(n, q, size=rows)
        out.append(closeness_statistic(x, y) / closeness_scale(x, y))
    return np.concatenate(out)


def null_identity_threshold(
    reference: Pmf, n: int, delta: float, replicates: int = NULL_REPLICATES, seed: int = 0
) -> float:
    """Upper ``(1 - delta)`` quantile of the statistic when samples follow ``reference``."""
    ref = reference.probs
    stats = simulate_identity_statistic(ref, ref, n, replicates, seed)
    return float(np.quantile(stats, 1.0 - delta, method="higher"))


def null_closeness_threshold(
    k: int, n: int, delta: float, replicates: int = NULL_REPLICATES, seed: int = 0
) -> float:
    """Upper ``(1 - delta)`` quantile of ``C / scale`` with both streams uniform."""
    u = np.full(k, 1.0 / k)
    stats = simulate_closeness_statistic(u, u, n, replicates, seed)
    return float(np.quantile(stats, 1.0 - delta, method="higher"))


def identity_sample_size(k: int, eps: float, c4: float) -> int:
    return math.ceil(c4 * math.sqrt(k) / (eps * eps))


def closeness_sample_size(k: int, eps: float, c4: float) -> int:
    return math.ceil(c4 * (math.sqrt(k) / eps**2 + k ** (2.0 / 3.0) / eps ** (4.0 / 3.0)))
