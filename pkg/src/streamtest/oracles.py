"""Closed-form and brute-force oracles used to cross-check the testers."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .batch import per_batch_unseen
from .core import make_uniform, draw_stream


def exact_unseen_moments(k: int, s: int) -> tuple[float, float]:
    """Mean and variance of the unseen fraction after ``s`` uniform draws on ``[k]``.

    With ``U`` the number of unseen symbols, ``E U = k a`` and
    ``Var U = k a (1 - a) + k (k - 1) (b - a^2)`` where ``a = (1 - 1/k)^s``
    and ``b = (1 - 2/k)^s``; the fraction is ``U / k``.
    """
    if not 0 <= s <= k:
        raise ValueError(f"need 0 <= s <= k, got s={s}, k={k}")
    a = (1.0 - 1.0 / k) ** s
    b = (1.0 - 2.0 / k) ** s
    var_count = k * a * (1.0 - a) + k * (k - 1) * (b - a * a)
    return a, max(var_count, 0.0) / (k * k)


def unseen_moments_by_enumeration(k: int, s: int) -> tuple[float, float]:
    """Same moments by summing over all ``k**s`` equally likely batches."""
    if k**s > 2_000_000:
        raise ValueError("instance too large to enumerate")
    grids = np.indices((k,) * s).reshape(s, -1).T if s else np.zeros((1, 0), dtype=np.int64)
    z = per_batch_unseen(grids, k) / k
    return float(z.mean()), float(z.var())


def variance_bound(k: int, s: int) -> float:
    return 2.0 * s * s / k**3


@dataclass(frozen=True)
class MonteCarloMean:
    mean: float
    stderr: float
    batches: int

    def z_score(self, target: float) -> float:
        return (self.mean - target) / self.stderr if self.stderr > 0 else math.inf


def monte_carlo_unseen(k: int, s: int, batches: int, seed: int) -> MonteCarloMean:
    stream = draw_stream(make_uniform(k), batches * s, seed)
    z = per_batch_unseen(stream.take(batches * s).reshape(batches, s), k) / k
    return MonteCarloMean(float(z.mean()), float(z.std(ddof=1) / math.sqrt(batches)), batches)
