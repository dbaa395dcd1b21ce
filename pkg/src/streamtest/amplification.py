"""Boosting a tester whose soundness holds only for a ``c2`` fraction of partitions."""

from __future__ import annotations

import math
from typing import Sequence

from .core import Verdict


def _check_gap(delta: float, c2: float) -> None:
    if not (0.0 <= delta < 1.0 and 0.0 < c2 <= 1.0):
        raise ValueError(f"need 0 <= delta < 1 and 0 < c2 <= 1, got delta={delta}, c2={c2}")
    if delta >= c2 / (1.0 + c2):
        raise ValueError(
            f"delta={delta} >= c2/(1+c2)={c2 / (1.0 + c2):.6g}: the two acceptance "
            "rates coincide or cross, repetition cannot separate them"
        )


def acceptance_threshold(delta: float, c2: float) -> float:
    """Midpoint between the null rate ``1 - delta`` and the far rate ``1 - (1 - delta) c2``."""
    _check_gap(delta, c2)
    return 1.0 - (delta + (1.0 - delta) * c2) / 2.0


def repetitions_for(delta: float, c2: float, error: float = 1.0 / 3.0) -> int:
    """Smallest ``R`` with Hoeffding tail ``exp(-2 R t^2) <= error`` at half-gap ``t``."""
    _check_gap(delta, c2)
    half_gap = ((1.0 - delta) * c2 - delta) / 2.0
    return max(1, math.ceil(math.log(1.0 / error) / (2.0 * half_gap * half_gap)))


def amplify(verdicts: Sequence[Verdict], delta: float, c2: float) -> Verdict:
    if not verdicts:
        raise ValueError("amplify needs at least one repetition")
    threshold = acceptance_threshold(delta, c2)
    accepted = sum(v is Verdict.ACCEPT for v in verdicts)
    return Verdict.ACCEPT if accepted / len(verdicts) >= threshold else Verdict.REJECT
