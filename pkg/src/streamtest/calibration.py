"""Calibrated constants and cached null thresholds.

The partition constants ``c1, c2``, the sample-size multipliers of the base
testers, the large-batch gap constant and every Monte Carlo null threshold
live in one versioned JSON record. Missing thresholds are computed on demand
from a seed derived from the lookup key, so a record is a pure function of
its master seed.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from . import base_testers
from .amplification import repetitions_for
from .batch import DEFAULT_LARGE_GAP_CONSTANT, large_gap_shape, uniform_mean_large
from .compression import (
    DEFAULT_C1,
    contraction_probability_oracle,
    splitmix64,
)
from .core import Pmf, make_paninski_far, make_point_mass, make_subset_uniform, make_uniform

CALIBRATION_VERSION = 1
DEFAULT_DELTA = 0.1


class CalibrationMissing(FileNotFoundError):
    pass


def _key_seed(seed: int, *parts: object) -> int:
    h = splitmix64(seed)
    for part in parts:
        for byte in repr(part).encode():
            h = splitmix64(h ^ byte)
    return h


@dataclass
class Calibration:
    c1: float = DEFAULT_C1
    c2: float = 0.9
    delta: float = DEFAULT_DELTA
    c4_identity: float = 1.5
    c4_closeness: float = 2.0
    large_gap_constant: float = DEFAULT_LARGE_GAP_CONSTANT
    null_replicates: int = base_testers.NULL_REPLICATES
    seed: int = 0
    version: int = CALIBRATION_VERSION
    thresholds: list[dict] = field(default_factory=list)
    provenance: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self._index = {self._row_key(row): row["value"] for row in self.thresholds}

    @property
    def repetitions(self) -> int:
        return repetitions_for(self.delta, self.c2)

    @staticmethod
    def _row_key(row: dict) -> tuple:
        return (row["statistic"], row["k"], row["reference"], row["delta"], row["n"])

    def _lookup(self, statistic: str, k: int, reference: str, eps: float, n: int, compute) -> float:
        key = (statistic, k, reference, self.delta, n)
        if key not in self._index:
            seed = _key_seed(self.seed, *key)
            value = compute(seed)
            row = {
                "statistic": statistic,
                "k": k,
                "reference": reference,
                "eps": eps,
                "delta": self.delta,
                "n": n,
                "replicates": self.null_replicates,
                "seed": seed,
                "value": value,
            }
            self.thresholds.append(row)
            self._index[key] = value
        return self._index[key]

    def identity_threshold(self, reference: Pmf, reference_tag: str, n: int, eps: float = 0.0) -> float:
        """Null quantile of the chi-square statistic against ``reference``.

        ``reference_tag`` names the reference (e.g. ``"uniform"`` or
        ``"balanced-image:10000"``) and must determine it for the given ``k``.
        """
        return self._lookup(
            "identity_chi2",
            reference.k,
            reference_tag,
            eps,
            n,
            lambda s: base_testers.null_identity_threshold(
                reference, n, self.delta, self.null_replicates, s
            ),
        )

    def closeness_threshold(self, k: int, n: int, eps: float = 0.0) -> float:
        return self._lookup(
            "closeness",
            k,
            "uniform",
            eps,
            n,
            lambda s: base_testers.null_closeness_threshold(
                k, n, self.delta, self.null_replicates, s
            ),
        )

    def to_dict(self) -> dict:
        return asdict(self)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "Calibration":
        path = Path(path)
        if not path.is_file():
            raise CalibrationMissing(f"calibration file {path} not found")
        data = json.loads(path.read_text())
        if data.get("version") != CALIBRATION_VERSION:
            raise CalibrationMissing(
                f"calibration file {path} has version {data.get('version')}, "
                f"expected {CALIBRATION_VERSION}"
            )
        return cls(**data)


def _clopper_pearson_lower(hits: int, trials: int, alpha: float) -> float:
    if hits == 0:
        return 0.0
    return float(stats.beta.ppf(alpha, hits, trials - hits + 1))


@dataclass(frozen=True)
class CalibrationScale:
    """Desk-scale instance sizes used by :func:`calibrate_constants`."""

    partition_k: int = 1000
    partition_k_primes: tuple[int, ...] = (8, 32, 128)
    partition_trials: int = 2000
    tester_k: int = 64
    tester_eps: float = 0.1
    power_replicates: int = 2000
    null_replicates: int = base_testers.NULL_REPLICATES
    c4_grid: tuple[float, ...] = tuple(0.25 * i for i in range(1, 25))
    gap_ks: tuple[int, ...] = (16, 64, 256)
    gap_eps: tuple[float, ...] = (0.1, 0.25, 0.5)
    c1_candidates: tuple[float, ...] = (DEFAULT_C1, 0.2, 0.1)
    min_c2: float = 0.2


def partition_families(k: int) -> list[tuple[str, Pmf, Pmf]]:
    u = make_uniform(k)
    return [
        ("paninski-0.5", make_paninski_far(k, 0.5), u),
        ("paninski-0.1", make_paninski_far(k, 0.1), u),
        ("subset-half", make_subset_uniform(k, k // 2), u),
        ("pointmass", make_point_mass(k), u),
    ]


def calibrate_partition_constants(scale: CalibrationScale, seed: int) -> tuple[float, float, list[dict]]:
    """Largest candidate ``c1`` whose worst-family contraction probability
    (one-sided 99% Clopper-Pearson bound) reaches ``scale.min_c2``."""
    records: list[dict] = []
    for c1 in scale.c1_candidates:
        worst = 1.0
        for k_prime in scale.partition_k_primes:
            for name, p, q in partition_families(scale.partition_k):
                trials = scale.partition_trials
                prob = contraction_probability_oracle(
                    p, q, k_prime, trials, _key_seed(seed, "partition", name, k_prime), c1,
                    exhaustive=False,
                )
                lower = _clopper_pearson_lower(round(prob * trials), trials, 0.01)
                records.append(
                    {"c1": c1, "k": scale.partition_k, "k_prime": k_prime, "family": name,
                     "trials": trials, "probability": prob, "lower_bound": lower}
                )
                worst = min(worst, lower)
        if worst >= scale.min_c2:
            return c1, worst, records
    raise RuntimeError("no candidate c1 yields a usable contraction probability")


def calibrate_sample_multiplier(
    statistic: str, scale: CalibrationScale, delta: float, seed: int
) -> tuple[float, list[dict]]:
    """Smallest grid multiplier whose power against paninski reaches ``1 - delta``."""
    k, eps = scale.tester_k, scale.tester_eps
    u = make_uniform(k).probs
    far = make_paninski_far(k, eps).probs
    records = []
    for c4 in scale.c4_grid:
        if statistic == "identity_chi2":
            n = base_testers.identity_sample_size(k, eps, c4)
            thr = base_testers.null_identity_threshold(
                make_uniform(k), n, delta, scale.null_replicates, _key_seed(seed, statistic, "null", n)
            )
            sims = base_testers.simulate_identity_statistic(
                far, u, n, scale.power_replicates, _key_seed(seed, statistic, "alt", n)
            )
        else:
            n = base_testers.closeness_sample_size(k, eps, c4)
            thr = base_testers.null_closeness_threshold(
                k, n, delta, scale.null_replicates, _key_seed(seed, statistic, "null", n)
            )
            sims = base_testers.simulate_closeness_statistic(
                u, far, n, scale.power_replicates, _key_seed(seed, statistic, "alt", n)
            )
        power = float(np.mean(sims > thr))
        records.append({"statistic": statistic, "c4": c4, "n": n, "threshold": thr, "power": power})
        if power >= 1.0 - delta:
            return c4, records
    raise RuntimeError(f"{statistic}: no multiplier on the grid reaches power {1 - delta}")


def exact_mean_empirical_tv(probs: np.ndarray, s: int) -> float:
    """Exact mean of ``(1/2) sum_i |N_i/s - 1/k|`` for a batch of ``s`` draws."""
    k = probs.size
    j = np.arange(s + 1)
    dev = np.abs(j * k - s)
    values, mult = np.unique(probs, return_counts=True)
    total = sum(c * float(np.dot(stats.binom.pmf(j, s, v), dev)) for v, c in zip(values, mult))
    return total / (2.0 * s * k)


def large_batch_gap_constant(scale: CalibrationScale) -> tuple[float, list[dict]]:
    """Minimum over a grid of the exact paninski-vs-uniform gap over its shape."""
    records = []
    for k in scale.gap_ks:
        for eps in scale.gap_eps:
            far = make_paninski_far(k, eps).probs
            crossover = int(k / eps**2)
            for s in sorted({k + 1, 2 * k, 4 * k, crossover, 2 * crossover, 8 * crossover}):
                gap = exact_mean_empirical_tv(far, s) - uniform_mean_large(s, k)
                ratio = gap / large_gap_shape(s, k, eps)
                records.append({"k": k, "eps": eps, "s": s, "gap": gap, "ratio": ratio})
    return min(r["ratio"] for r in records), records


def calibrate_constants(
    scale: CalibrationScale = CalibrationScale(), seed: int = 0, delta: float = DEFAULT_DELTA
) -> Calibration:
    c1, c2, partition_records = calibrate_partition_constants(scale, seed)
    # the amplification gap needs delta < c2 / (1 + c2)
    delta = min(delta, 0.5 * c2 / (1.0 + c2))
    c4_id, id_records = calibrate_sample_multiplier("identity_chi2", scale, delta, seed)
    c4_cl, cl_records = calibrate_sample_multiplier("closeness", scale, delta, seed)
    gap_constant, gap_records = large_batch_gap_constant(scale)
    return Calibration(
        c1=c1,
        c2=round(c2, 6),
        delta=delta,
        c4_identity=c4_id,
        c4_closeness=c4_cl,
        large_gap_constant=math.floor(gap_constant * 1000) / 1000,
        null_replicates=scale.null_replicates,
        seed=seed,
        provenance={
            "scale": asdict(scale),
            "partition": partition_records,
            "identity_power": id_records,
            "closeness_power": cl_records,
            "large_batch_gap": gap_records,
        },
    )


def default_calibration_path() -> Path:
    return Path(__file__).with_name("data") / "calibration.json"


def default_calibration() -> Calibration:
    path = default_calibration_path()
    if path.is_file():
        return Calibration.load(path)
    return Calibration()
