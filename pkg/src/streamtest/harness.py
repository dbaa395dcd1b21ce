"""Seeded Monte Carlo experiments over the streaming testers.

Every trial derives its own seeds from ``(master_seed, trial_index)``, so
trials can run in any order or in parallel and the aggregated report is the
same.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .batch import plan_batches, required_batches, run_batch_tester
from .calibration import Calibration, default_calibration
from .compressed import (
    calibrated_sample_size,
    prepare_thresholds,
    run_compressed_closeness,
    run_compressed_uniformity,
)
from .core import (
    Pmf,
    ProblemParams,
    RegimeError,
    Verdict,
    draw_stream,
    make_paninski_far,
    make_point_mass,
    make_subset_uniform,
    make_uniform,
    validate_params,
)
from .ledger import BitLedger, BudgetExceeded, bits_for_counter

ALGOS = ("batch", "compress", "closeness")
FAMILIES = ("uniform", "paninski", "subset", "pointmass", "pmf-file")
CSV_COLUMNS = (
    "algo", "k", "eps", "n", "m", "family", "trials",
    "accept_rate", "accept_se", "peak_bits", "mean_runtime_ms", "seed",
)
SWEEP_COLUMNS = (
    "algo", "k", "eps", "n", "m", "trials", "status",
    "null_accept_rate", "far_reject_rate", "peak_bits", "seed",
)


def build_family(name: str, k: int, eps: float, options: dict | None = None) -> Pmf:
    options = options or {}
    if name == "uniform":
        return make_uniform(k)
    if name == "paninski":
        return make_paninski_far(k, float(options.get("eps", eps)))
    if name == "subset":
        return make_subset_uniform(k, int(options.get("support_size", k // 2)))
    if name == "pointmass":
        return make_point_mass(k, int(options.get("symbol", 0)))
    if name == "pmf-file":
        path = options.get("path")
        if not path:
            raise ValueError("family pmf-file needs a 'path' option")
        text = Path(path).read_text()
        probs = json.loads(text) if text.lstrip().startswith("[") else [float(x) for x in text.split()]
        pmf = Pmf(np.asarray(probs, dtype=float))
        if pmf.k != k:
            raise ValueError(f"pmf file has {pmf.k} entries, expected k={k}")
        return pmf
    raise ValueError(f"unknown family {name!r}; choose from {', '.join(FAMILIES)}")


@dataclass(frozen=True)
class ExperimentSpec:
    algo: str
    params: ProblemParams
    family: str
    trials: int
    master_seed: int
    family_params: dict = field(default_factory=dict)
    reference_family: str = "uniform"
    reference_params: dict = field(default_factory=dict)
    output: str | None = None
    record_timing: bool = False

    def __post_init__(self) -> None:
        if self.algo not in ALGOS:
            raise ValueError(f"unknown algo {self.algo!r}; choose from {', '.join(ALGOS)}")
        if self.family not in FAMILIES or self.reference_family not in FAMILIES:
            raise ValueError(f"family must be one of {', '.join(FAMILIES)}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentSpec":
        data = dict(data)
        data["params"] = ProblemParams(**data["params"])
        return cls(**data)

    def to_dict(self) -> dict:
        return {
            "algo": self.algo,
            "params": {"k": self.params.k, "eps": self.params.eps, "n": self.params.n, "m": self.params.m},
            "family": self.family,
            "trials": self.trials,
            "master_seed": self.master_seed,
            "family_params": self.family_params,
            "reference_family": self.reference_family,
            "reference_params": self.reference_params,
            "output": self.output,
            "record_timing": self.record_timing,
        }


@dataclass(frozen=True)
class TrialResult:
    index: int
    verdict: Verdict | None
    peak_bits: int
    runtime_ms: float
    breach: str | None = None


@dataclass
class ErrorRateReport:
    spec: ExperimentSpec
    accept_rate: float
    accept_se: float
    peak_bits: int
    mean_runtime_ms: float | None
    verdict_counts: dict[str, int]
    failed: bool
    breaches: list[str] = field(default_factory=list)

    @property
    def reject_rate(self) -> float:
        return 1.0 - self.accept_rate

    def csv_row(self) -> list[str]:
        p = self.spec.params
        runtime = "" if self.mean_runtime_ms is None else f"{self.mean_runtime_ms:.3f}"
        return [
            self.spec.algo, str(p.k), repr(p.eps), str(p.n), str(p.m), self.spec.family,
            str(self.spec.trials), f"{self.accept_rate:.6f}", f"{self.accept_se:.6f}",
            str(self.peak_bits), runtime, str(self.spec.master_seed),
        ]


def derive_seed(master_seed: int, *path: int) -> int:
    """64-bit seed hashed from the master seed and an index path."""
    ss = np.random.SeedSequence([master_seed & (2**64 - 1), *path])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def run_trial(spec: ExperimentSpec, index: int, calibration: Calibration) -> TrialResult:
    p = spec.params
    tseed = derive_seed(spec.master_seed, index)
    target = build_family(spec.family, p.k, p.eps, spec.family_params)
    ledger = BitLedger(p.m)
    start = time.perf_counter()
    try:
        if spec.algo == "batch":
            stream = draw_stream(target, p.n, derive_seed(tseed, 1))
            verdict = run_batch_tester(stream, p, ledger, calibration.large_gap_constant)
        elif spec.algo == "compress":
            stream = draw_stream(target, p.n, derive_seed(tseed, 1))
            verdict = run_compressed_uniformity(stream, p, ledger, derive_seed(tseed, 3), calibration)
        else:
            reference = build_family(spec.reference_family, p.k, p.eps, spec.reference_params)
            stream_p = draw_stream(reference, p.n, derive_seed(tseed, 1))
            stream_q = draw_stream(target, p.n, derive_seed(tseed, 2))
            verdict = run_compressed_closeness(
                stream_p, stream_q, p, ledger, derive_seed(tseed, 3), calibration
            )
    except BudgetExceeded as exc:
        return TrialResult(index, None, ledger.peak_bits, 0.0, breach=str(exc))
    runtime = (time.perf_counter() - start) * 1000.0
    return TrialResult(index, verdict, ledger.peak_bits, runtime)


def _run_chunk(args: tuple[ExperimentSpec, Sequence[int], Calibration]) -> list[TrialResult]:
    spec, indices, calibration = args
    return [run_trial(spec, i, calibration) for i in indices]


def warm_thresholds(spec: ExperimentSpec, calibration: Calibration) -> None:
    """Compute null thresholds once so worker processes inherit them."""
    if spec.algo != "batch":
        prepare_thresholds(spec.params, calibration, streams=2 if spec.algo == "closeness" else 1)


def aggregate(spec: ExperimentSpec, results: Iterable[TrialResult]) -> ErrorRateReport:
    results = sorted(results, key=lambda r: r.index)
    breaches = [r.breach for r in results if r.breach]
    decided = [r for r in results if r.verdict is not None]
    accepts = sum(r.verdict is Verdict.ACCEPT for r in decided)
    rate = accepts / len(decided) if decided else 0.0
    se = math.sqrt(rate * (1.0 - rate) / len(decided)) if decided else 0.0
    runtime = None
    if spec.record_timing and decided:
        runtime = sum(r.runtime_ms for r in decided) / len(decided)
    return ErrorRateReport(
        spec=spec,
        accept_rate=rate,
        accept_se=se,
        peak_bits=max((r.peak_bits for r in results), default=0),
        mean_runtime_ms=runtime,
        verdict_counts={"accept": accepts, "reject": len(decided) - accepts, "breach": len(breaches)},
        failed=bool(breaches),
        breaches=breaches,
    )


def write_csv(reports: Sequence[ErrorRateReport], path: str | Path | None = None) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for report in reports:
        writer.writerow(report.csv_row())
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def run_experiment(
    spec: ExperimentSpec, calibration: Calibration | None = None, workers: int = 1
) -> ErrorRateReport:
    validate_params(spec.params)
    calibration = calibration if calibration is not None else default_calibration()
    warm_thresholds(spec, calibration)
    indices = list(range(spec.trials))
    if workers <= 1:
        results = _run_chunk((spec, indices, calibration))
    else:
        chunks = [indices[i::workers] for i in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = pool.map(_run_chunk, [(spec, c, calibration) for c in chunks if c])
            results = [r for part in parts for r in part]
    report = aggregate(spec, results)
    if spec.output:
        write_csv([report], spec.output)
    return report


def batch_sample_size(k: int, eps: float, m: int, max_iter: int = 20) -> int:
    """Stream length ``s * T_min`` for the batch plan, resolved as a fixed point in ``n``."""
    n = 1 << 20
    for _ in range(max_iter):
        plan = plan_batches(ProblemParams(k=k, eps=eps, n=n, m=m))
        n_next = plan.s * required_batches(plan.s, k, eps)
        if bits_for_counter(n_next) == bits_for_counter(n):
            plan_next = plan_batches(ProblemParams(k=k, eps=eps, n=n_next, m=m))
            if plan_next.s == plan.s:
                return n_next
        n = n_next
    raise RuntimeError("batch sample size did not settle")


def auto_sample_size(algo: str, k: int, eps: float, m: int, calibration: Calibration) -> int:
    if algo == "batch":
        return batch_sample_size(k, eps, m)
    return calibrated_sample_size(k, eps, m, calibration, closeness=algo == "closeness")


@dataclass
class SweepResult:
    rows: list[dict]
    min_passing_n: dict[int, int | None]
    monotone: bool

    def to_csv(self, path: str | Path | None = None) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(self.rows)
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


def sweep_tradeoff(
    grid: Sequence[tuple[int, int]],
    k: int,
    eps: float,
    algo: str,
    trials: int,
    master_seed: int,
    calibration: Calibration | None = None,
    far_family: str = "paninski",
    out: str | Path | None = None,
) -> SweepResult:
    """Null acceptance and far rejection at each ``(m, n)`` grid point."""
    calibration = calibration if calibration is not None else default_calibration()
    null_family, null_ref = "uniform", "uniform"
    if algo == "closeness":
        # null pair: both streams from the far family; alternative: uniform vs far
        null_family, null_ref = far_family, far_family
    rows = []
    for m, n in grid:
        row = {"algo": algo, "k": k, "eps": repr(eps), "n": n, "m": m, "trials": trials, "seed": master_seed}
        try:
            params = validate_params(ProblemParams(k=k, eps=eps, n=n, m=m))
        except RegimeError:
            rows.append({**row, "status": "SKIPPED_REGIME", "null_accept_rate": "",
                         "far_reject_rate": "", "peak_bits": ""})
            continue
        base = ExperimentSpec(algo=algo, params=params, family=null_family, trials=trials,
                              master_seed=master_seed, reference_family=null_ref)
        null = run_experiment(base, calibration)
        far = run_experiment(replace(base, family=far_family, reference_family="uniform"), calibration)
        if null.failed or far.failed:
            status = "LEDGER_BREACH"
        elif null.accept_rate >= 2 / 3 and far.reject_rate >= 2 / 3:
            status = "PASS"
        else:
            status = "FAIL"
        rows.append({
            **row,
            "status": status,
            "null_accept_rate": f"{null.accept_rate:.6f}",
            "far_reject_rate": f"{far.reject_rate:.6f}",
            "peak_bits": max(null.peak_bits, far.peak_bits),
        })
    min_passing: dict[int, int | None] = {}
    for row in rows:
        m = row["m"]
        min_passing.setdefault(m, None)
        if row["status"] == "PASS" and (min_passing[m] is None or row["n"] < min_passing[m]):
            min_passing[m] = row["n"]
    defined = [(m, n) for m, n in sorted(min_passing.items()) if n is not None]
    monotone = all(a[1] >= b[1] for a, b in zip(defined, defined[1:]))
    result = SweepResult(rows, min_passing, monotone)
    if out is not None:
        result.to_csv(out)
    return result
