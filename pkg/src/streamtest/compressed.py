"""Streaming testers that hash the domain down until the histogram fits.

Each repetition draws a fresh partition, projects its own disjoint segment of
the stream onto ``[k']``, keeps only the induced counts, and hands them to a
counts-only base tester. Repetition verdicts are combined by
:func:`~streamtest.amplification.amplify`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .amplification import amplify
from .base_testers import (
    TesterConfig,
    closeness_sample_size,
    closeness_test,
    identity_chi2_test,
    identity_sample_size,
)
from .calibration import Calibration
from .compression import Partition, induced_uniform, key_bits_for, sample_partition, splitmix64
from .core import Counts, ProblemParams, SampleStream, StreamExhausted, Verdict
from .ledger import BitLedger, bits_for_counter

_CHUNK = 1 << 16


@dataclass(frozen=True)
class CompressionPlan:
    k: int
    n: int
    k_prime: int
    eps_prime: float
    repetitions: int
    delta: float
    c2: float
    key_bits: int
    count_bits: int
    counter_bits: int
    streams: int = 1

    @property
    def segment(self) -> int:
        """Samples each repetition reads from every stream."""
        return self.n // self.repetitions

    @property
    def compressed(self) -> bool:
        return self.k_prime < self.k

    @property
    def layout_bits(self) -> int:
        return self.key_bits + self.streams * self.k_prime * self.count_bits + 2 * self.counter_bits


def plan_compression(
    params: ProblemParams, calibration: Calibration, streams: int = 1
) -> CompressionPlan:
    """Largest ``k'`` whose key, induced counts and repetition counters fit in ``m``.

    When the full histogram already fits, no hashing happens: ``k' = k`` and a
    single repetition runs on the identity partition.
    """
    k, n, m = params.k, params.n, params.m
    if m > k * bits_for_counter(n):
        raise ValueError(
            f"m={m} exceeds k*ceil(log2(n+1))={k * bits_for_counter(n)}; nothing to compress"
        )
    count_bits = bits_for_counter(n)
    c1, c2, delta = calibration.c1, calibration.c2, calibration.delta
    if streams * k * count_bits <= m:
        k_prime, reps, key_bits, counter_bits = k, 1, 0, 0
    else:
        reps = calibration.repetitions
        key_bits = key_bits_for(k)
        counter_bits = bits_for_counter(reps)
        k_prime = min(k - 1, (m - key_bits - 2 * counter_bits) // (streams * count_bits))
        if k_prime < 2:
            raise ValueError(f"budget m={m} leaves room for fewer than two cells")
    eps_prime = c1 * math.sqrt(k_prime / k) * params.eps
    return CompressionPlan(
        k=k,
        n=n,
        k_prime=k_prime,
        eps_prime=eps_prime,
        repetitions=reps,
        delta=delta,
        c2=c2,
        key_bits=key_bits,
        count_bits=count_bits,
        counter_bits=counter_bits,
        streams=streams,
    )


def calibrated_sample_size(
    k: int, eps: float, m: int, calibration: Calibration, closeness: bool = False, max_iter: int = 20
) -> int:
    """Stream length at the calibrated rate, resolved as a fixed point in ``n``.

    ``n`` enters the plan only through the counter width ``ceil(log2(n+1))``.
    """
    n = max(2 * k, 1 << 16)
    for _ in range(max_iter):
        params = ProblemParams(k=k, eps=eps, n=n, m=m)
        plan = plan_compression(params, calibration, streams=2 if closeness else 1)
        if closeness:
            per_rep = closeness_sample_size(plan.k_prime, plan.eps_prime, calibration.c4_closeness)
        else:
            per_rep = identity_sample_size(plan.k_prime, plan.eps_prime, calibration.c4_identity)
        n_next = per_rep * plan.repetitions
        if bits_for_counter(n_next) == bits_for_counter(n):
            return n_next
        n = n_next
    raise RuntimeError("sample size did not settle")


def _repetition_partition(plan: CompressionPlan, seed: int, rep: int) -> Partition:
    if not plan.compressed:
        return Partition.identity(plan.k)
    return sample_partition(plan.k, plan.k_prime, splitmix64(seed ^ splitmix64(rep + 1)))


def reference_tag(plan: CompressionPlan) -> str:
    return f"balanced-image:{plan.k}" if plan.compressed else "uniform"


def _induced_counts(stream: SampleStream, pi: Partition, count: int) -> Counts:
    freq = np.zeros(pi.k_prime, dtype=np.int64)
    left = count
    while left:
        chunk = stream.take(min(_CHUNK, left))
        freq += np.bincount(pi.project(chunk), minlength=pi.k_prime)
        left -= chunk.size
    return Counts(freq, count)


def _open_run(plan: CompressionPlan, ledger: BitLedger) -> None:
    if plan.counter_bits:
        ledger.charge("repetition_counter", plan.counter_bits)
        ledger.charge("accept_counter", plan.counter_bits)


def _close_run(plan: CompressionPlan, ledger: BitLedger) -> None:
    if plan.counter_bits:
        ledger.release("accept_counter")
        ledger.release("repetition_counter")


def run_compressed_uniformity(
    stream: SampleStream,
    params: ProblemParams,
    ledger: BitLedger,
    seed: int,
    calibration: Calibration,
) -> Verdict:
    plan = plan_compression(params, calibration)
    seg = plan.segment
    if stream.remaining < seg * plan.repetitions:
        raise StreamExhausted(f"stream holds {stream.remaining} samples, need {seg * plan.repetitions}")
    _open_run(plan, ledger)
    verdicts = []
    for rep in range(plan.repetitions):
        pi = _repetition_partition(plan, seed, rep)
        ledger.charge("partition_key", pi.key_bits)
        ledger.charge("induced_counts", plan.k_prime * plan.count_bits)
        counts = _induced_counts(stream, pi, seg)
        reference = induced_uniform(pi)
        threshold = calibration.identity_threshold(reference, reference_tag(plan), seg, plan.eps_prime)
        config = TesterConfig(plan.k_prime, plan.eps_prime, plan.delta, threshold)
        verdicts.append(identity_chi2_test(counts, reference, config))
        ledger.release("induced_counts")
        ledger.release("partition_key")
    _close_run(plan, ledger)
    return amplify(verdicts, plan.delta, plan.c2)


def run_compressed_closeness(
    stream_p: SampleStream,
    stream_q: SampleStream,
    params: ProblemParams,
    ledger: BitLedger,
    seed: int,
    calibration: Calibration,
) -> Verdict:
    if stream_p.remaining != stream_q.remaining:
        raise ValueError(
            f"streams differ in length: {stream_p.remaining} vs {stream_q.remaining}"
        )
    plan = plan_compression(params, calibration, streams=2)
    seg = plan.segment
    if stream_p.remaining < seg * plan.repetitions:
        raise StreamExhausted(f"streams hold {stream_p.remaining} samples, need {seg * plan.repetitions}")
    _open_run(plan, ledger)
    verdicts = []
    for rep in range(plan.repetitions):
        pi = _repetition_partition(plan, seed, rep)
        ledger.charge("partition_key", pi.key_bits)
        ledger.charge("induced_counts_p", plan.k_prime * plan.count_bits)
        ledger.charge("induced_counts_q", plan.k_prime * plan.count_bits)
        counts_p = _induced_counts(stream_p, pi, seg)
        counts_q = _induced_counts(stream_q, pi, seg)
        threshold = calibration.closeness_threshold(plan.k_prime, seg, plan.eps_prime)
        config = TesterConfig(plan.k_prime, plan.eps_prime, plan.delta, threshold)
        verdicts.append(closeness_test(counts_p, counts_q, config))
        ledger.release("induced_counts_q")
        ledger.release("induced_counts_p")
        ledger.release("partition_key")
    _close_run(plan, ledger)
    return amplify(verdicts, plan.delta, plan.c2)



def prepare_thresholds(params: ProblemParams, calibration: Calibration, streams: int = 1) -> float:
    """Resolve the null threshold a run will use, filling the calibration cache."""
    plan = plan_compression(params, calibration, streams=streams)
    if streams == 2:
        return calibration.closeness_threshold(plan.k_prime, plan.segment, plan.eps_prime)
    pi = _repetition_partition(plan, 0, 0)
    return calibration.identity_threshold(
        induced_uniform(pi), reference_tag(plan), plan.segment, plan.eps_prime
    )
