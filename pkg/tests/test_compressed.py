import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from streamtest.base_testers import TesterConfig, identity_chi2_test, identity_sample_size
from streamtest.calibration import Calibration
from streamtest.compressed import (
    _induced_counts,
    calibrated_sample_size,
    plan_compression,
    reference_tag,
    run_compressed_closeness,
    run_compressed_uniformity,
)
from streamtest.compression import induced_uniform, project, sample_partition
from streamtest.core import (
    ProblemParams,
    StreamExhausted,
    Verdict,
    draw_stream,
    histogram,
    make_paninski_far,
    make_uniform,
)
from streamtest.ledger import BitLedger, bits_for_counter


class TestPlan:
    def test_criterion_layout(self, calibration):
        plan = plan_compression(ProblemParams(k=10**4, eps=0.5, n=10**6, m=1400), calibration)
        assert plan.count_bits == 20
        assert plan.key_bits == 28
        assert plan.counter_bits == bits_for_counter(calibration.repetitions)
        assert plan.k_prime == (1400 - 28 - 2 * plan.counter_bits) // 20
        assert plan.eps_prime == pytest.approx(calibration.c1 * math.sqrt(plan.k_prime / 1e4) * 0.5)
        assert plan.layout_bits <= 1400

    def test_full_histogram_fits(self, calibration):
        n = 5000
        m = 64 * bits_for_counter(n)
        plan = plan_compression(ProblemParams(k=64, eps=0.5, n=n, m=m), calibration)
        assert plan.k_prime == 64 and plan.repetitions == 1 and not plan.compressed
        assert plan.eps_prime == pytest.approx(calibration.c1 * 0.5)
        assert plan.layout_bits == m

    def test_budget_above_raw_histogram(self, calibration):
        with pytest.raises(ValueError):
            plan_compression(ProblemParams(k=64, eps=0.5, n=5000, m=64 * 13 + 1), calibration)

    def test_eps_prime_unit(self):
        cal = Calibration(c1=1.0)
        plan = plan_compression(ProblemParams(k=8, eps=1.0, n=100, m=8 * 7), cal)
        assert plan.eps_prime == 1.0

    def test_two_streams_halve_cells(self, calibration):
        params = ProblemParams(k=10**4, eps=0.5, n=10**6, m=1400)
        one = plan_compression(params, calibration)
        two = plan_compression(params, calibration, streams=2)
        assert two.k_prime == (1400 - one.key_bits - 2 * one.counter_bits) // 40
        assert two.layout_bits <= 1400

    @settings(max_examples=100, deadline=None)
    @given(st.integers(16, 5000), st.integers(1000, 10**7), st.integers(0, 10**6))
    def test_layout_within_budget(self, k, n, m_raw):
        cal = Calibration()
        count_bits = bits_for_counter(n)
        low = 2 * (k - 1).bit_length() + 6 + 2 * count_bits
        m = low + m_raw % max(1, k * count_bits - low + 1)
        params = ProblemParams(k=k, eps=0.5, n=n, m=m)
        plan = plan_compression(params, cal)
        assert plan.layout_bits <= m
        assert 2 <= plan.k_prime <= k

    def test_sample_size_is_fixed_point(self, calibration):
        n = calibrated_sample_size(10**4, 0.5, 1400, calibration)
        plan = plan_compression(ProblemParams(k=10**4, eps=0.5, n=n, m=1400), calibration)
        per_rep = identity_sample_size(plan.k_prime, plan.eps_prime, calibration.c4_identity)
        assert n == per_rep * plan.repetitions

    def test_reference_tag(self, calibration):
        plan = plan_compression(ProblemParams(k=1000, eps=0.5, n=46340, m=400), calibration)
        assert reference_tag(plan) == "balanced-image:1000"


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**63), st.integers(2, 50))
def test_induced_counts_match_projected_histogram(seed, kp):
    k, n = 200, 5000
    pi = sample_partition(k, kp, seed)
    p = make_paninski_far(k, 0.4)
    got = _induced_counts(draw_stream(p, n, seed), pi, n)
    raw = draw_stream(p, n, seed).take(n)
    assert got == histogram(project(pi, raw), kp)


class TestUniformity:
    K, M, N = 1000, 400, 46340

    def params(self):
        return ProblemParams(k=self.K, eps=0.5, n=self.N, m=self.M)

    def test_per_repetition_completeness(self, calibration):
        params = self.params()
        plan = plan_compression(params, calibration)
        reps = 400
        accepts = 0
        for t in range(reps):
            pi = sample_partition(self.K, plan.k_prime, seed=10_000 + t)
            ref = induced_uniform(pi)
            thr = calibration.identity_threshold(ref, reference_tag(plan), plan.segment, plan.eps_prime)
            counts = _induced_counts(draw_stream(make_uniform(self.K), plan.segment, t), pi, plan.segment)
            accepts += identity_chi2_test(counts, ref, TesterConfig(plan.k_prime, plan.eps_prime, plan.delta, thr)) \
                is Verdict.ACCEPT
        delta = plan.delta
        assert accepts / reps >= 1 - delta - 3 * math.sqrt(delta * (1 - delta) / reps)

    def test_end_to_end_small(self, calibration):
        params = self.params()
        acc = rej = 0
        for t in range(30):
            led = BitLedger(self.M)
            acc += run_compressed_uniformity(draw_stream(make_uniform(self.K), self.N, t), params, led, t,
                                             calibration) is Verdict.ACCEPT
            assert led.peak_bits <= self.M and led.current_bits == 0
            led = BitLedger(self.M)
            rej += run_compressed_uniformity(draw_stream(make_paninski_far(self.K, 0.5), self.N, t), params, led,
                                             t, calibration) is Verdict.REJECT
            assert led.peak_bits <= self.M
        assert acc >= 20 and rej >= 20

    def test_ledger_registers(self, calibration):
        led = BitLedger(self.M)
        run_compressed_uniformity(draw_stream(make_uniform(self.K), self.N, 0), self.params(), led, 0, calibration)
        labels = {e.label for e in led.log}
        assert labels == {"repetition_counter", "accept_counter", "partition_key", "induced_counts"}

    def test_deterministic(self, calibration):
        out = {
            run_compressed_uniformity(draw_stream(make_paninski_far(self.K, 0.2), self.N, 5), self.params(),
                                      BitLedger(self.M), 9, calibration)
            for _ in range(3)
        }
        assert len(out) == 1

    def test_short_stream(self, calibration):
        with pytest.raises(StreamExhausted):
            run_compressed_uniformity(draw_stream(make_uniform(self.K), 100, 0), self.params(), BitLedger(self.M),
                                      0, calibration)


class TestCloseness:
    K, M, N = 1000, 400, 102588

    def params(self):
        return ProblemParams(k=self.K, eps=0.5, n=self.N, m=self.M)

    def test_identical_streams_accept(self, calibration):
        for t in range(5):
            p = make_paninski_far(self.K, 0.5)
            led = BitLedger(self.M)
            verdict = run_compressed_closeness(draw_stream(p, self.N, t), draw_stream(p, self.N, t), self.params(),
                                               led, t, calibration)
            assert verdict is Verdict.ACCEPT
            assert led.peak_bits <= self.M

    def test_separates(self, calibration):
        acc = rej = 0
        u, far = make_uniform(self.K), make_paninski_far(self.K, 0.5)
        for t in range(20):
            acc += run_compressed_closeness(draw_stream(far, self.N, 2 * t), draw_stream(far, self.N, 2 * t + 1),
                                            self.params(), BitLedger(self.M), t, calibration) is Verdict.ACCEPT
            rej += run_compressed_closeness(draw_stream(u, self.N, 2 * t), draw_stream(far, self.N, 2 * t + 1),
                                            self.params(), BitLedger(self.M), t, calibration) is Verdict.REJECT
        assert acc >= 13 and rej >= 13

    def test_length_mismatch(self, calibration):
        u = make_uniform(self.K)
        with pytest.raises(ValueError):
            run_compressed_closeness(draw_stream(u, self.N, 0), draw_stream(u, self.N - 1, 1), self.params(),
                                     BitLedger(self.M), 0, calibration)


def test_degenerates_to_base_tester(calibration):
    k, n = 64, 3000
    m = k * bits_for_counter(n)
    params = ProblemParams(k=k, eps=0.5, n=n, m=m)
    plan = plan_compression(params, calibration)
    thr = calibration.identity_threshold(make_uniform(k), "uniform", n, plan.eps_prime)
    for seed in range(30):
        p = make_paninski_far(k, 0.15)
        got = run_compressed_uniformity(draw_stream(p, n, seed), params, BitLedger(m), seed, calibration)
        counts = histogram(draw_stream(p, n, seed).take(n), k)
        direct = identity_chi2_test(counts, make_uniform(k), TesterConfig(k, plan.eps_prime, plan.delta, thr))
        assert got is direct
