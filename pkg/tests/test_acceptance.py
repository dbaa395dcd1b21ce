"""End-to-end acceptance criteria, each at its stated tolerance.

Every test prints one PASS/FAIL line (also collected in the terminal summary).
"""

import math
from fractions import Fraction

import numpy as np
import pytest

from streamtest.amplification import acceptance_threshold, amplify, repetitions_for
from streamtest.base_testers import TesterConfig, identity_chi2_test
from streamtest.batch import empirical_tv_statistic, plan_batches, required_batches, unseen_statistic
from streamtest.compressed import calibrated_sample_size, plan_compression, run_compressed_uniformity
from streamtest.compression import (
    contraction_probability_oracle,
    count_balanced_partitions,
    enumerate_balanced_partitions,
    induced_tv,
)
from streamtest.core import (
    Counts,
    ProblemParams,
    Verdict,
    draw_stream,
    histogram,
    make_paninski_far,
    make_point_mass,
    make_uniform,
    tv_distance,
)
from streamtest.harness import ExperimentSpec, run_experiment, write_csv
from streamtest.ledger import BitLedger, bits_for_counter
from streamtest.oracles import exact_unseen_moments, monte_carlo_unseen, variance_bound


def lower_limit(trials: int) -> float:
    """2/3 minus three binomial standard errors at rate 2/3."""
    return 2 / 3 - 3 * math.sqrt((2 / 3) * (1 / 3) / trials)


# --- shared end-to-end runs (criteria 3, 4, 6, 7) --------------------------------

BATCH_K, BATCH_EPS, BATCH_S, BATCH_M = 500, 0.5, 55, 530
BATCH_T = required_batches(BATCH_S, BATCH_K, BATCH_EPS)
BATCH_PARAMS = ProblemParams(k=BATCH_K, eps=BATCH_EPS, n=BATCH_S * BATCH_T, m=BATCH_M)
BATCH_TRIALS = 200

COMP_K, COMP_EPS, COMP_M = 10_000, 0.5, 1400
COMP_TRIALS = 100


@pytest.fixture(scope="module")
def batch_reports(calibration):
    out = {}
    for family in ("uniform", "paninski"):
        spec = ExperimentSpec("batch", BATCH_PARAMS, family, BATCH_TRIALS, master_seed=300)
        out[family] = run_experiment(spec, calibration)
    return out


@pytest.fixture(scope="module")
def uniformity_reports(calibration):
    n = calibrated_sample_size(COMP_K, COMP_EPS, COMP_M, calibration)
    params = ProblemParams(k=COMP_K, eps=COMP_EPS, n=n, m=COMP_M)
    return {
        family: run_experiment(ExperimentSpec("compress", params, family, COMP_TRIALS, master_seed=600), calibration)
        for family in ("uniform", "paninski")
    }


@pytest.fixture(scope="module")
def closeness_reports(calibration):
    n = calibrated_sample_size(COMP_K, COMP_EPS, COMP_M, calibration, closeness=True)
    params = ProblemParams(k=COMP_K, eps=COMP_EPS, n=n, m=COMP_M)
    same = ExperimentSpec("closeness", params, "paninski", COMP_TRIALS, master_seed=700,
                          reference_family="paninski")
    far = ExperimentSpec("closeness", params, "paninski", COMP_TRIALS, master_seed=700,
                         reference_family="uniform")
    return {"same": run_experiment(same, calibration), "far": run_experiment(far, calibration)}


# --- criteria ------------------------------------------------------------------------


def test_criterion_01_statistic_identity(criterion):
    rng = np.random.Generator(np.random.Philox(key=1))
    mismatches = 0
    for _ in range(10_000):
        k = int(rng.integers(2, 513))
        total = int(rng.integers(0, k + 1))
        counts = Counts.from_freq(rng.multinomial(total, np.full(k, 1.0 / k)))
        if total == 0:
            ok = unseen_statistic(counts, k) == 1
        else:
            ok = unseen_statistic(counts, k) == empirical_tv_statistic(counts, total, k)
        mismatches += not ok
    assert criterion(1, mismatches == 0, f"{mismatches} mismatches over 10^4 count vectors (exact rationals)")


def test_criterion_02_moment_oracles(criterion):
    mean, _ = exact_unseen_moments(100, 50)
    mc = monte_carlo_unseen(100, 50, 100_000, seed=2)
    z = mc.z_score(mean)
    worst = max(
        exact_unseen_moments(k, s)[1] / variance_bound(k, s) for k in range(1, 513) for s in range(1, k + 1)
    )
    passed = abs(z) <= 4 and worst <= 1.0
    assert criterion(2, passed, f"MC z-score {z:+.2f} (|z|<=4); max Var/bound over 1<=s<=k<=512 = {worst:.4f}")


def test_criterion_03_batch_end_to_end(batch_reports, criterion):
    plan = plan_batches(BATCH_PARAMS)
    u, f = batch_reports["uniform"], batch_reports["paninski"]
    limit = lower_limit(BATCH_TRIALS)
    passed = plan.s == BATCH_S and plan.T == BATCH_T and u.accept_rate >= limit and f.reject_rate >= limit
    assert criterion(
        3, passed,
        f"s={plan.s} T={plan.T} n={BATCH_PARAMS.n}: uniform accept {u.accept_rate:.3f}, "
        f"paninski reject {f.reject_rate:.3f} (limit {limit:.3f}, {BATCH_TRIALS} trials)",
    )


def test_criterion_04_memory(batch_reports, uniformity_reports, closeness_reports, criterion):
    reports = [*batch_reports.values(), *uniformity_reports.values(), *closeness_reports.values()]
    breaches = sum(r.verdict_counts["breach"] for r in reports)
    peaks = [(r.spec.algo, r.spec.family, r.peak_bits, r.spec.params.m) for r in reports]
    passed = breaches == 0 and all(p <= m for _, _, p, m in peaks)
    detail = "; ".join(f"{a}/{fam} peak {p}<={m}" for a, fam, p, m in peaks)
    assert criterion(4, passed, f"{breaches} breaches; {detail}")


def test_criterion_05_contraction(calibration, criterion):
    maps = list(enumerate_balanced_partitions(6, 2))
    exact = contraction_probability_oracle(make_point_mass(6), make_uniform(6), 2, 0, seed=0, c1=0.3)
    sampled = contraction_probability_oracle(
        make_paninski_far(8, 0.4), make_uniform(8), 4, 10_000, seed=5, c1=0.3, exhaustive=False
    )
    passed = len(maps) == count_balanced_partitions(6, 2) == 10 and exact == 1.0 and sampled >= 0.05
    assert criterion(5, passed, f"k=6,k'=2: {len(maps)} partitions, probability {exact}; "
                                f"paninski k=8,k'=4: {sampled:.4f} >= 0.05")


def test_criterion_06_compressed_uniformity(uniformity_reports, calibration, criterion):
    u, f = uniformity_reports["uniform"], uniformity_reports["paninski"]
    plan = plan_compression(u.spec.params, calibration)
    limit = lower_limit(COMP_TRIALS)
    passed = u.accept_rate >= limit and f.reject_rate >= limit
    assert criterion(
        6, passed,
        f"k'={plan.k_prime} R={plan.repetitions} n={u.spec.params.n}: uniform accept {u.accept_rate:.3f}, "
        f"paninski reject {f.reject_rate:.3f} (limit {limit:.3f})",
    )


def test_criterion_07_compressed_closeness(closeness_reports, calibration, criterion):
    same, far = closeness_reports["same"], closeness_reports["far"]
    plan = plan_compression(same.spec.params, calibration, streams=2)
    limit = lower_limit(COMP_TRIALS)
    passed = same.accept_rate >= limit and far.reject_rate >= limit
    assert criterion(
        7, passed,
        f"k'={plan.k_prime} n={same.spec.params.n}: p=q accept {same.accept_rate:.3f}, "
        f"uniform vs paninski reject {far.reject_rate:.3f} (limit {limit:.3f})",
    )


def test_criterion_08_amplification(criterion):
    rng = np.random.Generator(np.random.Philox(key=8))
    reps = 10_000
    worst_error = 0.0
    between = True
    for c2 in (0.1, 0.3, 0.5, 0.9, 1.0):
        for frac in (0.1, 0.5, 0.9):
            delta = frac * c2 / (1 + c2)
            thr = acceptance_threshold(delta, c2)
            null_rate = rng.binomial(1, 1 - delta, reps).mean()
            far_rate = rng.binomial(1, 1 - (1 - delta) * c2, reps).mean()
            between &= far_rate < thr < null_rate
            R = repetitions_for(delta, c2)
            for p_accept, want in ((1 - delta, Verdict.ACCEPT), (1 - (1 - delta) * c2, Verdict.REJECT)):
                accepts = rng.binomial(R, p_accept, reps)
                outcomes = {a: amplify([Verdict.ACCEPT] * a + [Verdict.REJECT] * (R - a), delta, c2)
                            for a in np.unique(accepts).tolist()}
                err = np.mean([outcomes[a] is not want for a in accepts.tolist()])
                worst_error = max(worst_error, float(err))
    exact = acceptance_threshold(0.1, 0.5)
    passed = between and worst_error <= 1 / 3 and exact == pytest.approx(0.725, abs=1e-15)
    assert criterion(8, passed, f"threshold strictly between simulated rates: {between}; "
                                f"worst amplified error {worst_error:.4f} <= 1/3; threshold(0.1,0.5)={exact}")


def test_criterion_09_degeneration(calibration, criterion):
    k, n = 64, 4000
    m = k * bits_for_counter(n)
    params = ProblemParams(k=k, eps=0.5, n=n, m=m)
    plan = plan_compression(params, calibration)
    thr = calibration.identity_threshold(make_uniform(k), "uniform", n, plan.eps_prime)
    config = TesterConfig(k, plan.eps_prime, plan.delta, thr)
    same = 0
    for seed in range(100):
        p = make_paninski_far(k, 0.1) if seed % 2 else make_uniform(k)
        got = run_compressed_uniformity(draw_stream(p, n, seed), params, BitLedger(m), seed, calibration)
        direct = identity_chi2_test(histogram(draw_stream(p, n, seed).take(n), k), make_uniform(k), config)
        same += got is direct

    bk, bn = 500, 500
    bparams = ProblemParams(k=bk, eps=0.5, n=bn, m=bn * math.ceil(math.log2(bk)))
    bplan = plan_batches(bparams)
    trials = 200
    u = run_experiment(ExperimentSpec("batch", bparams, "uniform", trials, master_seed=900), calibration)
    f = run_experiment(ExperimentSpec("batch", bparams, "paninski", trials, master_seed=900), calibration)
    limit = lower_limit(trials)
    passed = (plan.k_prime == k and plan.repetitions == 1 and same == 100 and bplan.T <= 2
              and u.accept_rate >= limit and f.reject_rate >= limit and not (u.failed or f.failed))
    assert criterion(
        9, passed,
        f"k'=k={plan.k_prime}: {same}/100 verdicts identical to base tester; batch m=n*log k: s={bplan.s} "
        f"T={bplan.T}, uniform accept {u.accept_rate:.3f}, paninski reject {f.reject_rate:.3f} (limit {limit:.3f})",
    )


def test_criterion_10_determinism(tmp_path, calibration, criterion):
    specs = [
        ExperimentSpec("batch", ProblemParams(k=64, eps=0.5, n=3000, m=200), "paninski", 20, master_seed=10),
        ExperimentSpec("compress", ProblemParams(k=1000, eps=0.5, n=46340, m=400), "paninski", 5, master_seed=10),
        ExperimentSpec("closeness", ProblemParams(k=1000, eps=0.5, n=102588, m=400), "paninski", 5,
                       master_seed=10),
    ]
    identical = True
    for i, spec in enumerate(specs):
        texts = []
        for j in range(2):
            path = tmp_path / f"{i}-{j}.csv"
            run_experiment(ExperimentSpec.from_dict({**spec.to_dict(), "output": str(path)}), calibration)
            texts.append(path.read_bytes())
        identical &= texts[0] == texts[1]
    parallel = write_csv([run_experiment(specs[0], calibration, workers=2)]) == write_csv(
        [run_experiment(specs[0], calibration)]
    )
    assert criterion(10, identical and parallel,
                     f"repeat runs byte-identical: {identical}; parallel equals serial: {parallel}")
