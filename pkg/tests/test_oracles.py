import pytest

from streamtest.oracles import (
    exact_unseen_moments,
    monte_carlo_unseen,
    unseen_moments_by_enumeration,
    variance_bound,
)


def test_empty_batch():
    assert exact_unseen_moments(7, 0) == (1.0, 0.0)


def test_one_sample_two_bins():
    mean, var = exact_unseen_moments(2, 1)
    assert mean == 0.5 and var == pytest.approx(0.0, abs=1e-18)


def test_variance_bound_value():
    assert variance_bound(100, 50) == 5e-3
    assert exact_unseen_moments(100, 50)[1] <= 5e-3


def test_batch_larger_than_domain():
    with pytest.raises(ValueError):
        exact_unseen_moments(4, 5)


@pytest.mark.parametrize("k,s", [(2, 1), (3, 2), (4, 4), (5, 3), (6, 5), (7, 6)])
def test_closed_form_matches_enumeration(k, s):
    mean, var = exact_unseen_moments(k, s)
    e_mean, e_var = unseen_moments_by_enumeration(k, s)
    assert mean == pytest.approx(e_mean, rel=1e-12)
    assert var == pytest.approx(e_var, rel=1e-9, abs=1e-15)


def test_enumeration_guard():
    with pytest.raises(ValueError):
        unseen_moments_by_enumeration(50, 10)


def test_variance_bound_full_grid():
    worst = max(
        exact_unseen_moments(k, s)[1] / variance_bound(k, s)
        for k in range(1, 513)
        for s in range(1, k + 1)
    )
    assert worst <= 1.0


def test_monte_carlo_mean():
    mean, _ = exact_unseen_moments(100, 50)
    mc = monte_carlo_unseen(100, 50, 100_000, seed=3)
    assert abs(mc.z_score(mean)) <= 4
    assert mc.batches == 100_000
