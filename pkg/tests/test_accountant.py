import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sparsefl.accountant import (
    DEFAULT_ALPHA_GRID,
    DegenerateBudgetError,
    RdpParams,
    accumulate_privacy,
    make_ledger,
    max_participation_rounds,
    participation_fraction,
    per_step_rdp,
)
from sparsefl.oracles import analytic_full_batch_log_moment, log_moment_trapezoid

FULL_GRID = tuple(float(a) for a in range(2, 65))


def test_full_batch_matches_analytic():
    for alpha in (2.0, 4.0, 8.0, 16.0):
        for sigma in (0.4, 0.5, 0.6, 1.0):
            got = per_step_rdp(1.0, sigma, alpha)
            want = analytic_full_batch_log_moment(sigma, alpha)
            assert got == pytest.approx(want, rel=1e-6)


def test_unit_variance_order_two_is_one():
    assert per_step_rdp(1.0, 1.0, 2.0) == pytest.approx(1.0, rel=1e-9)


def test_zero_sampling_rate_is_free():
    assert per_step_rdp(0.0, 0.6, 8.0) == 0.0


def test_matches_high_resolution_quadrature():
    got = per_step_rdp(0.167, 0.5, 16.0)
    oracle = log_moment_trapezoid(0.167, 0.5, 16.0)
    assert got == pytest.approx(oracle, rel=1e-8)
    # regression anchor for the quadrature configuration
    assert got == pytest.approx(451.3638165349539, rel=1e-9)


def test_never_exceeds_full_batch_cost():
    rng = np.random.default_rng(5)
    for _ in range(20):
        q = float(rng.uniform(0.0, 1.0))
        sigma = float(rng.uniform(0.3, 2.0))
        alpha = float(rng.integers(2, 40))
        assert per_step_rdp(q, sigma, alpha) <= analytic_full_batch_log_moment(sigma, alpha) + 1e-9


def test_rejects_bad_arguments():
    with pytest.raises(ValueError):
        per_step_rdp(-0.1, 1.0, 2.0)
    with pytest.raises(ValueError):
        per_step_rdp(1.1, 1.0, 2.0)
    with pytest.raises(ValueError):
        per_step_rdp(0.5, 0.0, 2.0)
    with pytest.raises(ValueError):
        per_step_rdp(0.5, 1.0, 1.0)


@settings(max_examples=20)
@given(
    q=st.floats(0.01, 0.99),
    sigma=st.floats(0.4, 2.0),
    alpha=st.sampled_from([2.0, 4.0, 8.0, 16.0, 32.0]),
)
def test_monotone_in_sampling_rate(q, sigma, alpha):
    lower = per_step_rdp(q * 0.5, sigma, alpha)
    upper = per_step_rdp(q, sigma, alpha)
    assert upper >= lower - 1e-9


@settings(max_examples=20)
@given(q=st.floats(0.05, 1.0), sigma=st.floats(0.4, 2.0))
def test_monotone_in_order(q, sigma):
    values = [per_step_rdp(q, sigma, a) for a in (2.0, 4.0, 8.0, 16.0)]
    assert all(b >= a - 1e-9 for a, b in zip(values, values[1:]))


@settings(max_examples=20)
@given(q=st.floats(0.05, 1.0), alpha=st.sampled_from([2.0, 8.0, 32.0]))
def test_nonincreasing_in_noise(q, alpha):
    values = [per_step_rdp(q, sigma, alpha) for sigma in (0.4, 0.8, 1.6)]
    assert all(b <= a + 1e-9 for a, b in zip(values, values[1:]))


def test_offset_example_at_zero_exposures():
    params = RdpParams(q=0.25, sigma_hat=0.6, alpha_grid=FULL_GRID, delta=1e-3, tau=60)
    eps, alpha = accumulate_privacy(0, params)
    assert eps == pytest.approx(0.027884535025868212, rel=1e-12)
    assert alpha == 64.0


def test_accumulation_linear_in_exposures():
    params = RdpParams(q=0.3, sigma_hat=1.0, alpha_grid=(4.0,), delta=1e-3, tau=7)
    offset = accumulate_privacy(0, params)[0]
    one = accumulate_privacy(1, params)[0] - offset
    two = accumulate_privacy(2, params)[0] - offset
    assert two == pytest.approx(2.0 * one, rel=1e-12)


def test_accumulate_example_order_two():
    params = RdpParams(q=1.0, sigma_hat=1.0, alpha_grid=(2.0,), delta=1e-3, tau=1)
    eps, alpha = accumulate_privacy(1, params)
    assert alpha == 2.0
    want = 1.0 + math.log(1000.0) + math.log(0.5) - math.log(2.0)
    assert eps == pytest.approx(want, rel=1e-9)
    assert eps == pytest.approx(6.521460917862246, rel=1e-12)


def test_accumulate_monotone_in_exposures():
    params = RdpParams(q=0.2, sigma_hat=0.8, alpha_grid=FULL_GRID, delta=1e-3, tau=10)
    values = [accumulate_privacy(t, params)[0] for t in range(0, 40, 5)]
    assert all(b >= a for a, b in zip(values, values[1:]))


def test_accumulate_rejects_negative_exposures():
    params = RdpParams(q=0.2, sigma_hat=0.8, alpha_grid=(2.0,))
    with pytest.raises(ValueError):
        accumulate_privacy(-1, params)


def test_inversion_examples():
    params = RdpParams(q=1.0, sigma_hat=1.0, alpha_grid=(2.0,), delta=1e-3, tau=1)
    assert max_participation_rounds(10.0, params) == 4
    assert max_participation_rounds(20.0, params) == 14


def test_inversion_zero_when_budget_below_offset():
    params = RdpParams(q=1.0, sigma_hat=1.0, alpha_grid=(2.0,), delta=1e-3, tau=1)
    offset = accumulate_privacy(0, params)[0]
    assert max_participation_rounds(offset * 0.9, params) == 0


def test_inversion_unbounded_when_sampling_never_happens():
    params = RdpParams(q=0.0, sigma_hat=1.0, alpha_grid=(2.0,), delta=1e-3, tau=1)
    assert max_participation_rounds(8.0, params) > 10**12


@settings(max_examples=15)
@given(
    q=st.floats(0.01, 1.0),
    sigma=st.floats(0.4, 2.0),
    eps=st.floats(1.0, 20.0),
)
def test_inversion_brackets_the_budget(q, sigma, eps):
    params = RdpParams(q=q, sigma_hat=sigma, alpha_grid=DEFAULT_ALPHA_GRID, delta=1e-3, tau=60)
    t_hat = max_participation_rounds(eps, params)
    assert accumulate_privacy(t_hat, params)[0] <= eps
    assert accumulate_privacy(t_hat + 1, params)[0] > eps


def test_participation_fraction_equal_budgets():
    out = participation_fraction([7, 7, 7, 7], 2)
    assert np.allclose(out, 0.5)


def test_participation_fraction_example():
    out = participation_fraction([10, 10, 10, 70], 2)
    assert np.allclose(out, [0.2, 0.2, 0.2, 1.0])


def test_participation_fraction_saturates_at_one():
    out = participation_fraction([5, 5, 5], 3)
    assert np.allclose(out, 1.0)


def test_participation_fraction_degenerate():
    with pytest.raises(DegenerateBudgetError):
        participation_fraction([0, 0, 0], 2)


def test_participation_fraction_rejects_negative():
    with pytest.raises(ValueError):
        participation_fraction([3, -1, 2], 2)


def test_params_validation():
    with pytest.raises(ValueError):
        RdpParams(q=1.2, sigma_hat=1.0)
    with pytest.raises(ValueError):
        RdpParams(q=0.5, sigma_hat=0.0)
    with pytest.raises(ValueError):
        RdpParams(q=0.5, sigma_hat=1.0, alpha_grid=())
    with pytest.raises(ValueError):
        RdpParams(q=0.5, sigma_hat=1.0, alpha_grid=(1.0, 2.0))
    with pytest.raises(ValueError):
        RdpParams(q=0.5, sigma_hat=1.0, delta=0.0)
    with pytest.raises(ValueError):
        RdpParams(q=0.5, sigma_hat=1.0, tau=0)


def test_ledger_matches_standalone_accounting():
    params = RdpParams(q=0.1, sigma_hat=1.0, alpha_grid=DEFAULT_ALPHA_GRID, delta=1e-3, tau=60)
    ledger = make_ledger(6.0, params)
    assert ledger.t_hat == max_participation_rounds(6.0, params)
    assert ledger.t_hat > 0
    assert not ledger.exhausted
    for t in (0, 1, ledger.t_hat):
        assert ledger.spent(t) == pytest.approx(accumulate_privacy(t, params)[0], rel=1e-12)
    assert ledger.spent(ledger.t_hat) <= 6.0
    assert ledger.spent(ledger.t_hat + 1) > 6.0


def test_ledger_exhausted_at_birth_when_budget_tiny():
    params = RdpParams(q=0.5, sigma_hat=0.6, alpha_grid=DEFAULT_ALPHA_GRID, delta=1e-3, tau=60)
    ledger = make_ledger(0.5, params)
    assert ledger.t_hat == 0
    assert ledger.exhausted
