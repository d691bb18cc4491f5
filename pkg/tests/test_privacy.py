import math

import numpy as np
import pytest

from dpsynth.errors import (
    BudgetExceededError,
    InfiniteBudgetError,
    NonPositiveSensitivityError,
    ZeroIterationsError,
)
from dpsynth.privacy import (
    VOTE_SENSITIVITY,
    AccountantLedger,
    NoiseSpec,
    PrivacyBudget,
    RandomStreams,
    add_gaussian,
    calibrate,
    clamp_normalize,
    eps_from_rho,
    make_schedule,
    noise_for_rho,
    rho_from_eps,
)


# -- calibration ----------------------------------------------------------

def test_rho_inversion_forward_check():
    rho = rho_from_eps(1.0, 1e-6)
    assert rho + 2.0 * math.sqrt(rho * math.log(1e6)) == pytest.approx(1.0, abs=1e-9)


def test_calibrate_sigma_at_unit_rho():
    budget = PrivacyBudget(epsilon=eps_from_rho(1.0, 1e-6), delta=1e-6)
    spec = calibrate(budget, math.sqrt(2.0))
    assert spec.sigma == pytest.approx(1.0, abs=1e-9)


def test_calibrate_scales_linearly_with_sensitivity():
    budget = PrivacyBudget(epsilon=2.0, delta=1e-5)
    assert calibrate(budget, 2.0).sigma == pytest.approx(2 * calibrate(budget, 1.0).sigma)


def test_calibrate_round_trip_grid():
    for eps in (0.1, 0.5, 1.0, 2.0, 10.0):
        for delta in (1e-8, 1e-7, 1e-6, 1e-5, 1e-3):
            for sens in (1.0, math.sqrt(2.0), 5.0):
                budget = PrivacyBudget(epsilon=eps, delta=delta)
                spec = calibrate(budget, sens)
                rho = sens**2 / (2.0 * spec.sigma**2)
                assert eps_from_rho(rho, delta) == pytest.approx(eps, abs=1e-9)


def test_calibrate_rejects_bad_inputs():
    budget = PrivacyBudget(epsilon=1.0, delta=1e-6)
    with pytest.raises(NonPositiveSensitivityError):
        calibrate(budget, 0.0)
    with pytest.raises(InfiniteBudgetError):
        calibrate(PrivacyBudget.infinite(), 1.0)


def test_noise_for_rho_infinite_is_sigma_zero():
    spec = noise_for_rho(math.inf, VOTE_SENSITIVITY)
    assert spec.sigma == 0.0
    assert math.isinf(spec.rho_cost())


def test_budget_validation():
    with pytest.raises(ValueError):
        PrivacyBudget(epsilon=-1.0, delta=1e-6)
    with pytest.raises(ValueError):
        PrivacyBudget(epsilon=1.0, delta=0.0)
    assert PrivacyBudget.infinite().is_infinite


# -- gaussian mechanism ---------------------------------------------------

def test_add_gaussian_sigma_zero_identity(rng):
    values = np.array([1.0, -2.0, 3.5])
    out = add_gaussian(values, NoiseSpec(sigma=0.0, sensitivity=1.0), rng)
    assert np.array_equal(out, values)
    out[0] = 99.0  # must be a copy
    assert values[0] == 1.0


def test_add_gaussian_deterministic_with_seed():
    spec = NoiseSpec(sigma=1.5, sensitivity=1.0)
    a = add_gaussian(np.zeros(32), spec, np.random.default_rng(4))
    b = add_gaussian(np.zeros(32), spec, np.random.default_rng(4))
    assert np.array_equal(a, b)


def test_add_gaussian_empirical_std():
    spec = NoiseSpec(sigma=2.0, sensitivity=1.0)
    draws = add_gaussian(np.zeros(10**5), spec, np.random.default_rng(12345))
    assert 1.98 <= draws.std() <= 2.02


# -- clamp + normalize ----------------------------------------------------

def test_clamp_normalize_mixed_signs():
    assert clamp_normalize([3.0, -1.0, 2.0]).tolist() == pytest.approx([0.6, 0.0, 0.4])


def test_clamp_normalize_fixed_point():
    probs = np.array([0.25, 0.5, 0.25])
    assert clamp_normalize(probs).tolist() == pytest.approx(probs.tolist())


def test_clamp_normalize_all_negative_uniform():
    assert clamp_normalize([-5.0, -2.0]).tolist() == pytest.approx([0.5, 0.5])


# -- schedules ------------------------------------------------------------

def test_schedule_increasing_t3():
    s = make_schedule("increasing", 3)
    assert s.shares == pytest.approx((1 / 6, 2 / 6, 3 / 6))


def test_schedule_even_t1():
    assert make_schedule("even", 1).shares == (1.0,)


def test_schedule_decreasing_t2():
    assert make_schedule("decreasing", 2).shares == pytest.approx((2 / 3, 1 / 3))


def test_schedule_shares_sum_to_one():
    for kind in ("even", "increasing", "decreasing"):
        for T in range(1, 25):
            shares = make_schedule(kind, T).shares
            assert abs(sum(shares) - 1.0) <= 1e-12
            assert all(s > 0 for s in shares)


def test_schedule_increasing_strictly_ascending():
    shares = make_schedule("increasing", 10).shares
    assert all(a < b for a, b in zip(shares, shares[1:]))


def test_schedule_zero_iterations():
    with pytest.raises(ZeroIterationsError):
        make_schedule("even", 0)


def test_per_iteration_sigma_increases_with_T():
    """Splitting a fixed budget over more rounds means more noise per round."""
    budget = PrivacyBudget(epsilon=1.0, delta=1e-6)
    sigmas = []
    for T in range(1, 11):
        share = make_schedule("even", T).shares[0]
        sigmas.append(noise_for_rho(share * budget.rho, VOTE_SENSITIVITY).sigma)
    assert all(a < b for a, b in zip(sigmas, sigmas[1:]))


# -- ledger ---------------------------------------------------------------

def test_ledger_accumulates_to_cap():
    ledger = AccountantLedger(cap=1.0)
    ledger.charge("a", 0.5)
    ledger.charge("b", 0.5)
    assert ledger.total_rho == pytest.approx(1.0)


def test_ledger_rejects_over_cap():
    ledger = AccountantLedger(cap=1.0)
    ledger.charge("a", 0.5)
    ledger.charge("b", 0.5)
    with pytest.raises(BudgetExceededError):
        ledger.charge("c", 0.01)


def test_ledger_empty_total():
    assert AccountantLedger(cap=1.0).total_rho == 0.0


def test_ledger_dump_shape(tmp_path):
    ledger = AccountantLedger(cap=2.0)
    ledger.charge("x", 0.25)
    ledger.charge("y", 0.75)
    payload = ledger.to_dict(delta=1e-6)
    assert [c["label"] for c in payload["charges"]] == ["x", "y"]
    assert payload["charges"][1]["cumulative"] == pytest.approx(1.0)
    assert payload["total_rho"] == pytest.approx(1.0)
    assert payload["epsilon"] == pytest.approx(eps_from_rho(1.0, 1e-6))
    ledger.dump_json(tmp_path / "ledger.json", delta=1e-6)
    assert (tmp_path / "ledger.json").exists()


def test_ledger_infinite_charges_serialize():
    ledger = AccountantLedger(cap=math.inf)
    ledger.charge("nonprivate", math.inf)
    payload = ledger.to_dict(delta=1e-6)
    assert payload["total_rho"] == "inf"
    assert payload["epsilon"] == "inf"


# -- labeled substreams ---------------------------------------------------

def test_random_streams_independent_and_reproducible():
    streams = RandomStreams(42)
    a1 = streams.stream("alpha").normal(size=8)
    a2 = RandomStreams(42).stream("alpha").normal(size=8)
    b = streams.stream("beta").normal(size=8)
    assert np.array_equal(a1, a2)
    assert not np.array_equal(a1, b)
