"""Tests for entropy risk-neutralization: closed forms, grid oracle, properties."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from catbond.entropy import (
    RiskNeutralWeights,
    ScenarioSet,
    calibrate,
    discounted_payoffs,
    risk_neutral_weights,
    solve_lambda,
)
from catbond.errors import CalibrationError, DataError


class TestDiscountedPayoffs:
    def test_zero_rates_pass_through(self):
        alpha = discounted_payoffs([[0.0, 0.0]], [[0.0, 100.0]])
        assert alpha == pytest.approx([100.0])

    def test_constant_rate_two_periods(self):
        # 100 paid at t=2 discounted through two periods of 1%
        alpha = discounted_payoffs([[0.01, 0.01]], [[0.0, 100.0]])
        assert alpha[0] == pytest.approx(100.0 * math.exp(-0.02), abs=1e-10)
        assert alpha[0] == pytest.approx(98.0199, abs=1e-4)

    def test_zero_payoffs_give_zero(self):
        rng = np.random.default_rng(0)
        r = rng.uniform(0.0, 0.05, size=(7, 4))
        assert discounted_payoffs(r, np.zeros((7, 4))) == pytest.approx(np.zeros(7))

    def test_coupon_stream_hand_sum(self):
        r = np.array([[0.02, 0.03, 0.01]])
        v = np.array([[5.0, 5.0, 105.0]])
        expected = (
            5.0 * math.exp(-0.02)
            + 5.0 * math.exp(-0.05)
            + 105.0 * math.exp(-0.06)
        )
        assert discounted_payoffs(r, v)[0] == pytest.approx(expected, abs=1e-12)

    def test_nan_rejected(self):
        with pytest.raises(DataError, match="non-finite"):
            discounted_payoffs([[0.01, np.nan]], [[0.0, 100.0]])

    def test_shape_mismatch_rejected(self):
        with pytest.raises(DataError, match="conform"):
            discounted_payoffs([[0.01, 0.02]], [[1.0, 2.0, 3.0]])


class TestSolveLambda:
    def test_two_point_closed_form(self):
        # mean constraint (1 + 2u)/(1 + u) = 1.25 with u = e^lambda gives
        # u = 1/3, lambda = -ln 3
        lam = solve_lambda(np.array([1.0, 2.0]), 1.25)
        assert lam == pytest.approx(-math.log(3.0), abs=1e-10)

    def test_symmetric_target_gives_zero(self):
        assert solve_lambda(np.array([1.0, 2.0]), 1.5) == pytest.approx(0.0, abs=1e-12)

    def test_constant_alpha_equal_target(self):
        assert solve_lambda(np.full(5, 2.5), 2.5) == 0.0

    def test_constant_alpha_wrong_target(self):
        with pytest.raises(CalibrationError, match="not attainable"):
            solve_lambda(np.full(5, 2.5), 2.6)

    @pytest.mark.parametrize("p0", [0.5, 1.0, 2.0, 9.7])
    def test_target_outside_range_rejected(self, p0):
        with pytest.raises(CalibrationError, match="not attainable"):
            solve_lambda(np.array([1.0, 1.5, 2.0]), p0)

    def test_grid_oracle_lognormal_scenarios(self):
        # brute-force two-stage grid over f(lam) = log sum exp(lam*(a-p0)),
        # 1e5 points in the refinement, independent of the Newton path
        rng = np.random.default_rng(42)
        alpha = rng.lognormal(0.0, 0.5, size=10_000)
        p0 = 0.98 * float(np.mean(alpha))

        def f(lam):
            z = lam * (alpha - p0)
            m = np.max(z)
            return m + math.log(np.sum(np.exp(z - m)))

        coarse = np.linspace(-1.0, 1.0, 10_001)
        fc = [f(l) for l in coarse]
        l0 = coarse[int(np.argmin(fc))]
        step = coarse[1] - coarse[0]
        fine = np.linspace(l0 - 2 * step, l0 + 2 * step, 100_001)
        ff = [f(l) for l in fine]
        grid_lam = fine[int(np.argmin(ff))]

        lam = solve_lambda(alpha, p0)
        assert lam == pytest.approx(grid_lam, abs=1e-6)

    def test_single_scenario_rejected(self):
        with pytest.raises(DataError, match="at least 2"):
            solve_lambda(np.array([1.0]), 1.0)


class TestRiskNeutralWeights:
    def test_zero_lambda_uniform(self):
        res = risk_neutral_weights(np.array([3.0, 1.0, 7.0, 2.0]), 0.0)
        assert res.weights == pytest.approx(np.full(4, 0.25))
        assert res.lam == 0.0

    def test_two_point_closed_form(self):
        res = risk_neutral_weights(np.array([1.0, 2.0]), -math.log(3.0))
        assert res.weights == pytest.approx([0.75, 0.25], abs=1e-12)

    def test_overflow_guard_on_huge_payoffs(self):
        alpha = np.array([-1e4, -5e3, 0.0, 5e3, 1e4])
        for lam in (-1.0, 1.0):
            res = risk_neutral_weights(alpha, lam)
            assert np.all(np.isfinite(res.weights))
            assert np.all(res.weights >= 0)
            assert np.sum(res.weights) == pytest.approx(1.0, abs=1e-12)

    def test_residual_recorded_when_target_given(self):
        alpha = np.array([1.0, 2.0])
        res = risk_neutral_weights(alpha, -math.log(3.0), p0=1.25)
        assert res.constraint_residual == pytest.approx(0.0, abs=1e-12)

    def test_nonfinite_lambda_rejected(self):
        with pytest.raises(DataError, match="finite"):
            risk_neutral_weights(np.array([1.0, 2.0]), math.inf)


class TestCalibrate:
    def test_two_scenario_residual(self):
        res = calibrate(ScenarioSet(np.array([1.0, 2.0])), 1.25)
        assert res.constraint_residual < 1e-12
        assert res.weights == pytest.approx([0.75, 0.25], abs=1e-10)

    def test_accepts_plain_arrays(self):
        alpha = np.array([1.0, 2.0, 3.0])
        res = calibrate(alpha, 1.7)
        assert np.dot(res.weights, alpha) == pytest.approx(1.7, abs=1e-10)

    def test_large_scenario_set_reprices(self):
        rng = np.random.default_rng(7)
        alpha = rng.lognormal(4.0, 0.8, size=50_000)
        p0 = 0.95 * float(np.mean(alpha))
        res = calibrate(ScenarioSet(alpha), p0)
        assert abs(np.dot(res.weights, alpha) - p0) <= 1e-8 * p0
        assert np.all(res.weights > 0)

    def test_shift_covariance(self):
        rng = np.random.default_rng(3)
        alpha = rng.gamma(2.0, 3.0, size=1000)
        p0 = float(np.mean(alpha)) * 0.97
        base = calibrate(alpha, p0)
        for c in (-5.0, 12.5):
            shifted = calibrate(alpha + c, p0 + c)
            assert shifted.weights == pytest.approx(base.weights, abs=1e-9)

    def test_stationarity_matches_constraint(self):
        # the stationarity condition sum pi*_i (alpha_i - p0) = 0 is the
        # same equation the solver roots; confirm it holds at the answer
        rng = np.random.default_rng(12)
        alpha = rng.lognormal(0.0, 1.0, size=5000)
        p0 = 0.9 * float(np.mean(alpha))
        res = calibrate(alpha, p0)
        assert abs(np.dot(res.weights, alpha - p0)) < 1e-8

    def test_tilted_mean_monotone_in_lambda(self):
        rng = np.random.default_rng(8)
        alpha = rng.gamma(2.0, 1.0, size=400)
        lams = np.linspace(-3.0, 3.0, 61)
        means = [
            float(np.dot(risk_neutral_weights(alpha, l).weights, alpha)) for l in lams
        ]
        assert all(m1 > m0 for m0, m1 in zip(means, means[1:]))


class TestProperties:
    @given(
        st.lists(
            st.floats(min_value=-1e3, max_value=1e3),
            min_size=2,
            max_size=50,
        ),
        st.floats(min_value=-2.0, max_value=2.0),
    )
    @settings(max_examples=80, deadline=None)
    def test_weights_always_probability_vector(self, alpha, lam):
        res = risk_neutral_weights(np.array(alpha), lam)
        assert np.all(res.weights >= 0)
        assert np.sum(res.weights) == pytest.approx(1.0, abs=1e-12)

    @given(st.integers(min_value=0, max_value=2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_calibrated_price_always_reproduced(self, seed):
        rng = np.random.default_rng(seed)
        alpha = rng.normal(10.0, 2.0, size=200)
        lo, hi = float(np.min(alpha)), float(np.max(alpha))
        p0 = lo + 0.3 * (hi - lo)
        res = calibrate(alpha, p0)
        assert np.dot(res.weights, alpha) == pytest.approx(p0, rel=1e-8)
