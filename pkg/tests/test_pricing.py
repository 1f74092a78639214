"""Tests for bond payoff, PV distributions, and the premium term structure."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from catbond.entropy import risk_neutral_weights
from catbond.errors import DataError, SolverError
from catbond.pricing import (
    BondSpec,
    payoff,
    premium_curve,
    price,
    summarize_present_values,
)


def _spec(**kw):
    base = dict(face=100.0, recovery=0.0, threshold=759.3, maturity=2)
    base.update(kw)
    return BondSpec(**base)


class TestBondSpec:
    def test_rejects_bad_fields(self):
        with pytest.raises(DataError, match="face"):
            _spec(face=0.0)
        with pytest.raises(DataError, match="recovery"):
            _spec(recovery=1.0)
        with pytest.raises(DataError, match="recovery"):
            _spec(recovery=-0.1)
        with pytest.raises(DataError, match="threshold"):
            _spec(threshold=0.0)
        with pytest.raises(DataError, match="maturity"):
            _spec(maturity=0)
        with pytest.raises(DataError, match="maturity"):
            _spec(maturity=2.5)

    def test_infinite_threshold_allowed(self):
        assert _spec(threshold=math.inf).threshold == math.inf


class TestPayoff:
    def test_boundary_inclusive(self):
        spec = _spec(threshold=500.0)
        assert payoff(500.0, spec) == 100.0

    def test_full_wipeout(self):
        spec = _spec(recovery=0.0, threshold=500.0)
        assert payoff(500.1, spec) == 0.0

    def test_partial_recovery(self):
        spec = _spec(recovery=0.4, threshold=500.0)
        assert payoff(501.0, spec) == pytest.approx(40.0)

    def test_vectorized(self):
        spec = _spec(recovery=0.25, threshold=10.0)
        out = payoff(np.array([0.0, 10.0, 10.5]), spec)
        assert out == pytest.approx([100.0, 100.0, 25.0])


class TestSummaries:
    def test_moments_against_explicit_loops(self):
        rng = np.random.default_rng(2)
        v = rng.gamma(3.0, 10.0, size=400)
        w = rng.dirichlet(np.ones(400))
        dist = summarize_present_values(v, w)
        mean = sum(wi * vi for wi, vi in zip(w, v))
        m2 = sum(wi * (vi - mean) ** 2 for wi, vi in zip(w, v))
        m3 = sum(wi * (vi - mean) ** 3 for wi, vi in zip(w, v))
        m4 = sum(wi * (vi - mean) ** 4 for wi, vi in zip(w, v))
        assert dist.mean == pytest.approx(mean, rel=1e-12)
        assert dist.sd == pytest.approx(math.sqrt(m2), rel=1e-12)
        assert dist.skewness == pytest.approx(m3 / m2**1.5, rel=1e-10)
        assert dist.excess_kurtosis == pytest.approx(m4 / m2**2 - 3.0, rel=1e-10)

    def test_degenerate_distribution_reports_zero_shape(self):
        dist = summarize_present_values(np.full(50, 7.0))
        assert dist.sd == 0.0
        assert dist.skewness == 0.0
        assert dist.excess_kurtosis == 0.0

    def test_weight_length_mismatch(self):
        with pytest.raises(DataError, match="weights"):
            summarize_present_values(np.ones(5), np.full(4, 0.25))

    def test_unnormalized_weights_rejected(self):
        with pytest.raises(DataError, match="sum"):
            summarize_present_values(np.ones(4), np.full(4, 0.3))


class TestPrice:
    def test_zero_rates_no_trigger_returns_face(self):
        spec = _spec(threshold=math.inf)
        _, p = price(np.zeros((6, 2)), np.full(6, 1e9), spec)
        assert p == 100.0

    def test_trigger_no_trigger_average(self):
        spec = _spec(recovery=0.0, threshold=100.0, maturity=1)
        _, p = price(np.zeros((2, 1)), np.array([50.0, 150.0]), spec)
        assert p == pytest.approx(50.0)

    def test_discounting_applied_per_scenario(self):
        spec = _spec(threshold=math.inf, maturity=2)
        rates = np.array([[0.01, 0.02], [0.00, 0.00]])
        dist, p = price(rates, np.zeros(2), spec)
        assert dist.values == pytest.approx([100 * math.exp(-0.03), 100.0])
        assert p == pytest.approx(50 * (math.exp(-0.03) + 1.0))

    def test_price_nondecreasing_in_threshold(self):
        rng = np.random.default_rng(5)
        rates = rng.uniform(0.0, 0.03, size=(500, 2))
        losses = rng.gamma(2.0, 300.0, size=500)
        w = rng.dirichlet(np.ones(500))
        prices = [
            price(rates, losses, _spec(threshold=d), weights=w)[1]
            for d in np.linspace(10.0, 2000.0, 25)
        ]
        assert all(p1 >= p0 - 1e-12 for p0, p1 in zip(prices, prices[1:]))

    def test_price_nondecreasing_in_recovery_linear_in_face(self):
        rng = np.random.default_rng(6)
        rates = rng.uniform(0.0, 0.03, size=(300, 2))
        losses = rng.gamma(2.0, 300.0, size=300)
        by_recovery = [
            price(rates, losses, _spec(recovery=a))[1] for a in np.linspace(0.0, 0.9, 10)
        ]
        assert all(p1 >= p0 for p0, p1 in zip(by_recovery, by_recovery[1:]))
        p1 = price(rates, losses, _spec(face=1.0))[1]
        p250 = price(rates, losses, _spec(face=250.0))[1]
        assert p250 == pytest.approx(250.0 * p1, rel=1e-12)

    def test_full_recovery_limit_is_riskless_bond(self):
        rng = np.random.default_rng(7)
        rates = rng.uniform(0.0, 0.03, size=(300, 2))
        losses = rng.gamma(2.0, 600.0, size=300)
        p_limit = price(rates, losses, _spec(recovery=1.0 - 1e-9))[1]
        riskless = 100.0 * float(np.mean(np.exp(-rates.sum(axis=1))))
        assert p_limit == pytest.approx(riskless, rel=1e-8)

    def test_scenario_count_mismatch(self):
        with pytest.raises(DataError, match="scenarios|paths"):
            price(np.zeros((3, 2)), np.zeros(4), _spec())

    def test_short_rate_paths_rejected(self):
        with pytest.raises(DataError, match="periods"):
            price(np.zeros((3, 1)), np.zeros(3), _spec(maturity=2))


class TestPremiumCurve:
    def test_single_scenario_recovers_flat_rate(self):
        # one scenario, 1% per period, payoff only at T=2: discounting on
        # both sides must match, so delta = the flat rate
        spec = _spec(threshold=math.inf, maturity=2)
        curve = premium_curve(
            np.array([[0.01, 0.01]]),
            np.array([[0.0, 0.0]]),
            spec,
            maturities=[2],
        )
        assert curve.deltas[0] == pytest.approx(0.01, abs=1e-7)
        assert curve.residuals[0] < 1e-8

    def test_uniform_weights_zero_rates_zero_premium(self):
        spec = _spec(threshold=500.0, recovery=0.2, maturity=3)
        rng = np.random.default_rng(9)
        losses = np.cumsum(rng.gamma(2.0, 100.0, size=(200, 3)), axis=1)
        curve = premium_curve(np.zeros((200, 3)), losses, spec, maturities=[1, 2, 3])
        assert curve.deltas == pytest.approx(np.zeros(3), abs=1e-7)

    def test_premium_increases_with_trigger_probability(self):
        # fixed negative tilt; more trigger-heavy scenario sets must carry
        # larger premiums at fixed maturity
        spec = _spec(recovery=0.4, threshold=100.0, maturity=1)
        lam = -0.02
        deltas = []
        for n_trig in (1, 3, 5):
            losses = np.array([150.0] * n_trig + [50.0] * (10 - n_trig)).reshape(10, 1)
            pay = payoff(losses[:, 0], spec)
            w = risk_neutral_weights(pay, lam).weights
            curve = premium_curve(np.zeros((10, 1)), losses, spec, [1], weights=w)
            deltas.append(curve.deltas[0])
        assert deltas[0] < deltas[1] < deltas[2]

    def test_residuals_within_tolerance_everywhere(self):
        rng = np.random.default_rng(11)
        n, t_max = 400, 6
        rates = rng.uniform(0.005, 0.02, size=(n, t_max))
        losses = np.cumsum(rng.gamma(1.5, 150.0, size=(n, t_max)), axis=1)
        spec = _spec(threshold=1200.0, recovery=0.1, maturity=t_max)
        pv = np.exp(-rates.sum(axis=1)) * payoff(losses[:, -1], spec)
        w = risk_neutral_weights(pv, -0.01).weights
        curve = premium_curve(rates, losses, spec, list(range(1, t_max + 1)), weights=w)
        assert np.all(curve.residuals < 1e-8)
        assert np.all(np.diff(curve.maturities) > 0)

    def test_bracket_failure_reports_endpoints(self):
        # eq/ep ratio implies delta far above the bracket ceiling
        spec = _spec(threshold=math.inf, maturity=1)
        rates = np.full((1, 1), 1.6)
        with pytest.raises(SolverError, match=r"h\(-0\.5\).*h\(1\.0\)"):
            premium_curve(rates, np.zeros((1, 1)), spec, [1])

    def test_bad_maturities_rejected(self):
        spec = _spec()
        with pytest.raises(DataError, match="maturities"):
            premium_curve(np.zeros((2, 2)), np.zeros((2, 2)), spec, [])
        with pytest.raises(DataError, match="maturities"):
            premium_curve(np.zeros((2, 2)), np.zeros((2, 2)), spec, [0, 1])

    def test_horizon_exceeding_paths_rejected(self):
        spec = _spec()
        with pytest.raises(DataError, match="curve needs"):
            premium_curve(np.zeros((2, 2)), np.zeros((2, 2)), spec, [3])


class TestProperties:
    @given(
        st.floats(min_value=1.0, max_value=1e4),
        st.floats(min_value=0.0, max_value=0.99),
        st.floats(min_value=1.0, max_value=1e4),
        st.floats(min_value=0.0, max_value=2e4),
    )
    @settings(max_examples=100, deadline=None)
    def test_payoff_is_face_or_recovery(self, face, recovery, threshold, loss):
        spec = BondSpec(face=face, recovery=recovery, threshold=threshold, maturity=1)
        out = payoff(loss, spec)
        assert out in (face, recovery * face) or out == pytest.approx(
            recovery * face
        )

    @given(st.integers(min_value=0, max_value=2**31 - 1))
    @settings(max_examples=20, deadline=None)
    def test_price_between_recovery_and_face_pv_bounds(self, seed):
        rng = np.random.default_rng(seed)
        n = 50
        rates = rng.uniform(0.0, 0.05, size=(n, 2))
        losses = rng.gamma(2.0, 400.0, size=n)
        spec = _spec(recovery=0.35)
        dist, p = price(rates, losses, spec)
        disc = np.exp(-rates.sum(axis=1))
        lo = 0.35 * 100.0 * disc.min()
        hi = 100.0 * disc.max()
        assert lo - 1e-9 <= p <= hi + 1e-9
        assert np.all(dist.weights >= 0)
