"""Release gate: twelve end-to-end checks, one test per guarantee.

Run with ``pytest -v tests/test_acceptance.py`` to get a one-line verdict
per check.  Every test is self-contained: oracles are either closed-form,
exact enumerations, or independent root-finds, never a re-run of the code
under test.  The two recovery studies (tests 04 and 06) fit the full
samplers across many seeds and take several minutes each; everything else
finishes in seconds.
"""

import math
import time

import numpy as np
import pytest
from scipy.optimize import brentq
from scipy.special import gammaincc

from catbond import cir, crm, diagnostics, entropy, pricing
from catbond.harness import from_dict, run_pipeline, run_stage

# ---------------------------------------------------------------------------
# shared helpers


def tiled_posterior(n_rep, perils, lam, kappa, theta):
    """Posterior stub repeating one parameter draw, for predictive checks.

    lam is the per-quarter intensity with the slope at zero, so the
    intercept is log(lam).
    """
    shape = (1, n_rep, len(perils))
    return crm.CrmPosterior(
        perils=tuple(perils),
        kappa=np.broadcast_to(np.asarray(kappa, float), shape),
        theta=np.broadcast_to(np.asarray(theta, float), shape),
        alpha=np.broadcast_to(np.log(np.asarray(lam, float)), shape),
        beta=np.zeros((1, n_rep)),
        sev_labels=np.zeros(shape, np.int16),
        count_labels=np.zeros(shape, np.int16),
        sev_weights=np.broadcast_to(0.5, (1, n_rep, 2)),
        count_weights=np.broadcast_to(0.5, (1, n_rep, 2)),
        hypers=np.broadcast_to(1.0, (1, n_rep, 6)),
        seed=0, n_iter=1, burn_in=0, thin=1,
    )


def adjusted_rand(a, b):
    a, b = np.asarray(a), np.asarray(b)
    cont = np.array([[np.sum((a == x) & (b == y)) for y in np.unique(b)]
                     for x in np.unique(a)], dtype=float)

    def pairs(v):
        return np.sum(v * (v - 1) / 2.0)

    sum_ij = pairs(cont)
    sum_a, sum_b = pairs(cont.sum(axis=1)), pairs(cont.sum(axis=0))
    expected = sum_a * sum_b / pairs(np.array([len(a)]))
    max_idx = 0.5 * (sum_a + sum_b)
    if max_idx == expected:
        return 1.0
    return (sum_ij - expected) / (max_idx - expected)


def random_tilt_cases(n_cases):
    """Deterministic battery of payoff vectors with interior targets."""
    rng = np.random.default_rng(2)
    cases = []
    for _ in range(n_cases):
        m = int(rng.integers(3, 31))
        alpha = rng.uniform(0.5, 50.0, m)
        u = float(rng.uniform(0.1, 0.9))
        cases.append((alpha, alpha.min() + u * (alpha.max() - alpha.min())))
    return cases


def tilt_oracle(alpha, p0):
    """Independent solve of the tilt equation by bracketed root-finding."""

    def gap(lam):
        expo = lam * alpha
        expo = expo - expo.max()
        w = np.exp(expo)
        return float(np.dot(w, alpha - p0) / w.sum())

    lo, hi = -1.0, 1.0
    while gap(lo) > 0.0:
        lo *= 2.0
    while gap(hi) < 0.0:
        hi *= 2.0
    lam = brentq(gap, lo, hi, xtol=1e-14)
    expo = lam * alpha
    expo = expo - expo.max()
    w = np.exp(expo)
    return lam, w / w.sum()


# ---------------------------------------------------------------------------
# 01 -- seasonal count intensity at the published operating point


def test_01_seasonal_count_intensity():
    levels = {1: 10_168.0, 2: 10_813.0, 3: 11_499.0, 4: 12_229.0}
    intercept, slope = 9.165, 0.0615
    for season, level in levels.items():
        assert math.exp(intercept + slope * season) == pytest.approx(level, rel=2e-3)
        lam = crm._horizon_intensity(
            np.array([intercept]), np.array([slope]), (season - 1, season)
        )
        assert lam[0] == pytest.approx(level, rel=2e-3)


# ---------------------------------------------------------------------------
# 02 -- exponential tilt: closed form and an independent solver oracle


def test_02_tilt_closed_form_and_solver_oracle():
    res = entropy.calibrate(np.array([1.0, 2.0]), 1.25)
    assert res.lam == pytest.approx(-math.log(3.0), abs=1e-10)
    np.testing.assert_allclose(res.weights, [0.75, 0.25], rtol=0.0, atol=1e-10)

    for alpha, p0 in random_tilt_cases(20):
        lam_star, w_star = tilt_oracle(alpha, p0)
        res = entropy.calibrate(alpha, p0)
        assert abs(res.lam - lam_star) <= 1e-6 * max(1.0, abs(lam_star))
        assert np.max(np.abs(res.weights - w_star)) <= 1e-6


# ---------------------------------------------------------------------------
# 03 -- repricing constraint satisfied to 1e-8 on every calibration


def test_03_repricing_residual_bound():
    cases = [(np.array([1.0, 2.0]), 1.25)] + random_tilt_cases(20)
    for alpha, p0 in cases:
        res = entropy.calibrate(alpha, p0)
        achieved = float(np.dot(res.weights, alpha))
        assert abs(achieved - p0) < 1e-8 * max(1.0, abs(p0))
        assert res.constraint_residual < 1e-8


# ---------------------------------------------------------------------------
# 04 -- planted severity clusters recovered across twenty data seeds


CLUSTER_TRUTH = np.array([0, 0, 0, 0, 0, 1, 1, 1, 1])


def planted_panel(seed):
    """Nine perils, 52 quarters, two planted severity regimes."""
    rng = np.random.default_rng(20_000 + seed)
    quarters = [(2008 + t // 4, t % 4 + 1) for t in range(52)]
    seasons = np.array([q for _, q in quarters], dtype=float)
    sev = [(3.0, 2.0)] * 5 + [(8.0, 40.0)] * 4
    intercepts = [2.3] * 5 + [1.8] * 4
    counts = np.zeros((9, 52), dtype=int)
    losses = np.zeros((9, 52))
    for i in range(9):
        counts[i] = rng.poisson(np.exp(intercepts[i] + 0.0615 * seasons))
        kappa, theta = sev[i]
        pos = counts[i] > 0
        losses[i, pos] = theta / rng.gamma(counts[i, pos] * kappa)
    return crm.QuarterlyPanel(
        tuple(f"P{i}" for i in range(9)), quarters, counts, losses
    )


def test_04_severity_cluster_recovery():
    wins = 0
    for seed in range(20):
        start = time.perf_counter()
        post = crm.fit(
            planted_panel(seed),
            mcmc={"n_iter": 40_000, "burn_in": 10_000, "seed": seed},
        )
        assert time.perf_counter() - start < 600.0
        modal = crm.cluster_summary(post).modal
        wins += adjusted_rand(modal, CLUSTER_TRUTH) == 1.0
    assert wins >= 16


# ---------------------------------------------------------------------------
# 05 -- simulated exceedance probability against an analytic series


def test_05_threshold_probability_matches_series():
    post = tiled_posterior(1, ("X",), [1.0], [2.0], [3.0])
    est = crm.threshold_probability(
        post, "X", 10.0, (0, 1), n_sims=1_000_000, seed=11
    )
    # With one quarter at intensity 1 and per-quarter aggregates that are
    # inverse-gamma with shape 2k given k events and scale 3, the chance the
    # aggregate stays under 10 is an explicit Poisson mixture.
    series = math.exp(-1.0) * (
        1.0
        + sum(gammaincc(2.0 * k, 0.3) / math.factorial(k) for k in range(1, 51))
    )
    assert abs(est.estimate - series) <= 3.0 * est.mc_se


# ---------------------------------------------------------------------------
# 06 -- short-rate recovery across forty simulated panels


def test_06_short_rate_recovery():
    true = cir.CirParams(3.0299, 3.2694, 0.00171)
    weak = cir.CirHyper(upsilon0=2.1, beta0=0.003, precision0=0.01)
    week = 7.0 / 365.25
    n_obs = 12 * 52
    substeps = 21
    hits = 0
    for seed in range(40):
        start = time.perf_counter()
        rng = np.random.default_rng(10_000 + seed)
        fine = cir.simulate(true, 0.93, n_obs * substeps, week / substeps, rng)[0]
        obs = fine[::substeps][: n_obs + 1]
        series = cir.RateSeries(np.arange(obs.size) * week, obs)
        post = cir.gibbs_fit(
            series, m=20, hyper=weak, n_iter=15_000, burn_in=5_000, seed=seed
        )
        assert time.perf_counter() - start < 900.0
        lo, hi = diagnostics.hpd(post.sigma2, 0.95)
        covered = lo <= true.sigma2 <= hi
        level_err = abs(float((post.alpha / post.beta).mean()) - true.long_run_rate)
        hits += covered and (level_err / true.long_run_rate < 0.15)
        if seed == 0:
            for name in ("alpha", "beta", "sigma2"):
                assert abs(diagnostics.geweke(getattr(post, name))) < 2.0
    assert hits >= 34


# ---------------------------------------------------------------------------
# 07 -- single-site conditionals reproduce their conjugate targets


def test_07_conditional_sampler_moments():
    n = 100_000

    # Drift block: path [1, 2, 1.5] at spacing 0.5 with sigma2 = 0.005 and
    # the default prior has a bivariate normal conditional with precision
    # [[160, -200], [-200, 310]] (determinant 9600) and mean (26500, 14000)/9600.
    rng = np.random.default_rng(42)
    psi = np.array(
        [
            cir._draw_psi((1.5, 3.0, 0.75, -0.5), 2, 0.005, 0.5, cir.CirHyper(), rng)
            for _ in range(n)
        ]
    )
    target_mean = np.array([26_500.0, 14_000.0]) / 9_600.0
    target_sd = np.sqrt(np.array([310.0, 160.0]) / 9_600.0)
    se = target_sd / math.sqrt(n)
    assert np.all(np.abs(psi.mean(axis=0) - target_mean) < 3.0 * se)

    # Variance block on the same path with (alpha, beta) = (2, 1): the
    # conditional is inverse-gamma(3.1, 3.375), and its reciprocal is
    # gamma(3.1) with rate 3.375.
    rng = np.random.default_rng(7)
    flat = np.array([1.0, 2.0, 1.5])
    s2 = np.array(
        [cir._draw_sigma2(flat, 2.0, 1.0, 0.5, cir.CirHyper(), rng) for _ in range(n)]
    )
    ig_mean = 3.375 / 2.1
    ig_sd = math.sqrt(3.375**2 / (2.1**2 * 1.1))
    assert abs(s2.mean() - ig_mean) < 3.0 * ig_sd / math.sqrt(n)
    rec_mean = 3.1 / 3.375
    rec_sd = math.sqrt(3.1) / 3.375
    assert abs((1.0 / s2).mean() - rec_mean) < 3.0 * rec_sd / math.sqrt(n)


# ---------------------------------------------------------------------------
# 08 -- price is monotone in attachment and recovery, exact in the limit


def test_08_price_monotonicity_and_exact_face():
    rng = np.random.default_rng(8)
    losses = rng.lognormal(3.0, 1.5, 500)
    rates = 0.02 + rng.normal(0.0, 0.002, (500, 3))
    thresholds = np.quantile(losses, np.linspace(0.05, 0.95, 10))
    recoveries = np.linspace(0.0, 0.9, 10)
    grid = np.empty((10, 10))
    for i, d in enumerate(thresholds):
        for j, a in enumerate(recoveries):
            spec = pricing.BondSpec(
                face=50.0, recovery=float(a), threshold=float(d), maturity=3
            )
            grid[i, j] = pricing.price(rates, losses, spec)[1]
    assert np.all(np.diff(grid, axis=0) >= 0.0)
    assert np.all(np.diff(grid, axis=1) >= 0.0)
    assert np.all(grid[0, :] < grid[-1, :])
    assert np.all(grid[:, 0] < grid[:, -1])

    # An unreachable attachment point under a zero curve pays face with
    # certainty, and the price must equal face exactly, not approximately.
    far = pricing.BondSpec(face=50.0, recovery=0.5, threshold=1e18, maturity=3)
    assert pricing.price(np.zeros((500, 3)), losses, far)[1] == 50.0


# ---------------------------------------------------------------------------
# 09 -- degenerate premium curve recovers the flat discount rate


def test_09_flat_curve_premium_recovers_rate():
    r = 0.0137
    rates = np.full((1, 10), r)
    cum_losses = np.zeros((1, 10))
    spec = pricing.BondSpec(face=50.0, recovery=0.4, threshold=100.0, maturity=10)
    curve = pricing.premium_curve(rates, cum_losses, spec, np.arange(1, 11))
    np.testing.assert_allclose(curve.deltas, r, rtol=0.0, atol=1e-8)
    assert np.max(np.abs(curve.residuals)) < 1e-8


# ---------------------------------------------------------------------------
# 10 -- premium term structure under exactly enumerated trigger laws


def test_10_premium_term_structure_orderings():
    # Enumerate every trigger path over eight periods for a hazard of 1/4:
    # 3^(t-1) * 4^(8-t) scenarios trigger first at period t and 3^8 survive,
    # so uniform physical weights make the trigger time exactly geometric.
    horizon = 8
    p_hazard = 0.25
    block_sizes = [3 ** (t - 1) * 4 ** (horizon - t) for t in range(1, horizon + 1)]
    survivors = 3**horizon
    trig = np.concatenate(
        [np.full(c, t) for t, c in zip(range(1, horizon + 1), block_sizes)]
        + [np.zeros(survivors, dtype=int)]
    )
    n = trig.size
    assert n == 4**horizon
    periods = np.arange(1, horizon + 1)
    cum = np.where(
        (trig[:, None] > 0) & (periods[None, :] >= trig[:, None]), 101.0, 0.0
    )
    rates = np.full((n, horizon), 0.02)
    spec = pricing.BondSpec(
        face=50.0, recovery=0.0, threshold=100.0, maturity=horizon
    )
    maturities = np.arange(1, horizon + 1)

    # A geometric risk-neutral law with hazard q against physical hazard p
    # gives the flat premium r + log((1-p)/(1-q)) at every maturity, and a
    # larger q gives a strictly larger premium at every maturity.
    curves = {}
    for q in (0.30, 0.40, 0.50):
        w = np.empty(n)
        for t, c in zip(range(1, horizon + 1), block_sizes):
            w[trig == t] = q * (1.0 - q) ** (t - 1) / c
        w[trig == 0] = (1.0 - q) ** horizon / survivors
        assert w.sum() == pytest.approx(1.0, abs=1e-12)
        curve = pricing.premium_curve(rates, cum, spec, maturities, weights=w)
        flat = 0.02 + math.log((1.0 - p_hazard) / (1.0 - q))
        np.testing.assert_allclose(curve.deltas, flat, rtol=0.0, atol=1e-7)
        curves[q] = curve.deltas
    for t_idx in range(horizon):
        assert curves[0.30][t_idx] < curves[0.40][t_idx] < curves[0.50][t_idx]

    # A rising risk-neutral hazard bends the curve upward: the premium is
    # r + log(1-p) - (1/T) sum_{u<=T} log(1-q_u), strictly increasing in T.
    hazards = 0.2 + 0.04 * np.arange(horizon)
    surv_prob = np.concatenate([[1.0], np.cumprod(1.0 - hazards)])
    w = np.empty(n)
    for t, c in zip(range(1, horizon + 1), block_sizes):
        w[trig == t] = surv_prob[t - 1] * hazards[t - 1] / c
    w[trig == 0] = surv_prob[horizon] / survivors
    assert w.sum() == pytest.approx(1.0, abs=1e-12)
    rising = pricing.premium_curve(rates, cum, spec, maturities, weights=w).deltas
    expected = (
        0.02 + math.log(1.0 - p_hazard)
        - np.cumsum(np.log(1.0 - hazards)) / maturities
    )
    np.testing.assert_allclose(rising, expected, rtol=0.0, atol=1e-7)
    assert np.all(np.diff(rising) > 0.0)


# ---------------------------------------------------------------------------
# 11 -- convergence diagnostics separate agreement from disagreement


def test_11_convergence_diagnostics_discriminate():
    x = np.random.default_rng(0).standard_normal(2000)
    same = diagnostics.bgr(
        [diagnostics.Chain(x), diagnostics.Chain(x.copy(), chain_id=1)]
    )
    assert same.converged
    assert same.rhat == pytest.approx(1.0, abs=0.01)

    apart = diagnostics.bgr(
        [diagnostics.Chain(x), diagnostics.Chain(x + 10.0, chain_id=1)]
    )
    assert not apart.converged
    assert apart.rhat > 5.0

    z = np.array(
        [
            diagnostics.geweke(np.random.default_rng(s).standard_normal(2000))
            for s in range(200)
        ]
    )
    assert np.sum(np.abs(z) < 3.0) >= 198


# ---------------------------------------------------------------------------
# 12 -- identical config and seed reproduce every artifact byte for byte


def test_12_pipeline_rerun_byte_identical(tmp_path):
    raw = {
        "events_csv": str(tmp_path / "data" / "events.csv"),
        "rates_csv": str(tmp_path / "data" / "rates.csv"),
        "perils": ["hurricane", "quake", "flood"],
        "date_range": ["2008-01-01", "2020-12-31"],
        "seed": 7,
        "out_dir": str(tmp_path / "out"),
        "bond": {
            "face": 50.0,
            "recovery": 0.5,
            "threshold_millions": 200.0,
            "maturity_periods": 3,
            "period_years": 1.0,
        },
        "maturities": [1, 2, 3, 4, 5],
        "n_scenarios": 400,
        "crm": {"mcmc": {"n_iter": 3000, "burn_in": 1000, "thin": 4, "n_chains": 2}},
        "cir": {"m": 5, "mcmc": {"n_iter": 3000, "burn_in": 1000, "thin": 5}},
        "synthetic": {
            "perils": ["hurricane", "quake", "flood"],
            "kappa": [3.0, 3.0, 8.0],
            "theta": [20.0, 20.0, 300.0],
            "alpha": [2.3, 2.3, 1.8],
            "beta": 0.0615,
            "n_quarters": 52,
            "n_rate_obs": 626,
            "seed": 7,
        },
    }
    config = from_dict(raw)
    run_stage(config, "simulate")
    run_pipeline(config)

    out = tmp_path / "out"
    files = sorted(p for p in out.iterdir() if p.is_file())
    assert {
        "posterior_crm.csv",
        "posterior_cir.csv",
        "price_distribution.csv",
        "premium_curve.csv",
        "diagnostics.json",
        "run_manifest.json",
    } <= {p.name for p in files}
    snapshot = {p.name: p.read_bytes() for p in files}

    run_pipeline(config)
    for p in sorted(q for q in out.iterdir() if q.is_file()):
        assert p.read_bytes() == snapshot[p.name], f"{p.name} changed on rerun"
