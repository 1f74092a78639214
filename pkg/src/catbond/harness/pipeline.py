"""Pipeline stages over a shared on-disk interface.

Every stage is a pure function of the run configuration and the files
already sitting in the output directory: posterior samplers write CSVs,
downstream stages read those CSVs back rather than passing arrays in
memory.  Running stages one at a time therefore produces byte-identical
artifacts to the composed run, and any stage can be rerun in isolation.

Scenario Monte Carlo is regenerated deterministically from the stored
posteriors wherever it is needed, using fixed sub-streams of the run
seed, so the pricing, premium and diagnostic stages always agree on the
same scenario set without an intermediate scenario file.

No output embeds a timestamp, host name or duration: two runs with the
same configuration and seed produce identical files.
"""

from __future__ import annotations

import csv
import json
import os
import platform

import numpy as np
import scipy

from .. import __version__ as _PACKAGE_VERSION
from .. import cir, crm, diagnostics, distfit, entropy, pricing
from ..errors import CatbondError, ConfigError, DataError
from .config import RunConfig
from .ingest import ingest_events, ingest_rates
from .synthetic import SyntheticSpec, generate_synthetic

_FMT = ".12g"
_STEPS_PER_PERIOD = 12
_RATE_SALT = 101
_LOSS_SALT = 202

POSTERIOR_CRM_CSV = "posterior_crm.csv"
POSTERIOR_CIR_CSV = "posterior_cir.csv"
CLUSTER_OCCUPANCY_CSV = "cluster_occupancy.csv"
PRICE_DISTRIBUTION_CSV = "price_distribution.csv"
PREMIUM_CURVE_CSV = "premium_curve.csv"
DIAGNOSTICS_JSON = "diagnostics.json"
MANIFEST_JSON = "run_manifest.json"
DISTFIT_CSV = "distfit.csv"
TRUTH_JSON = "synthetic_truth.json"


def _fmt(value):
    return format(float(value), _FMT)


def _out_path(config, name):
    os.makedirs(config.out_dir, exist_ok=True)
    return os.path.join(config.out_dir, name)


def _write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")


def _read_csv(path, expected_first=None):
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except FileNotFoundError:
        raise DataError(
            f"missing pipeline artifact: {path}; run the producing stage first"
        ) from None
    if not rows:
        raise DataError(f"{path}: file is empty")
    header = rows[0]
    if expected_first and header[: len(expected_first)] != list(expected_first):
        raise DataError(
            f"{path}: unexpected header, starts with {header[:len(expected_first)]}"
        )
    return header, rows[1:]


def _jsonable(value):
    """Recursively coerce numpy scalars and arrays for json.dump."""
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.floating, float)):
        return float(value)
    if isinstance(value, (np.integer, int)):
        return int(value)
    return value


# ---------------------------------------------------------------------------
# posterior CSV round-trip


def write_crm_posterior(path, posterior):
    perils = posterior.perils
    header = ["chain", "draw", "beta", *crm.CrmPosterior.HYPER_NAMES]
    for p in perils:
        header += [f"kappa_{p}", f"theta_{p}", f"alpha_{p}",
                   f"sev_label_{p}", f"count_label_{p}"]

    def rows():
        n_chains, n_draws = posterior.beta.shape
        for c in range(n_chains):
            for d in range(n_draws):
                row = [str(c), str(d), _fmt(posterior.beta[c, d])]
                row += [_fmt(v) for v in posterior.hypers[c, d]]
                for i in range(len(perils)):
                    row += [
                        _fmt(posterior.kappa[c, d, i]),
                        _fmt(posterior.theta[c, d, i]),
                        _fmt(posterior.alpha[c, d, i]),
                        str(int(posterior.sev_labels[c, d, i])),
                        str(int(posterior.count_labels[c, d, i])),
                    ]
                yield row

    _write_csv(path, header, rows())


def read_crm_posterior(path):
    """Load a stored panel posterior into plain arrays.

    Returns a dict with perils, per-draw chain ids, pooled parameter
    arrays (draw, peril) and the hyperparameter block (draw, 6).
    """
    header, rows = _read_csv(
        path, ("chain", "draw", "beta", *crm.CrmPosterior.HYPER_NAMES)
    )
    fixed = 3 + len(crm.CrmPosterior.HYPER_NAMES)
    tail = header[fixed:]
    if len(tail) % 5 != 0 or not tail:
        raise DataError(f"{path}: malformed per-peril columns")
    perils = tuple(
        col[len("kappa_"):] for col in tail[::5]
    )
    for j, p in enumerate(perils):
        expect = [f"kappa_{p}", f"theta_{p}", f"alpha_{p}",
                  f"sev_label_{p}", f"count_label_{p}"]
        if tail[5 * j: 5 * j + 5] != expect:
            raise DataError(f"{path}: malformed columns for peril '{p}'")
    data = np.asarray(rows, dtype=float)
    if data.ndim != 2 or data.shape[1] != len(header):
        raise DataError(f"{path}: ragged rows")
    block = data[:, fixed:].reshape(len(data), len(perils), 5)
    return {
        "perils": perils,
        "chain": data[:, 0].astype(int),
        "draw": data[:, 1].astype(int),
        "beta": data[:, 2],
        "hypers": data[:, 3:fixed],
        "kappa": block[:, :, 0],
        "theta": block[:, :, 1],
        "alpha": block[:, :, 2],
        "sev_labels": block[:, :, 3].astype(int),
        "count_labels": block[:, :, 4].astype(int),
    }


def write_cir_posterior(path, posterior):
    rows = (
        [str(d), _fmt(a), _fmt(b), _fmt(s2)]
        for d, (a, b, s2) in enumerate(posterior.draws)
    )
    _write_csv(path, ["draw", "alpha", "beta", "sigma2"], rows)


def read_cir_posterior(path):
    """Load stored short-rate draws as an (n, 3) array."""
    _, rows = _read_csv(path, ("draw", "alpha", "beta", "sigma2"))
    data = np.asarray(rows, dtype=float)
    if data.ndim != 2 or data.shape[1] != 4 or not len(data):
        raise DataError(f"{path}: malformed draw table")
    return data[:, 1:]


def write_cluster_occupancy(path, summary):
    h = summary.occupancy.shape[1]
    header = ["peril", *[f"cluster_{k}" for k in range(h)], "modal_cluster"]
    rows = (
        [p, *[_fmt(v) for v in summary.occupancy[i]], str(int(summary.modal[i]))]
        for i, p in enumerate(summary.perils)
    )
    _write_csv(path, header, rows)


def read_cluster_occupancy(path):
    header, rows = _read_csv(path, ("peril",))
    perils = tuple(r[0] for r in rows)
    occ = np.asarray([r[1:-1] for r in rows], dtype=float)
    modal = np.asarray([int(r[-1]) for r in rows])
    return {"perils": perils, "occupancy": occ, "modal": modal}


def read_price_distribution(path):
    header, rows = _read_csv(path, ("scenario",))
    data = np.asarray(rows, dtype=float)
    return {name: data[:, j] for j, name in enumerate(header)}


def read_premium_curve(path):
    header, rows = _read_csv(path, ("maturity_periods",))
    data = np.asarray(rows, dtype=float)
    return {name: data[:, j] for j, name in enumerate(header)}


# ---------------------------------------------------------------------------
# deterministic scenario regeneration


def baseline_price(losses_at_maturity, spec, delta0_bps):
    """Average maturity payoff discounted at one flat continuously
    compounded rate; the calibration target for the scenario reweighting."""
    pay = pricing.payoff(np.asarray(losses_at_maturity, dtype=float), spec)
    t_years = spec.maturity * spec.period_years
    return float(np.exp(-delta0_bps / 1e4 * t_years) * pay.mean())


def _bond_spec(config):
    return pricing.BondSpec(
        face=config.face,
        recovery=config.recovery,
        threshold=config.threshold_millions,
        maturity=config.maturity_periods,
        period_years=config.period_years,
    )


def build_scenarios(config):
    """Regenerate the scenario set from stored posteriors.

    Returns (period_rates, cumulative_losses), both (n_scenarios,
    horizon) where the horizon covers the longest requested maturity.
    Period t uses the time-integral of a monthly-step short-rate path,
    and losses aggregate quarterly panel simulations per posterior draw.
    """
    crm_post = read_crm_posterior(os.path.join(config.out_dir, POSTERIOR_CRM_CSV))
    cir_draws = read_cir_posterior(os.path.join(config.out_dir, POSTERIOR_CIR_CSV))
    if tuple(crm_post["perils"]) != tuple(config.perils):
        raise DataError(
            "stored posterior perils do not match the configuration: "
            f"{crm_post['perils']} vs {config.perils}"
        )
    n_sc = config.n_scenarios
    n_crm = crm_post["beta"].size
    n_cir = cir_draws.shape[0]
    if n_sc > n_crm or n_sc > n_cir:
        raise ConfigError(
            f"n_scenarios {n_sc} exceeds retained posterior draws "
            f"(panel {n_crm}, short rate {n_cir}); lower n_scenarios or thin less"
        )

    series = ingest_rates(config.rates_csv)
    r0_percent = float(series.rates[-1]) * 100.0
    horizon = max(config.maturities[-1], config.maturity_periods)

    rate_rng = np.random.default_rng(
        np.random.SeedSequence([config.seed, _RATE_SALT])
    )
    stub = cir.CirPosterior(
        draws=cir_draws, m=0, delta=0.0, delta_t=0.0,
        n_iter=0, burn_in=0, seed=None,
    )
    step_years = config.period_years / _STEPS_PER_PERIOD
    paths_percent = cir.forecast(
        stub, r0_percent, horizon * _STEPS_PER_PERIOD, step_years,
        rng=rate_rng, max_draws=n_sc,
    )
    left_rates = paths_percent[:, :-1] / 100.0
    period_rates = (
        left_rates.reshape(n_sc, horizon, _STEPS_PER_PERIOD).sum(axis=2)
        * step_years
    )

    pick = (
        np.linspace(0, n_crm - 1, n_sc).astype(int) if n_crm > n_sc
        else np.arange(n_sc)
    )
    alpha = crm_post["alpha"][pick]
    beta = crm_post["beta"][pick]
    kappa = crm_post["kappa"][pick]
    theta = crm_post["theta"][pick]

    quarters_per_period = int(round(4.0 * config.period_years))
    n_quarters = horizon * quarters_per_period
    seasons = np.arange(n_quarters, dtype=float) % 4 + 1

    loss_rng = np.random.default_rng(
        np.random.SeedSequence([config.seed, _LOSS_SALT])
    )
    lam = np.exp(
        np.minimum(alpha[:, :, None] + beta[:, None, None] * seasons, 600.0)
    )
    counts = loss_rng.poisson(lam)
    quarter_losses = np.zeros(counts.shape)
    hit = counts > 0
    if np.any(hit):
        shape = counts[hit] * np.broadcast_to(kappa[:, :, None], counts.shape)[hit]
        scale = np.broadcast_to(theta[:, :, None], counts.shape)[hit]
        quarter_losses[hit] = scale / loss_rng.gamma(shape)
    cumulative = np.cumsum(quarter_losses.sum(axis=1), axis=1)
    cumulative_losses = cumulative[:, quarters_per_period - 1::quarters_per_period]
    return period_rates, cumulative_losses


def _calibrated_weights(config, period_rates, cumulative_losses):
    """Baseline price, discounted scenario payoffs and the calibrated
    risk-neutral weights for the configured bond."""
    spec = _bond_spec(config)
    loss_t = cumulative_losses[:, spec.maturity - 1]
    pay = pricing.payoff(loss_t, spec)
    p0 = baseline_price(loss_t, spec, config.delta0_bps)
    payoff_paths = np.zeros((pay.size, spec.maturity))
    payoff_paths[:, -1] = pay
    discounted = entropy.discounted_payoffs(
        period_rates[:, : spec.maturity], payoff_paths
    )
    calibrated = entropy.calibrate(entropy.ScenarioSet(alpha=discounted), p0)
    return spec, loss_t, pay, p0, discounted, calibrated


# ---------------------------------------------------------------------------
# stages


def stage_distfit(config):
    """Rank severity candidates on the raw event losses."""
    events = ingest_events(config.events_csv)
    losses = np.asarray([e.loss for e in events])
    reports = distfit.rank_models(losses, seed=config.seed)
    path = _out_path(config, DISTFIT_CSV)
    header = [
        "family", "param1", "param2", "log_likelihood", "aic", "bic",
        "ks_stat", "ks_pvalue", "ad_stat", "ad_pvalue", "converged",
    ]
    rows = (
        [
            r.family.value, _fmt(r.mle_params[0]), _fmt(r.mle_params[1]),
            _fmt(r.log_likelihood), _fmt(r.aic), _fmt(r.bic),
            _fmt(r.ks_stat), _fmt(r.ks_pvalue), _fmt(r.ad_stat),
            _fmt(r.ad_pvalue), str(int(r.converged)),
        ]
        for r in reports
    )
    _write_csv(path, header, rows)
    return {
        "outputs": [DISTFIT_CSV],
        "n_events": int(losses.size),
        "best_family": reports[0].family.value,
    }


def stage_simulate(config):
    """Generate synthetic inputs at the configured data paths.

    The synthetic section may pin its own seed; otherwise the run seed
    (including a --seed override) drives the generator.
    """
    if config.synthetic is None:
        raise ConfigError("config: 'synthetic' section is required to simulate")
    section = dict(config.synthetic)
    section.setdefault("seed", config.seed)
    spec = SyntheticSpec.from_dict(section)
    truth_path = _out_path(config, TRUTH_JSON)
    for target in (config.events_csv, config.rates_csv):
        parent = os.path.dirname(target)
        if parent:
            os.makedirs(parent, exist_ok=True)
    generate_synthetic(spec, config.events_csv, config.rates_csv, truth_path)
    with open(truth_path, encoding="utf-8") as fh:
        truth = json.load(fh)
    return {
        "outputs": [config.events_csv, config.rates_csv, TRUTH_JSON],
        "n_events": truth["n_events"],
        "n_rate_obs": spec.n_rate_obs,
    }


def stage_fit_crm(config):
    """Fit the panel model and store draws plus cluster occupancy."""
    events = ingest_events(config.events_csv)
    panel = crm.build_panel(
        events, config.perils, (config.date_start, config.date_end)
    )
    mcmc = dict(config.crm_mcmc)
    mcmc["seed"] = config.seed
    posterior = crm.fit(
        panel, hyper=config.crm_hyper, mcmc=mcmc, threads=config.threads
    )
    write_crm_posterior(_out_path(config, POSTERIOR_CRM_CSV), posterior)
    write_cluster_occupancy(
        _out_path(config, CLUSTER_OCCUPANCY_CSV), crm.cluster_summary(posterior)
    )
    return {
        "outputs": [POSTERIOR_CRM_CSV, CLUSTER_OCCUPANCY_CSV],
        "n_chains": posterior.n_chains,
        "n_draws_per_chain": int(posterior.beta.shape[1]),
        "acceptance": _jsonable(posterior.acceptance),
        "warnings": list(posterior.warnings),
    }


def stage_fit_cir(config):
    """Fit the short-rate model on the percent scale and store draws."""
    series = ingest_rates(config.rates_csv)
    percent_series = cir.RateSeries(
        times=series.times, rates=series.rates * 100.0
    )
    posterior = cir.gibbs_fit(
        percent_series,
        m=config.cir_m,
        hyper=config.cir_hyper,
        n_iter=config.cir_mcmc["n_iter"],
        burn_in=config.cir_mcmc["burn_in"],
        thin=config.cir_mcmc["thin"],
        seed=config.seed,
    )
    write_cir_posterior(_out_path(config, POSTERIOR_CIR_CSV), posterior)
    fragment = {
        "outputs": [POSTERIOR_CIR_CSV],
        "n_draws": int(posterior.draws.shape[0]),
        "mean": _jsonable(dict(zip(("alpha", "beta", "sigma2"),
                                   posterior.draws.mean(axis=0)))),
    }
    if not np.isnan(posterior.latent_acceptance):
        fragment["latent_acceptance"] = float(posterior.latent_acceptance)
    return fragment


def stage_price(config):
    """Calibrate scenario weights and store the price distribution."""
    period_rates, cumulative_losses = build_scenarios(config)
    spec, loss_t, pay, p0, discounted, calibrated = _calibrated_weights(
        config, period_rates, cumulative_losses
    )
    dist, bond_price = pricing.price(
        period_rates, loss_t, spec, weights=calibrated.weights
    )
    disc = np.exp(-period_rates[:, : spec.maturity].sum(axis=1))
    n = loss_t.size
    header = [
        "scenario", "loss_at_maturity", "payoff", "discount_factor",
        "present_value", "physical_weight", "risk_neutral_weight",
    ]
    rows = (
        [
            str(k), _fmt(loss_t[k]), _fmt(pay[k]), _fmt(disc[k]),
            _fmt(discounted[k]), _fmt(1.0 / n), _fmt(calibrated.weights[k]),
        ]
        for k in range(n)
    )
    _write_csv(_out_path(config, PRICE_DISTRIBUTION_CSV), header, rows)
    return {
        "outputs": [PRICE_DISTRIBUTION_CSV],
        "n_scenarios": int(n),
        "baseline_price": p0,
        "price": float(bond_price),
        "lambda": float(calibrated.lam),
        "constraint_residual": float(calibrated.constraint_residual),
    }


def stage_premium(config):
    """Solve the constant premium spread across the maturity ladder."""
    period_rates, cumulative_losses = build_scenarios(config)
    _, _, _, _, _, calibrated = _calibrated_weights(
        config, period_rates, cumulative_losses
    )
    spec = _bond_spec(config)
    curve = pricing.premium_curve(
        period_rates,
        cumulative_losses,
        spec,
        config.maturities,
        weights=calibrated.weights,
    )
    header = [
        "maturity_periods", "maturity_years", "delta", "residual",
        "q_price", "p_expected_payoff",
    ]
    rows = (
        [
            str(int(m)), _fmt(m * config.period_years), _fmt(curve.deltas[j]),
            _fmt(curve.residuals[j]), _fmt(curve.q_prices[j]),
            _fmt(curve.p_payoffs[j]),
        ]
        for j, m in enumerate(curve.maturities)
    )
    _write_csv(_out_path(config, PREMIUM_CURVE_CSV), header, rows)
    return {
        "outputs": [PREMIUM_CURVE_CSV],
        "max_abs_residual": float(np.max(np.abs(curve.residuals))),
    }


def _summary_dict(values, hpd_mass=0.95):
    summary = diagnostics.summarize_chain(
        diagnostics.Chain(draws=np.asarray(values)), hpd_mass=hpd_mass
    )
    return {
        "mean": summary.mean,
        "sd": summary.sd,
        "hpd_lo": summary.hpd_lo,
        "hpd_hi": summary.hpd_hi,
        "geweke_z": summary.geweke_z,
        "n_draws": summary.n_draws,
    }


def stage_diagnose(config):
    """Summarize stored posteriors, calibration and pricing in one JSON."""
    crm_post = read_crm_posterior(os.path.join(config.out_dir, POSTERIOR_CRM_CSV))
    cir_draws = read_cir_posterior(os.path.join(config.out_dir, POSTERIOR_CIR_CSV))
    period_rates, cumulative_losses = build_scenarios(config)
    spec, loss_t, pay, p0, discounted, calibrated = _calibrated_weights(
        config, period_rates, cumulative_losses
    )

    crm_block = {"beta": _summary_dict(crm_post["beta"])}
    hyper_summaries = {}
    for j, name in enumerate(crm.CrmPosterior.HYPER_NAMES):
        hyper_summaries[name] = _summary_dict(crm_post["hypers"][:, j])
    crm_block["hypers"] = hyper_summaries

    chain_ids = np.unique(crm_post["chain"])
    if chain_ids.size >= 2:
        beta_chains = [
            diagnostics.Chain(draws=crm_post["beta"][crm_post["chain"] == c],
                              chain_id=int(c))
            for c in chain_ids
        ]
        result = diagnostics.bgr(beta_chains)
        crm_block["bgr_beta"] = {
            "rhat": result.rhat, "converged": result.converged,
        }
        crm_block["rhat_trajectory"] = [
            {"iteration": row.iteration, "rhat": row.rhat,
             "converged": row.converged}
            for row in diagnostics.rhat_table(beta_chains)
        ]

    cir_block = {
        name: _summary_dict(cir_draws[:, j])
        for j, name in enumerate(("alpha", "beta", "sigma2"))
    }

    weights = calibrated.weights
    calibration_block = {
        "baseline_price": p0,
        "lambda": float(calibrated.lam),
        "constraint_residual": float(calibrated.constraint_residual),
        "effective_sample_size": float(1.0 / np.sum(weights**2)),
        "weight_min": float(weights.min()),
        "weight_median": float(np.median(weights)),
        "weight_max": float(weights.max()),
    }

    physical = pricing.summarize_present_values(discounted)
    risk_neutral = pricing.summarize_present_values(discounted, weights=weights)
    triggered = loss_t > spec.threshold
    pricing_block = {
        "price": float(risk_neutral.mean),
        "physical": {
            "mean": physical.mean, "sd": physical.sd,
            "skewness": physical.skewness,
            "excess_kurtosis": physical.excess_kurtosis,
        },
        "risk_neutral": {
            "mean": risk_neutral.mean, "sd": risk_neutral.sd,
            "skewness": risk_neutral.skewness,
            "excess_kurtosis": risk_neutral.excess_kurtosis,
        },
        "trigger_probability_physical": float(triggered.mean()),
        "trigger_probability_risk_neutral": float(weights[triggered].sum()),
    }

    report = {
        "panel": _jsonable(crm_block),
        "short_rate": _jsonable(cir_block),
        "calibration": _jsonable(calibration_block),
        "pricing": _jsonable(pricing_block),
    }
    path = _out_path(config, DIAGNOSTICS_JSON)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return {"outputs": [DIAGNOSTICS_JSON]}


# ---------------------------------------------------------------------------
# composition and the manifest

STAGES = {
    "distfit": stage_distfit,
    "simulate": stage_simulate,
    "fit-crm": stage_fit_crm,
    "fit-cir": stage_fit_cir,
    "price": stage_price,
    "premium": stage_premium,
    "diagnose": stage_diagnose,
}

RUN_SEQUENCE = ("fit-crm", "fit-cir", "price", "premium", "diagnose")


def _update_manifest(config, stage_name, fragment):
    path = _out_path(config, MANIFEST_JSON)
    config_hash = config.config_hash()
    manifest = None
    if os.path.exists(path):
        with open(path, encoding="utf-8") as fh:
            try:
                manifest = json.load(fh)
            except json.JSONDecodeError:
                manifest = None
        if manifest is not None and manifest.get("config_hash") != config_hash:
            manifest = None
    if manifest is None:
        manifest = {
            "config_hash": config_hash,
            "seed": config.seed,
            "config": config.canonical(),
            "versions": {
                "package": _PACKAGE_VERSION,
                "python": platform.python_version(),
                "numpy": np.__version__,
                "scipy": scipy.__version__,
            },
            "stages": {},
        }
    manifest["stages"][stage_name] = _jsonable(fragment)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def run_stage(config, name):
    """Run one named stage and record it in the manifest.

    Stage errors are re-raised with the stage name prefixed; artifacts
    the stage already wrote stay on disk for inspection.
    """
    if not isinstance(config, RunConfig):
        raise ConfigError("run_stage expects a RunConfig")
    try:
        fn = STAGES[name]
    except KeyError:
        raise ConfigError(
            f"unknown stage '{name}'; expected one of {sorted(STAGES)}"
        ) from None
    try:
        fragment = fn(config)
    except CatbondError as exc:
        raise type(exc)(f"stage '{name}': {exc}") from exc
    return _update_manifest(config, name, fragment)


def run_pipeline(config):
    """Execute the full fit, price, premium and diagnostic sequence."""
    manifest = None
    for name in RUN_SEQUENCE:
        manifest = run_stage(config, name)
    return manifest
