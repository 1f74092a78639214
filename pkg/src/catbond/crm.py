"""Hierarchical Bayesian collective risk model with Dirichlet-process
clustering over perils.

Quarterly claim counts follow a seasonal Poisson regression
log lambda_{i,s} = alpha_i + beta * s with quarter index s in {1..4}, and
the aggregate quarterly loss given n > 0 claims follows
InverseGamma(n * kappa_i, theta_i).  Two truncated stick-breaking priors
induce clusters: one over the severity pairs (kappa_i, theta_i) with base
Gamma(zeta1, zeta2) x Gamma(eta1, eta2), one over the intercepts alpha_i
with base Gamma(psi1, psi2).  All six base hyperparameters carry
Gamma(0.01, 0.01) hyperpriors and the seasonal slope a N(0, 0.01) prior.
The sampler is a blocked Gibbs sweep: label and stick-weight updates are
conjugate, atoms and the slope move by adaptive random-walk Metropolis on
the log scale, and rate-type hyperparameters are conjugate given atoms.
"""

from __future__ import annotations

import datetime as dt
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaincc, gammaln

from .errors import ConfigError, DataError

_TARGET_ACCEPT = 0.3
_ADAPT_WINDOW = 100
_DEFAULT_MCMC = {"n_iter": 40_000, "burn_in": 10_000, "thin": 1, "seed": 0,
                 "n_chains": 1}


@dataclass(frozen=True)
class ClaimEvent:
    """A single catastrophe record: calendar date, peril id, loss in
    millions."""

    date: dt.date
    peril: str
    loss: float

    def __post_init__(self):
        if not self.loss > 0:
            raise DataError(f"event loss must be positive, got {self.loss}")


def _quarter_of(date):
    return (date.year, (date.month - 1) // 3 + 1)


def _quarter_range(start, end):
    y, q = _quarter_of(start)
    stop = _quarter_of(end)
    quarters = []
    while (y, q) <= stop:
        quarters.append((y, q))
        q += 1
        if q == 5:
            y, q = y + 1, 1
    return quarters


@dataclass
class QuarterlyPanel:
    """Per-peril, per-quarter claim counts and aggregate losses.

    counts[i, t] is the number of claims for peril i in quarter t and
    losses[i, t] their aggregate amount; a quarter with no claims has
    loss exactly zero.
    """

    perils: tuple
    quarters: tuple
    counts: np.ndarray
    losses: np.ndarray

    def __post_init__(self):
        self.perils = tuple(self.perils)
        self.quarters = tuple((int(y), int(q)) for y, q in self.quarters)
        self.counts = np.asarray(self.counts, dtype=int)
        self.losses = np.asarray(self.losses, dtype=float)
        shape = (len(self.perils), len(self.quarters))
        if self.counts.shape != shape or self.losses.shape != shape:
            raise DataError(
                f"panel arrays must have shape {shape}, got counts "
                f"{self.counts.shape} and losses {self.losses.shape}"
            )
        if np.any(self.counts < 0):
            raise DataError("claim counts must be nonnegative")
        if np.any(self.losses < 0) or not np.all(np.isfinite(self.losses)):
            raise DataError("losses must be nonnegative and finite")
        zero_mismatch = (self.counts == 0) != (self.losses == 0.0)
        if np.any(zero_mismatch):
            raise DataError("losses must be zero exactly where counts are zero")
        if not all(1 <= q <= 4 for _, q in self.quarters):
            raise DataError("quarter index must lie in 1..4")

    @property
    def seasons(self):
        """Quarter index s in {1..4} per column."""
        return np.array([q for _, q in self.quarters], dtype=float)

    @property
    def n_perils(self):
        return len(self.perils)

    @property
    def n_quarters(self):
        return len(self.quarters)


def build_panel(events, peril_set, date_range):
    """Aggregate events into a QuarterlyPanel over the full date range.

    Quarters without events appear with zero count and loss.  Events whose
    peril is not in peril_set, or whose date falls outside date_range, are
    reported in one error listing the offenders.
    """
    perils = tuple(peril_set)
    start, end = date_range
    if start > end:
        raise DataError("date_range start must not be after its end")
    unknown = sorted({e.peril for e in events} - set(perils))
    if unknown:
        raise DataError(f"unknown peril ids in events: {', '.join(unknown)}")
    outside = [e for e in events if not (start <= e.date <= end)]
    if outside:
        raise DataError(
            f"{len(outside)} event(s) fall outside the date range "
            f"{start}..{end}; first offender: {outside[0].date}"
        )
    quarters = _quarter_range(start, end)
    index = {quarter: t for t, quarter in enumerate(quarters)}
    row = {p: i for i, p in enumerate(perils)}
    counts = np.zeros((len(perils), len(quarters)), dtype=int)
    losses = np.zeros((len(perils), len(quarters)))
    for e in events:
        i, t = row[e.peril], index[_quarter_of(e.date)]
        counts[i, t] += 1
        losses[i, t] += e.loss
    return QuarterlyPanel(perils, quarters, counts, losses)


@dataclass(frozen=True)
class CrmHyperParams:
    """Fixed quantities of the hierarchy: stick-breaking concentrations,
    the shared Gamma(shape, rate) hyperprior on the six base parameters,
    the Gaussian prior on the seasonal slope, and the truncation level."""

    gamma1: float = 9.0
    gamma2: float = 9.0
    hyper_shape: float = 0.01
    hyper_rate: float = 0.01
    beta_prior_mean: float = 0.0
    beta_prior_precision: float = 100.0
    dp_truncation: int = 20

    def __post_init__(self):
        positives = (self.gamma1, self.gamma2, self.hyper_shape,
                     self.hyper_rate, self.beta_prior_precision)
        if not all(v > 0 for v in positives):
            raise DataError("CRM hyperparameters must be positive")
        if self.dp_truncation < 2:
            raise DataError("dp_truncation must be at least 2")


@dataclass
class CrmState:
    """One sweep's worth of model unknowns."""

    kappa: np.ndarray
    theta: np.ndarray
    alpha: np.ndarray
    beta: float
    sev_labels: np.ndarray
    sev_weights: np.ndarray
    count_labels: np.ndarray
    count_weights: np.ndarray
    sev_atoms: np.ndarray
    count_atoms: np.ndarray
    zeta1: float = 1.0
    zeta2: float = 1.0
    eta1: float = 1.0
    eta2: float = 1.0
    psi1: float = 1.0
    psi2: float = 1.0


@dataclass
class CrmPosterior:
    """Retained draws, kept per chain, plus sampler metadata.

    Leading array dimension is the chain; per-peril arrays then run
    (chain, draw, peril).
    """

    perils: tuple
    kappa: np.ndarray
    theta: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    sev_labels: np.ndarray
    count_labels: np.ndarray
    sev_weights: np.ndarray
    count_weights: np.ndarray
    hypers: np.ndarray  # (chain, draw, 6): zeta1 zeta2 eta1 eta2 psi1 psi2
    seed: int
    n_iter: int
    burn_in: int
    thin: int
    acceptance: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    HYPER_NAMES = ("zeta1", "zeta2", "eta1", "eta2", "psi1", "psi2")

    @property
    def n_chains(self):
        return self.kappa.shape[0]

    @property
    def n_draws(self):
        """Retained draws per chain."""
        return self.kappa.shape[1]

    def pooled(self, name):
        """Array for `name` with chains concatenated along the draw axis."""
        arr = getattr(self, name)
        return arr.reshape(-1, *arr.shape[2:])

    def peril_index(self, peril):
        try:
            return self.perils.index(peril)
        except ValueError:
            raise DataError(f"unknown peril {peril!r}") from None


def _severity_stats(panel):
    """Per-peril sufficient statistics of the positive-count cells."""
    stats = []
    for i in range(panel.n_perils):
        mask = panel.counts[i] > 0
        n = panel.counts[i, mask].astype(float)
        s = panel.losses[i, mask]
        uniq, mult = np.unique(n, return_counts=True)
        stats.append({
            "total_n": float(n.sum()),
            "n_ln_s": float(np.sum(n * np.log(s))) if n.size else 0.0,
            "ln_s": float(np.sum(np.log(s))) if n.size else 0.0,
            "inv_s": float(np.sum(1.0 / s)) if n.size else 0.0,
            "uniq": uniq,
            "mult": mult.astype(float),
        })
    return stats


def _severity_loglik_matrix(stats, atoms):
    """Log-likelihood of each peril's loss cells under each atom, up to
    the atom-independent -(ln S) terms."""
    kappa, theta = atoms[:, 0], atoms[:, 1]
    ln_theta = np.log(theta)
    out = np.empty((len(stats), atoms.shape[0]))
    for i, st in enumerate(stats):
        if st["uniq"].size == 0:
            out[i] = 0.0
            continue
        lgam = st["mult"] @ gammaln(np.outer(st["uniq"], kappa))
        out[i] = kappa * (st["total_n"] * ln_theta - st["n_ln_s"]) - lgam \
            - theta * st["inv_s"]
    return out


def _severity_loglik_atom(members, stats, kappa, theta):
    """Exact severity log density aggregated over member perils."""
    if kappa <= 0 or theta <= 0:
        return -np.inf
    total = 0.0
    for i in members:
        st = stats[i]
        if st["uniq"].size == 0:
            continue
        lgam = float(st["mult"] @ gammaln(st["uniq"] * kappa))
        total += kappa * (st["total_n"] * math.log(theta) - st["n_ln_s"]) \
            - lgam - theta * st["inv_s"] - st["ln_s"]
    return total


def _count_stats(panel):
    seasons = panel.seasons
    return {
        "total_n": panel.counts.sum(axis=1).astype(float),
        "total_ns": (panel.counts * seasons).sum(axis=1).astype(float),
        "season_mult": np.array([np.sum(seasons == s) for s in (1, 2, 3, 4)],
                                dtype=float),
    }


def _season_sum(beta, season_mult):
    """Sum over quarters of exp(beta * s)."""
    return float(season_mult @ np.exp(beta * np.arange(1.0, 5.0)))


def _count_loglik_matrix(cstats, alphas, beta):
    """Poisson log-likelihood of each peril under each intercept atom, up
    to alpha-independent terms."""
    se = _season_sum(beta, cstats["season_mult"])
    rate = np.exp(np.minimum(alphas, 600.0))
    return np.outer(cstats["total_n"], alphas) - rate[None, :] * se


def log_likelihood(state, panel):
    """Joint log likelihood of the panel under one state: seasonal Poisson
    for every cell plus an inverse-gamma term for each positive cell."""
    seasons = panel.seasons
    log_lam = state.alpha[:, None] + state.beta * seasons[None, :]
    pois = panel.counts * log_lam - np.exp(log_lam) - gammaln(panel.counts + 1.0)
    total = float(pois.sum())
    mask = panel.counts > 0
    if np.any(mask):
        n = panel.counts[mask].astype(float)
        s = panel.losses[mask]
        shape = n * np.repeat(state.kappa, mask.sum(axis=1))
        scale = np.repeat(state.theta, mask.sum(axis=1))
        total += float(np.sum(
            shape * np.log(scale) - gammaln(shape) - (shape + 1.0) * np.log(s)
            - scale / s
        ))
    return total


def _draw_labels(weights, loglik, rng):
    logp = np.log(np.maximum(weights, 1e-300))[None, :] + loglik
    logp -= logp.max(axis=1, keepdims=True)
    p = np.exp(logp)
    p /= p.sum(axis=1, keepdims=True)
    u = rng.uniform(size=p.shape[0])[:, None]
    idx = (p.cumsum(axis=1) < u).sum(axis=1)
    return np.minimum(idx, weights.size - 1)


def _draw_sticks(labels, h, gamma, rng):
    m = np.bincount(labels, minlength=h).astype(float)
    tail = np.concatenate([np.cumsum(m[::-1])[::-1][1:], [0.0]])
    v = rng.beta(1.0 + m, gamma + tail)
    v[-1] = 1.0
    w = v * np.concatenate([[1.0], np.cumprod(1.0 - v[:-1])])
    return m, w


class _Adaptive:
    """Per-kernel random-walk scale with burn-in Robbins-Monro tuning and
    post-burn-in acceptance accounting."""

    def __init__(self, n, scale=0.5):
        self.scale = np.full(n, float(scale))
        self.window = np.zeros((n, 2))
        self.total = np.zeros((n, 2))

    def record(self, idx, accepted, adapting):
        bucket = self.window if adapting else self.total
        bucket[idx, 0] += accepted
        bucket[idx, 1] += 1

    def adapt(self):
        prop = self.window[:, 1]
        live = prop > 0
        rate = np.divide(self.window[:, 0], prop, out=np.zeros_like(prop),
                         where=live)
        self.scale[live] *= np.exp(rate[live] - _TARGET_ACCEPT)
        self.window[:] = 0.0

    def rate(self):
        prop = self.total[:, 1].sum()
        return float(self.total[:, 0].sum() / prop) if prop else math.nan


def _gamma_logpdf(x, shape, rate):
    return (shape - 1.0) * math.log(x) - rate * x


def _shape_log_target(shape, values_log_sum, n, rate, hyper):
    """Log conditional of a Gamma shape given n iid values and their rate."""
    return (
        _gamma_logpdf(shape, hyper.hyper_shape, hyper.hyper_rate)
        + n * (shape * math.log(rate) - gammaln(shape))
        + (shape - 1.0) * values_log_sum
    )


def _fit_single_chain(panel, hyper, n_iter, burn_in, thin, rng):
    n_per = panel.n_perils
    h = hyper.dp_truncation
    stats = _severity_stats(panel)
    cstats = _count_stats(panel)

    # one cluster per peril to start; atoms from crude moment matches so
    # burn-in spends its time merging rather than rescaling
    sev_labels = np.arange(n_per) % h
    count_labels = np.arange(n_per) % h
    sev_atoms = np.ones((h, 2))
    count_atoms = np.full(h, 0.5)
    for i in range(n_per):
        st = stats[i]
        if st["inv_s"] > 0:
            sev_atoms[i % h] = (1.0, max(st["total_n"] / st["inv_s"], 1e-6))
        mean_rate = cstats["total_n"][i] / panel.n_quarters
        count_atoms[i % h] = max(math.log(max(mean_rate, 1e-3)), 1e-3)
    beta = 0.0
    zeta1 = zeta2 = eta1 = eta2 = psi1 = psi2 = 1.0

    sev_scales = _Adaptive(h)
    alpha_scales = _Adaptive(h, scale=0.1)
    beta_scale = _Adaptive(1, scale=0.05)
    shape_scales = _Adaptive(3)  # zeta1, eta1, psi1

    n_keep = (n_iter - burn_in + thin - 1) // thin
    out = {
        "kappa": np.empty((n_keep, n_per)),
        "theta": np.empty((n_keep, n_per)),
        "alpha": np.empty((n_keep, n_per)),
        "beta": np.empty(n_keep),
        "sev_labels": np.empty((n_keep, n_per), dtype=np.int16),
        "count_labels": np.empty((n_keep, n_per), dtype=np.int16),
        "sev_weights": np.empty((n_keep, h)),
        "count_weights": np.empty((n_keep, h)),
        "hypers": np.empty((n_keep, 6)),
    }
    kept = 0
    sev_weights = np.full(h, 1.0 / h)
    count_weights = np.full(h, 1.0 / h)

    for it in range(n_iter):
        adapting = it < burn_in

        # (a) severity labels given atoms and weights
        loglik = _severity_loglik_matrix(stats, sev_atoms)
        sev_labels = _draw_labels(sev_weights, loglik, rng)
        # (b) stick weights
        sev_m, sev_weights = _draw_sticks(sev_labels, h, hyper.gamma1, rng)

        # (c) severity atoms: joint log-scale random walk per atom
        members_of = [np.nonzero(sev_labels == j)[0] for j in range(h)]
        for j in range(h):
            kap, the = sev_atoms[j]
            if members_of[j].size == 0:
                sev_atoms[j] = (
                    max(rng.gamma(zeta1, 1.0 / zeta2), 1e-300),
                    max(rng.gamma(eta1, 1.0 / eta2), 1e-300),
                )
                continue
            # the per-claim loss scale theta / (n kappa) is tightly pinned,
            # so the atom posterior rides a narrow ridge along (1, 1) in
            # (ln kappa, ln theta); shape the proposal to match
            z = rng.standard_normal(2)
            soft = sev_scales.scale[j] * z[0] / math.sqrt(2.0)
            hard = sev_scales.scale[j] * z[1] / (12.0 * math.sqrt(2.0))
            kap_p = kap * math.exp(soft + hard)
            the_p = the * math.exp(soft - hard)
            cur = (
                _severity_loglik_atom(members_of[j], stats, kap, the)
                + _gamma_logpdf(kap, zeta1, zeta2)
                + _gamma_logpdf(the, eta1, eta2)
                + math.log(kap) + math.log(the)
            )
            new = (
                _severity_loglik_atom(members_of[j], stats, kap_p, the_p)
                + _gamma_logpdf(kap_p, zeta1, zeta2)
                + _gamma_logpdf(the_p, eta1, eta2)
                + math.log(kap_p) + math.log(the_p)
            )
            accept = math.log(rng.uniform()) < new - cur
            if accept:
                sev_atoms[j] = (kap_p, the_p)
            sev_scales.record(j, accept, adapting)

        # (d) the count-side mirror: labels, sticks, intercept atoms
        loglik = _count_loglik_matrix(cstats, count_atoms, beta)
        count_labels = _draw_labels(count_weights, loglik, rng)
        count_m, count_weights = _draw_sticks(count_labels, h, hyper.gamma2, rng)
        season_total = _season_sum(beta, cstats["season_mult"])
        for j in range(h):
            members = np.nonzero(count_labels == j)[0]
            a = count_atoms[j]
            if members.size == 0:
                count_atoms[j] = max(rng.gamma(psi1, 1.0 / psi2), 1e-300)
                continue
            a_p = a * math.exp(alpha_scales.scale[j] * rng.standard_normal())
            tn = float(cstats["total_n"][members].sum())
            cur = (
                a * tn - math.exp(min(a, 600.0)) * season_total * members.size
                + _gamma_logpdf(a, psi1, psi2) + math.log(a)
            )
            new = (
                a_p * tn
                - math.exp(min(a_p, 600.0)) * season_total * members.size
                + _gamma_logpdf(a_p, psi1, psi2) + math.log(a_p)
            )
            accept = math.log(rng.uniform()) < new - cur
            if accept:
                count_atoms[j] = a_p
            alpha_scales.record(j, accept, adapting)

        # (e) seasonal slope: Gaussian random walk
        alpha_now = count_atoms[count_labels]
        exp_alpha_sum = float(np.exp(alpha_now).sum())
        total_ns = float(cstats["total_ns"].sum())
        prec = hyper.beta_prior_precision
        beta_p = beta + beta_scale.scale[0] * rng.standard_normal()
        cur = (
            beta * total_ns
            - exp_alpha_sum * _season_sum(beta, cstats["season_mult"])
            - 0.5 * prec * (beta - hyper.beta_prior_mean) ** 2
        )
        new = (
            beta_p * total_ns
            - exp_alpha_sum * _season_sum(beta_p, cstats["season_mult"])
            - 0.5 * prec * (beta_p - hyper.beta_prior_mean) ** 2
        )
        accept = math.log(rng.uniform()) < new - cur
        if accept:
            beta = beta_p
        beta_scale.record(0, accept, adapting)

        # (f) base-measure hyperparameters: conjugate gamma draws for the
        # rates, log-scale Metropolis for the shapes
        hs, hr = hyper.hyper_shape, hyper.hyper_rate
        kap_all, the_all = sev_atoms[:, 0], sev_atoms[:, 1]
        zeta2 = rng.gamma(hs + h * zeta1, 1.0 / (hr + kap_all.sum()))
        eta2 = rng.gamma(hs + h * eta1, 1.0 / (hr + the_all.sum()))
        psi2 = rng.gamma(hs + h * psi1, 1.0 / (hr + count_atoms.sum()))
        for slot, (value, rate, vals) in enumerate((
            (zeta1, zeta2, kap_all), (eta1, eta2, the_all),
            (psi1, psi2, count_atoms),
        )):
            log_sum = float(np.sum(np.log(vals)))
            prop = value * math.exp(
                shape_scales.scale[slot] * rng.standard_normal()
            )
            cur = _shape_log_target(value, log_sum, h, rate, hyper) \
                + math.log(value)
            new = _shape_log_target(prop, log_sum, h, rate, hyper) \
                + math.log(prop)
            accept = math.log(rng.uniform()) < new - cur
            if accept:
                value = prop
            shape_scales.record(slot, accept, adapting)
            if slot == 0:
                zeta1 = value
            elif slot == 1:
                eta1 = value
            else:
                psi1 = value

        if adapting and (it + 1) % _ADAPT_WINDOW == 0:
            for adaptive in (sev_scales, alpha_scales, beta_scale, shape_scales):
                adaptive.adapt()

        # relabel both families by decreasing occupancy so cluster 0 is
        # always the largest; keeps label draws comparable across sweeps
        for labels, atoms, weights, m, scales in (
            (sev_labels, sev_atoms, sev_weights, sev_m, sev_scales),
            (count_labels, count_atoms, count_weights, count_m, alpha_scales),
        ):
            order = np.argsort(-m, kind="stable")
            inverse = np.empty(h, dtype=int)
            inverse[order] = np.arange(h)
            labels[:] = inverse[labels]
            atoms[:] = atoms[order]
            weights[:] = weights[order]
            scales.scale[:] = scales.scale[order]
            scales.window[:] = scales.window[order]
            scales.total[:] = scales.total[order]

        if it >= burn_in and (it - burn_in) % thin == 0:
            out["kappa"][kept] = sev_atoms[sev_labels, 0]
            out["theta"][kept] = sev_atoms[sev_labels, 1]
            out["alpha"][kept] = count_atoms[count_labels]
            out["beta"][kept] = beta
            out["sev_labels"][kept] = sev_labels
            out["count_labels"][kept] = count_labels
            out["sev_weights"][kept] = sev_weights
            out["count_weights"][kept] = count_weights
            out["hypers"][kept] = (zeta1, zeta2, eta1, eta2, psi1, psi2)
            kept += 1

    rates = {
        "severity_atoms": sev_scales.rate(),
        "intercept_atoms": alpha_scales.rate(),
        "beta": beta_scale.rate(),
        "hyper_shapes": shape_scales.rate(),
    }
    return out, rates


def fit(panel, hyper=None, mcmc=None, threads=1):
    """Run the blocked Gibbs sampler and return retained draws.

    mcmc accepts n_iter, burn_in, thin, seed and n_chains; omitted keys
    fall back to the 40000/10000 single-chain defaults.  Chains use
    independent spawned RNG streams, so running them on a thread pool
    (threads > 1) changes wall time only, never the draws.
    """
    hyper = hyper or CrmHyperParams()
    settings = dict(_DEFAULT_MCMC)
    settings.update(mcmc or {})
    unknown = set(settings) - set(_DEFAULT_MCMC)
    if unknown:
        raise ConfigError(f"unknown mcmc settings: {sorted(unknown)}")
    n_iter, burn_in = settings["n_iter"], settings["burn_in"]
    thin, seed = settings["thin"], settings["seed"]
    n_chains = settings["n_chains"]
    if n_iter <= burn_in:
        raise ConfigError("n_iter must exceed burn_in")
    if thin < 1 or n_chains < 1:
        raise ConfigError("thin and n_chains must be at least 1")
    if panel.n_perils < 1 or panel.n_quarters < 4:
        raise DataError("panel needs at least one peril and four quarters")
    if hyper.dp_truncation < panel.n_perils:
        raise ConfigError(
            f"dp_truncation {hyper.dp_truncation} is below the number of "
            f"perils {panel.n_perils}"
        )

    if threads < 1:
        raise ConfigError("threads must be at least 1")

    streams = np.random.SeedSequence(seed).spawn(n_chains)
    rngs = [np.random.default_rng(chain_seq) for chain_seq in streams]
    if threads > 1 and n_chains > 1:
        with ThreadPoolExecutor(max_workers=min(threads, n_chains)) as pool:
            results = list(
                pool.map(
                    lambda rng: _fit_single_chain(
                        panel, hyper, n_iter, burn_in, thin, rng
                    ),
                    rngs,
                )
            )
    else:
        results = [
            _fit_single_chain(panel, hyper, n_iter, burn_in, thin, rng)
            for rng in rngs
        ]
    chains = [draws for draws, _ in results]
    rates = [rate for _, rate in results]

    stacked = {
        key: np.stack([c[key] for c in chains]) for key in chains[0]
    }
    acceptance = {
        key: [r[key] for r in rates] for key in rates[0]
    }
    warnings = [
        f"{key} acceptance {value:.3f} outside [0.05, 0.95] in chain {c}"
        for key, values in acceptance.items()
        for c, value in enumerate(values)
        if not math.isnan(value) and not 0.05 <= value <= 0.95
    ]
    return CrmPosterior(
        perils=panel.perils,
        kappa=stacked["kappa"],
        theta=stacked["theta"],
        alpha=stacked["alpha"],
        beta=stacked["beta"],
        sev_labels=stacked["sev_labels"],
        count_labels=stacked["count_labels"],
        sev_weights=stacked["sev_weights"],
        count_weights=stacked["count_weights"],
        hypers=stacked["hypers"],
        seed=seed,
        n_iter=n_iter,
        burn_in=burn_in,
        thin=thin,
        acceptance=acceptance,
        warnings=warnings,
    )


@dataclass
class ClusterSummary:
    """Severity-cluster occupancy fractions (peril x cluster) and the
    most-frequent cluster per peril."""

    perils: tuple
    occupancy: np.ndarray
    modal: np.ndarray


def cluster_summary(posterior):
    if posterior.n_draws == 0:
        raise ConfigError("posterior has no retained draws")
    labels = posterior.pooled("sev_labels")
    h = posterior.sev_weights.shape[-1]
    occ = np.stack([
        np.bincount(labels[:, i], minlength=h) / labels.shape[0]
        for i in range(labels.shape[1])
    ])
    return ClusterSummary(
        perils=posterior.perils,
        occupancy=occ,
        modal=occ.argmax(axis=1),
    )


def _horizon_intensity(alpha, beta, horizon):
    """Total Poisson intensity across the horizon's quarters, per draw.

    horizon = (t, T) in whole quarters; the schedule covers quarters
    t+1 .. T with season ((u - 1) mod 4) + 1.
    """
    t, t_end = horizon
    if not (t_end > t >= 0):
        raise DataError("horizon must satisfy T > t >= 0")
    quarters = np.arange(t + 1, t_end + 1)
    seasons = ((quarters - 1) % 4) + 1
    return np.exp(alpha[:, None] + np.outer(beta, seasons.astype(float))) \
        .sum(axis=1)


def predict_counts(posterior, peril, horizon, seed=0):
    """Predictive claim-count sample: one Poisson draw per retained draw."""
    i = posterior.peril_index(peril)
    lam = _horizon_intensity(
        posterior.pooled("alpha")[:, i], posterior.pooled("beta"), horizon
    )
    rng = np.random.default_rng(seed)
    return rng.poisson(lam)


def predict_aggregate(posterior, peril, horizon, seed=0):
    """Predictive aggregate-loss sample: a Poisson count per retained draw,
    then an inverse-gamma loss when the count is positive."""
    i = posterior.peril_index(peril)
    alpha = posterior.pooled("alpha")[:, i]
    kappa = posterior.pooled("kappa")[:, i]
    theta = posterior.pooled("theta")[:, i]
    lam = _horizon_intensity(alpha, posterior.pooled("beta"), horizon)
    rng = np.random.default_rng(seed)
    n_f = rng.poisson(lam)
    out = np.zeros(n_f.shape)
    hit = n_f > 0
    if np.any(hit):
        out[hit] = theta[hit] / rng.gamma(n_f[hit] * kappa[hit])
    return out


@dataclass
class ThresholdProbability:
    estimate: float
    mc_se: float
    n_sims: int


def threshold_probability(posterior, selector, d, horizon, n_sims=100_000,
                          seed=0):
    """Monte Carlo estimate of Pr[aggregate loss <= d] over the horizon.

    selector is one peril id or an iterable of them (a cluster, summed).
    For a single peril each simulated count resolves through the
    inverse-gamma CDF (a regularized incomplete gamma); for a cluster the
    member losses are simulated and summed.
    """
    if posterior.n_draws == 0:
        raise ConfigError("posterior has no retained draws")
    if not d > 0:
        raise DataError("threshold d must be positive")
    perils = [selector] if isinstance(selector, str) else list(selector)
    idx = [posterior.peril_index(p) for p in perils]
    alpha = posterior.pooled("alpha")
    kappa = posterior.pooled("kappa")
    theta = posterior.pooled("theta")
    beta = posterior.pooled("beta")
    rng = np.random.default_rng(seed)
    pick = rng.integers(alpha.shape[0], size=n_sims)

    if len(idx) == 1:
        i = idx[0]
        lam = _horizon_intensity(alpha[:, i], beta, horizon)[pick]
        n_f = rng.poisson(lam)
        prob = np.ones(n_sims)
        hit = n_f > 0
        # Pr[InvGamma(n kappa, theta) <= d] = Q(n kappa, theta / d)
        prob[hit] = gammaincc(
            n_f[hit] * kappa[pick[hit], i], theta[pick[hit], i] / d
        )
        hits = rng.uniform(size=n_sims) < prob
    else:
        total = np.zeros(n_sims)
        for i in idx:
            lam = _horizon_intensity(alpha[:, i], beta, horizon)[pick]
            n_f = rng.poisson(lam)
            hit = n_f > 0
            if np.any(hit):
                total[hit] += theta[pick[hit], i] / rng.gamma(
                    n_f[hit] * kappa[pick[hit], i]
                )
        hits = total <= d
    p_hat = float(hits.mean())
    se = math.sqrt(max(p_hat * (1.0 - p_hat), 1e-300) / n_sims)
    return ThresholdProbability(estimate=p_hat, mc_se=se, n_sims=n_sims)
