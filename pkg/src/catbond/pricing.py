"""Zero-coupon CAT bond pricing on simulated joint rate/loss scenarios.

The bond pays face value unless the cumulative industry loss at maturity
exceeds the trigger threshold, in which case it pays the recovery
fraction.  Prices are weighted means of per-scenario discounted payoffs;
the weights select the measure (uniform physical or entropy-tilted
risk-neutral).
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError, SolverError

_BISECT_LO = -0.5
_BISECT_HI = 1.0
_RESIDUAL_TOL = 1e-10
_MAX_BISECT_ITERS = 200


@dataclass(frozen=True)
class BondSpec:
    """Contract terms for a binary-trigger zero-coupon CAT bond."""

    face: float
    recovery: float
    threshold: float
    maturity: int
    period_years: float = 1.0

    def __post_init__(self):
        if not self.face > 0:
            raise DataError("face value must be positive")
        if not 0.0 <= self.recovery < 1.0:
            raise DataError("recovery must lie in [0, 1)")
        if not self.threshold > 0:
            raise DataError("trigger threshold must be positive")
        if not (isinstance(self.maturity, (int, np.integer)) and self.maturity > 0):
            raise DataError("maturity must be a positive integer number of periods")
        if not self.period_years > 0:
            raise DataError("period length must be positive")


def payoff(loss, spec):
    """K if the loss is at or below the trigger, recovery * K above it.

    The boundary is inclusive: a loss exactly at the threshold leaves the
    bond whole.  Vectorized over ``loss``.
    """
    loss = np.asarray(loss, dtype=float)
    full = spec.face
    reduced = spec.recovery * spec.face
    out = np.where(loss <= spec.threshold, full, reduced)
    return float(out) if out.ndim == 0 else out


@dataclass
class PresentValueDistribution:
    """Per-scenario present values with weighted moment summaries."""

    values: np.ndarray
    weights: np.ndarray
    mean: float
    sd: float
    skewness: float
    excess_kurtosis: float


def _normalized_weights(n, weights):
    if weights is None:
        return np.full(n, 1.0 / n)
    w = np.asarray(weights, dtype=float).ravel()
    if w.size != n:
        raise DataError(f"{w.size} weights for {n} scenarios")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise DataError("weights must be finite and nonnegative")
    total = np.sum(w)
    if abs(total - 1.0) > 1e-9:
        raise DataError(f"weights sum to {total}, expected 1")
    return w / total


def summarize_present_values(values, weights=None):
    """Weighted central moments: mean, sd, skewness, excess kurtosis.

    Standardized moments are reported as 0 for a degenerate (zero
    variance) distribution so downstream tables stay finite.
    """
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise DataError("no scenarios to summarize")
    w = _normalized_weights(v.size, weights)
    # a plain mean keeps the unweighted case exact for constant payoffs
    mean = float(v.mean()) if weights is None else float(np.dot(w, v))
    centered = v - mean
    m2 = float(np.dot(w, centered**2))
    sd = math.sqrt(m2)
    if m2 > 0:
        skew = float(np.dot(w, centered**3)) / m2**1.5
        exkurt = float(np.dot(w, centered**4)) / m2**2 - 3.0
    else:
        skew = exkurt = 0.0
    return PresentValueDistribution(
        values=v, weights=w, mean=mean, sd=sd, skewness=skew, excess_kurtosis=exkurt
    )


def _discount_factors(rate_paths, n_periods):
    r = np.atleast_2d(np.asarray(rate_paths, dtype=float))
    if r.shape[1] < n_periods:
        raise DataError(
            f"rate paths cover {r.shape[1]} periods, need {n_periods}"
        )
    if not np.all(np.isfinite(r)):
        raise DataError("rate paths contain non-finite values")
    return np.exp(-np.sum(r[:, :n_periods], axis=1))


def price(rate_paths, losses, spec, weights=None):
    """Discounted-payoff distribution and scalar price under ``weights``.

    ``losses`` is the per-scenario cumulative aggregate loss at maturity;
    ``rate_paths`` holds period-scale rates covering at least the bond's
    life.  Returns ``(distribution, price)``.
    """
    losses = np.asarray(losses, dtype=float).ravel()
    disc = _discount_factors(rate_paths, spec.maturity)
    if disc.size != losses.size:
        raise DataError(f"{disc.size} rate paths for {losses.size} loss scenarios")
    pv = disc * payoff(losses, spec)
    dist = summarize_present_values(pv, weights)
    return dist, dist.mean


@dataclass
class PremiumCurve:
    """Annualized risk premia by maturity with solver residuals."""

    maturities: np.ndarray
    deltas: np.ndarray
    residuals: np.ndarray
    q_prices: np.ndarray
    p_payoffs: np.ndarray


def _solve_premium(eq_price, ep_payoff, t_years):
    """Bisect h(d) = eq - exp(-d*t)*ep over the fixed premium bracket."""

    def h(delta):
        return eq_price - math.exp(-delta * t_years) * ep_payoff

    lo, hi = _BISECT_LO, _BISECT_HI
    h_lo, h_hi = h(lo), h(hi)
    if h_lo == 0.0:
        return lo, 0.0
    if h_hi == 0.0:
        return hi, 0.0
    if h_lo * h_hi > 0:
        raise SolverError(
            "premium bracket has no sign change: "
            f"h({lo}) = {h_lo:.6e}, h({hi}) = {h_hi:.6e}"
        )
    delta = 0.5 * (lo + hi)
    for _ in range(_MAX_BISECT_ITERS):
        val = h(delta)
        if abs(val) <= _RESIDUAL_TOL:
            return delta, abs(val)
        if (val > 0) == (h_hi > 0):
            hi = delta
        else:
            lo, h_lo = delta, val
        delta = 0.5 * (lo + hi)
    val = h(delta)
    if abs(val) <= _RESIDUAL_TOL:
        return delta, abs(val)
    raise SolverError(f"premium bisection stalled at residual {val:.3e}")


def premium_curve(rate_paths, cumulative_losses, spec, maturities, weights=None):
    """Annualized risk premium term structure.

    For each maturity T the premium solves
    E_Q[exp(-sum r) payoff_T] = exp(-delta * T * period_years) * E_P[payoff_T]
    with E_P always under uniform physical weights.  ``cumulative_losses``
    column t-1 holds the aggregate loss accumulated through period t.
    """
    losses = np.atleast_2d(np.asarray(cumulative_losses, dtype=float))
    rates = np.atleast_2d(np.asarray(rate_paths, dtype=float))
    n = losses.shape[0]
    if rates.shape[0] != n:
        raise DataError(f"{rates.shape[0]} rate paths for {n} loss paths")
    maturities = [int(t) for t in maturities]
    if not maturities or any(t < 1 for t in maturities):
        raise DataError("maturities must be positive integers")
    horizon = max(maturities)
    if losses.shape[1] < horizon or rates.shape[1] < horizon:
        raise DataError(
            f"paths cover {min(losses.shape[1], rates.shape[1])} periods, "
            f"curve needs {horizon}"
        )
    w_q = _normalized_weights(n, weights)
    w_p = np.full(n, 1.0 / n)

    deltas, residuals, q_prices, p_payoffs = [], [], [], []
    for t in maturities:
        pay = payoff(losses[:, t - 1], spec)
        disc = np.exp(-np.sum(rates[:, :t], axis=1))
        eq = float(np.dot(w_q, disc * pay))
        ep = float(np.dot(w_p, pay))
        if ep <= 0 or eq <= 0:
            raise SolverError(f"expected payoff vanished at maturity {t}")
        delta, resid = _solve_premium(eq, ep, t * spec.period_years)
        deltas.append(delta)
        residuals.append(resid)
        q_prices.append(eq)
        p_payoffs.append(ep)
    return PremiumCurve(
        maturities=np.array(maturities, dtype=int),
        deltas=np.array(deltas),
        residuals=np.array(residuals),
        q_prices=np.array(q_prices),
        p_payoffs=np.array(p_payoffs),
    )
