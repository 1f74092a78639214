"""Maximum-entropy risk-neutralization of simulated scenarios.

Scenarios carry uniform physical weights 1/N.  Calibration finds the
exponential tilt exp(lambda * alpha_i) that reprices the bond at its
observed market price P0; the tilted weights are the risk-neutral
measure used downstream for pricing.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import CalibrationError, DataError, SolverError

_MAX_DOUBLINGS = 60
_MAX_NEWTON_ITERS = 200


@dataclass(frozen=True)
class ScenarioSet:
    """Joint scenarios reduced to one discounted-payoff scalar each."""

    alpha: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.alpha, dtype=float).ravel()
        if not np.all(np.isfinite(arr)):
            raise DataError("scenario payoffs must be finite")
        object.__setattr__(self, "alpha", arr)

    @property
    def n(self):
        return self.alpha.size


@dataclass
class RiskNeutralWeights:
    """Tilted scenario probabilities with the multiplier that produced them."""

    weights: np.ndarray
    lam: float
    constraint_residual: float = math.nan


def discounted_payoffs(rate_paths, payoff_paths):
    """Per-scenario discounted payoff alpha_i = sum_t exp(-sum_{u<=t} r_u) V_t.

    ``rate_paths`` holds per-period rates already at period scale and
    ``payoff_paths`` the cash flow paid at the end of each period; both
    are (n_scenarios, n_periods).
    """
    r = np.atleast_2d(np.asarray(rate_paths, dtype=float))
    v = np.atleast_2d(np.asarray(payoff_paths, dtype=float))
    if r.shape != v.shape:
        raise DataError(f"rate paths {r.shape} and payoff paths {v.shape} must conform")
    if not (np.all(np.isfinite(r)) and np.all(np.isfinite(v))):
        raise DataError("rate or payoff paths contain non-finite values")
    discount = np.exp(-np.cumsum(r, axis=1))
    return np.sum(discount * v, axis=1)


def _alpha_array(scenarios):
    alpha = scenarios.alpha if isinstance(scenarios, ScenarioSet) else scenarios
    alpha = np.asarray(alpha, dtype=float).ravel()
    if not np.all(np.isfinite(alpha)):
        raise DataError("scenario payoffs must be finite")
    return alpha


def _tilted_moments(alpha, lam):
    """Mean and variance of alpha under weights prop. to exp(lam*alpha),
    computed with the max-exponent guard so nothing overflows."""
    expo = lam * alpha
    expo -= np.max(expo)
    w = np.exp(expo)
    s0 = np.sum(w)
    mean = np.sum(w * alpha) / s0
    var = np.sum(w * (alpha - mean) ** 2) / s0
    return mean, var


def solve_lambda(alpha, p0):
    """Lagrange multiplier making the tilted mean payoff equal ``p0``.

    Solves g(lam) = E_tilted[alpha] - p0 = 0.  g is strictly increasing
    (its derivative is the tilted variance), so a sign-changing bracket
    plus safeguarded Newton pins the unique root.
    """
    alpha = _alpha_array(alpha)
    if alpha.size < 2:
        raise DataError("calibration needs at least 2 scenarios")
    if not np.isfinite(p0):
        raise DataError("target price must be finite")
    a_min, a_max = float(np.min(alpha)), float(np.max(alpha))
    scale = max(1.0, abs(p0))
    if a_min == a_max:
        if abs(a_min - p0) <= 1e-12 * scale:
            return 0.0
        raise CalibrationError(
            f"price not attainable: constant payoff {a_min} != target {p0}"
        )
    if not a_min < p0 < a_max:
        raise CalibrationError(
            f"price not attainable: {p0} outside payoff range ({a_min}, {a_max})"
        )

    def g_and_slope(lam):
        mean, var = _tilted_moments(alpha, lam)
        return mean - p0, var

    lo, hi = -1.0, 1.0
    g_lo, _ = g_and_slope(lo)
    g_hi, _ = g_and_slope(hi)
    doublings = 0
    while g_lo > 0 or g_hi < 0:
        if doublings >= _MAX_DOUBLINGS:
            raise SolverError("could not bracket the calibration root")
        lo, hi = 2.0 * lo, 2.0 * hi
        g_lo, _ = g_and_slope(lo)
        g_hi, _ = g_and_slope(hi)
        doublings += 1

    lam = 0.5 * (lo + hi)
    tol = 1e-13 * scale
    for _ in range(_MAX_NEWTON_ITERS):
        g, slope = g_and_slope(lam)
        if abs(g) <= tol:
            return float(lam)
        if g > 0:
            hi = lam
        else:
            lo = lam
        step_ok = slope > 0 and np.isfinite(slope)
        nxt = lam - g / slope if step_ok else math.nan
        if not (lo < nxt < hi):
            nxt = 0.5 * (lo + hi)
        if hi - lo <= 4.0 * np.finfo(float).eps * (1.0 + abs(lam)):
            return float(nxt)
        lam = nxt
    raise SolverError("calibration root solve did not converge")


def risk_neutral_weights(alpha, lam, p0=None):
    """Tilted probabilities pi*_i = exp(lam*alpha_i - G)/sum_j exp(...).

    The guard G = max(lam*alpha_i) keeps every exponent <= 0, so the
    weights are finite for any magnitude of payoff.
    """
    alpha = _alpha_array(alpha)
    if not np.isfinite(lam):
        raise DataError("lambda must be finite")
    expo = lam * alpha
    expo -= np.max(expo)
    w = np.exp(expo)
    w /= np.sum(w)
    residual = math.nan if p0 is None else float(abs(np.dot(w, alpha) - p0))
    return RiskNeutralWeights(weights=w, lam=float(lam), constraint_residual=residual)


def calibrate(scenarios, p0):
    """Solve for lambda and materialize the risk-neutral weights.

    Post-checks that the weighted payoff reproduces ``p0`` to 1e-8
    relative; a violation means the solver contract was broken.
    """
    alpha = _alpha_array(scenarios)
    lam = solve_lambda(alpha, p0)
    result = risk_neutral_weights(alpha, lam, p0=p0)
    if result.constraint_residual > 1e-8 * max(1.0, abs(p0)):
        raise SolverError(
            f"calibration residual {result.constraint_residual:.3e} exceeds tolerance"
        )
    return result
