"""Bayesian CIR short-rate model via Euler discretization and Gibbs sampling.

The square-root diffusion dr = (alpha - beta r) dt + sigma sqrt(r) dW is
discretized with Euler-Maruyama.  Between each pair of observations, M
latent interior points are augmented so the discretization bias shrinks
with step Delta = Delta_t / (M + 1).  The sampler alternates a truncated
bivariate-normal draw of (alpha, beta), a conjugate inverse-gamma draw
of sigma^2, and pointwise random-walk Metropolis on the latent points.

The module is unit-agnostic: rates keep whatever scale the caller uses
(the harness feeds annualized decimals).
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DataError, SamplerError

# reflection floor keeping sqrt(r) defined; negligible at daily/weekly steps
_RATE_FLOOR = 1e-8
_TRUNC_BUDGET = 10_000
_LATENT_TARGET_ACCEPT = 0.4
_ADAPT_WINDOW = 100


@dataclass(frozen=True)
class CirParams:
    """Drift level alpha, mean-reversion speed beta, diffusion variance sigma2."""

    alpha: float
    beta: float
    sigma2: float

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0 and self.sigma2 > 0):
            raise DataError("CIR parameters must all be positive")
        if not self.feller_satisfied():
            warnings.warn(
                f"Feller condition violated (alpha={self.alpha} <= sigma2/2="
                f"{self.sigma2 / 2}); paths rely on the positivity floor",
                stacklevel=2,
            )

    @property
    def long_run_rate(self):
        return self.alpha / self.beta

    def feller_satisfied(self):
        return self.alpha > self.sigma2 / 2.0


@dataclass(frozen=True)
class CirHyper:
    """Priors: InverseGamma(upsilon0, beta0) on sigma^2, N(mu0, precision0^-1 I)
    on (alpha, beta) truncated to the positive quadrant."""

    upsilon0: float = 2.1
    beta0: float = 3.0
    mu0: tuple = (0.0, 0.0)
    precision0: float = 10.0

    def __post_init__(self):
        if not (self.upsilon0 > 0 and self.beta0 > 0 and self.precision0 > 0):
            raise DataError("CIR hyperparameters must be positive")


@dataclass(frozen=True)
class RateSeries:
    """Uniformly spaced positive short-rate observations."""

    times: np.ndarray
    rates: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float).ravel()
        r = np.asarray(self.rates, dtype=float).ravel()
        if t.size != r.size:
            raise DataError("times and rates must have equal length")
        if t.size < 2:
            raise DataError("rate series needs at least 2 observations")
        gaps = np.diff(t)
        if np.any(gaps <= 0):
            raise DataError("times must be strictly increasing")
        if np.max(gaps) - np.min(gaps) > 1e-6 * np.mean(gaps):
            raise DataError("rate series must be uniformly spaced")
        if np.any(r <= 0) or not np.all(np.isfinite(r)):
            raise DataError("rates must be positive and finite")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "rates", r)

    @property
    def delta_t(self):
        return float(self.times[1] - self.times[0])

    def __len__(self):
        return self.times.size


class AugmentedPaths:
    """Observations with M latent interior points pinned between each pair.

    Stored flat: gap t occupies slice [t*(M+1), (t+1)*(M+1)] with the
    observations at indices that are multiples of M+1.
    """

    def __init__(self, observations, interior):
        obs = np.asarray(observations, dtype=float).ravel()
        inner = np.asarray(interior, dtype=float)
        if inner.ndim != 2 or inner.shape[0] != obs.size - 1:
            raise DataError("interior must be (n_gaps, M)")
        if np.any(obs <= 0) or (inner.size and np.any(inner <= 0)):
            raise DataError("augmented path values must be positive")
        self.m = inner.shape[1]
        step = self.m + 1
        flat = np.empty((obs.size - 1) * step + 1)
        flat[::step] = obs
        for j in range(self.m):
            flat[j + 1 :: step][: obs.size - 1] = inner[:, j]
        self.flat = flat
        self.n_obs = obs.size

    @classmethod
    def linear_interpolation(cls, observations, m):
        obs = np.asarray(observations, dtype=float).ravel()
        frac = (np.arange(1, m + 1) / (m + 1))[None, :]
        inner = obs[:-1, None] * (1 - frac) + obs[1:, None] * frac
        return cls(obs, inner)

    @property
    def observations(self):
        return self.flat[:: self.m + 1]

    @property
    def interior_indices(self):
        idx = np.arange(self.flat.size)
        return idx[idx % (self.m + 1) != 0]


def euler_step(r, params, delta, eps):
    """One Euler-Maruyama step, reflected at a small positive floor."""
    r = np.asarray(r, dtype=float)
    out = r + (params.alpha - params.beta * r) * delta + np.sqrt(
        params.sigma2 * delta * np.maximum(r, 0.0)
    ) * eps
    out = np.maximum(out, _RATE_FLOOR)
    return float(out) if out.ndim == 0 else out


def simulate(params, r0, n_steps, delta, rng, n_paths=1):
    """Euler paths from r0: array (n_paths, n_steps + 1) including r0."""
    if not r0 > 0:
        raise DataError("initial rate must be positive")
    paths = np.empty((n_paths, n_steps + 1))
    paths[:, 0] = r0
    for j in range(n_steps):
        eps = rng.standard_normal(n_paths)
        paths[:, j + 1] = euler_step(paths[:, j], params, delta, eps)
    return paths


def sufficient_stats(paths):
    """(A, B, C, D) sums over all consecutive augmented pairs.

    With d_j = r_j - r_{j+1}: A = sum 1/r_j, B = sum r_j, C = -sum d_j/r_j,
    D = sum d_j, each over the (n_obs-1)*(M+1) left endpoints.
    """
    flat = paths.flat if isinstance(paths, AugmentedPaths) else np.asarray(paths, float)
    if np.any(flat <= 0):
        raise DataError("augmented path values must be positive")
    left = flat[:-1]
    d = left - flat[1:]
    return (
        float(np.sum(1.0 / left)),
        float(np.sum(left)),
        float(-np.sum(d / left)),
        float(np.sum(d)),
    )


@dataclass
class CirPosterior:
    """Retained parameter draws plus the settings that produced them."""

    draws: np.ndarray  # columns alpha, beta, sigma2
    m: int
    delta: float
    delta_t: float
    n_iter: int
    burn_in: int
    seed: int | None
    latent_acceptance: float = math.nan

    @property
    def alpha(self):
        return self.draws[:, 0]

    @property
    def beta(self):
        return self.draws[:, 1]

    @property
    def sigma2(self):
        return self.draws[:, 2]

    def mean_params(self):
        mean = self.draws.mean(axis=0)
        return CirParams(alpha=mean[0], beta=mean[1], sigma2=mean[2])


def _draw_psi(stats, k_terms, sigma2, delta, hyper, rng):
    """Positive-quadrant truncated draw of (alpha, beta) from the derived
    bivariate-normal conditional; rejection from the unconstrained law."""
    a, b, c, d = stats
    prec_lik = (delta / sigma2) * np.array([[a, -k_terms], [-k_terms, b]])
    prec_post = np.diag([hyper.precision0, hyper.precision0]) + prec_lik
    rhs = hyper.precision0 * np.asarray(hyper.mu0) + np.array([c, d]) / sigma2
    mean = np.linalg.solve(prec_post, rhs)
    cov = np.linalg.inv(prec_post)
    chol = np.linalg.cholesky(cov)
    tries = 0
    while tries < _TRUNC_BUDGET:
        batch = 64
        z = mean[None, :] + rng.standard_normal((batch, 2)) @ chol.T
        ok = np.nonzero((z[:, 0] > 0) & (z[:, 1] > 0))[0]
        if ok.size:
            return z[ok[0]]
        tries += batch
    raise SamplerError(
        "positive-quadrant rejection budget exhausted: "
        f"conditional mean {mean}, sigma2 {sigma2:.3e}"
    )


def _draw_sigma2(flat, alpha, beta, delta, hyper, rng):
    """Conjugate inverse-gamma draw given parameters and the full path."""
    left = flat[:-1]
    resid = flat[1:] - left - (alpha - beta * left) * delta
    shape = hyper.upsilon0 + left.size / 2.0
    scale = hyper.beta0 + float(np.sum(resid**2 / (2.0 * delta * left)))
    return 1.0 / rng.gamma(shape, 1.0 / scale)


def _path_log_likelihood(flat, alpha, beta, sigma2, delta):
    """Log density of every consecutive transition along the flat path."""
    left = flat[:-1]
    resid = flat[1:] - left - (alpha - beta * left) * delta
    return float(
        np.sum(-0.5 * np.log(sigma2 * delta * left) - resid**2 / (2.0 * sigma2 * delta * left))
    )


def _rescale_move(flat, anchors, interior, alpha, beta, sigma2, tau, hyper,
                  delta, rng):
    """Joint move scaling sigma2 by c and interior deviations by sqrt(c).

    The variance and the roughness of the latent bridge are tightly coupled:
    conditional updates leave their common scale as a slow mode.  Writing the
    state as (log sigma2, deviations / sigma) turns this proposal into a plain
    symmetric random walk on log sigma2 with the standardized deviations held
    fixed, so the acceptance ratio is the posterior ratio times
    c^(1 + n_interior/2).  Returns (sigma2, accepted).
    """
    c = math.exp(tau * rng.standard_normal())
    dev = flat[interior] - anchors
    prop = anchors + math.sqrt(c) * dev
    if np.any(prop <= 0):
        return sigma2, False
    sigma2_new = c * sigma2
    new_flat = flat.copy()
    new_flat[interior] = prop
    log_acc = (
        _path_log_likelihood(new_flat, alpha, beta, sigma2_new, delta)
        - _path_log_likelihood(flat, alpha, beta, sigma2, delta)
        - (hyper.upsilon0 + 1.0) * math.log(c)
        - hyper.beta0 * (1.0 / sigma2_new - 1.0 / sigma2)
        + (1.0 + interior.size / 2.0) * math.log(c)
    )
    if math.log(rng.uniform()) < log_acc:
        flat[interior] = prop
        return sigma2_new, True
    return sigma2, False


def _latent_log_target(x, left, right, alpha, beta, sigma2, delta):
    """Unnormalized log density of interior value x given its neighbors:
    the product of the two adjacent Euler transitions."""
    mu_l = left + (alpha - beta * left) * delta
    resid_r = right - x - (alpha - beta * x) * delta
    return (
        -((x - mu_l) ** 2) / (2.0 * sigma2 * delta * left)
        - resid_r**2 / (2.0 * sigma2 * delta * x)
        - 0.5 * np.log(x)
    )


def _update_latent(flat, parity_sets, scale, alpha, beta, sigma2, delta, rng):
    """Checkerboard random-walk Metropolis over interior points.

    Same-parity points have disjoint neighborhoods, so each half updates
    in one vectorized sweep.  Returns (accepted, proposed).
    """
    accepted = 0
    proposed = 0
    for idx in parity_sets:
        if idx.size == 0:
            continue
        x = flat[idx]
        left = flat[idx - 1]
        right = flat[idx + 1]
        prop = x + scale * rng.standard_normal(idx.size)
        valid = prop > 0
        log_acc = np.full(idx.size, -np.inf)
        if np.any(valid):
            cur = _latent_log_target(x[valid], left[valid], right[valid],
                                     alpha, beta, sigma2, delta)
            new = _latent_log_target(prop[valid], left[valid], right[valid],
                                     alpha, beta, sigma2, delta)
            log_acc[valid] = new - cur
        accept = np.log(rng.uniform(size=idx.size)) < log_acc
        flat[idx[accept]] = prop[accept]
        accepted += int(np.sum(accept))
        proposed += idx.size
    return accepted, proposed


def gibbs_fit(series, m=20, hyper=None, n_iter=15_000, burn_in=5_000,
              thin=1, seed=0):
    """Posterior over (alpha, beta, sigma2) by blocked Gibbs with latent
    path augmentation.

    The augmentation step Delta = Delta_t/(m+1) with Delta_t taken from
    the series spacing (a plain array is wrapped with unit spacing).  The
    latent proposal scale is tuned toward 0.4 acceptance during burn-in
    and frozen afterwards.
    """
    if not isinstance(series, RateSeries):
        series = RateSeries(np.arange(len(series), dtype=float), series)
    if len(series) < 3:
        raise DataError("gibbs_fit needs at least 3 observations")
    if m < 0:
        raise DataError("augmentation level m must be >= 0")
    if burn_in >= n_iter:
        raise DataError("burn_in must be smaller than n_iter")
    hyper = hyper or CirHyper()
    rng = np.random.default_rng(seed)
    delta_t = series.delta_t
    delta = delta_t / (m + 1)

    paths = AugmentedPaths.linear_interpolation(series.rates, m)
    flat = paths.flat
    interior = paths.interior_indices
    anchors = flat[interior].copy()
    parity_sets = (interior[interior % 2 == 0], interior[interior % 2 == 1])

    alpha, beta = max(float(np.mean(series.rates)), 0.1), 1.0
    # quadratic-variation start: E[(dr)^2] ~ sigma^2 r dt near the truth,
    # which spares the latent block a long descent from the prior scale
    increments = np.diff(series.rates)
    sigma2 = max(
        float(np.sum(increments**2) / (delta_t * np.sum(series.rates[:-1]))), 1e-12
    )
    k_terms = flat.size - 1
    if m > 0:
        # roughen the interpolated bridge so its quadratic variation starts
        # near sigma2 rather than zero; a smooth start biases early sigma2
        # draws low and the coupled latent/volatility block climbs out slowly
        jitter = rng.normal(0.0, np.sqrt(0.5 * sigma2 * delta * flat[interior]))
        flat[interior] = np.maximum(flat[interior] + jitter, _RATE_FLOOR)
    conditional_sd = math.sqrt(0.5 * sigma2 * delta * float(np.mean(series.rates)))
    scale = max(2.4 * conditional_sd, 1e-6)
    tau = 0.1

    n_keep = (n_iter - burn_in + thin - 1) // thin
    draws = np.empty((n_keep, 3))
    kept = 0
    acc_window = prop_window = 0
    acc_total = prop_total = 0
    rescale_window = np.zeros(2)

    for it in range(n_iter):
        if m > 0:
            acc, prop = _update_latent(flat, parity_sets, scale,
                                       alpha, beta, sigma2, delta, rng)
            sigma2, moved = _rescale_move(flat, anchors, interior, alpha, beta,
                                          sigma2, tau, hyper, delta, rng)
            rescale_window += (moved, 1)
            if it < burn_in:
                acc_window += acc
                prop_window += prop
                if (it + 1) % _ADAPT_WINDOW == 0:
                    rate = acc_window / prop_window
                    scale *= math.exp(rate - _LATENT_TARGET_ACCEPT)
                    acc_window = prop_window = 0
                    tau *= math.exp(rescale_window[0] / rescale_window[1] - 0.44)
                    rescale_window[:] = 0.0
            else:
                acc_total += acc
                prop_total += prop
        stats = sufficient_stats(flat)
        alpha, beta = _draw_psi(stats, k_terms, sigma2, delta, hyper, rng)
        sigma2 = _draw_sigma2(flat, alpha, beta, delta, hyper, rng)
        if it >= burn_in and (it - burn_in) % thin == 0:
            draws[kept] = (alpha, beta, sigma2)
            kept += 1

    return CirPosterior(
        draws=draws[:kept],
        m=m,
        delta=delta,
        delta_t=delta_t,
        n_iter=n_iter,
        burn_in=burn_in,
        seed=seed,
        latent_acceptance=(acc_total / prop_total) if prop_total else math.nan,
    )


def forecast(posterior, r0, horizon_steps, delta, rng=None, max_draws=None):
    """One Euler path per retained posterior draw, starting at r0.

    Returns (n_draws, horizon_steps + 1) including the initial rate as
    the first column.  All paths stay strictly positive via the step
    floor.
    """
    if not r0 > 0:
        raise DataError("initial rate must be positive")
    rng = rng or np.random.default_rng(0)
    draws = posterior.draws
    if max_draws is not None and draws.shape[0] > max_draws:
        idx = np.linspace(0, draws.shape[0] - 1, max_draws).astype(int)
        draws = draws[idx]
    n = draws.shape[0]
    paths = np.empty((n, horizon_steps + 1))
    paths[:, 0] = r0
    alpha, beta, sigma2 = draws[:, 0], draws[:, 1], draws[:, 2]
    for j in range(horizon_steps):
        r = paths[:, j]
        eps = rng.standard_normal(n)
        nxt = r + (alpha - beta * r) * delta + np.sqrt(sigma2 * delta * r) * eps
        paths[:, j + 1] = np.maximum(nxt, _RATE_FLOOR)
    return paths
