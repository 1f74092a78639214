"""MCMC convergence diagnostics: Geweke z, BGR R-hat, HPD intervals.

All routines are pure functions of the supplied draws and accept either
plain arrays or :class:`Chain` objects, so they can run in parallel
across parameters.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import DiagnosticError

_MIN_DIAG_LEN = 10


@dataclass
class Chain:
    """Ordered draws of one scalar parameter from one sampler run."""

    draws: np.ndarray
    chain_id: int = 0
    seed: int | None = None

    def __post_init__(self):
        self.draws = np.asarray(self.draws, dtype=float).ravel()

    def __len__(self):
        return self.draws.size


def _draws(chain):
    x = chain.draws if isinstance(chain, Chain) else np.asarray(chain, dtype=float)
    x = np.ravel(x)
    if x.size < _MIN_DIAG_LEN:
        raise DiagnosticError(
            f"chain too short for diagnostics: {x.size} < {_MIN_DIAG_LEN}"
        )
    if not np.all(np.isfinite(x)):
        raise DiagnosticError("chain contains non-finite draws")
    return x


def _batch_means_se2(window):
    """Squared standard error of the window mean via non-overlapping batch
    means with batch count floor(sqrt(len)); robust to serial dependence."""
    n = window.size
    n_batches = int(math.floor(math.sqrt(n)))
    batch_size = n // n_batches
    trimmed = window[: n_batches * batch_size].reshape(n_batches, batch_size)
    means = trimmed.mean(axis=1)
    return float(np.var(means, ddof=1) / n_batches)


def geweke(chain, first_frac=0.1, last_frac=0.5):
    """Geweke convergence z-score comparing early and late window means.

    Windows are the first ``first_frac`` and last ``last_frac`` of the
    chain; standard errors come from batch means so the score stays
    calibrated under autocorrelation.
    """
    x = _draws(chain)
    if not (0 < first_frac and 0 < last_frac and first_frac + last_frac <= 1):
        raise DiagnosticError("window fractions must be positive and sum to <= 1")
    n = x.size
    n_a = int(math.floor(first_frac * n))
    n_b = int(math.floor(last_frac * n))
    if n_a < _MIN_DIAG_LEN or n_b < _MIN_DIAG_LEN:
        raise DiagnosticError(
            f"windows of {n_a} and {n_b} draws are too short (need >= {_MIN_DIAG_LEN})"
        )
    a, b = x[:n_a], x[n - n_b :]
    if np.var(a) == 0.0 or np.var(b) == 0.0:
        raise DiagnosticError("degenerate chain: zero variance in a Geweke window")
    se2_a, se2_b = _batch_means_se2(a), _batch_means_se2(b)
    return float((a.mean() - b.mean()) / math.sqrt(se2_a + se2_b))


@dataclass
class BGRResult:
    """Scalar potential-scale-reduction estimate with a convergence flag."""

    rhat: float
    converged: bool
    threshold: float = 1.1


def bgr(chains, threshold=1.1):
    """Brooks-Gelman-Rubin R-hat across >= 2 equal-length chains.

    R-hat = sqrt(((n-1)/n * W + B/n) / W) with W the mean within-chain
    variance and B/n the variance of the chain means.
    """
    arrs = [_draws(c) for c in chains]
    if len(arrs) < 2:
        raise DiagnosticError("bgr needs at least 2 chains")
    n = arrs[0].size
    if any(a.size != n for a in arrs):
        raise DiagnosticError("bgr chains must have equal length")
    mat = np.stack(arrs)
    w = float(np.mean(np.var(mat, axis=1, ddof=1)))
    if w == 0.0:
        raise DiagnosticError("degenerate chains: zero within-chain variance")
    b_over_n = float(np.var(mat.mean(axis=1), ddof=1))
    rhat = math.sqrt(((n - 1) / n * w + b_over_n) / w)
    return BGRResult(rhat=rhat, converged=rhat < threshold, threshold=threshold)


def hpd(samples, mass=0.95):
    """Shortest contiguous interval holding ceil(mass * n) sorted samples."""
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    n = x.size
    if n == 0:
        raise DiagnosticError("hpd needs at least one sample")
    if not 0 < mass <= 1:
        raise DiagnosticError("mass must lie in (0, 1]")
    k = int(math.ceil(mass * n))
    if k >= n:
        return float(x[0]), float(x[-1])
    widths = x[k - 1 :] - x[: n - k + 1]
    j = int(np.argmin(widths))
    return float(x[j]), float(x[j + k - 1])


@dataclass
class RhatRow:
    iteration: int
    rhat: float
    converged: bool


def rhat_table(chains, n_checkpoints=10, threshold=1.1):
    """R-hat evaluated on growing prefixes of the chains.

    Returns one row per checkpoint so the harness can serialize an
    R-hat-versus-iteration table for external plotting.
    """
    arrs = [_draws(c) for c in chains]
    n = min(a.size for a in arrs)
    lo = max(_MIN_DIAG_LEN, n // n_checkpoints)
    points = np.unique(np.linspace(lo, n, n_checkpoints).astype(int))
    rows = []
    for m in points:
        res = bgr([a[:m] for a in arrs], threshold=threshold)
        rows.append(RhatRow(iteration=int(m), rhat=res.rhat, converged=res.converged))
    return rows


@dataclass
class ChainSummary:
    """Posterior summary of one parameter: moments, HPD, Geweke z."""

    mean: float
    sd: float
    hpd_lo: float
    hpd_hi: float
    geweke_z: float
    n_draws: int
    hpd_mass: float = 0.95


def summarize_chain(chain, hpd_mass=0.95):
    x = _draws(chain)
    lo, hi = hpd(x, hpd_mass)
    return ChainSummary(
        mean=float(x.mean()),
        sd=float(x.std(ddof=1)),
        hpd_lo=lo,
        hpd_hi=hi,
        geweke_z=geweke(x),
        n_draws=int(x.size),
        hpd_mass=hpd_mass,
    )
