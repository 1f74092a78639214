"""Synthetic data generator with a full ground-truth ledger.

Events come from the same hierarchy the panel sampler fits: quarterly
counts are Poisson with a log-linear seasonal intensity, the quarterly
loss total for a cell with n claims is inverse-gamma with shape n*kappa
and scale theta, and that total is split uniformly (Dirichlet weights)
across individual event rows with dates drawn inside the quarter.
Rates come from an Euler scheme on a much finer grid than the output
spacing, then subsampled, so discretisation bias at the weekly scale is
negligible.  Every latent quantity is written to a truth ledger so
recovery tests can compare estimates against what actually generated
the files.
"""

from __future__ import annotations

import datetime as dt
import json
from dataclasses import dataclass

import numpy as np

from ..cir import CirParams, simulate
from ..errors import ConfigError

_FMT = ".12g"
_FINE_SUBSTEPS = 21


def _quarter_bounds(year, quarter):
    first = dt.date(year, 3 * (quarter - 1) + 1, 1)
    if quarter == 4:
        nxt = dt.date(year + 1, 1, 1)
    else:
        nxt = dt.date(year, 3 * quarter + 1, 1)
    return first, nxt - dt.timedelta(days=1)


@dataclass(frozen=True)
class SyntheticSpec:
    """Ground truth for one simulated data set."""

    perils: tuple
    kappa: tuple
    theta: tuple
    alpha: tuple
    beta: float
    start_year: int = 2008
    n_quarters: int = 52
    cir_alpha: float = 3.0299
    cir_beta: float = 3.2694
    cir_sigma2: float = 0.00171
    cir_r0: float = 0.93
    n_rate_obs: int = 626
    rate_start: dt.date = dt.date(2008, 1, 2)
    rate_spacing_days: float = 7.0
    seed: int = 0
    sev_clusters: tuple = None
    count_clusters: tuple = None

    def __post_init__(self):
        n = len(self.perils)
        if n == 0:
            raise ConfigError("synthetic: at least one peril is required")
        if len(set(self.perils)) != n:
            raise ConfigError("synthetic: perils contain duplicates")
        for name in ("kappa", "theta", "alpha"):
            values = getattr(self, name)
            if len(values) != n:
                raise ConfigError(
                    f"synthetic: '{name}' must list one value per peril"
                )
            if any(not v > 0 for v in values):
                raise ConfigError(f"synthetic: '{name}' values must be positive")
        if self.n_quarters < 4:
            raise ConfigError("synthetic: n_quarters must be at least 4")
        if self.n_rate_obs < 2:
            raise ConfigError("synthetic: n_rate_obs must be at least 2")
        if not self.rate_spacing_days > 0:
            raise ConfigError("synthetic: rate_spacing_days must be positive")
        for name in ("sev_clusters", "count_clusters"):
            labels = getattr(self, name)
            if labels is None:
                key = (
                    tuple(zip(self.kappa, self.theta))
                    if name == "sev_clusters"
                    else tuple(self.alpha)
                )
                seen = {}
                derived = tuple(seen.setdefault(k, len(seen)) for k in key)
                object.__setattr__(self, name, derived)
            elif len(labels) != n:
                raise ConfigError(f"synthetic: '{name}' must label every peril")

    @classmethod
    def from_dict(cls, raw):
        if not isinstance(raw, dict):
            raise ConfigError("synthetic section must be an object")
        allowed = {f for f in cls.__dataclass_fields__}
        unknown = sorted(set(raw) - allowed)
        if unknown:
            raise ConfigError(f"synthetic section: unknown keys {unknown}")
        kwargs = dict(raw)
        for name in ("perils", "kappa", "theta", "alpha", "sev_clusters",
                     "count_clusters"):
            if isinstance(kwargs.get(name), list):
                kwargs[name] = tuple(kwargs[name])
        if isinstance(kwargs.get("rate_start"), str):
            try:
                kwargs["rate_start"] = dt.date.fromisoformat(kwargs["rate_start"])
            except ValueError:
                raise ConfigError(
                    f"synthetic: 'rate_start' is not an ISO date: "
                    f"{kwargs['rate_start']!r}"
                ) from None
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(f"synthetic section: {exc}") from None


def generate_synthetic(spec, events_path, rates_path, truth_path):
    """Write events.csv, rates.csv and a JSON truth ledger.

    Returns the (events_path, rates_path, truth_path) triple.  The same
    spec always produces byte-identical files.
    """
    rng = np.random.default_rng(spec.seed)
    n_perils = len(spec.perils)
    quarters = [
        (spec.start_year + t // 4, t % 4 + 1) for t in range(spec.n_quarters)
    ]
    seasons = np.array([q for _, q in quarters], dtype=float)

    lam = np.exp(
        np.asarray(spec.alpha)[:, None] + spec.beta * seasons[None, :]
    )
    counts = rng.poisson(lam)
    losses = np.zeros(counts.shape)

    rows = []
    for i in range(n_perils):
        kappa_i, theta_i = spec.kappa[i], spec.theta[i]
        for t, (year, quarter) in enumerate(quarters):
            n = int(counts[i, t])
            if n == 0:
                continue
            total = theta_i / rng.gamma(n * kappa_i)
            losses[i, t] = total
            parts = total * rng.dirichlet(np.ones(n))
            first, last = _quarter_bounds(year, quarter)
            days = rng.integers(first.toordinal(), last.toordinal() + 1, size=n)
            for day, part in zip(days, parts):
                rows.append((dt.date.fromordinal(int(day)), spec.perils[i], part))
    rows.sort(key=lambda r: (r[0], r[1], r[2]))

    with open(events_path, "w", encoding="utf-8") as fh:
        fh.write("date,peril,loss_millions\n")
        for date, peril, loss in rows:
            fh.write(f"{date.isoformat()},{peril},{format(loss, _FMT)}\n")

    params = CirParams(
        alpha=spec.cir_alpha, beta=spec.cir_beta, sigma2=spec.cir_sigma2
    )
    delta_obs = spec.rate_spacing_days / 365.25
    n_fine = (spec.n_rate_obs - 1) * _FINE_SUBSTEPS
    path = simulate(
        params, spec.cir_r0, n_fine, delta_obs / _FINE_SUBSTEPS, rng
    )[0]
    observed = path[::_FINE_SUBSTEPS]
    spacing = int(round(spec.rate_spacing_days))
    dates = [
        spec.rate_start + dt.timedelta(days=spacing * k)
        for k in range(spec.n_rate_obs)
    ]
    with open(rates_path, "w", encoding="utf-8") as fh:
        fh.write("date,yield_percent\n")
        for date, value in zip(dates, observed):
            fh.write(f"{date.isoformat()},{format(value, _FMT)}\n")

    first_day, _ = _quarter_bounds(*quarters[0])
    _, last_day = _quarter_bounds(*quarters[-1])
    truth = {
        "spec": {
            "perils": list(spec.perils),
            "kappa": [float(v) for v in spec.kappa],
            "theta": [float(v) for v in spec.theta],
            "alpha": [float(v) for v in spec.alpha],
            "beta": float(spec.beta),
            "sev_clusters": list(spec.sev_clusters),
            "count_clusters": list(spec.count_clusters),
            "start_year": spec.start_year,
            "n_quarters": spec.n_quarters,
            "cir": {
                "alpha": spec.cir_alpha,
                "beta": spec.cir_beta,
                "sigma2": spec.cir_sigma2,
                "r0": spec.cir_r0,
                "stationary_mean": spec.cir_alpha / spec.cir_beta,
            },
            "seed": spec.seed,
        },
        "date_range": [first_day.isoformat(), last_day.isoformat()],
        "quarters": [[y, q] for y, q in quarters],
        "counts": counts.tolist(),
        "loss_totals": [[float(v) for v in row] for row in losses],
        "n_events": len(rows),
        "rate_mean": float(observed.mean()),
        "rate_last": float(observed[-1]),
    }
    with open(truth_path, "w", encoding="utf-8") as fh:
        json.dump(truth, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return events_path, rates_path, truth_path
