"""Run configuration: a single JSON file drives every pipeline stage.

The configuration is parsed once into a frozen RunConfig and passed to
each stage unchanged.  Stages never read the JSON themselves, so a
config that loads successfully behaves identically whether stages run
one at a time or through the composed pipeline.
"""

from __future__ import annotations

import datetime as dt
import hashlib
import json
from dataclasses import dataclass, field

from ..cir import CirHyper
from ..crm import CrmHyperParams
from ..errors import ConfigError, DataError

_BOND_DEFAULTS = {
    "face": 50.0,
    "recovery": 0.5,
    "threshold_millions": 759.3,
    "maturity_periods": 3,
    "period_years": 1.0,
}
_CRM_MCMC_DEFAULTS = {"n_iter": 40_000, "burn_in": 10_000, "thin": 10, "n_chains": 1}
_CIR_MCMC_DEFAULTS = {"n_iter": 15_000, "burn_in": 5_000, "thin": 5}
_TOP_KEYS = {
    "events_csv",
    "rates_csv",
    "perils",
    "date_range",
    "seed",
    "out_dir",
    "threads",
    "bond",
    "delta0_bps",
    "maturities",
    "n_scenarios",
    "crm",
    "cir",
    "synthetic",
}


def _require(section, key, kind, where):
    if key not in section:
        raise ConfigError(f"{where}: missing required key '{key}'")
    value = section[key]
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if not isinstance(value, kind) or isinstance(value, bool):
        raise ConfigError(f"{where}: '{key}' must be {kind.__name__}")
    return value


def _check_keys(section, allowed, where):
    unknown = sorted(set(section) - set(allowed))
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")


def _parse_date(value, where):
    try:
        return dt.date.fromisoformat(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: expected an ISO date, got {value!r}") from None


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved settings for one pipeline run."""

    events_csv: str
    rates_csv: str
    perils: tuple
    date_start: dt.date
    date_end: dt.date
    seed: int
    out_dir: str
    threads: int
    face: float
    recovery: float
    threshold_millions: float
    maturity_periods: int
    period_years: float
    delta0_bps: float
    maturities: tuple
    n_scenarios: int
    crm_hyper: CrmHyperParams
    crm_mcmc: dict
    cir_m: int
    cir_hyper: CirHyper
    cir_mcmc: dict
    synthetic: dict | None = None
    _canonical: dict = field(default=None, repr=False, compare=False)

    def canonical(self):
        """Plain-JSON echo of every resolved setting, for hashing and
        the run manifest."""
        return json.loads(json.dumps(self._canonical))

    def config_hash(self):
        """sha256 of the canonical settings; stable across processes."""
        blob = json.dumps(self._canonical, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def from_dict(raw, seed=None, out_dir=None, threads=None):
    """Build a RunConfig from a parsed JSON mapping.

    seed, out_dir and threads mirror the command-line overrides and win
    over the file when given.  Unknown keys anywhere are rejected so a
    typo cannot silently fall back to a default.
    """
    if not isinstance(raw, dict):
        raise ConfigError("configuration root must be a JSON object")
    _check_keys(raw, _TOP_KEYS, "config")

    events_csv = _require(raw, "events_csv", str, "config")
    rates_csv = _require(raw, "rates_csv", str, "config")

    perils = raw.get("perils")
    if (
        not isinstance(perils, list)
        or not perils
        or not all(isinstance(p, str) and p for p in perils)
    ):
        raise ConfigError("config: 'perils' must be a non-empty list of names")
    if len(set(perils)) != len(perils):
        raise ConfigError("config: 'perils' contains duplicates")
    if any("," in p or "\n" in p for p in perils):
        raise ConfigError("config: peril names must not contain commas or newlines")

    date_range = raw.get("date_range")
    if not isinstance(date_range, list) or len(date_range) != 2:
        raise ConfigError("config: 'date_range' must be [start, end] ISO dates")
    date_start = _parse_date(date_range[0], "config date_range")
    date_end = _parse_date(date_range[1], "config date_range")
    if date_end < date_start:
        raise ConfigError("config: date_range end precedes start")

    if seed is None:
        seed = raw.get("seed")
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ConfigError("config: 'seed' is mandatory and must be an integer")

    out_dir = out_dir if out_dir is not None else raw.get("out_dir")
    if not isinstance(out_dir, str) or not out_dir:
        raise ConfigError("config: 'out_dir' is required (file key or --out)")

    threads = threads if threads is not None else raw.get("threads", 1)
    if not isinstance(threads, int) or isinstance(threads, bool) or threads < 1:
        raise ConfigError("config: 'threads' must be a positive integer")

    bond = dict(_BOND_DEFAULTS)
    bond_raw = raw.get("bond", {})
    if not isinstance(bond_raw, dict):
        raise ConfigError("config: 'bond' must be an object")
    _check_keys(bond_raw, _BOND_DEFAULTS, "config bond")
    bond.update(bond_raw)
    maturity_periods = bond["maturity_periods"]
    if not isinstance(maturity_periods, int) or maturity_periods < 1:
        raise ConfigError("config bond: 'maturity_periods' must be a positive integer")
    period_years = float(bond["period_years"])
    quarters = period_years * 4.0
    if abs(quarters - round(quarters)) > 1e-9 or round(quarters) < 1:
        raise ConfigError(
            "config bond: 'period_years' must span a whole number of quarters"
        )

    delta0_bps = raw.get("delta0_bps", 250.0)
    if not isinstance(delta0_bps, (int, float)) or isinstance(delta0_bps, bool):
        raise ConfigError("config: 'delta0_bps' must be a number")

    maturities = raw.get("maturities", list(range(1, 11)))
    if (
        not isinstance(maturities, list)
        or not maturities
        or any(not isinstance(m, int) or isinstance(m, bool) or m < 1 for m in maturities)
        or sorted(set(maturities)) != maturities
    ):
        raise ConfigError(
            "config: 'maturities' must be strictly increasing positive integers"
        )

    n_scenarios = raw.get("n_scenarios", 2000)
    if not isinstance(n_scenarios, int) or isinstance(n_scenarios, bool) or n_scenarios < 2:
        raise ConfigError("config: 'n_scenarios' must be an integer of at least 2")

    crm_raw = raw.get("crm", {})
    if not isinstance(crm_raw, dict):
        raise ConfigError("config: 'crm' must be an object")
    _check_keys(crm_raw, {"hyper", "mcmc"}, "config crm")
    try:
        crm_hyper = CrmHyperParams(**crm_raw.get("hyper", {}))
    except (TypeError, DataError) as exc:
        raise ConfigError(f"config crm hyper: {exc}") from None
    crm_mcmc = dict(_CRM_MCMC_DEFAULTS)
    crm_mcmc_raw = crm_raw.get("mcmc", {})
    _check_keys(crm_mcmc_raw, _CRM_MCMC_DEFAULTS, "config crm mcmc")
    crm_mcmc.update(crm_mcmc_raw)

    cir_raw = raw.get("cir", {})
    if not isinstance(cir_raw, dict):
        raise ConfigError("config: 'cir' must be an object")
    _check_keys(cir_raw, {"m", "hyper", "mcmc"}, "config cir")
    cir_m = cir_raw.get("m", 20)
    if not isinstance(cir_m, int) or isinstance(cir_m, bool) or cir_m < 0:
        raise ConfigError("config cir: 'm' must be a non-negative integer")
    try:
        cir_hyper = CirHyper(**{
            key: tuple(value) if isinstance(value, list) else value
            for key, value in cir_raw.get("hyper", {}).items()
        })
    except (TypeError, DataError) as exc:
        raise ConfigError(f"config cir hyper: {exc}") from None
    cir_mcmc = dict(_CIR_MCMC_DEFAULTS)
    cir_mcmc_raw = cir_raw.get("mcmc", {})
    _check_keys(cir_mcmc_raw, _CIR_MCMC_DEFAULTS, "config cir mcmc")
    cir_mcmc.update(cir_mcmc_raw)

    synthetic = raw.get("synthetic")
    if synthetic is not None and not isinstance(synthetic, dict):
        raise ConfigError("config: 'synthetic' must be an object")

    canonical = {
        "events_csv": events_csv,
        "rates_csv": rates_csv,
        "perils": list(perils),
        "date_range": [date_start.isoformat(), date_end.isoformat()],
        "seed": seed,
        "out_dir": out_dir,
        "threads": threads,
        "bond": {
            "face": float(bond["face"]),
            "recovery": float(bond["recovery"]),
            "threshold_millions": float(bond["threshold_millions"]),
            "maturity_periods": maturity_periods,
            "period_years": period_years,
        },
        "delta0_bps": float(delta0_bps),
        "maturities": list(maturities),
        "n_scenarios": n_scenarios,
        "crm": {"hyper": vars(crm_hyper).copy(), "mcmc": dict(crm_mcmc)},
        "cir": {"m": cir_m, "hyper": vars(cir_hyper).copy(), "mcmc": dict(cir_mcmc)},
        "synthetic": synthetic,
    }

    return RunConfig(
        events_csv=events_csv,
        rates_csv=rates_csv,
        perils=tuple(perils),
        date_start=date_start,
        date_end=date_end,
        seed=seed,
        out_dir=out_dir,
        threads=threads,
        face=float(bond["face"]),
        recovery=float(bond["recovery"]),
        threshold_millions=float(bond["threshold_millions"]),
        maturity_periods=maturity_periods,
        period_years=period_years,
        delta0_bps=float(delta0_bps),
        maturities=tuple(maturities),
        n_scenarios=n_scenarios,
        crm_hyper=crm_hyper,
        crm_mcmc=crm_mcmc,
        cir_m=cir_m,
        cir_hyper=cir_hyper,
        cir_mcmc=cir_mcmc,
        synthetic=synthetic,
        _canonical=canonical,
    )


def load_config(path, seed=None, out_dir=None, threads=None):
    """Read a JSON config file and resolve it into a RunConfig."""
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    return from_dict(raw, seed=seed, out_dir=out_dir, threads=threads)
