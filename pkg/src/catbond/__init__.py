"""Bayesian catastrophe-bond pricing: loss panels, short rates,
risk-neutral calibration and a file-driven pipeline."""

__version__ = "0.1.0"

from . import cir, crm, diagnostics, distfit, entropy, errors, harness, pricing

__all__ = [
    "cir",
    "crm",
    "diagnostics",
    "distfit",
    "entropy",
    "errors",
    "harness",
    "pricing",
    "__version__",
]
