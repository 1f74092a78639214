"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes: ConfigError -> 2,
DataError -> 3, NumericalError (and subclasses) -> 4.
"""


class CatbondError(Exception):
    """Base class for all package errors."""


class ConfigError(CatbondError):
    """Invalid or inconsistent run configuration."""


class DataError(CatbondError):
    """Malformed or out-of-contract input data."""


class NumericalError(CatbondError):
    """A numerical routine failed (solver, sampler, calibration)."""


class CalibrationError(NumericalError):
    """Entropy calibration has no attainable solution."""


class SamplerError(NumericalError):
    """An MCMC sampler violated one of its operating guarantees."""


class SolverError(NumericalError):
    """A root solver could not bracket or converge."""


class DiagnosticError(NumericalError):
    """A convergence diagnostic is undefined for the given chain."""
