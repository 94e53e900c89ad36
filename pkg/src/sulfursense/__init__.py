"""Microwave sensing of elemental sulfur deposits with a patch antenna.

Modules: :mod:`stackup` (analytic and quasi-static resonance model),
:mod:`fdtd` (full-wave solver), :mod:`sparams` (Touchstone and dip
analysis), :mod:`inversion` (calibration curves), :mod:`monitor` (ingest
service) and :mod:`cli`.
"""

from .errors import (
    CalibrationError,
    ConfigurationError,
    DomainError,
    EdgeDipError,
    InstabilityError,
    OutOfBandError,
    RangeError,
    SolverError,
    SulfurSenseError,
    TouchstoneError,
)

__version__ = "0.1.0"

__all__ = [
    "CalibrationError",
    "ConfigurationError",
    "DomainError",
    "EdgeDipError",
    "InstabilityError",
    "OutOfBandError",
    "RangeError",
    "SolverError",
    "SulfurSenseError",
    "TouchstoneError",
    "__version__",
]
