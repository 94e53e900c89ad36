"""Exception hierarchy shared by all sulfursense modules."""


class SulfurSenseError(Exception):
    """Base class for every error raised by the package."""


class DomainError(SulfurSenseError, ValueError):
    """An argument lies outside the domain of a model."""


class SolverError(SulfurSenseError, RuntimeError):
    """A numerical solve failed to converge."""

    def __init__(self, message, residual=None):
        super().__init__(message if residual is None else f"{message} (residual {residual:.3e})")
        self.residual = residual


class ConfigurationError(SulfurSenseError, ValueError):
    """A scene or simulation configuration violates a resolution or schema rule."""


class InstabilityError(SulfurSenseError, RuntimeError):
    """FDTD fields diverged."""


class OutOfBandError(SulfurSenseError, ValueError):
    """Requested frequencies fall outside the excited band."""


class EdgeDipError(SulfurSenseError, ValueError):
    """The reflection minimum sits on the boundary of the sweep."""


class RangeError(SulfurSenseError, ValueError):
    """A frequency lies outside the span of a trace."""


class TouchstoneError(SulfurSenseError, ValueError):
    """Malformed Touchstone content."""

    def __init__(self, message, lineno=None):
        prefix = f"line {lineno}: " if lineno is not None else ""
        super().__init__(prefix + message)
        self.lineno = lineno


class CalibrationError(SulfurSenseError, ValueError):
    """A calibration curve is not strictly monotone or otherwise invalid."""
