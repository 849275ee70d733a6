"""Exception hierarchy shared by all modules."""


class FluxTorusError(Exception):
    """Base class for library errors."""


class GeometryError(FluxTorusError, ValueError):
    """Invalid or degenerate torus geometry."""


class DenseLimitError(FluxTorusError):
    """Requested dense representation exceeds the configured dimension limit."""


class ChargeViolationError(FluxTorusError):
    """A term does not commute with the total charge."""


class ModelSpecError(FluxTorusError, ValueError):
    """Inconsistent model parameters (e.g. non-quantized background flux)."""


class ConsistencyError(FluxTorusError):
    """An identity that must hold exactly was violated beyond tolerance."""


class NearDegeneracyError(FluxTorusError):
    """Ground state is (numerically) degenerate where a gap was required."""


class GapError(FluxTorusError):
    """Spectral gap below the threshold needed by an operation."""


class ClusterError(FluxTorusError):
    """Spectral cluster boundary is ambiguous."""


class RefineGridError(FluxTorusError):
    """A flux plaquette carries a Berry flux too large for the plaquette method."""

    def __init__(self, message, plaquette=None):
        super().__init__(message)
        self.plaquette = plaquette


class ToleranceNotMetError(FluxTorusError):
    """Numerical procedure did not reach its declared tolerance."""

    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved


class FitUndeterminedError(FluxTorusError):
    """Not enough informative samples to perform a fit."""
