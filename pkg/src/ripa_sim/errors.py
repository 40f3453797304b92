"""Exception hierarchy for the toolkit.

Configuration problems raise ConfigError; everything that can fail during a
computation (instability, undersampling, fit failures, ...) derives from
NumericalError so the CLI can map the two families to distinct exit codes.
"""


class RipaError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(RipaError, ValueError):
    """Invalid geometry/loss configuration; message names the violated rule."""


class NumericalError(RipaError, RuntimeError):
    """Base class for runtime numerical failures."""


class StabilityError(NumericalError):
    """Lens-guide matrix outside the stability region |A+D|/2 < 1."""

    def __init__(self, half_trace):
        self.half_trace = half_trace
        super().__init__(f"unstable ray matrix: |A+D|/2 = {abs(half_trace):.6g} >= 1")


class SamplingError(NumericalError):
    """Grid too coarse / Nyquist violation / aliasing risk."""


class FitError(NumericalError):
    """Nonlinear fit failed to converge or produced unusable parameters."""

    def __init__(self, message, residual=None):
        self.residual = residual
        super().__init__(message)


class AmbiguityError(NumericalError):
    """Fit window or association contains more than one plausible candidate."""


class CollisionError(NumericalError):
    """Two compiled targets map onto the same frequency channel."""

    def __init__(self, message, indices=()):
        self.indices = tuple(indices)
        super().__init__(message)


class ValidityError(NumericalError):
    """Model used outside its documented validity bound."""


class RangeError(NumericalError):
    """Requested value falls outside the representable/physical range."""


class ShapeError(NumericalError):
    """A trace or field does not have the shape an analysis requires."""


class ResourceLimitError(NumericalError):
    """Computation would exceed a configured memory/size cap."""
