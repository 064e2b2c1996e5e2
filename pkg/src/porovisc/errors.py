"""Exception hierarchy."""


class PoroviscError(Exception):
    """Base class for all package errors."""


class DegenerateDeformation(PoroviscError):
    """A deformation gradient with det F <= 0 was encountered."""


class InvalidParams(PoroviscError, ValueError):
    """Constitutive parameters outside their admissible range."""


class InversionFailure(PoroviscError):
    """mu = dphi/dc could not be bracketed; the law is not strictly monotone in c."""


class MaxIterationsExceeded(PoroviscError):
    """An iterative solver ran out of iterations.

    ``result`` carries the best iterate so callers can inspect it.
    """

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class FixedPointDiverged(PoroviscError):
    """The diffusion fixed-point residual failed to decrease."""


class ConfigInvalid(PoroviscError, ValueError):
    """A run configuration failed validation."""

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))
