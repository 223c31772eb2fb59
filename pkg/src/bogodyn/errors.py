"""Exception types raised across the package."""


class BogodynError(Exception):
    """Base class for all package errors."""


class BasisMismatchError(BogodynError, ValueError):
    """Two objects were built on incompatible bases."""


class BudgetExceededError(BogodynError):
    """A requested basis or operator would exceed the configured memory budget."""


class QuadratureError(BogodynError):
    """Adaptive quadrature failed to reach the requested tolerance."""


class StepSizeError(BogodynError):
    """A halved-step re-run disagreed with the nominal run beyond tolerance."""


class NotNormalizedError(BogodynError, ValueError):
    pass


class NotPureError(BogodynError, ValueError):
    """A pair (gamma, alpha) does not satisfy the purity relation."""


class CutoffError(BogodynError):
    """The Fock cutoff is too small for the requested state."""


class InadmissibleError(BogodynError, ValueError):
    """The premise K H^-1 K* <= H of the ground-state bound is violated."""

    def __init__(self, message, margin):
        super().__init__(message)
        self.margin = margin


class NotOrthogonalError(BogodynError, ValueError):
    """Excitation blocks are not orthogonal to the condensate."""


class ConfigError(BogodynError, ValueError):
    pass
