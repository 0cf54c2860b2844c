"""Exception types raised by the analysis routines."""


class IndeterminateStructureError(ValueError):
    """A rank decision fell inside the ambiguity band around the tolerance."""


class NotSeparableError(ValueError):
    """The quadratic form cannot be written as a sum of independent modes."""


class NoDiscreteSpectrumError(ValueError):
    """The form has no discrete real spectrum (unstable or non-separable)."""


class DegenerateRegimeError(ValueError):
    """Raised when a separable construction is requested on the Δ = 0 curve."""


class NotDegenerateError(ValueError):
    """Raised when a degenerate canonical form is requested off the Δ = 0 curve."""


class FockConvergenceError(RuntimeError):
    """Truncated Fock levels moved by more than the tolerance when the cutoff grew."""


class PropagatorOverflowError(OverflowError):
    """The propagator entries exceed the floating point range at the requested time.

    Attributes
    ----------
    horizon : float
        Largest |t| for which the propagator is representable.
    """

    def __init__(self, message, horizon):
        super().__init__(message)
        self.horizon = horizon
