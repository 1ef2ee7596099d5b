"""Exception and warning types shared by the package."""


class SkeletonDAEError(Exception):
    """Base class for all errors raised by this package."""


class NonFiniteError(SkeletonDAEError, ValueError):
    """An input matrix or vector contains NaN or Inf."""


class SingularError(SkeletonDAEError, ArithmeticError):
    """A matrix that must be invertible is rank deficient at tolerance."""


class NoConvergenceError(SkeletonDAEError, ArithmeticError):
    """The eigenvalue iteration did not converge."""


class ChainMismatchError(SkeletonDAEError, ValueError):
    """A chain does not belong to the problem it is used with, or has the wrong kind."""


class ChainNotRegularError(ChainMismatchError):
    pass


class NotNilpotentError(SkeletonDAEError, ValueError):
    pass


class OrderCapExceededError(SkeletonDAEError, ValueError):
    """A derivative of higher order than the configured cap was requested."""


class StepTooCoarseError(SkeletonDAEError, ArithmeticError):
    """The step-halving error estimate of the integrator exceeds tolerance."""

    def __init__(self, estimate, tolerance):
        super().__init__(
            f"integration error estimate {estimate:.3e} exceeds tolerance {tolerance:.3e}; "
            "reduce the step"
        )
        self.estimate = estimate
        self.tolerance = tolerance


class SpecInvalidError(SkeletonDAEError, ValueError):
    pass


class ParseError(SkeletonDAEError, ValueError):
    """Signal expression could not be parsed.

    ``position`` is the character offset into the source text and
    ``expected`` the set of tokens that would have been accepted there.
    """

    def __init__(self, message, text, position, expected=()):
        self.text = text
        self.position = position
        self.expected = frozenset(expected)
        detail = f"{message} at position {position}"
        if self.expected:
            detail += f" (expected one of: {', '.join(sorted(self.expected))})"
        super().__init__(detail)


class ToleranceAmbiguous(UserWarning):
    """A singular value sits within a factor of 10 of the rank cutoff."""
