"""Exception hierarchy shared across the package."""


class ConvMgpError(Exception):
    """Base class for all errors raised by this package."""


class NotPositiveDefinite(ConvMgpError):
    """Matrix could not be factorized even after maximal diagonal jitter."""


class DimensionMismatch(ConvMgpError):
    """Operands have incompatible shapes."""


class NonIntegrableKernel(ConvMgpError):
    """Smoothing kernel has a zero or non-finite scale parameter."""


class NonFiniteObjective(ConvMgpError):
    """Objective evaluated to NaN or infinity."""


class UnsupportedPair(ConvMgpError):
    """Cross-covariance requested between kernels of different families."""


class InvalidTarget(ConvMgpError):
    """Requested target output index does not exist in the model."""


class WrongTopology(ConvMgpError):
    """Operation requires a different latent structure."""


class InvalidPenaltyConfig(ConvMgpError):
    """Penalty parameters are outside their admissible ranges."""


class AllRestartsFailed(ConvMgpError):
    """Every optimizer restart ended with a non-finite or infeasible state."""


class GradientCheckFailed(ConvMgpError):
    """Analytic gradient disagrees with the finite-difference reference."""


class InsufficientData(ConvMgpError):
    """Not enough observations for the requested split or fit."""


class EmptyExpertSet(ConvMgpError):
    """Prediction fusion called with no experts."""


class DegenerateWeights(ConvMgpError):
    """Expert weights are negative or sum to zero."""


class EmptyTestSet(ConvMgpError):
    """Risk evaluation called with no held-out points."""


class LengthMismatch(ConvMgpError):
    """Paired sequences differ in length."""


class ParseError(ConvMgpError):
    """Malformed input file.

    Carries the 1-based line number when one is known.
    """

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class EmptyFile(ConvMgpError):
    """Input file contains no data rows."""
