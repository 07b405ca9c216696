"""Shared exception types."""


class HiggsmeshError(Exception):
    """Base class for all package errors."""


class ComplexFormatError(HiggsmeshError):
    """Malformed complex file (carries the offending line number)."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class RepresentationError(HiggsmeshError):
    """Invalid representation data (shape, determinant or relator residual)."""


class NumericError(HiggsmeshError):
    """Numerical failure: determinant drift, log branch, non-convergence."""


class KarcherConvergenceError(NumericError):
    """Karcher mean iteration failed to converge; carries the last residual."""

    def __init__(self, residual, iterations):
        self.residual = residual
        self.iterations = iterations
        super().__init__(
            f"Karcher mean did not converge after {iterations} iterations "
            f"(last update norm {residual:.3e})"
        )


class LogBranchError(NumericError):
    """Principal matrix logarithm hit the branch cut (eigenvalue near the
    negative real axis). Refining the mesh is the usual remedy."""
