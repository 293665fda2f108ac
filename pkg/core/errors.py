"""
Exception hierarchy for the homogenization toolkit.

Every failure the command surface distinguishes has its own class so that
callers can map it to an exit code without inspecting messages.
"""

from typing import Optional


class HomogenizationError(Exception):
    """Base class for all toolkit errors."""
    pass


class InvalidShapeError(HomogenizationError):
    """Raised when a radial shape violates positivity or containment."""
    pass


class ExpressionSyntaxError(HomogenizationError):
    """
    Raised when a coefficient expression cannot be parsed.

    Attributes:
        offset: Byte offset into the source text where parsing failed
    """

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at offset {offset})")
        self.message = message
        self.offset = offset

    def __reduce__(self):
        return type(self), (self.message, self.offset)


class ExpressionEvaluationError(HomogenizationError):
    """Raised on division by zero or non-finite values during evaluation."""
    pass


class MeshError(HomogenizationError):
    """Raised when a patch degenerates or the periodic pairing is inconsistent."""
    pass


class SolverError(HomogenizationError):
    """
    Raised when conjugate gradients fails to converge.

    Attributes:
        residual: Final residual norm
        iterations: Number of iterations performed
    """

    def __init__(self, message: str, residual: Optional[float] = None, iterations: int = 0):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations

    def __reduce__(self):
        return type(self), (self.args[0], self.residual, self.iterations)
