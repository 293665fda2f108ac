"""
Preconditioners for the periodic cell systems.

All preconditioners must inherit from BasePreconditioner. The conjugate
gradient loop in core.fem only calls `apply`, so a hierarchical variant can
be plugged in without touching the solver.
"""

from abc import ABC, abstractmethod

import numpy as np
import scipy.sparse as sp

from core.errors import SolverError


class BasePreconditioner(ABC):
    """Abstract symmetric positive definite approximation of A^-1."""

    @abstractmethod
    def apply(self, residual: np.ndarray) -> np.ndarray:
        """
        Apply the preconditioner to a residual vector.

        Args:
            residual: Vector over the periodic degrees of freedom

        Returns:
            Preconditioned residual z = M^-1 r
        """
        pass


class IdentityPreconditioner(BasePreconditioner):
    """No preconditioning; useful as a baseline in tests."""

    def apply(self, residual: np.ndarray) -> np.ndarray:
        return residual.copy()


class JacobiPreconditioner(BasePreconditioner):
    """Diagonal scaling by the inverse of diag(A)."""

    def __init__(self, matrix: sp.spmatrix):
        diagonal = np.asarray(matrix.diagonal(), dtype=float)
        if np.any(diagonal <= 0.0):
            raise SolverError(
                f"Jacobi preconditioner needs a positive diagonal, min is {diagonal.min():.3e}"
            )
        self.inverse_diagonal = 1.0 / diagonal

    def apply(self, residual: np.ndarray) -> np.ndarray:
        return self.inverse_diagonal * residual


PRECONDITIONERS = {
    "jacobi": JacobiPreconditioner,
    "none": lambda matrix: IdentityPreconditioner(),
}


def get_preconditioner(name: str, matrix: sp.spmatrix) -> BasePreconditioner:
    """
    Build a preconditioner by name.

    Raises:
        ValueError: If the name is not registered
    """
    if name not in PRECONDITIONERS:
        raise ValueError(f"Preconditioner '{name}' not found. Available: {list(PRECONDITIONERS.keys())}")
    return PRECONDITIONERS[name](matrix)
