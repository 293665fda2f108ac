"""
Effective tensor, Voigt-Reuss bounds and the matching objective.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from core.coeff import SigmaPair
from core.errors import ExpressionEvaluationError
from core.fem import CellSolutions, element_coefficients
from core.mesh import CellMesh
from core.specs import CellCase, ValidationError


logger = logging.getLogger(__name__)

ASYMMETRY_WARN = 1e-12
BOUNDS_TOL = 1e-6


@dataclass(frozen=True)
class EffectiveTensor:
    """
    Homogenized conductivity A0.

    Attributes:
        matrix: Symmetrized 2 x 2 tensor
        case: Mixture or perforated
        lower: Reuss bound (mixture only)
        upper: Voigt bound (mixture only)
        asymmetry: Raw |a12 - a21| before symmetrization
        material_fraction: Measure of the meshed domain (1 - |omega| when perforated)
    """
    matrix: np.ndarray
    case: CellCase
    lower: Optional[float] = None
    upper: Optional[float] = None
    asymmetry: float = 0.0
    material_fraction: float = 1.0

    @property
    def a11(self) -> float:
        return float(self.matrix[0, 0])

    @property
    def a12(self) -> float:
        return float(self.matrix[0, 1])

    @property
    def a21(self) -> float:
        return float(self.matrix[1, 0])

    @property
    def a22(self) -> float:
        return float(self.matrix[1, 1])

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)

    def to_dict(self) -> Dict[str, Optional[float]]:
        return {
            "a11": self.a11,
            "a12": self.a12,
            "a22": self.a22,
            "voigt_upper": self.upper,
            "reuss_lower": self.lower,
        }


@dataclass(frozen=True)
class TargetTensor:
    """Symmetric target B."""
    matrix: np.ndarray

    @classmethod
    def from_entries(
        cls,
        b11: float,
        b12: float,
        b22: float,
        b21: Optional[float] = None
    ) -> "TargetTensor":
        """
        Raises:
            ValidationError: If b21 is given and differs from b12
        """
        if b21 is not None and b21 != b12:
            raise ValidationError(f"target must be symmetric: b12={b12}, b21={b21}")
        return cls(np.array([[b11, b12], [b12, b22]], dtype=float))

    @classmethod
    def from_matrix(cls, matrix) -> "TargetTensor":
        m = np.asarray(matrix, dtype=float)
        return cls.from_entries(m[0, 0], m[0, 1], m[1, 1], b21=m[1, 0])


def corrector_gradients(mesh: CellMesh, solutions: CellSolutions) -> np.ndarray:
    """
    Element gradients of phi_i = w_i + x_i.

    Returns:
        Array of shape (2, nt, 2): e_i + grad w_i on every triangle
    """
    grads = mesh.hat_gradients
    dofs = mesh.triangle_dofs
    out = np.empty((2, mesh.triangle_count, 2))
    for i in range(2):
        out[i] = np.einsum("ta,tad->td", solutions.w[i][dofs], grads)
        out[i, :, i] += 1.0
    return out


def voigt_reuss_bounds(mesh: CellMesh, sigma: SigmaPair, case: CellCase) -> Tuple[float, float]:
    """
    Arithmetic (upper) and harmonic (lower) means of sigma over the cell.

    Raises:
        ValueError: For the perforated case, where the bounds do not apply
        ExpressionEvaluationError: If sigma is not finite
    """
    if case != CellCase.MIXTURE:
        raise ValueError("Voigt-Reuss bounds apply to the mixture case only")
    mean_sigma = element_coefficients(mesh, sigma)
    mean_inverse = element_coefficients(mesh, sigma, power=-1.0)
    if np.any(mean_sigma <= 0.0):
        raise ExpressionEvaluationError("sigma is not positive on the mesh")
    upper = float(mesh.areas @ mean_sigma)
    lower = float(1.0 / (mesh.areas @ mean_inverse))
    return lower, upper


def effective_tensor(
    mesh: CellMesh,
    sigma: SigmaPair,
    solutions: CellSolutions,
    case: CellCase
) -> EffectiveTensor:
    """
    a_ij = int sigma <e_i + grad w_i, e_j + grad w_j> with the assembly quadrature.

    The result is symmetrized; the raw asymmetry is kept as a diagnostic.
    """
    weights = element_coefficients(mesh, sigma) * mesh.areas
    phi_grads = corrector_gradients(mesh, solutions)
    raw = np.einsum("t,itd,jtd->ij", weights, phi_grads, phi_grads)
    asymmetry = abs(raw[0, 1] - raw[1, 0])
    scale = max(abs(raw[0, 0]), abs(raw[1, 1]))
    if asymmetry > ASYMMETRY_WARN * scale:
        logger.warning("Raw tensor asymmetry %.3e exceeds %.0e relative", asymmetry, ASYMMETRY_WARN)
    matrix = 0.5 * (raw + raw.T)

    lower = upper = None
    if case == CellCase.MIXTURE:
        lower, upper = voigt_reuss_bounds(mesh, sigma, case)
        eig = np.linalg.eigvalsh(matrix)
        if eig[0] < lower - BOUNDS_TOL or eig[1] > upper + BOUNDS_TOL:
            logger.warning(
                "Eigenvalues %s leave the Voigt-Reuss interval [%.6f, %.6f]", eig, lower, upper
            )

    tensor = EffectiveTensor(
        matrix=matrix,
        case=case,
        lower=lower,
        upper=upper,
        asymmetry=float(asymmetry),
        material_fraction=float(mesh.areas.sum()),
    )
    logger.info("Effective tensor a11=%.10f a12=%.3e a22=%.10f", tensor.a11, tensor.a12, tensor.a22)
    return tensor


def matching_objective(tensor, target) -> Tuple[float, np.ndarray]:
    """
    J = 0.5 * sum_ij (a_ij - b_ij)^2.

    Args:
        tensor: EffectiveTensor or 2 x 2 array
        target: TargetTensor or 2 x 2 array

    Returns:
        Tuple (J, A0 - B)
    """
    a = tensor.matrix if isinstance(tensor, EffectiveTensor) else np.asarray(tensor, dtype=float)
    b = target.matrix if isinstance(target, TargetTensor) else np.asarray(target, dtype=float)
    residual = a - b
    return float(0.5 * np.sum(residual ** 2)), residual


def check_target_admissible(target: TargetTensor, lower: float, upper: float) -> bool:
    """Warn when an eigenvalue of B lies outside the Voigt-Reuss interval."""
    eig = np.linalg.eigvalsh(target.matrix)
    ok = bool(eig[0] >= lower and eig[1] <= upper)
    if not ok:
        logger.warning(
            "Target eigenvalues %s outside [%.6f, %.6f]; J cannot reach zero", eig, lower, upper
        )
    return ok
