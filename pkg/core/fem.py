"""
Piecewise-linear finite elements for the periodic cell problems.

For each direction i the corrector w_i solves

    int sigma (e_i + grad w_i) . grad v = 0    for all periodic v,

over the whole cell (mixture) or over the matrix around the hole
(perforated). In the perforated case the Neumann condition on the hole is
natural in this weak form, so no boundary terms are assembled.

The stiffness matrix is singular with the constants as kernel. Conjugate
gradients run on the mean-zero subspace: the residual is projected onto the
range of the matrix every iteration and the iterate is kept at zero
(lumped-mass weighted) mean.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np
import scipy.sparse as sp

from core.coeff import SigmaPair, eval_field
from core.errors import MeshError, SolverError
from core.mesh import CellMesh
from core.preconditioners import BasePreconditioner, get_preconditioner
from core.specs import CellCase


logger = logging.getLogger(__name__)

IterationCallback = Callable[[int, np.ndarray, float], None]


@dataclass(frozen=True)
class SolverSettings:
    """
    Conjugate gradient controls.

    Attributes:
        rtol: Stop when |r| <= rtol * |b|
        atol: Absolute floor on the residual norm
        max_iter: Iteration cap before a SolverError
        preconditioner: Registered preconditioner name
    """
    rtol: float = 1e-10
    atol: float = 1e-14
    max_iter: int = 10_000
    preconditioner: str = "jacobi"


@dataclass(frozen=True)
class LinearSystem:
    """
    Assembled cell system over the periodic degrees of freedom.

    Attributes:
        mesh: Mesh the system lives on
        case: Mixture or perforated
        matrix: Symmetric CSR stiffness matrix
        rhs: Right-hand sides, shape (2, dof_count)
        element_sigma: Midpoint-rule average of sigma per triangle
    """
    mesh: CellMesh
    case: CellCase
    matrix: sp.csr_matrix
    rhs: np.ndarray
    element_sigma: np.ndarray

    @property
    def dof_count(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class SolveStats:
    iterations: int
    residual: float
    rhs_norm: float


@dataclass(frozen=True)
class CellSolutions:
    """
    Solved correctors w_1, w_2.

    Attributes:
        w: Nodal values per periodic dof, shape (2, dof_count)
        stats: Iteration count and final residual per direction
    """
    w: np.ndarray
    stats: List[SolveStats] = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return max((s.iterations for s in self.stats), default=0)

    @property
    def residual(self) -> float:
        return max((s.residual for s in self.stats), default=0.0)

    def corrector_at_vertices(self, mesh: CellMesh, i: int) -> np.ndarray:
        """phi_i = w_i + x_i at every mesh vertex (not periodic)."""
        return self.w[i][mesh.periodic_map] + mesh.vertices[:, i]


def element_coefficients(
    mesh: CellMesh,
    sigma: SigmaPair,
    power: float = 1.0,
    midpoints: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    Average of sigma**power over the three edge midpoints of every triangle.

    The inclusion material is used on inclusion triangles, the matrix
    material everywhere else. `midpoints` replaces the mesh edge midpoints
    when the sample points have been moved.

    Raises:
        ExpressionEvaluationError: On non-finite sigma values
    """
    midpoints = mesh.edge_midpoints if midpoints is None else midpoints
    values = np.empty(mesh.triangle_count)
    regions = [(~mesh.inclusion, sigma.sigma1), (mesh.inclusion, sigma.sigma2)]
    for mask, material in regions:
        if not np.any(mask):
            continue
        if material is None:
            raise MeshError("inclusion triangles present but no inclusion material given")
        pts = midpoints[mask]
        samples = eval_field(material, pts[..., 0], pts[..., 1])
        values[mask] = np.mean(samples ** power, axis=1)
    return values


def _check_case(mesh: CellMesh, case: CellCase) -> None:
    if mesh.case != case:
        raise MeshError(f"mesh was built for the {mesh.case.value} case, not {case.value}")
    if case == CellCase.PERFORATED and np.any(mesh.inclusion):
        raise MeshError("perforated mesh contains inclusion triangles")


def assemble_system(mesh: CellMesh, sigma: SigmaPair, case: CellCase) -> LinearSystem:
    """
    Assemble stiffness matrix and both right-hand sides.

    Entries are int sigma grad psi_a . grad psi_b with the edge-midpoint rule
    per triangle; the right-hand sides are -int sigma e_i . grad psi_a.

    Raises:
        MeshError: If the mesh does not match the case
        ExpressionEvaluationError: On non-finite sigma values
    """
    _check_case(mesh, case)
    element_sigma = element_coefficients(mesh, sigma)
    weights = element_sigma * mesh.areas
    grads = mesh.hat_gradients
    dofs = mesh.triangle_dofs

    local = np.einsum("t,tad,tbd->tab", weights, grads, grads)
    rows = np.repeat(dofs, 3, axis=1).ravel()
    cols = np.tile(dofs, (1, 3)).ravel()
    n = mesh.dof_count
    matrix = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    matrix.sum_duplicates()

    rhs = np.zeros((2, n))
    for i in range(2):
        np.add.at(rhs[i], dofs.ravel(), (-weights[:, None] * grads[:, :, i]).ravel())

    logger.debug("Assembled %d x %d system with %d nonzeros", n, n, matrix.nnz)
    return LinearSystem(mesh=mesh, case=case, matrix=matrix, rhs=rhs, element_sigma=element_sigma)


def _weighted_mean(x: np.ndarray, mass: np.ndarray) -> float:
    return float(mass @ x / mass.sum())


def conjugate_gradient(
    matrix: sp.spmatrix,
    rhs: np.ndarray,
    preconditioner: BasePreconditioner,
    mass: np.ndarray,
    settings: SolverSettings = SolverSettings(),
    callback: Optional[IterationCallback] = None,
) -> tuple:
    """
    Preconditioned CG on the mean-zero subspace of a singular periodic system.

    Args:
        matrix: Symmetric positive semidefinite matrix with constant kernel
        rhs: Right-hand side; its component along the constants is dropped
        preconditioner: Applied to every projected residual
        mass: Lumped mass used for the zero-mean normalization
        settings: Tolerances and iteration cap
        callback: Called as callback(k, x, residual_norm) after every iteration

    Returns:
        Tuple (x, SolveStats) with x of exactly zero weighted mean

    Raises:
        SolverError: If the residual does not reach tolerance within max_iter
    """
    b = rhs - rhs.mean()
    b_norm = float(np.linalg.norm(b))
    x = np.zeros_like(b)
    threshold = max(settings.rtol * b_norm, settings.atol)
    if b_norm <= threshold:
        return x, SolveStats(iterations=0, residual=b_norm, rhs_norm=b_norm)

    r = b.copy()
    z = preconditioner.apply(r)
    p = z.copy()
    rz = float(r @ z)
    residual = b_norm
    for k in range(1, settings.max_iter + 1):
        ap = matrix @ p
        curvature = float(p @ ap)
        if curvature <= 0.0:
            raise SolverError(
                f"CG breakdown: non-positive curvature {curvature:.3e} at iteration {k}",
                residual=residual, iterations=k,
            )
        alpha = rz / curvature
        x += alpha * p
        x -= _weighted_mean(x, mass)
        r -= alpha * ap
        r -= r.mean()
        residual = float(np.linalg.norm(r))
        if callback is not None:
            callback(k, x, residual)
        if residual <= threshold:
            x -= _weighted_mean(x, mass)
            return x, SolveStats(iterations=k, residual=residual, rhs_norm=b_norm)
        z = preconditioner.apply(r)
        rz_next = float(r @ z)
        p = z + (rz_next / rz) * p
        rz = rz_next

    raise SolverError(
        f"CG did not converge in {settings.max_iter} iterations "
        f"(relative residual {residual / b_norm:.3e})",
        residual=residual, iterations=settings.max_iter,
    )


def solve_system(
    system: LinearSystem,
    rhs: np.ndarray,
    settings: SolverSettings = SolverSettings(),
    callback: Optional[IterationCallback] = None,
) -> tuple:
    """Solve the assembled matrix against an arbitrary right-hand side."""
    preconditioner = get_preconditioner(settings.preconditioner, system.matrix)
    return conjugate_gradient(
        system.matrix, rhs, preconditioner, system.mesh.lumped_mass, settings, callback
    )


def solve_cell_problems(
    system: LinearSystem,
    settings: SolverSettings = SolverSettings(),
    callback: Optional[Callable[[int, int, np.ndarray, float], None]] = None,
) -> CellSolutions:
    """
    Solve both cell problems.

    Args:
        system: Assembled system
        settings: Solver controls
        callback: Optional callback(direction, k, x, residual_norm)

    Raises:
        SolverError: On non-convergence, carrying the final residual
    """
    preconditioner = get_preconditioner(settings.preconditioner, system.matrix)
    w = np.zeros((2, system.dof_count))
    stats = []
    for i in range(2):
        direction_callback = None
        if callback is not None:
            direction_callback = (lambda k, x, res, i=i: callback(i, k, x, res))
        w[i], stat = conjugate_gradient(
            system.matrix, system.rhs[i], preconditioner, system.mesh.lumped_mass,
            settings, direction_callback,
        )
        stats.append(stat)
    logger.info(
        "Cell problems solved: %s CG iterations, residuals %s",
        [s.iterations for s in stats], [f"{s.residual:.2e}" for s in stats],
    )
    return CellSolutions(w=w, stats=stats)


def solution_energy(system: LinearSystem, x: np.ndarray, rhs: np.ndarray) -> float:
    """Discrete energy 0.5 x^T A x - b^T x, minimized by the solve."""
    return float(0.5 * x @ (system.matrix @ x) - rhs @ x)
