"""
Shape calculus on the interface.

Orientation: n is the unit normal pointing from the inclusion into the
matrix, velocities are V = <h, n>, and jumps are exterior minus interior,
[sigma] = sigma1 - sigma2. With these conventions

    mixture:     a'_ij[h] = -int [sigma] { <grad_t phi_i, grad_t phi_j>
                                           + d_n phi_i^- d_n phi_j^+ } V
    perforated:  a'_ij[h] = -int sigma1 <grad_t phi_i, grad_t phi_j> V

so growing a stiffer inclusion increases the diagonal entries and growing a
hole decreases them. The objective gradient follows by the chain rule,
J'[h] = sum_ij (a_ij - b_ij) a'_ij[h].

Second derivatives are taken on the discrete tensor itself: the mesh is
carried along with the shape and the element quantities are differentiated
exactly, which gives the derivatives of the re-meshed tensor.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Iterable, List, Optional, Sequence

import numpy as np

from core.coeff import SigmaPair, eval_field
from core.errors import MeshError
from core.fem import CellSolutions, LinearSystem, SolverSettings, element_coefficients, solve_system
from core.geometry import (
    RadialShape,
    direction_normal_velocity,
    normal_velocity_factor,
    radial_basis,
)
from core.homogenize import EffectiveTensor, TargetTensor, corrector_gradients, matching_objective
from core.mesh import CellMesh, InterfaceQuadrature, interface_quadrature, vertex_velocity
from core.specs import CellCase


logger = logging.getLogger(__name__)

TRANSPORT_SIGMA_STEP = 1e-4


@dataclass(frozen=True)
class InterfaceTraces:
    """
    Interface traces of phi_i = w_i + x_i, one sample per interface edge.

    Attributes:
        quadrature: Midpoint nodes, weights and normals
        tangential: grad_t phi_i along the counter-clockwise tangent, shape (2, ne)
        normal_inner: d_n phi_i from the inclusion side, shape (2, ne); zeros when perforated
        normal_outer: d_n phi_i from the matrix side, shape (2, ne)
        sigma1: Matrix conductivity at the nodes
        sigma2: Inclusion conductivity at the nodes; None when perforated
        edge_lengths: Chord length of every interface edge
    """
    quadrature: InterfaceQuadrature
    tangential: np.ndarray
    normal_inner: np.ndarray
    normal_outer: np.ndarray
    sigma1: np.ndarray
    sigma2: Optional[np.ndarray]
    edge_lengths: np.ndarray
    case: CellCase

    @property
    def jump(self) -> np.ndarray:
        """[sigma] = sigma1 - sigma2 (exterior minus interior)."""
        if self.sigma2 is None:
            return self.sigma1.copy()
        return self.sigma1 - self.sigma2

    def flux_residual(self) -> np.ndarray:
        """|sigma2 d_n phi_i^- - sigma1 d_n phi_i^+| per direction and node."""
        if self.sigma2 is None:
            return np.abs(self.sigma1 * self.normal_outer)
        return np.abs(self.sigma2 * self.normal_inner - self.sigma1 * self.normal_outer)


@dataclass
class ShapeGradient:
    """
    Gradient with respect to the Fourier coefficients.

    Attributes:
        objective: dJ/da per coefficient, length 2N+1
        entries: da_ij/da per coefficient, shape (2N+1, 2, 2)
    """
    objective: np.ndarray
    entries: np.ndarray = field(default=None)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.objective))

    def to_list(self) -> List[float]:
        return [float(g) for g in self.objective]


def recover_interface_traces(
    mesh: CellMesh,
    solutions: CellSolutions,
    sigma: SigmaPair,
    case: CellCase
) -> InterfaceTraces:
    """
    Tangential and one-sided normal traces from the P1 solution.

    Raises:
        MeshError: If an interface edge lacks a neighbor on a required side
    """
    edges = mesh.interface
    if np.any(edges.outer_triangle < 0):
        raise MeshError("interface edge without a matrix-side triangle")
    if case == CellCase.MIXTURE and np.any(edges.inner_triangle < 0):
        raise MeshError("interface edge without an inclusion-side triangle")

    quad = interface_quadrature(mesh)
    va, vb = edges.vertices[:, 0], edges.vertices[:, 1]
    chord = mesh.vertices[vb] - mesh.vertices[va]
    lengths = np.linalg.norm(chord, axis=1)

    phi_grads = corrector_gradients(mesh, solutions)
    tangential = np.empty((2, len(edges)))
    normal_inner = np.zeros((2, len(edges)))
    normal_outer = np.empty((2, len(edges)))
    for i in range(2):
        values = solutions.corrector_at_vertices(mesh, i)
        tangential[i] = (values[vb] - values[va]) / lengths
        normal_outer[i] = np.einsum("ed,ed->e", phi_grads[i][edges.outer_triangle], quad.normals)
        if case == CellCase.MIXTURE:
            normal_inner[i] = np.einsum("ed,ed->e", phi_grads[i][edges.inner_triangle], quad.normals)

    px, py = quad.points[:, 0], quad.points[:, 1]
    sigma1 = eval_field(sigma.sigma1, px, py)
    sigma2 = eval_field(sigma.sigma2, px, py) if case == CellCase.MIXTURE else None
    return InterfaceTraces(
        quadrature=quad,
        tangential=tangential,
        normal_inner=normal_inner,
        normal_outer=normal_outer,
        sigma1=sigma1,
        sigma2=sigma2,
        edge_lengths=lengths,
        case=case,
    )


def _densities(traces: InterfaceTraces) -> np.ndarray:
    """Integrand of a'_ij without the velocity, shape (2, 2, ne)."""
    t = traces.tangential
    dens = np.einsum("ie,je->ije", t, t)
    if traces.case == CellCase.MIXTURE:
        cross = np.einsum("ie,je->ije", traces.normal_inner, traces.normal_outer)
        dens = dens + 0.5 * (cross + cross.transpose(1, 0, 2))
    return -traces.jump * dens


def entry_shape_gradient(
    traces: InterfaceTraces,
    velocity: np.ndarray,
    quadrature: Optional[InterfaceQuadrature] = None
) -> np.ndarray:
    """
    Directional derivatives a'_ij[h] for normal velocities at the nodes.

    Args:
        traces: Interface traces
        velocity: <h, n> per node, shape (ne,) or (ne, m) for m directions at once
        quadrature: Quadrature to integrate with, defaults to the traces' own

    Returns:
        Array of shape (2, 2) or (m, 2, 2)
    """
    quad = quadrature if quadrature is not None else traces.quadrature
    velocity = np.asarray(velocity, dtype=float)
    if velocity.shape[0] != len(quad):
        raise ValueError(f"velocity has {velocity.shape[0]} samples, quadrature has {len(quad)}")
    weighted = _densities(traces) * quad.weights
    if velocity.ndim == 1:
        return weighted @ velocity
    return np.einsum("ije,em->mij", weighted, velocity)


def coefficient_velocities(shape: RadialShape, quadrature: InterfaceQuadrature) -> np.ndarray:
    """Normal velocity of every coefficient direction at the nodes, shape (ne, 2N+1)."""
    return radial_basis(shape.degree, quadrature.phi) * normal_velocity_factor(shape, quadrature.phi)[:, None]


def objective_gradient(
    shape: RadialShape,
    traces: InterfaceTraces,
    tensor: EffectiveTensor,
    target: TargetTensor
) -> ShapeGradient:
    """dJ/da over all 2N+1 design coefficients."""
    velocities = coefficient_velocities(shape, traces.quadrature)
    entries = entry_shape_gradient(traces, velocities)
    _, residual = matching_objective(tensor, target)
    grad = np.einsum("mij,ij->m", entries, residual)
    logger.debug("Objective gradient: %s", np.array2string(grad, precision=4))
    return ShapeGradient(objective=grad, entries=entries)


# Perforated case: local derivative and second order -------------------------

def _require_perforated(case: CellCase) -> None:
    if case != CellCase.PERFORATED:
        raise ValueError("this operation is defined for the perforated case only")


def solve_local_derivative(
    system: LinearSystem,
    traces: InterfaceTraces,
    velocity: np.ndarray,
    i: int,
    settings: SolverSettings = SolverSettings(),
) -> np.ndarray:
    """
    Local shape derivative phi'_i of the corrector.

    Solves int sigma grad phi' . grad v = int sigma V grad_t phi_i grad_t v
    over the boundary of the hole, the weak form of the Neumann datum
    d_n phi' = div_t(V grad_t phi_i), with the cell system matrix.

    Returns:
        Mean-zero nodal values per periodic dof

    Raises:
        SolverError: On non-convergence
    """
    _require_perforated(system.case)
    mesh = system.mesh
    quad = traces.quadrature
    flux = quad.weights * traces.sigma1 * np.asarray(velocity, dtype=float) * traces.tangential[i]
    scaled = flux / traces.edge_lengths
    dofs = mesh.periodic_map[mesh.interface.vertices]
    rhs = np.zeros(mesh.dof_count)
    np.add.at(rhs, dofs[:, 0], -scaled)
    np.add.at(rhs, dofs[:, 1], scaled)
    derivative, stats = solve_system(system, rhs, settings)
    logger.debug("Local derivative %d solved in %d iterations", i, stats.iterations)
    return derivative


# Transported derivatives and second order ----------------------------------

@dataclass(frozen=True)
class TransportedDerivatives:
    """
    Derivatives of the discrete tensor along a coefficient-space direction.

    The mesh moves with the shape, so these are the exact derivatives of
    eps -> a_h(c + eps d) over the meshes build_mesh resolves.

    Attributes:
        first: a'_ij, shape (2, 2)
        second: a''_ij, shape (2, 2)
        material: Material derivative of w_i per periodic dof, shape (2, ndof)
        vertex_velocity: Velocity of every mesh vertex, shape (nv, 2)
    """
    first: np.ndarray
    second: np.ndarray
    material: np.ndarray
    vertex_velocity: np.ndarray


def _edge_matrices(points: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Columns p1 - p0 and p2 - p0 of every triangle, shape (nt, 2, 2)."""
    p = points[triangles]
    return np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)


def _mixed_determinant(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Coefficient of eps in det(p + eps q) for stacks of 2 x 2 matrices."""
    return (
        p[:, 0, 0] * q[:, 1, 1] + q[:, 0, 0] * p[:, 1, 1]
        - p[:, 0, 1] * q[:, 1, 0] - q[:, 0, 1] * p[:, 1, 0]
    )


def _sigma_transport(mesh: CellMesh, sigma: SigmaPair, theta: np.ndarray) -> tuple:
    """First and second derivatives of the element coefficients while the edge midpoints move."""
    t = theta[mesh.triangles]
    moved = 0.5 * (t + np.roll(t, -1, axis=1))
    if not np.any(moved):
        zero = np.zeros(mesh.triangle_count)
        return zero, zero
    step = TRANSPORT_SIGMA_STEP
    base = element_coefficients(mesh, sigma)
    plus = element_coefficients(mesh, sigma, midpoints=mesh.edge_midpoints + step * moved)
    minus = element_coefficients(mesh, sigma, midpoints=mesh.edge_midpoints - step * moved)
    return (plus - minus) / (2.0 * step), (plus - 2.0 * base + minus) / step ** 2


def _pair(weights: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.einsum("t,itd,jtd->ij", weights, a, b)


def transported_derivatives(
    system: LinearSystem,
    sigma: SigmaPair,
    solutions: CellSolutions,
    direction: np.ndarray,
    settings: SolverSettings = SolverSettings(),
) -> TransportedDerivatives:
    """
    First and second derivatives of the tensor with the mesh carried along.

    Every vertex moves with the velocity theta from vertex_velocity. Per
    triangle with edge matrix E and F = E' E^-1 the hat gradients move as
    G' = -G F and G'' = 2 G F F, the area as A' = mixed(E, E') / 2 and
    A'' = det E', and the midpoint coefficient by differences of sigma at
    the moved midpoints. The correctors are stationary for the tensor, so
    the first derivative needs no solve. The second derivative adds
    r_i . dw_j + r_j . dw_i, where r_i is the moving-mesh residual of cell
    problem i and dw_i = -K^-1 r_i its material derivative.

    Args:
        system: Assembled system of the base shape
        sigma: Conductivities
        solutions: Cell solutions of the base shape
        direction: Coefficient-space direction, zero-padded to 2N+1

    Raises:
        MeshError: If the mesh topology is not stable along the direction
        SolverError: If a material derivative solve does not converge
    """
    mesh = system.mesh
    direction = pad_direction(direction, mesh.shape.size)
    theta = vertex_velocity(mesh, direction)

    edges = _edge_matrices(mesh.vertices, mesh.triangles)
    edges_dot = _edge_matrices(theta, mesh.triangles)
    flow = edges_dot @ np.linalg.inv(edges)
    grads = mesh.hat_gradients
    grads_dot = -grads @ flow
    grads_ddot = 2.0 * grads @ flow @ flow

    area = mesh.areas
    area_dot = 0.5 * _mixed_determinant(edges, edges_dot)
    area_ddot = np.linalg.det(edges_dot)
    s = system.element_sigma
    s_dot, s_ddot = _sigma_transport(mesh, sigma, theta)
    weight = s * area
    weight_dot = s_dot * area + s * area_dot
    weight_ddot = s_ddot * area + 2.0 * s_dot * area_dot + s * area_ddot

    nodal = solutions.w[:, mesh.triangle_dofs]
    g = corrector_gradients(mesh, solutions)
    g_dot = np.einsum("ita,tad->itd", nodal, grads_dot)
    g_ddot = np.einsum("ita,tad->itd", nodal, grads_ddot)

    cross = _pair(weight, g_dot, g)
    first = _pair(weight_dot, g, g) + cross + cross.T
    cross_dot = _pair(weight_dot, g_dot, g)
    cross_ddot = _pair(weight, g_ddot, g)
    second = (
        _pair(weight_ddot, g, g)
        + 2.0 * (cross_dot + cross_dot.T)
        + cross_ddot + cross_ddot.T
        + 2.0 * _pair(weight, g_dot, g_dot)
    )

    local = (
        weight_dot[None, :, None] * np.einsum("tad,itd->ita", grads, g)
        + weight[None, :, None] * (
            np.einsum("tad,itd->ita", grads_dot, g) + np.einsum("tad,itd->ita", grads, g_dot)
        )
    )
    residual = np.zeros((2, mesh.dof_count))
    material = np.zeros((2, mesh.dof_count))
    for i in range(2):
        np.add.at(residual[i], mesh.triangle_dofs.ravel(), local[i].ravel())
        material[i], stats = solve_system(system, -residual[i], settings)
        logger.debug("Material derivative %d solved in %d iterations", i, stats.iterations)
    coupling = residual @ material.T
    second = second + coupling + coupling.T

    return TransportedDerivatives(
        first=0.5 * (first + first.T),
        second=0.5 * (second + second.T),
        material=material,
        vertex_velocity=theta,
    )


def shape_hessian(
    system: LinearSystem,
    sigma: SigmaPair,
    solutions: CellSolutions,
    direction: np.ndarray,
    settings: SolverSettings = SolverSettings(),
) -> np.ndarray:
    """
    Second derivatives a''_ij[h, h] of the perforated tensor along a direction.

    Returns:
        Symmetric 2 x 2 array
    """
    _require_perforated(system.case)
    return transported_derivatives(system, sigma, solutions, direction, settings).second


def hessian_entry(
    system: LinearSystem,
    sigma: SigmaPair,
    solutions: CellSolutions,
    direction: np.ndarray,
    i: int,
    j: int,
) -> float:
    """Single entry a''_ij[h, h]; see shape_hessian."""
    return float(shape_hessian(system, sigma, solutions, direction)[i, j])


def pad_direction(direction: Iterable[float], size: int) -> np.ndarray:
    direction = np.asarray(list(direction), dtype=float)
    if direction.size > size:
        raise ValueError(f"direction has {direction.size} entries, shape has {size}")
    out = np.zeros(size)
    out[:direction.size] = direction
    return out


def direction_velocity(shape: RadialShape, quadrature: InterfaceQuadrature, direction) -> np.ndarray:
    """<h, n> at the nodes for a (zero-padded) coefficient-space direction."""
    return direction_normal_velocity(shape, pad_direction(direction, shape.size), quadrature.phi)


def taylor_predict(
    base: np.ndarray,
    first: np.ndarray,
    eps: float,
    second: Optional[np.ndarray] = None
) -> np.ndarray:
    """a + eps a' + eps^2/2 a''; first order only when `second` is None."""
    predicted = np.asarray(base, dtype=float) + eps * np.asarray(first, dtype=float)
    if second is not None:
        predicted = predicted + 0.5 * eps ** 2 * np.asarray(second, dtype=float)
    return predicted


def random_amplitude_moments(
    base: np.ndarray,
    first: np.ndarray,
    second: np.ndarray,
    eps_max: float
) -> tuple:
    """
    Mean and variance surrogates for eps ~ U[-eps_max, eps_max].

    Returns:
        Tuple (mean, variance), each 2 x 2
    """
    second_moment = eps_max ** 2 / 3.0
    mean = np.asarray(base) + 0.5 * second_moment * np.asarray(second)
    variance = second_moment * np.asarray(first) ** 2
    return mean, variance


# Finite-difference verification ---------------------------------------------

def central_differences(
    fn: Callable[[np.ndarray], float],
    coeffs: np.ndarray,
    step: float,
    indices: Optional[Sequence[int]] = None,
) -> np.ndarray:
    """
    Central differences of a scalar function of the coefficients.

    Args:
        fn: Maps a coefficient vector to a scalar; re-meshes on every call
        coeffs: Base point
        step: Perturbation size
        indices: Coefficient subset, all when None

    Returns:
        Array of len(indices) difference quotients
    """
    coeffs = np.asarray(coeffs, dtype=float)
    indices = range(coeffs.size) if indices is None else indices
    out = []
    for m in indices:
        plus = coeffs.copy()
        minus = coeffs.copy()
        plus[m] += step
        minus[m] -= step
        out.append((fn(plus) - fn(minus)) / (2.0 * step))
    return np.array(out)


def relative_l2_error(analytic: np.ndarray, reference: np.ndarray) -> float:
    """|analytic - reference| / |reference|, or the absolute error when the reference vanishes."""
    diff = float(np.linalg.norm(np.asarray(analytic) - np.asarray(reference)))
    scale = float(np.linalg.norm(reference))
    return diff / scale if scale > 1e-14 else diff
