"""
Curved macro triangulation of the unit cell and its regular refinement.

The macro layout samples the interface at the eight angles j*pi/4. In the
mixture case the inclusion is covered by eight fan patches from the cell
center. The annulus between the interface loop and twelve marked points on
the cell boundary (corners plus the thirds of every side) is covered by
twenty patches produced by walking both loops in angular order. Every patch
is the image of the reference triangle under a map that is affine except for
at most one edge, which follows the exact Fourier curve.
"""

import logging
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from core.errors import MeshError
from core.geometry import (
    CENTER,
    RadialShape,
    arclength_density,
    boundary_point,
    boundary_point_and_normal,
    eval_radius,
    require_valid,
)
from core.specs import CellCase


logger = logging.getLogger(__name__)

MIN_ANGLE_DEG = 10.0
SNAP_TOL = 1e-10
INTERFACE_SAMPLES = 8
OUTER_DIVISIONS = 3
VELOCITY_STEP = 1e-3

# Marked points on the cell boundary, counter-clockwise from the right side.
OUTER_POINTS = np.array([
    [1.0, 1 / 3], [1.0, 2 / 3], [1.0, 1.0],
    [2 / 3, 1.0], [1 / 3, 1.0], [0.0, 1.0],
    [0.0, 2 / 3], [0.0, 1 / 3], [0.0, 0.0],
    [1 / 3, 0.0], [2 / 3, 0.0], [1.0, 0.0],
])

CENTER_ID = 0
INNER_BASE = 1
OUTER_BASE = INNER_BASE + INTERFACE_SAMPLES


@dataclass(frozen=True)
class MacroPatch:
    """
    One curved macro element.

    Corners are ordered counter-clockwise as (A, B, C). When `curve` is set,
    the edge B -> C follows the interface for phi running linearly from
    curve[0] to curve[1].

    Attributes:
        index: Patch number
        corners: Corner coordinates, shape (3, 2)
        corner_ids: Global ids of the corners (center, interface or outer points)
        inclusion: True for patches inside the inclusion
        curve: Angular interval of the curved edge, or None
    """
    index: int
    corners: np.ndarray
    corner_ids: Tuple[int, int, int]
    inclusion: bool
    curve: Optional[Tuple[float, float]] = None


@dataclass(frozen=True)
class InterfaceEdges:
    """
    Refined edges lying on the interface, ordered by angle.

    Attributes:
        vertices: Vertex pairs, first vertex at phi_lo, shape (ne, 2)
        phi: Angular interval (phi_lo, phi_hi) per edge, shape (ne, 2)
        inner_triangle: Adjacent inclusion triangle, -1 in the perforated case
        outer_triangle: Adjacent matrix triangle
    """
    vertices: np.ndarray
    phi: np.ndarray
    inner_triangle: np.ndarray
    outer_triangle: np.ndarray

    def __len__(self) -> int:
        return len(self.vertices)


@dataclass(frozen=True)
class InterfaceQuadrature:
    """
    One midpoint node per interface edge.

    Attributes:
        phi: Midpoint angle per node
        weights: Arclength weight sqrt(r^2 + r'^2) * dphi
        normals: Unit normal pointing into the matrix, shape (n, 2)
        points: Curve point at the node, shape (n, 2)
    """
    phi: np.ndarray
    weights: np.ndarray
    normals: np.ndarray
    points: np.ndarray

    def __len__(self) -> int:
        return len(self.phi)


@dataclass(frozen=True)
class CellMesh:
    """
    Conforming refined triangulation of the cell.

    Attributes:
        level: Refinement level
        case: Mixture or perforated
        shape: Interface the mesh resolves
        vertices: Coordinates, shape (nv, 2)
        triangles: Counter-clockwise vertex triples, shape (nt, 3)
        inclusion: Region label per triangle (True inside the inclusion)
        parent: Macro patch index per triangle
        interface: Interface edges
        periodic_map: Degree of freedom of every vertex
        dof_count: Number of periodic degrees of freedom
    """
    level: int
    case: CellCase
    shape: RadialShape
    vertices: np.ndarray
    triangles: np.ndarray
    inclusion: np.ndarray
    parent: np.ndarray
    interface: InterfaceEdges
    periodic_map: np.ndarray
    dof_count: int

    @property
    def triangle_count(self) -> int:
        return len(self.triangles)

    @cached_property
    def areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @cached_property
    def hat_gradients(self) -> np.ndarray:
        """Constant gradients of the three hat functions per triangle, shape (nt, 3, 2)."""
        p = self.vertices[self.triangles]
        twice_area = 2.0 * self.areas
        grads = np.empty((len(self.triangles), 3, 2))
        for a in range(3):
            b, c = (a + 1) % 3, (a + 2) % 3
            grads[:, a, 0] = (p[:, b, 1] - p[:, c, 1]) / twice_area
            grads[:, a, 1] = (p[:, c, 0] - p[:, b, 0]) / twice_area
        return grads

    @cached_property
    def edge_midpoints(self) -> np.ndarray:
        """Midpoints of the three edges per triangle, shape (nt, 3, 2)."""
        p = self.vertices[self.triangles]
        return 0.5 * (p + np.roll(p, -1, axis=1))

    @cached_property
    def triangle_dofs(self) -> np.ndarray:
        return self.periodic_map[self.triangles]

    @cached_property
    def lumped_mass(self) -> np.ndarray:
        """Lumped P1 mass per degree of freedom."""
        mass = np.zeros(self.dof_count)
        np.add.at(mass, self.triangle_dofs.ravel(), np.repeat(self.areas / 3.0, 3))
        return mass


# Macro layout --------------------------------------------------------------

def _outer_angles() -> np.ndarray:
    offsets = OUTER_POINTS - CENTER
    angles = np.arctan2(offsets[:, 1], offsets[:, 0])
    start = angles[0]
    return np.where(angles < start - 1e-12, angles + 2.0 * np.pi, angles)


def build_macro_patches(shape: RadialShape, case: CellCase) -> List[MacroPatch]:
    """
    Build the 28 (mixture) or 20 (perforated) macro patches.

    Raises:
        InvalidShapeError: If the shape fails validation
        MeshError: If a patch degenerates
    """
    require_valid(shape)
    step = 2.0 * np.pi / INTERFACE_SAMPLES
    inner_phi = np.arange(INTERFACE_SAMPLES + 1) * step
    inner = boundary_point(shape, inner_phi[:-1])
    outer_theta = _outer_angles()

    def inner_point(j: int) -> np.ndarray:
        return inner[j % INTERFACE_SAMPLES]

    def inner_id(j: int) -> int:
        return INNER_BASE + j % INTERFACE_SAMPLES

    def outer_id(k: int) -> int:
        return OUTER_BASE + k % len(OUTER_POINTS)

    patches: List[MacroPatch] = []
    if case == CellCase.MIXTURE:
        for j in range(INTERFACE_SAMPLES):
            patches.append(MacroPatch(
                index=len(patches),
                corners=np.array([CENTER, inner_point(j), inner_point(j + 1)]),
                corner_ids=(CENTER_ID, inner_id(j), inner_id(j + 1)),
                inclusion=True,
                curve=(inner_phi[j], inner_phi[j + 1]),
            ))

    # Walk both loops; on a tie the interface loop advances first.
    i = o = 0
    n_outer = len(OUTER_POINTS)
    while i < INTERFACE_SAMPLES or o < n_outer:
        next_inner = inner_phi[i + 1] if i < INTERFACE_SAMPLES else np.inf
        next_outer = (
            outer_theta[(o + 1) % n_outer] + (2.0 * np.pi if o + 1 == n_outer else 0.0)
            if o < n_outer else np.inf
        )
        if next_inner <= next_outer + 1e-9:
            patches.append(MacroPatch(
                index=len(patches),
                corners=np.array([OUTER_POINTS[o % n_outer], inner_point(i + 1), inner_point(i)]),
                corner_ids=(outer_id(o), inner_id(i + 1), inner_id(i)),
                inclusion=False,
                curve=(inner_phi[i + 1], inner_phi[i]),
            ))
            i += 1
        else:
            patches.append(MacroPatch(
                index=len(patches),
                corners=np.array([inner_point(i), OUTER_POINTS[o % n_outer], OUTER_POINTS[(o + 1) % n_outer]]),
                corner_ids=(inner_id(i), outer_id(o), outer_id(o + 1)),
                inclusion=False,
            ))
            o += 1

    for patch in patches:
        _check_patch(patch)
    return patches


def _check_patch(patch: MacroPatch) -> None:
    angles = _triangle_angles(patch.corners[None, :, :])[0]
    if angles.min() < MIN_ANGLE_DEG:
        raise MeshError(
            f"macro patch {patch.index} degenerates (min angle {angles.min():.2f} deg)"
        )


def _triangle_angles(p: np.ndarray) -> np.ndarray:
    """Interior angles in degrees of triangles given as (nt, 3, 2)."""
    angles = np.empty(p.shape[:2])
    for a in range(3):
        u = p[:, (a + 1) % 3] - p[:, a]
        v = p[:, (a + 2) % 3] - p[:, a]
        cos = np.einsum("ij,ij->i", u, v) / (np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1))
        angles[:, a] = np.degrees(np.arccos(np.clip(cos, -1.0, 1.0)))
    return angles


def map_patch(patch: MacroPatch, shape: RadialShape, xi: np.ndarray, eta: np.ndarray) -> np.ndarray:
    """
    Evaluate the patch map at reference coordinates (xi, eta) = (lambda_B, lambda_C).

    The curved edge is blended in with weight (1 - lambda_A), which keeps the
    two straight edges affine and puts the B -> C edge exactly on the curve.
    """
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    a, b, c = patch.corners
    lam_a = 1.0 - xi - eta
    points = lam_a[:, None] * a + xi[:, None] * b + eta[:, None] * c
    if patch.curve is None:
        return points
    blend = xi + eta
    s = np.divide(eta, blend, out=np.zeros_like(eta), where=blend > 0.0)
    phi = patch.curve[0] + s * (patch.curve[1] - patch.curve[0])
    chord = (1.0 - s)[:, None] * b + s[:, None] * c
    return points + blend[:, None] * (boundary_point(shape, phi) - chord)


def patch_area(patch: MacroPatch, shape: RadialShape, nodes: int = 64) -> float:
    """Signed area of the curved patch by Green's theorem."""
    a, b, c = patch.corners

    def straight(p: np.ndarray, q: np.ndarray) -> float:
        return 0.5 * (p[0] + q[0]) * (q[1] - p[1])

    total = straight(c, a) + straight(a, b)
    if patch.curve is None:
        return total + straight(b, c)
    t, w = np.polynomial.legendre.leggauss(nodes)
    lo, hi = patch.curve
    phi = 0.5 * (hi - lo) * t + 0.5 * (hi + lo)
    r, dr = eval_radius(shape, phi)
    x = CENTER[0] + r * np.cos(phi)
    dy = dr * np.sin(phi) + r * np.cos(phi)
    return total + float(np.sum(w * x * dy) * 0.5 * (hi - lo))


# Refinement ----------------------------------------------------------------

def _node_key(patch: MacroPatch, i: int, j: int, m: int) -> tuple:
    ida, idb, idc = patch.corner_ids
    if i == 0 and j == 0:
        return ("c", ida)
    if i == m and j == 0:
        return ("c", idb)
    if i == 0 and j == m:
        return ("c", idc)
    if j == 0:
        start, end, t = ida, idb, i
    elif i == 0:
        start, end, t = ida, idc, j
    elif i + j == m:
        start, end, t = idb, idc, j
    else:
        return ("p", patch.index, i, j)
    if start > end:
        start, end, t = end, start, m - t
    return ("e", start, end, t)


def refine_to_level(
    patches: List[MacroPatch],
    shape: RadialShape,
    level: int,
    case: CellCase
) -> CellMesh:
    """
    Subdivide every patch regularly 4^level-fold and assemble the cell mesh.

    Vertices shared between patches are deduplicated on combinatorial keys
    (corner id, edge id and step) rather than on coordinates.

    Raises:
        MeshError: On inverted or too-flat triangles or a broken periodic pairing
    """
    if level < 0:
        raise MeshError(f"refinement level must be nonnegative, got {level}")
    m = 2 ** level
    keys: Dict[tuple, int] = {}
    coords: List[np.ndarray] = []
    triangles: List[np.ndarray] = []
    inclusion: List[np.ndarray] = []
    parent: List[np.ndarray] = []
    edges: Dict[Tuple[int, int], dict] = {}
    triangle_offset = 0

    ii, jj = np.meshgrid(np.arange(m + 1), np.arange(m + 1), indexing="ij")
    inside = ii + jj <= m
    ref_i, ref_j = ii[inside], jj[inside]

    for patch in patches:
        mapped = map_patch(patch, shape, ref_i / m, ref_j / m)
        local = -np.ones((m + 1, m + 1), dtype=np.int64)
        for n, (i, j) in enumerate(zip(ref_i.tolist(), ref_j.tolist())):
            key = _node_key(patch, i, j, m)
            vid = keys.get(key)
            if vid is None:
                vid = len(coords)
                keys[key] = vid
                coords.append(mapped[n])
            local[i, j] = vid

        lower_i, lower_j = np.nonzero((ii + jj < m))
        lower = np.column_stack([
            local[lower_i, lower_j], local[lower_i + 1, lower_j], local[lower_i, lower_j + 1]
        ])
        upper_i, upper_j = np.nonzero((ii + jj < m - 1))
        upper = np.column_stack([
            local[upper_i + 1, upper_j], local[upper_i + 1, upper_j + 1], local[upper_i, upper_j + 1]
        ])
        patch_triangles = np.vstack([lower, upper])
        triangles.append(patch_triangles)
        inclusion.append(np.full(len(patch_triangles), patch.inclusion))
        parent.append(np.full(len(patch_triangles), patch.index))

        if patch.curve is not None:
            lower_index = -np.ones((m + 1, m + 1), dtype=np.int64)
            lower_index[lower_i, lower_j] = np.arange(len(lower_i)) + triangle_offset
            lo, hi = patch.curve
            for t in range(m):
                va, vb = local[m - t, t], local[m - t - 1, t + 1]
                phi_a = lo + (hi - lo) * t / m
                phi_b = lo + (hi - lo) * (t + 1) / m
                tri = int(lower_index[m - t - 1, t])
                if phi_a > phi_b:
                    va, vb, phi_a, phi_b = vb, va, phi_b, phi_a
                record = edges.setdefault((int(va), int(vb)), {
                    "phi": (phi_a, phi_b), "inner": -1, "outer": -1,
                })
                record["inner" if patch.inclusion else "outer"] = tri
        triangle_offset += len(patch_triangles)

    vertices = _snap_boundary(np.array(coords), m)
    all_triangles = np.vstack(triangles)
    _check_quality(vertices, all_triangles)

    ordered = sorted(edges.items(), key=lambda item: item[1]["phi"][0])
    interface = InterfaceEdges(
        vertices=np.array([pair for pair, _ in ordered], dtype=np.int64).reshape(-1, 2),
        phi=np.array([rec["phi"] for _, rec in ordered]).reshape(-1, 2),
        inner_triangle=np.array([rec["inner"] for _, rec in ordered], dtype=np.int64),
        outer_triangle=np.array([rec["outer"] for _, rec in ordered], dtype=np.int64),
    )
    if np.any(interface.outer_triangle < 0):
        raise MeshError("interface edge without a matrix-side triangle")
    if case == CellCase.MIXTURE and np.any(interface.inner_triangle < 0):
        raise MeshError("interface edge without an inclusion-side triangle")

    periodic_map, dof_count = periodic_identification(vertices, level)
    mesh = CellMesh(
        level=level,
        case=case,
        shape=shape,
        vertices=vertices,
        triangles=all_triangles,
        inclusion=np.concatenate(inclusion),
        parent=np.concatenate(parent),
        interface=interface,
        periodic_map=periodic_map,
        dof_count=dof_count,
    )
    logger.debug(
        "Mesh level %d: %d vertices, %d triangles, %d dofs, %d interface edges",
        level, len(vertices), mesh.triangle_count, dof_count, len(interface),
    )
    return mesh


def _snap_boundary(vertices: np.ndarray, m: int) -> np.ndarray:
    """Put cell-boundary vertices exactly on the 1/(3m) lattice of the boundary."""
    vertices = vertices.copy()
    steps = OUTER_DIVISIONS * m
    for axis in (0, 1):
        other = 1 - axis
        for value in (0.0, 1.0):
            on_side = np.abs(vertices[:, axis] - value) < SNAP_TOL
            vertices[on_side, axis] = value
            vertices[on_side, other] = np.round(vertices[on_side, other] * steps) / steps
    return vertices


def _check_quality(vertices: np.ndarray, triangles: np.ndarray) -> None:
    p = vertices[triangles]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    signed = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    if np.any(signed <= 0.0):
        raise MeshError(f"{int(np.sum(signed <= 0.0))} triangles are inverted")
    min_angle = _triangle_angles(p).min()
    if min_angle < MIN_ANGLE_DEG:
        raise MeshError(f"mesh quality floor violated (min angle {min_angle:.2f} deg)")


def periodic_identification(vertices: np.ndarray, level: int) -> Tuple[np.ndarray, int]:
    """
    Identify opposite cell-boundary vertices and number the periodic dofs.

    Returns:
        Tuple (periodic_map, dof_count), periodic_map giving the dof of each vertex

    Raises:
        MeshError: If a boundary vertex has no partner on the opposite side
    """
    steps = OUTER_DIVISIONS * 2 ** level
    x, y = vertices[:, 0], vertices[:, 1]
    left, right = x < SNAP_TOL, x > 1.0 - SNAP_TOL
    bottom, top = y < SNAP_TOL, y > 1.0 - SNAP_TOL
    on_boundary = left | right | bottom | top

    if left.sum() != right.sum() or bottom.sum() != top.sum():
        raise MeshError(
            f"unbalanced boundary: left {left.sum()}, right {right.sum()}, "
            f"bottom {bottom.sum()}, top {top.sum()}"
        )

    canon_x = np.where(right, 0.0, x)
    canon_y = np.where(top, 0.0, y)
    periodic_map = np.empty(len(vertices), dtype=np.int64)
    classes: Dict[Tuple[int, int], List[int]] = {}
    next_dof = 0
    for v in range(len(vertices)):
        if not on_boundary[v]:
            periodic_map[v] = next_dof
            next_dof += 1
            continue
        key = (int(round(canon_x[v] * steps)), int(round(canon_y[v] * steps)))
        members = classes.setdefault(key, [])
        if not members:
            periodic_map[v] = next_dof
            next_dof += 1
        else:
            periodic_map[v] = periodic_map[members[0]]
        members.append(v)

    for key, members in classes.items():
        expected = 4 if key == (0, 0) else 2
        if len(members) != expected:
            raise MeshError(f"boundary vertex class {key} has {len(members)} members, expected {expected}")
    return periodic_map, next_dof


def build_mesh(shape: RadialShape, level: int, case: CellCase) -> CellMesh:
    """Macro patches plus refinement in one call."""
    return refine_to_level(build_macro_patches(shape, case), shape, level, case)


def vertex_velocity(mesh: CellMesh, direction: np.ndarray, step: float = VELOCITY_STEP) -> np.ndarray:
    """
    Velocity of every mesh vertex when the coefficients move along direction.

    Vertex positions are affine in the coefficients and the topology does not
    depend on them, so the central difference is exact up to rounding.
    Vertices on the cell boundary and the cell center have zero velocity.

    Returns:
        Array of shape (nv, 2)

    Raises:
        MeshError: If the perturbed meshes do not share the topology
    """
    direction = np.asarray(direction, dtype=float)
    if direction.shape != mesh.shape.coeffs.shape:
        raise ValueError(f"direction must have length {mesh.shape.size}, got shape {direction.shape}")
    if not np.any(direction):
        return np.zeros_like(mesh.vertices)
    coeffs = mesh.shape.coeffs
    plus = build_mesh(mesh.shape.with_coeffs(coeffs + step * direction), mesh.level, mesh.case)
    minus = build_mesh(mesh.shape.with_coeffs(coeffs - step * direction), mesh.level, mesh.case)
    for other in (plus, minus):
        if not np.array_equal(other.triangles, mesh.triangles):
            raise MeshError("mesh topology changed under the shape perturbation")
    return (plus.vertices - minus.vertices) / (2.0 * step)


def interface_quadrature(mesh: CellMesh, shape: Optional[RadialShape] = None) -> InterfaceQuadrature:
    """One node per interface edge at its angular midpoint with arclength weight."""
    shape = shape if shape is not None else mesh.shape
    lo, hi = mesh.interface.phi[:, 0], mesh.interface.phi[:, 1]
    phi = 0.5 * (lo + hi)
    points, normals = boundary_point_and_normal(shape, phi)
    weights = arclength_density(shape, phi) * (hi - lo)
    return InterfaceQuadrature(phi=phi, weights=weights, normals=normals, points=points)


def write_mesh(mesh: CellMesh, path: Union[str, Path]) -> Path:
    """
    Export the mesh as plain text records.

    Format: `vertex x y`, `triangle i j k region`, `interface i j`, one per line.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"vertex {x:.17g} {y:.17g}" for x, y in mesh.vertices]
    lines += [
        f"triangle {i} {j} {k} {'inclusion' if inc else 'matrix'}"
        for (i, j, k), inc in zip(mesh.triangles.tolist(), mesh.inclusion.tolist())
    ]
    lines += [f"interface {i} {j}" for i, j in mesh.interface.vertices.tolist()]
    path.write_text("\n".join(lines) + "\n")
    return path
