"""
Star-shaped interface geometry.

The inclusion boundary is the polar graph

    r(phi) = a0 + sum_k (a_k cos(k phi) + a_-k sin(k phi))

about the fixed cell midpoint. Coefficients are stored flat in the order
(a0, a1, a-1, a2, a-2, ..., aN, a-N), which is also the serialization order
of the results file.
"""

from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

from core.errors import InvalidShapeError


CENTER = np.array([0.5, 0.5])
R_MIN = 1e-3
MARGIN = 1e-2
VALIDATION_GRID = 4096

ArrayLike = Union[float, np.ndarray]


@dataclass(frozen=True)
class RadialShape:
    """
    Truncated Fourier radial series defining the interface.

    Attributes:
        coeffs: Read-only array of length 2N+1 in (a0, a1, a-1, ...) order
    """
    coeffs: np.ndarray

    def __post_init__(self):
        coeffs = np.array(self.coeffs, dtype=float)
        if coeffs.ndim != 1 or coeffs.size % 2 != 1:
            raise InvalidShapeError(
                f"coefficient vector must have odd length 2N+1, got shape {coeffs.shape}"
            )
        coeffs.setflags(write=False)
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def degree(self) -> int:
        return (self.coeffs.size - 1) // 2

    @property
    def center(self) -> np.ndarray:
        return CENTER

    @property
    def size(self) -> int:
        return self.coeffs.size

    def with_coeffs(self, coeffs: np.ndarray) -> "RadialShape":
        return RadialShape(np.asarray(coeffs, dtype=float))

    def to_list(self) -> list:
        return [float(c) for c in self.coeffs]


@dataclass
class ShapeReport:
    """
    Result of validate_shape.

    Attributes:
        ok: True when both invariants hold on the validation grid
        violation: None, "positivity" or "containment"
        worst_angle: Angle of the worst offending sample
        worst_value: Radius (positivity) or Chebyshev distance (containment) there
    """
    ok: bool
    violation: Optional[str] = None
    worst_angle: Optional[float] = None
    worst_value: Optional[float] = None

    def describe(self) -> str:
        if self.ok:
            return "shape is valid"
        return (
            f"{self.violation} violation at phi={self.worst_angle:.6f} "
            f"(value {self.worst_value:.6g})"
        )


def coefficient_mode(index: int, degree: int) -> Tuple[int, str]:
    """
    Map a flat coefficient index to its Fourier mode.

    Returns:
        Tuple (k, kind) with kind in {"const", "cos", "sin"}

    Raises:
        IndexError: If the index is outside 0..2N
    """
    if not 0 <= index <= 2 * degree:
        raise IndexError(f"coefficient index {index} outside 0..{2 * degree}")
    if index == 0:
        return 0, "const"
    k = (index + 1) // 2
    return k, "cos" if index % 2 == 1 else "sin"


def radial_basis(degree: int, phi: ArrayLike) -> np.ndarray:
    """
    Radial perturbation of every design direction at the given angles.

    Returns:
        Array of shape (len(phi), 2N+1); column m is delta r for coefficient m
    """
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    basis = np.empty((phi.size, 2 * degree + 1))
    basis[:, 0] = 1.0
    for k in range(1, degree + 1):
        basis[:, 2 * k - 1] = np.cos(k * phi)
        basis[:, 2 * k] = np.sin(k * phi)
    return basis


def _radial_basis_derivative(degree: int, phi: np.ndarray) -> np.ndarray:
    deriv = np.zeros((phi.size, 2 * degree + 1))
    for k in range(1, degree + 1):
        deriv[:, 2 * k - 1] = -k * np.sin(k * phi)
        deriv[:, 2 * k] = k * np.cos(k * phi)
    return deriv


def eval_radius(shape: RadialShape, phi: ArrayLike) -> Tuple[np.ndarray, np.ndarray]:
    """
    Evaluate r(phi) and dr/dphi term by term.

    Args:
        shape: Radial shape
        phi: Scalar angle or array of angles

    Returns:
        Tuple (r, dr) with the shape of np.atleast_1d(phi)
    """
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    r = radial_basis(shape.degree, phi) @ shape.coeffs
    dr = _radial_basis_derivative(shape.degree, phi) @ shape.coeffs
    return r, dr


def boundary_point_and_normal(
    shape: RadialShape,
    phi: ArrayLike
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Boundary point and unit normal pointing from the inclusion into the matrix.

    Returns:
        Tuple (points, normals), each of shape (len(phi), 2)
    """
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    r, dr = eval_radius(shape, phi)
    e_r = np.column_stack([np.cos(phi), np.sin(phi)])
    e_tau = np.column_stack([-np.sin(phi), np.cos(phi)])
    points = CENTER + r[:, None] * e_r
    speed = np.hypot(r, dr)
    normals = (r[:, None] * e_r - dr[:, None] * e_tau) / speed[:, None]
    return points, normals


def boundary_point(shape: RadialShape, phi: ArrayLike) -> np.ndarray:
    """Boundary points only, shape (len(phi), 2)."""
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    r, _ = eval_radius(shape, phi)
    return CENTER + r[:, None] * np.column_stack([np.cos(phi), np.sin(phi)])


def arclength_density(shape: RadialShape, phi: ArrayLike) -> np.ndarray:
    """Speed sqrt(r^2 + r'^2) of the polar parameterization."""
    r, dr = eval_radius(shape, phi)
    return np.hypot(r, dr)


def normal_velocity_factor(shape: RadialShape, phi: ArrayLike) -> np.ndarray:
    """<e_r, n> = r / sqrt(r^2 + r'^2), the normal share of a radial displacement."""
    r, dr = eval_radius(shape, phi)
    return r / np.hypot(r, dr)


def basis_normal_velocity(shape: RadialShape, coeff_index: int, phi: ArrayLike) -> np.ndarray:
    """
    Normal velocity <h, n> produced by perturbing one Fourier coefficient.

    Args:
        shape: Current shape
        coeff_index: Flat coefficient index in 0..2N
        phi: Angles at which to evaluate

    Returns:
        Array of normal velocities

    Raises:
        IndexError: If coeff_index is out of range
    """
    k, kind = coefficient_mode(coeff_index, shape.degree)
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    if kind == "const":
        delta_r = np.ones_like(phi)
    elif kind == "cos":
        delta_r = np.cos(k * phi)
    else:
        delta_r = np.sin(k * phi)
    return delta_r * normal_velocity_factor(shape, phi)


def direction_normal_velocity(shape: RadialShape, direction: np.ndarray, phi: ArrayLike) -> np.ndarray:
    """Normal velocity of an arbitrary coefficient-space direction."""
    delta_r = radial_basis(shape.degree, phi) @ np.asarray(direction, dtype=float)
    return delta_r * normal_velocity_factor(shape, phi)


def validation_angles() -> np.ndarray:
    return np.arange(VALIDATION_GRID) * (2.0 * np.pi / VALIDATION_GRID)


def validate_shape(shape: RadialShape) -> ShapeReport:
    """
    Check positivity and containment on the validation grid.

    Positivity is reported first since a negative radius makes the
    containment measure meaningless.
    """
    phi = validation_angles()
    r, _ = eval_radius(shape, phi)
    worst = int(np.argmin(r))
    if r[worst] < R_MIN:
        return ShapeReport(False, "positivity", float(phi[worst]), float(r[worst]))

    offsets = boundary_point(shape, phi) - CENTER
    chebyshev = np.max(np.abs(offsets), axis=1)
    worst = int(np.argmax(chebyshev))
    if chebyshev[worst] > 0.5 - MARGIN:
        return ShapeReport(False, "containment", float(phi[worst]), float(chebyshev[worst]))

    return ShapeReport(True)


def require_valid(shape: RadialShape) -> RadialShape:
    """
    Return the shape unchanged or raise.

    Raises:
        InvalidShapeError: If validate_shape reports a violation
    """
    report = validate_shape(shape)
    if not report.ok:
        raise InvalidShapeError(report.describe())
    return shape


def make_circle(radius: float, degree: int = 32) -> RadialShape:
    """
    Circle of the given radius about the cell midpoint.

    Raises:
        InvalidShapeError: If the radius is outside (R_MIN, 0.5 - MARGIN]
    """
    if not R_MIN < radius <= 0.5 - MARGIN:
        raise InvalidShapeError(
            f"radius {radius} outside admissible range ({R_MIN}, {0.5 - MARGIN}]"
        )
    coeffs = np.zeros(2 * degree + 1)
    coeffs[0] = radius
    return RadialShape(coeffs)


def make_perturbed_circle(
    radius: float,
    amplitude: float,
    seed: int,
    degree: int = 32
) -> RadialShape:
    """
    Circle with seeded uniform perturbations decaying like 1/k.

    a_k and a_-k are drawn independently from U[-amplitude/k, amplitude/k].

    Raises:
        InvalidShapeError: If the perturbed shape fails validation
    """
    base = make_circle(radius, degree)
    rng = np.random.default_rng(seed)
    coeffs = base.coeffs.copy()
    for k in range(1, degree + 1):
        bound = amplitude / k
        coeffs[2 * k - 1] = rng.uniform(-bound, bound)
        coeffs[2 * k] = rng.uniform(-bound, bound)
    return require_valid(RadialShape(coeffs))


def quarter_rotation_matrix(degree: int) -> np.ndarray:
    """
    Linear map on coefficients realizing r(phi) -> r(phi - pi/2).

    Entries are exactly 0 or +-1, so the map is exact in floating point.
    """
    size = 2 * degree + 1
    rot = np.zeros((size, size))
    rot[0, 0] = 1.0
    for k in range(1, degree + 1):
        c = float(round(np.cos(k * np.pi / 2)))
        s = float(round(np.sin(k * np.pi / 2)))
        ic, is_ = 2 * k - 1, 2 * k
        rot[ic, ic], rot[ic, is_] = c, -s
        rot[is_, ic], rot[is_, is_] = s, c
    return rot


def rotate_quarter(shape: RadialShape) -> RadialShape:
    """Rotate the shape by 90 degrees counter-clockwise about the center."""
    return shape.with_coeffs(quarter_rotation_matrix(shape.degree) @ shape.coeffs)


def mirror(shape: RadialShape) -> RadialShape:
    """Reflect across the horizontal midline (y -> 1 - y), i.e. r(phi) -> r(-phi)."""
    coeffs = shape.coeffs.copy()
    coeffs[2::2] *= -1.0
    return shape.with_coeffs(coeffs)


def area(shape: RadialShape) -> float:
    """Enclosed area 0.5 * int r^2 dphi, exact for the trigonometric polynomial on the grid."""
    r, _ = eval_radius(shape, validation_angles())
    return float(0.5 * np.mean(r ** 2) * 2.0 * np.pi)


def perimeter(shape: RadialShape) -> float:
    return float(np.mean(arclength_density(shape, validation_angles())) * 2.0 * np.pi)
