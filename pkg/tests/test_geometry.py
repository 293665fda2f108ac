import numpy as np
import pytest

from core.errors import InvalidShapeError
from core.geometry import (
    CENTER,
    RadialShape,
    area,
    basis_normal_velocity,
    boundary_point,
    boundary_point_and_normal,
    coefficient_mode,
    direction_normal_velocity,
    eval_radius,
    make_circle,
    make_perturbed_circle,
    mirror,
    perimeter,
    rotate_quarter,
    validate_shape,
)


def ellipse_like(degree=4):
    coeffs = np.zeros(2 * degree + 1)
    coeffs[0], coeffs[1] = 0.25, 0.05
    return RadialShape(coeffs)


class TestRadialShape:
    def test_even_length_rejected(self):
        with pytest.raises(InvalidShapeError):
            RadialShape(np.zeros(4))

    def test_coeffs_are_read_only(self, circle):
        with pytest.raises(ValueError):
            circle.coeffs[0] = 0.3

    def test_coefficient_mode_order(self):
        assert coefficient_mode(0, 3) == (0, "const")
        assert coefficient_mode(1, 3) == (1, "cos")
        assert coefficient_mode(2, 3) == (1, "sin")
        assert coefficient_mode(6, 3) == (3, "sin")
        with pytest.raises(IndexError):
            coefficient_mode(7, 3)

    def test_eval_radius_matches_series(self, lopsided):
        phi = np.linspace(0.0, 2.0 * np.pi, 7)
        a = lopsided.coeffs
        expected = (
            a[0] + a[1] * np.cos(phi) + a[2] * np.sin(phi)
            + a[3] * np.cos(2 * phi) + a[4] * np.sin(2 * phi) + a[5] * np.cos(3 * phi)
        )
        r, _ = eval_radius(lopsided, phi)
        np.testing.assert_allclose(r, expected, atol=1e-15)


class TestBoundary:
    def test_circle_point_and_normal(self, circle):
        points, normals = boundary_point_and_normal(circle, np.pi / 2)
        np.testing.assert_allclose(points[0], [0.5, 0.75], atol=1e-15)
        np.testing.assert_allclose(normals[0], [0.0, 1.0], atol=1e-15)

    def test_normals_are_unit(self, lopsided):
        _, normals = boundary_point_and_normal(lopsided, np.linspace(0, 2 * np.pi, 101))
        np.testing.assert_allclose(np.linalg.norm(normals, axis=1), 1.0, atol=1e-14)

    def test_normal_is_rotated_tangent(self):
        shape = ellipse_like()
        phi, h = np.pi / 4, 1e-6
        tangent = (boundary_point(shape, phi + h) - boundary_point(shape, phi - h))[0] / (2 * h)
        tangent /= np.linalg.norm(tangent)
        rotated = np.array([tangent[1], -tangent[0]])
        _, normal = boundary_point_and_normal(shape, phi)
        np.testing.assert_allclose(normal[0], rotated, atol=1e-6)

    def test_normal_points_outward(self, lopsided):
        phi = np.linspace(0, 2 * np.pi, 64, endpoint=False)
        points, normals = boundary_point_and_normal(lopsided, phi)
        assert np.all(np.einsum("ij,ij->i", points - CENTER, normals) > 0.0)


class TestNormalVelocity:
    def test_circle_values(self, circle):
        assert basis_normal_velocity(circle, 0, 1.3)[0] == pytest.approx(1.0)
        assert basis_normal_velocity(circle, 1, 0.0)[0] == pytest.approx(1.0)
        assert basis_normal_velocity(circle, 1, np.pi / 2)[0] == pytest.approx(0.0, abs=1e-15)

    def test_matches_boundary_displacement(self, lopsided):
        phi = np.linspace(0.1, 6.0, 9)
        eps = 1e-6
        _, normals = boundary_point_and_normal(lopsided, phi)
        for index in (0, 3, 6):
            bumped = lopsided.coeffs.copy()
            bumped[index] += eps
            moved = boundary_point(lopsided.with_coeffs(bumped), phi) - boundary_point(lopsided, phi)
            fd = np.einsum("ij,ij->i", moved, normals) / eps
            analytic = basis_normal_velocity(lopsided, index, phi)
            assert np.linalg.norm(fd - analytic) <= 1e-4 * np.linalg.norm(analytic)

    def test_linear_in_direction(self, lopsided):
        phi = np.linspace(0, 2 * np.pi, 33)
        direction = np.zeros(lopsided.size)
        direction[3] = 1.0
        np.testing.assert_allclose(
            direction_normal_velocity(lopsided, 2.5 * direction, phi),
            2.5 * direction_normal_velocity(lopsided, direction, phi),
        )

    def test_index_out_of_range(self, circle):
        with pytest.raises(IndexError):
            basis_normal_velocity(circle, circle.size, 0.0)


class TestValidation:
    def test_circle_is_valid(self):
        assert validate_shape(make_circle(0.25)).ok

    def test_containment_violation(self):
        coeffs = np.zeros(5)
        coeffs[0] = 0.495
        report = validate_shape(RadialShape(coeffs))
        assert not report.ok
        assert report.violation == "containment"

    def test_positivity_violation_near_pi(self):
        coeffs = np.zeros(5)
        coeffs[0], coeffs[1] = 0.05, 0.06
        report = validate_shape(RadialShape(coeffs))
        assert report.violation == "positivity"
        assert report.worst_angle == pytest.approx(np.pi, abs=1e-2)
        assert report.worst_value == pytest.approx(-0.01, abs=1e-6)

    def test_circle_radius_out_of_range(self):
        with pytest.raises(InvalidShapeError):
            make_circle(0.495)

    def test_perturbed_circle_is_seeded(self):
        a = make_perturbed_circle(0.25, 0.02, seed=3, degree=8)
        b = make_perturbed_circle(0.25, 0.02, seed=3, degree=8)
        c = make_perturbed_circle(0.25, 0.02, seed=4, degree=8)
        np.testing.assert_array_equal(a.coeffs, b.coeffs)
        assert not np.array_equal(a.coeffs, c.coeffs)
        assert a.coeffs[0] == 0.25
        assert abs(a.coeffs[7]) <= 0.02 / 4


class TestSymmetries:
    def test_quarter_rotation_rotates_points(self, lopsided):
        phi = np.linspace(0, 2 * np.pi, 50)
        rotated = boundary_point(rotate_quarter(lopsided), phi + np.pi / 2) - CENTER
        original = boundary_point(lopsided, phi) - CENTER
        expected = np.column_stack([-original[:, 1], original[:, 0]])
        np.testing.assert_allclose(rotated, expected, atol=1e-13)

    def test_four_rotations_are_identity(self, lopsided):
        shape = lopsided
        for _ in range(4):
            shape = rotate_quarter(shape)
        np.testing.assert_array_equal(shape.coeffs, lopsided.coeffs)

    def test_mirror_reflects_across_midline(self, lopsided):
        phi = np.linspace(0, 2 * np.pi, 50)
        reflected = boundary_point(mirror(lopsided), -phi)
        original = boundary_point(lopsided, phi)
        np.testing.assert_allclose(reflected[:, 0], original[:, 0], atol=1e-15)
        np.testing.assert_allclose(reflected[:, 1], 1.0 - original[:, 1], atol=1e-15)

    def test_circle_area_and_perimeter(self, circle):
        assert area(circle) == pytest.approx(np.pi / 16, rel=1e-12)
        assert perimeter(circle) == pytest.approx(np.pi / 2, rel=1e-12)
