import numpy as np
import pytest

from core.coeff import SigmaPair, make_field
from core.fem import SolverSettings, assemble_system, solve_cell_problems
from core.geometry import make_circle, make_perturbed_circle
from core.homogenize import TargetTensor, effective_tensor, matching_objective
from core.mesh import build_mesh
from core.shapecalc import (
    central_differences,
    coefficient_velocities,
    direction_velocity,
    entry_shape_gradient,
    hessian_entry,
    objective_gradient,
    pad_direction,
    random_amplitude_moments,
    recover_interface_traces,
    relative_l2_error,
    shape_hessian,
    solve_local_derivative,
    taylor_predict,
    transported_derivatives,
)
from core.specs import CellCase


COS2 = [0.0, 0.0, 0.0, 0.5, 0.0]


def solve(shape, sigma, case, level):
    mesh = build_mesh(shape, level, case)
    system = assemble_system(mesh, sigma, case)
    solutions = solve_cell_problems(system)
    tensor = effective_tensor(mesh, sigma, solutions, case)
    traces = recover_interface_traces(mesh, solutions, sigma, case)
    return system, solutions, tensor, traces


def tensor_at(coeffs, shape, sigma, case, level):
    return solve(shape.with_coeffs(coeffs), sigma, case, level)[2].matrix


TIGHT = SolverSettings(rtol=1e-13, atol=1e-16, max_iter=50000)


def solve_tight(shape, sigma, case, level):
    mesh = build_mesh(shape, level, case)
    system = assemble_system(mesh, sigma, case)
    solutions = solve_cell_problems(system, TIGHT)
    return system, solutions, effective_tensor(mesh, sigma, solutions, case).matrix


def fixed_vertices(mesh, derivatives):
    """Cell-boundary vertices, which the shape motion leaves in place."""
    on_boundary = np.flatnonzero(np.any(np.isin(mesh.vertices, [0.0, 1.0]), axis=1))
    assert not np.any(derivatives.vertex_velocity[on_boundary])
    return on_boundary


@pytest.fixture(scope="module")
def perforated_circle():
    shape = make_circle(0.25, degree=2)
    sigma = SigmaPair(make_field(1.0))
    return (shape, sigma) + solve(shape, sigma, CellCase.PERFORATED, 3)


class TestTraces:
    def test_shapes(self, solved_mixture):
        mesh, sigma, _, solutions = solved_mixture
        traces = recover_interface_traces(mesh, solutions, sigma, CellCase.MIXTURE)
        ne = len(mesh.interface)
        assert traces.tangential.shape == (2, ne)
        assert traces.normal_inner.shape == (2, ne)
        np.testing.assert_allclose(traces.jump, -9.0)

    def test_flux_continuity_is_approximate(self, solved_mixture):
        mesh, sigma, _, solutions = solved_mixture
        traces = recover_interface_traces(mesh, solutions, sigma, CellCase.MIXTURE)
        scale = np.abs(traces.sigma1 * traces.normal_outer).max()
        assert np.mean(traces.flux_residual()) < 0.5 * scale

    def test_equal_materials_have_matching_normal_traces(self, circle):
        sigma = SigmaPair(make_field(3.0), make_field(3.0))
        _, _, _, traces = solve(circle, sigma, CellCase.MIXTURE, 5)
        assert np.max(np.abs(traces.normal_inner - traces.normal_outer)) <= 1e-2

    def test_tangential_trace_at_top_of_stiff_circle(self, solved_mixture):
        mesh, sigma, _, solutions = solved_mixture
        traces = recover_interface_traces(mesh, solutions, sigma, CellCase.MIXTURE)
        top = np.argmin(np.abs(traces.quadrature.phi - np.pi / 2))
        assert traces.tangential[0, top] < 0.0

    @pytest.mark.slow
    def test_hole_normal_trace_vanishes_under_refinement(self):
        shape = make_circle(0.25, degree=2)
        sigma = SigmaPair(make_field(1.0))
        means = [
            np.mean(np.abs(solve(shape, sigma, CellCase.PERFORATED, level)[3].normal_outer))
            for level in (3, 4, 5)
        ]
        assert means[-1] <= 0.1
        assert means[2] < means[1] < means[0]

    def test_perforated_normal_flux_small(self, perforated_circle):
        _, _, _, _, _, traces = perforated_circle
        assert traces.sigma2 is None
        assert np.median(traces.flux_residual()) < 0.5 * np.abs(traces.tangential).max()


class TestFirstOrder:
    def test_zero_velocity(self, solved_mixture):
        mesh, sigma, _, solutions = solved_mixture
        traces = recover_interface_traces(mesh, solutions, sigma, CellCase.MIXTURE)
        np.testing.assert_array_equal(entry_shape_gradient(traces, np.zeros(len(mesh.interface))), 0.0)

    def test_entries_symmetric(self, solved_mixture):
        mesh, sigma, _, solutions = solved_mixture
        traces = recover_interface_traces(mesh, solutions, sigma, CellCase.MIXTURE)
        velocities = coefficient_velocities(mesh.shape, traces.quadrature)
        entries = entry_shape_gradient(traces, velocities)
        assert entries.shape == (mesh.shape.size, 2, 2)
        np.testing.assert_allclose(entries, entries.transpose(0, 2, 1), atol=1e-14)

    def test_stiff_inclusion_growth_raises_diagonal(self, solved_mixture):
        mesh, sigma, _, solutions = solved_mixture
        traces = recover_interface_traces(mesh, solutions, sigma, CellCase.MIXTURE)
        velocity = coefficient_velocities(mesh.shape, traces.quadrature)[:, 0]
        first = entry_shape_gradient(traces, velocity)
        assert first[0, 0] > 0.0 and first[1, 1] > 0.0

    def test_growing_hole_lowers_diagonal(self, perforated_circle):
        shape, _, _, _, _, traces = perforated_circle
        first = entry_shape_gradient(traces, direction_velocity(shape, traces.quadrature, [1.0]))
        assert first[0, 0] < 0.0 and first[1, 1] < 0.0

    def test_gradient_vanishes_at_target(self, solved_mixture):
        mesh, sigma, _, solutions = solved_mixture
        tensor = effective_tensor(mesh, sigma, solutions, CellCase.MIXTURE)
        traces = recover_interface_traces(mesh, solutions, sigma, CellCase.MIXTURE)
        gradient = objective_gradient(mesh.shape, traces, tensor, TargetTensor.from_matrix(tensor.matrix))
        assert gradient.norm == 0.0

    def test_equal_materials_give_zero_gradient(self, circle):
        sigma = SigmaPair(make_field(2.0), make_field(2.0))
        _, _, tensor, traces = solve(circle, sigma, CellCase.MIXTURE, 2)
        gradient = objective_gradient(circle, traces, tensor, TargetTensor.from_entries(1.5, 0.0, 1.4))
        assert gradient.norm < 1e-10

    def test_anisotropic_target_moves_cos2_mode(self, solved_mixture):
        mesh, sigma, _, solutions = solved_mixture
        tensor = effective_tensor(mesh, sigma, solutions, CellCase.MIXTURE)
        traces = recover_interface_traces(mesh, solutions, sigma, CellCase.MIXTURE)
        gradient = objective_gradient(mesh.shape, traces, tensor, TargetTensor.from_entries(1.5, 0.0, 1.4))
        assert abs(gradient.objective[3]) > 1e-3
        assert len(gradient.to_list()) == mesh.shape.size

    def test_matches_finite_differences_on_coarse_mesh(self, stiff_inclusion):
        shape = make_perturbed_circle(0.25, 0.02, seed=2, degree=3)
        target = TargetTensor.from_entries(1.5, 0.05, 1.4)
        level = 4
        _, _, tensor, traces = solve(shape, stiff_inclusion, CellCase.MIXTURE, level)
        analytic = objective_gradient(shape, traces, tensor, target).objective

        def objective(c):
            return matching_objective(tensor_at(c, shape, stiff_inclusion, CellCase.MIXTURE, level), target)[0]

        indices = [0, 3, 4]
        fd = central_differences(objective, shape.coeffs, 1e-4, indices)
        assert relative_l2_error(analytic[indices], fd) <= 1e-1

    @pytest.mark.slow
    @pytest.mark.parametrize("case, seed", [
        (CellCase.MIXTURE, 1), (CellCase.MIXTURE, 2), (CellCase.MIXTURE, 3),
        (CellCase.PERFORATED, 1), (CellCase.PERFORATED, 2), (CellCase.PERFORATED, 3),
    ])
    def test_matches_finite_differences(self, case, seed):
        shape = make_perturbed_circle(0.25, 0.02, seed=seed, degree=8)
        if case == CellCase.MIXTURE:
            sigma = SigmaPair(make_field(1.0), make_field(10.0))
            target = TargetTensor.from_entries(1.5, 0.0, 1.4)
        else:
            sigma = SigmaPair(make_field(1.0))
            target = TargetTensor.from_entries(0.8, 0.0, 0.6)
        _, _, tensor, traces = solve(shape, sigma, case, 5)
        analytic = objective_gradient(shape, traces, tensor, target).objective

        def objective(c):
            return matching_objective(tensor_at(c, shape, sigma, case, 5), target)[0]

        fd = central_differences(objective, shape.coeffs, 1e-4)
        assert relative_l2_error(analytic, fd) <= 5e-2


class TestSecondOrder:
    def test_local_derivative_zero_velocity(self, perforated_circle):
        _, _, system, _, _, traces = perforated_circle
        derivative = solve_local_derivative(system, traces, np.zeros(len(traces.quadrature)), 0)
        np.testing.assert_array_equal(derivative, 0.0)

    def test_local_derivative_needs_perforated(self, solved_mixture):
        mesh, sigma, system, solutions = solved_mixture
        traces = recover_interface_traces(mesh, solutions, sigma, CellCase.MIXTURE)
        with pytest.raises(ValueError):
            solve_local_derivative(system, traces, np.zeros(len(mesh.interface)), 0)

    def test_hessian_zero_direction(self, perforated_circle):
        shape, sigma, system, solutions, _, _ = perforated_circle
        hess = shape_hessian(system, sigma, solutions, np.zeros(shape.size))
        np.testing.assert_array_equal(hess, 0.0)

    def test_hessian_needs_perforated(self, solved_mixture):
        mesh, sigma, system, solutions = solved_mixture
        with pytest.raises(ValueError):
            shape_hessian(system, sigma, solutions, [1.0])

    def test_hessian_symmetric(self, perforated_circle):
        shape, sigma, system, solutions, _, _ = perforated_circle
        hess = shape_hessian(system, sigma, solutions, COS2)
        assert abs(hess[0, 1] - hess[1, 0]) <= 1e-10
        assert hessian_entry(system, sigma, solutions, COS2, 1, 0) == pytest.approx(hess[0, 1])

    def test_growing_hole_hessian_sign(self, perforated_circle):
        # a11 of a circular hole is concave in the radius
        shape, sigma, system, solutions, _, _ = perforated_circle
        hess = shape_hessian(system, sigma, solutions, [1.0])
        assert hess[0, 0] < 0.0 and hess[1, 1] < 0.0

    @pytest.mark.parametrize("case, sigma", [
        (CellCase.PERFORATED, SigmaPair(make_field(1.0))),
        (CellCase.MIXTURE, SigmaPair(make_field("1 + x*y"), make_field("5*(11/10 + cos(2*pi*x))"))),
    ])
    def test_transported_derivatives_match_remeshed_differences(self, lopsided, case, sigma):
        level = 2
        direction = np.zeros(lopsided.size)
        direction[[0, 3, 6]] = [0.3, 0.5, -0.4]
        system, solutions, tensor = solve_tight(lopsided, sigma, case, level)
        derivatives = transported_derivatives(system, sigma, solutions, direction, TIGHT)

        def at(eps):
            return solve_tight(lopsided.with_coeffs(lopsided.coeffs + eps * direction), sigma, case, level)[2]

        step = 1e-4
        first_fd = (at(step) - at(-step)) / (2.0 * step)
        assert relative_l2_error(derivatives.first, first_fd) <= 1e-5
        step = 1e-3
        second_fd = (at(step) - 2.0 * tensor + at(-step)) / step ** 2
        assert relative_l2_error(derivatives.second, second_fd) <= 1e-4

    def test_material_derivative_matches_differences(self, perforated_circle):
        shape, sigma, _, _, _, _ = perforated_circle
        level, step = 3, 1e-3
        system, solutions, _ = solve_tight(shape, sigma, CellCase.PERFORATED, level)
        derivatives = transported_derivatives(system, sigma, solutions, COS2, TIGHT)

        def corrector(eps):
            moved = shape.with_coeffs(shape.coeffs + eps * pad_direction(COS2, shape.size))
            return solve_tight(moved, sigma, CellCase.PERFORATED, level)[1].w

        fixed = np.unique(system.mesh.periodic_map[fixed_vertices(system.mesh, derivatives)])
        fd = (corrector(step) - corrector(-step))[:, fixed] / (2.0 * step)
        material = derivatives.material[:, fixed]
        for i in range(2):
            assert relative_l2_error(
                material[i] - material[i].mean(), fd[i] - fd[i].mean()
            ) <= 1e-4

    @pytest.mark.slow
    def test_local_derivative_agrees_at_fixed_vertices(self):
        shape = make_circle(0.25, degree=2)
        sigma = SigmaPair(make_field(1.0))
        level = 4
        system, solutions, _ = solve_tight(shape, sigma, CellCase.PERFORATED, level)
        traces = recover_interface_traces(system.mesh, solutions, sigma, CellCase.PERFORATED)
        velocity = direction_velocity(shape, traces.quadrature, COS2)
        derivatives = transported_derivatives(system, sigma, solutions, COS2, TIGHT)
        fixed = np.unique(system.mesh.periodic_map[fixed_vertices(system.mesh, derivatives)])
        for i in range(2):
            local = solve_local_derivative(system, traces, velocity, i, TIGHT)[fixed]
            material = derivatives.material[i, fixed]
            assert relative_l2_error(local - local.mean(), material - material.mean()) <= 0.15

    @pytest.mark.slow
    def test_transported_first_matches_boundary_form(self):
        shape = make_circle(0.25, degree=2)
        sigma = SigmaPair(make_field(1.0))
        system, solutions, tensor, traces = solve(shape, sigma, CellCase.PERFORATED, 5)
        derivatives = transported_derivatives(system, sigma, solutions, COS2)
        boundary = entry_shape_gradient(traces, direction_velocity(shape, traces.quadrature, COS2))
        assert relative_l2_error(boundary, derivatives.first) <= 5e-2

    @pytest.mark.slow
    def test_taylor_remainder_orders(self):
        shape = make_circle(0.25, degree=2)
        sigma = SigmaPair(make_field(1.0))
        case, level = CellCase.PERFORATED, 5
        system, solutions, tensor, _ = solve(shape, sigma, case, level)
        direction = pad_direction(COS2, shape.size)
        derivatives = transported_derivatives(system, sigma, solutions, direction)
        first, second = derivatives.first, derivatives.second

        first_errors, second_errors = [], []
        for eps in (0.02, 0.01, 0.005):
            resolved = tensor_at(shape.coeffs + eps * direction, shape, sigma, case, level)
            first_errors.append(np.linalg.norm(resolved - taylor_predict(tensor.matrix, first, eps)))
            second_errors.append(np.linalg.norm(resolved - taylor_predict(tensor.matrix, first, eps, second)))

        first_ratios = np.array(first_errors[:-1]) / np.array(first_errors[1:])
        second_ratios = np.array(second_errors[:-1]) / np.array(second_errors[1:])
        assert np.all((3.0 <= first_ratios) & (first_ratios <= 5.0))
        assert np.all((6.0 <= second_ratios) & (second_ratios <= 10.0))
        assert second_errors[1] < first_errors[1]


class TestExpansionHelpers:
    def test_taylor_predict_at_zero(self):
        base = np.array([[1.0, 0.1], [0.1, 2.0]])
        np.testing.assert_array_equal(taylor_predict(base, np.ones((2, 2)), 0.0, np.ones((2, 2))), base)

    def test_taylor_predict_orders(self):
        base, first, second = np.zeros((2, 2)), np.eye(2), 4.0 * np.eye(2)
        np.testing.assert_allclose(taylor_predict(base, first, 0.1), 0.1 * np.eye(2))
        np.testing.assert_allclose(taylor_predict(base, first, 0.1, second), 0.12 * np.eye(2))

    def test_random_amplitude_moments(self):
        base, first, second = np.eye(2), 2.0 * np.eye(2), 6.0 * np.eye(2)
        mean, variance = random_amplitude_moments(base, first, second, 0.1)
        np.testing.assert_allclose(mean, np.eye(2) * (1.0 + 0.01))
        np.testing.assert_allclose(variance, np.eye(2) * (0.01 / 3.0) * 4.0)

    def test_pad_direction(self):
        np.testing.assert_array_equal(pad_direction([1.0, 2.0], 5), [1.0, 2.0, 0.0, 0.0, 0.0])
        with pytest.raises(ValueError):
            pad_direction(np.ones(6), 5)

    def test_central_differences_exact_for_quadratics(self):
        fd = central_differences(lambda c: float(c @ c) + 3.0 * c[1], np.array([1.0, -2.0, 0.5]), 1e-3)
        np.testing.assert_allclose(fd, [2.0, -1.0, 1.0], atol=1e-9)

    def test_relative_error(self):
        assert relative_l2_error(np.array([1.1, 2.0]), np.array([1.0, 2.0])) == pytest.approx(0.1 / np.sqrt(5))
        assert relative_l2_error(np.array([1e-3]), np.array([0.0])) == pytest.approx(1e-3)
