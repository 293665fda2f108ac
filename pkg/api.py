"""
Public API for cell-shape homogenization experiments.

This module provides the entry points behind the command line: effective
tensor evaluation, gradient verification, shape optimization, the Taylor
expansion study and mesh export. Each takes a validated ExperimentConfig,
computes, writes its artifacts to the output directory and returns a result
object.
"""

import copy
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from core.coeff import SigmaPair, check_sigma_pair, make_field
from core.fem import SolverSettings
from core.geometry import RadialShape, make_circle, make_perturbed_circle, require_valid
from core.homogenize import EffectiveTensor, TargetTensor, check_target_admissible
from core.mesh import build_mesh, write_mesh
from core.optimize import OptimizeConfig, OptimizeRecord, Problem, minimize
from core.shapecalc import (
    central_differences,
    direction_velocity,
    entry_shape_gradient,
    random_amplitude_moments,
    recover_interface_traces,
    relative_l2_error,
    pad_direction,
    taylor_predict,
    transported_derivatives,
)
from core.specs import CellCase, ExperimentConfig, ValidationError, config_from_dict, set_dotted
from pipeline.orchestrator import pipeline
from reports.plot_builder import write_report
from reports.results import (
    build_results,
    grad_check_frame,
    write_frame,
    write_history,
    write_json,
    write_metadata,
    write_shape_csv,
)
from reports.svg_builder import write_shape_svg
from themes import get_theme


logger = logging.getLogger(__name__)


# Config → domain objects ----------------------------------------------------

def sigma_pair(config: ExperimentConfig) -> SigmaPair:
    """
    Parse and probe both conductivities.

    Raises:
        ExpressionSyntaxError: On a malformed expression
        ExpressionEvaluationError: If a field is not positive on the probe grid
    """
    sigma = SigmaPair(
        sigma1=make_field(config.sigma1),
        sigma2=make_field(config.sigma2) if config.sigma2 is not None else None,
    )
    check_sigma_pair(sigma, config.bounds.lower, config.bounds.upper)
    return sigma


def solver_settings(config: ExperimentConfig) -> SolverSettings:
    return SolverSettings(
        rtol=config.solver.rtol,
        atol=config.solver.atol,
        max_iter=config.solver.max_iter,
        preconditioner=config.solver.preconditioner,
    )


def initial_shape(config: ExperimentConfig) -> RadialShape:
    """
    Raises:
        InvalidShapeError: If the requested shape is not admissible
    """
    init = config.init
    degree = config.fourier.N
    if init.kind == "circle":
        return make_circle(init.radius, degree)
    if init.kind == "perturbed":
        return make_perturbed_circle(init.radius, init.amplitude, init.seed, degree)
    return require_valid(RadialShape(np.array(init.coeffs, dtype=float)))


def target_tensor(config: ExperimentConfig) -> TargetTensor:
    if config.target is None:
        raise ValidationError("this command needs a [target] table")
    t = config.target
    return TargetTensor.from_entries(t.b11, t.b12, t.b22, b21=t.b21)


def build_problem(config: ExperimentConfig) -> Problem:
    return Problem(
        case=config.case,
        sigma=sigma_pair(config),
        target=target_tensor(config),
        level=config.level,
        solver=solver_settings(config),
    )


# Commands -------------------------------------------------------------------

@dataclass
class TensorRun:
    shape: RadialShape
    tensor: EffectiveTensor
    objective: Optional[float]
    iterations: int
    residual: float
    out_dir: Path


def compute_tensor(config: ExperimentConfig) -> TensorRun:
    """
    Mesh, solve and homogenize the initial shape; write results.json.

    Raises:
        HomogenizationError subclasses on shape, mesh or solver failures
    """
    started = time.perf_counter()
    shape = initial_shape(config)
    sigma = sigma_pair(config)
    target = target_tensor(config) if config.target is not None else None
    state = pipeline.run(
        shape, config.case, sigma, config.level,
        solver=solver_settings(config), target=target, with_gradient=False,
    )
    tensor = state["tensor"]
    solutions = state["solutions"]
    if target is not None and tensor.lower is not None:
        check_target_admissible(target, tensor.lower, tensor.upper)

    out_dir = config.output_dir
    write_json(
        build_results(
            config, shape, tensor,
            objective=state["objective"],
            iterations=solutions.iterations,
            residual=solutions.residual,
        ),
        out_dir / "results.json",
    )
    _write_shape_artifacts(config, shape, out_dir, mesh=state["mesh"])
    write_metadata(out_dir, "tensor", {"total": time.perf_counter() - started})
    return TensorRun(
        shape=shape,
        tensor=tensor,
        objective=state["objective"],
        iterations=solutions.iterations,
        residual=solutions.residual,
        out_dir=out_dir,
    )


@dataclass
class GradCheckReport:
    indices: List[int]
    analytic: np.ndarray
    finite_difference: np.ndarray
    error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.error <= self.tolerance

    def to_frame(self) -> pd.DataFrame:
        return grad_check_frame(self.indices, self.analytic, self.finite_difference)


def check_gradient(
    config: ExperimentConfig,
    fd_step: Optional[float] = None,
    coeffs: Optional[List[int]] = None,
    flip_sign: bool = False,
) -> GradCheckReport:
    """
    Compare the analytic objective gradient with central differences.

    Every perturbed shape is meshed and solved from scratch.

    Args:
        config: Experiment; needs a target
        fd_step: Difference step, config value when None
        coeffs: Coefficient subset, config value (or all) when None
        flip_sign: Negate the analytic gradient; used to exercise the failure path
    """
    started = time.perf_counter()
    step = fd_step if fd_step is not None else config.grad_check.fd_step
    problem = build_problem(config)
    shape = initial_shape(config)
    indices = coeffs if coeffs is not None else config.grad_check.coeffs
    indices = list(range(shape.size)) if indices is None else list(indices)

    evaluation = pipeline.evaluate(problem, shape)
    analytic = evaluation.gradient.objective[indices]
    if flip_sign:
        analytic = -analytic

    def objective(c: np.ndarray) -> float:
        state = pipeline.run(
            shape.with_coeffs(c), problem.case, problem.sigma, problem.level,
            solver=problem.solver, target=problem.target, with_gradient=False,
        )
        return state["objective"]

    fd = central_differences(objective, shape.coeffs, step, indices)
    report = GradCheckReport(
        indices=indices,
        analytic=analytic,
        finite_difference=fd,
        error=relative_l2_error(analytic, fd),
        tolerance=config.grad_check.tolerance,
    )
    logger.info("Gradient check: relative l2 error %.3e (tolerance %.1e)", report.error, report.tolerance)

    out_dir = config.output_dir
    write_frame(report.to_frame(), out_dir / "grad_check.csv")
    write_json(
        {
            "config_echo": config.model_dump(mode="json"),
            "fd_step": step,
            "coefficients": indices,
            "analytic": analytic,
            "finite_difference": fd,
            "relative_l2_error": report.error,
            "tolerance": report.tolerance,
            "passed": report.passed,
        },
        out_dir / "grad_check.json",
    )
    write_metadata(out_dir, "grad-check", {"total": time.perf_counter() - started})
    return report


def run_optimization(config: ExperimentConfig) -> OptimizeRecord:
    """
    Run the descent loop and write results, history, shape and pictures.

    Raises:
        HomogenizationError subclasses if the initial shape cannot be evaluated
    """
    started = time.perf_counter()
    problem = build_problem(config)
    shape = initial_shape(config)
    record = minimize(OptimizeConfig.from_experiment(config), shape, pipeline.evaluator(problem))

    final = record.final
    out_dir = config.output_dir
    write_json(
        build_results(
            config, final.shape, final.tensor,
            objective=final.objective,
            gradient_norm=final.gradient.norm,
            iterations=final.iterations,
            residual=final.residual,
            termination=record.termination.value,
            extra={"accepted_steps": record.accepted_steps},
        ),
        out_dir / "results.json",
    )
    write_history(record, out_dir / "history.csv")
    write_shape_csv(final.shape, out_dir / "shape.csv")
    _write_shape_artifacts(config, final.shape, out_dir)
    if config.output.emit_plot:
        write_report(
            out_dir / "report.html", final.shape, config.case, record, final.tensor,
            theme=get_theme(config.output.theme),
        )
    write_metadata(out_dir, "optimize", {"total": time.perf_counter() - started})
    return record


@dataclass
class TaylorReport:
    """Resolved tensors against first- and second-order predictions."""
    base: np.ndarray
    first: np.ndarray
    second: np.ndarray
    rows: List[Dict[str, Any]] = field(default_factory=list)
    mean: Optional[np.ndarray] = None
    variance: Optional[np.ndarray] = None

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows)

    def ratios(self, column: str) -> List[float]:
        """Error ratios between consecutive nonzero epsilons (halving gives the order)."""
        errors = [row[column] for row in self.rows if row["eps"] > 0.0]
        return [a / b for a, b in zip(errors, errors[1:]) if b > 0.0]


def run_taylor_study(config: ExperimentConfig) -> TaylorReport:
    """
    Compare re-solved tensors with the shape Taylor expansion (perforated case).

    Raises:
        ValidationError: For the mixture case
    """
    if config.case != CellCase.PERFORATED:
        raise ValidationError("the Taylor study needs case = 'perforated'")
    started = time.perf_counter()
    shape = initial_shape(config)
    sigma = sigma_pair(config)
    settings = solver_settings(config)
    direction = pad_direction(config.uq.direction, shape.size)

    state = pipeline.run(shape, config.case, sigma, config.level, solver=settings, with_gradient=False)
    system, solutions = state["system"], state["solutions"]
    base = state["tensor"].matrix
    derivatives = transported_derivatives(system, sigma, solutions, direction, settings)
    first, second = derivatives.first, derivatives.second
    traces = recover_interface_traces(state["mesh"], solutions, sigma, config.case)
    boundary_first = entry_shape_gradient(traces, direction_velocity(shape, traces.quadrature, direction))
    logger.info(
        "First derivative: transported %s, boundary form %s",
        np.array2string(first, precision=5), np.array2string(boundary_first, precision=5),
    )

    report = TaylorReport(base=base, first=first, second=second)
    for eps in [0.0] + sorted(config.uq.epsilons, reverse=True):
        if eps == 0.0:
            resolved = base
        else:
            perturbed = require_valid(shape.with_coeffs(shape.coeffs + eps * direction))
            resolved = pipeline.run(
                perturbed, config.case, sigma, config.level, solver=settings, with_gradient=False
            )["tensor"].matrix
        pred1 = taylor_predict(base, first, eps)
        pred2 = taylor_predict(base, first, eps, second)
        report.rows.append({
            "eps": eps,
            "a11": resolved[0, 0], "a12": resolved[0, 1], "a22": resolved[1, 1],
            "first_order_error": float(np.linalg.norm(resolved - pred1)),
            "second_order_error": float(np.linalg.norm(resolved - pred2)),
        })
    report.mean, report.variance = random_amplitude_moments(base, first, second, max(config.uq.epsilons))
    logger.info(
        "Taylor ratios: first order %s, second order %s",
        report.ratios("first_order_error"), report.ratios("second_order_error"),
    )

    out_dir = config.output_dir
    write_frame(report.to_frame(), out_dir / "taylor.csv")
    write_json(
        {
            "config_echo": config.model_dump(mode="json"),
            "base": base,
            "first_derivative": first,
            "boundary_first_derivative": boundary_first,
            "second_derivative": second,
            "rows": report.rows,
            "first_order_ratios": report.ratios("first_order_error"),
            "second_order_ratios": report.ratios("second_order_error"),
            "mean_surrogate": report.mean,
            "variance_surrogate": report.variance,
        },
        out_dir / "taylor.json",
    )
    write_metadata(out_dir, "uq", {"total": time.perf_counter() - started})
    return report


def export_mesh(config: ExperimentConfig, path: Optional[Path] = None) -> Path:
    """Mesh the initial shape and write it as plain text."""
    shape = initial_shape(config)
    mesh = build_mesh(shape, config.level, config.case)
    return write_mesh(mesh, path or config.output_dir / "mesh.txt")


def _write_shape_artifacts(config: ExperimentConfig, shape: RadialShape, out_dir: Path, mesh=None) -> None:
    if config.output.emit_svg:
        write_shape_svg(shape, config.case, out_dir / "shape.svg", get_theme(config.output.theme))
    if config.output.emit_mesh:
        mesh = mesh or build_mesh(shape, config.level, config.case)
        write_mesh(mesh, out_dir / "mesh.txt")


# Sweeps ---------------------------------------------------------------------

COMMANDS: Dict[str, Callable[[ExperimentConfig], Any]] = {
    "tensor": compute_tensor,
    "grad-check": check_gradient,
    "optimize": run_optimization,
    "uq": run_taylor_study,
}


def expand_sweep(config: ExperimentConfig) -> List[ExperimentConfig]:
    """
    One config per sweep value, each writing to its own subdirectory.

    Returns:
        [config] unchanged when there is no sweep table
    """
    if config.sweep is None:
        return [config]
    base = config.model_dump(mode="json", exclude={"sweep"})
    jobs = []
    for value in config.sweep.values:
        data = copy.deepcopy(base)
        set_dotted(data, config.sweep.key, value)
        set_dotted(data, "output.dir", str(config.output_dir / f"{config.sweep.key}={value}"))
        jobs.append(config_from_dict(data))
    return jobs


def succeeded(command: str, result: Any) -> bool:
    """False for a failed gradient check or an optimization that did not converge."""
    if command == "grad-check":
        return result.passed
    if command == "optimize":
        return result.converged
    return True


def _run_job(command: str, config: ExperimentConfig) -> Tuple[Path, bool]:
    result = COMMANDS[command](config)
    return config.output_dir, succeeded(command, result)


def run_sweep(command: str, config: ExperimentConfig, jobs: int = 1) -> List[Tuple[Path, bool]]:
    """
    Run `command` for every sweep job, in parallel when jobs > 1.

    Returns:
        (output directory, success flag) per job, in sweep order
    """
    configs = expand_sweep(config)
    if jobs <= 1 or len(configs) == 1:
        return [_run_job(command, c) for c in configs]
    with ProcessPoolExecutor(max_workers=jobs) as executor:
        return list(executor.map(_run_job, [command] * len(configs), configs))
