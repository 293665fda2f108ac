"""
Steepest descent over the Fourier coefficients with Armijo backtracking.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np
import pandas as pd

from core.coeff import SigmaPair
from core.errors import HomogenizationError
from core.fem import SolverSettings
from core.geometry import RadialShape, eval_radius, validate_shape, validation_angles
from core.homogenize import EffectiveTensor, TargetTensor
from core.shapecalc import ShapeGradient
from core.specs import CellCase, ExperimentConfig, TerminationReason


logger = logging.getLogger(__name__)

HISTORY_COLUMNS = ["iter", "J", "grad_norm", "step", "a11", "a12", "a22"]


@dataclass(frozen=True)
class OptimizeConfig:
    """
    Optimizer controls.

    Attributes:
        degree: Fourier degree N
        level: Mesh refinement level
        grad_tol: Stop when |g| < grad_tol
        objective_tol: Stop when J < objective_tol
        max_iter: Maximum accepted steps
        initial_step: First trial step, 0.1 / |g0| when None
        armijo: Sufficient-decrease constant
        backtrack: Step reduction factor
        max_backtracks: Failed trials before giving up
    """
    degree: int = 32
    level: int = 4
    grad_tol: float = 1e-5
    objective_tol: float = 1e-10
    max_iter: int = 500
    initial_step: Optional[float] = None
    armijo: float = 1e-4
    backtrack: float = 0.5
    max_backtracks: int = 30

    def __post_init__(self):
        if self.degree < 1:
            raise ValueError(f"degree must be at least 1, got {self.degree}")
        for name in ("grad_tol", "objective_tol", "armijo", "backtrack"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")

    @classmethod
    def from_experiment(cls, config: ExperimentConfig) -> "OptimizeConfig":
        opt = config.optimizer
        return cls(
            degree=config.fourier.N,
            level=config.level,
            grad_tol=opt.grad_tol,
            objective_tol=opt.objective_tol,
            max_iter=opt.max_iter,
            initial_step=opt.initial_step,
            armijo=opt.armijo,
            backtrack=opt.backtrack,
            max_backtracks=opt.max_backtracks,
        )


@dataclass(frozen=True)
class Problem:
    """What is being matched: the microstructure case, its materials and the target."""
    case: CellCase
    sigma: SigmaPair
    target: TargetTensor
    level: int
    solver: SolverSettings = SolverSettings()


@dataclass
class Evaluation:
    """State, tensor, objective and gradient at one shape."""
    shape: RadialShape
    tensor: EffectiveTensor
    objective: float
    gradient: ShapeGradient
    iterations: int = 0
    residual: float = 0.0


Evaluator = Callable[[RadialShape], Evaluation]


@dataclass
class IterationRecord:
    iteration: int
    coeffs: List[float]
    objective: float
    grad_norm: float
    step: float
    a11: float
    a12: float
    a22: float


@dataclass
class OptimizeRecord:
    """
    Full optimizer history.

    Attributes:
        iterations: Iteration 0 is the initial shape, then one entry per accepted step
        termination: Why the loop stopped
        final: Evaluation at the last accepted shape
    """
    iterations: List[IterationRecord] = field(default_factory=list)
    termination: Optional[TerminationReason] = None
    final: Optional[Evaluation] = None

    @property
    def accepted_steps(self) -> int:
        return max(len(self.iterations) - 1, 0)

    @property
    def converged(self) -> bool:
        return self.termination in (TerminationReason.GRADIENT_TOL, TerminationReason.OBJECTIVE_TOL)

    def to_frame(self) -> pd.DataFrame:
        """History table with columns iter, J, grad_norm, step, a11, a12, a22."""
        rows = [
            [r.iteration, r.objective, r.grad_norm, r.step, r.a11, r.a12, r.a22]
            for r in self.iterations
        ]
        return pd.DataFrame(rows, columns=HISTORY_COLUMNS)


def _record(iteration: int, evaluation: Evaluation, step: float) -> IterationRecord:
    return IterationRecord(
        iteration=iteration,
        coeffs=evaluation.shape.to_list(),
        objective=evaluation.objective,
        grad_norm=evaluation.gradient.norm,
        step=step,
        a11=evaluation.tensor.a11,
        a12=evaluation.tensor.a12,
        a22=evaluation.tensor.a22,
    )


def _converged(config: OptimizeConfig, evaluation: Evaluation) -> Optional[TerminationReason]:
    if evaluation.objective < config.objective_tol:
        return TerminationReason.OBJECTIVE_TOL
    if evaluation.gradient.norm < config.grad_tol:
        return TerminationReason.GRADIENT_TOL
    return None


def minimize(
    config: OptimizeConfig,
    initial_shape: RadialShape,
    evaluator: Evaluator,
    direction_filter: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    callback: Optional[Callable[[IterationRecord], None]] = None,
) -> OptimizeRecord:
    """
    Minimize J over the coefficients starting from `initial_shape`.

    Trial shapes that fail validation, meshing or solving count as failed
    backtracks. The loop stops on the gradient or objective tolerance, after
    max_iter accepted steps, or when a line search exhausts its backtracks.

    Args:
        config: Optimizer controls
        initial_shape: Valid starting shape
        evaluator: Maps a shape to its Evaluation (mesh, solve, tensor, gradient)
        direction_filter: Optional map applied to -g before the line search
        callback: Called with every accepted IterationRecord

    Raises:
        InvalidShapeError, MeshError, SolverError: At the initial shape only
    """
    current = evaluator(initial_shape)
    record = OptimizeRecord(iterations=[_record(0, current, 0.0)])
    step = config.initial_step
    if step is None:
        step = 0.1 / current.gradient.norm if current.gradient.norm > 0.0 else 1.0
    logger.info("Initial J=%.6e |g|=%.3e", current.objective, current.gradient.norm)

    while True:
        reason = _converged(config, current)
        if reason is None and record.accepted_steps >= config.max_iter:
            reason = TerminationReason.MAX_ITER
        if reason is not None:
            break

        grad = current.gradient.objective
        direction = -grad if direction_filter is None else direction_filter(-grad)
        slope = float(grad @ direction)
        accepted = None
        trial_step = step
        for attempt in range(config.max_backtracks):
            coeffs = current.shape.coeffs + trial_step * direction
            trial_shape = current.shape.with_coeffs(coeffs)
            report = validate_shape(trial_shape)
            if not report.ok:
                logger.debug("Trial step %.3e rejected: %s", trial_step, report.describe())
                trial_step *= config.backtrack
                continue
            try:
                trial = evaluator(trial_shape)
            except HomogenizationError as e:
                logger.warning("Trial step %.3e failed: %s", trial_step, e)
                trial_step *= config.backtrack
                continue
            if trial.objective <= current.objective + config.armijo * trial_step * slope:
                accepted = trial
                break
            logger.debug(
                "Trial step %.3e: J=%.6e does not decrease enough", trial_step, trial.objective
            )
            trial_step *= config.backtrack

        if accepted is None:
            reason = TerminationReason.LINE_SEARCH_FAIL
            break

        current = accepted
        entry = _record(record.accepted_steps + 1, current, trial_step)
        record.iterations.append(entry)
        logger.info(
            "Iteration %d: J=%.6e |g|=%.3e step=%.3e",
            entry.iteration, entry.objective, entry.grad_norm, trial_step,
        )
        if callback is not None:
            callback(entry)
        step = trial_step / config.backtrack

    record.termination = reason
    record.final = current
    logger.info("Optimizer stopped (%s) after %d steps, J=%.6e", reason.value, record.accepted_steps, current.objective)
    return record


def sup_distance(shape_a: RadialShape, shape_b: RadialShape) -> float:
    """
    Max |r_a - r_b| over the validation grid.

    Raises:
        ValueError: If the degrees differ
    """
    if shape_a.degree != shape_b.degree:
        raise ValueError(f"degree mismatch: {shape_a.degree} vs {shape_b.degree}")
    phi = validation_angles()
    r_a, _ = eval_radius(shape_a, phi)
    r_b, _ = eval_radius(shape_b, phi)
    return float(np.max(np.abs(r_a - r_b)))
