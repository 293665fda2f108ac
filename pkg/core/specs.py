"""
Experiment specification types and validation.

This module defines the configuration an experiment is described by: the
cell case, the two conductivities, the target tensor, the Fourier degree,
the mesh level, the initial shape, optimizer overrides and output options.
Experiment files are TOML; environment variables (loaded from a `.env`
file when present) provide defaults for the mesh level, the output
directory and the log level.
"""

import os
import sys

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError as PydanticValidationError

from themes.base import THEMES


# Load environment variables
load_dotenv()


class CellCase(str, Enum):
    """Microstructure variants."""
    MIXTURE = "mixture"        # Two conducting materials
    PERFORATED = "perforated"  # Matrix with a hole, Neumann condition on the hole


class TerminationReason(str, Enum):
    """Why the optimizer stopped."""
    GRADIENT_TOL = "gradient-tol"
    OBJECTIVE_TOL = "objective-tol"
    MAX_ITER = "max-iter"
    LINE_SEARCH_FAIL = "line-search-fail"


class ValidationError(Exception):
    """Raised when an experiment configuration is invalid."""
    pass


Scalar = Union[float, str]


class TargetSpec(BaseModel):
    """Target tensor B; b21 defaults to b12 and must equal it when given."""
    model_config = ConfigDict(extra="forbid")

    b11: float = Field(description="Target entry b11")
    b12: float = Field(default=0.0, description="Target entry b12")
    b21: Optional[float] = Field(default=None, description="Target entry b21, must equal b12")
    b22: float = Field(description="Target entry b22")


class FourierSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    N: int = Field(default=32, ge=1, description="Fourier expansion degree")


class MeshSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    level: Optional[int] = Field(default=None, ge=0, le=8, description="Regular refinement depth")


class InitSpec(BaseModel):
    """Initial shape of the inclusion."""
    model_config = ConfigDict(extra="forbid")

    kind: Literal["circle", "perturbed", "explicit"] = Field(default="circle")
    radius: float = Field(default=0.25, gt=0.0, description="Circle radius in cell units")
    amplitude: float = Field(default=0.02, ge=0.0, description="Perturbation amplitude for kind=perturbed")
    seed: int = Field(default=1, description="Seed of the perturbation generator")
    coeffs: Optional[List[float]] = Field(default=None, description="Explicit coefficients for kind=explicit")


class OptimizerSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    grad_tol: float = Field(default=1e-5, gt=0.0, description="Stop when the gradient l2 norm is smaller")
    objective_tol: float = Field(default=1e-10, gt=0.0, description="Stop when J is smaller")
    max_iter: int = Field(default=500, ge=1)
    initial_step: Optional[float] = Field(default=None, gt=0.0, description="Defaults to 0.1 / |g0|")
    armijo: float = Field(default=1e-4, gt=0.0, lt=1.0)
    backtrack: float = Field(default=0.5, gt=0.0, lt=1.0)
    max_backtracks: int = Field(default=30, ge=1)


class SolverSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    rtol: float = Field(default=1e-10, gt=0.0)
    atol: float = Field(default=1e-14, gt=0.0)
    max_iter: int = Field(default=10_000, ge=1)
    preconditioner: Literal["jacobi", "none"] = Field(default="jacobi", description="CG preconditioner")


class BoundsSpec(BaseModel):
    """Admissible range of the conductivities, probed on a grid."""
    model_config = ConfigDict(extra="forbid")

    lower: float = Field(default=0.1, gt=0.0)
    upper: float = Field(default=100.0, gt=0.0)


class OutputSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    dir: Optional[str] = Field(default=None, description="Output directory")
    emit_svg: bool = Field(default=True)
    emit_mesh: bool = Field(default=False)
    emit_plot: bool = Field(default=False, description="Write a Plotly HTML report")
    theme: str = Field(default="professional")


class GradCheckSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    fd_step: float = Field(default=1e-4, gt=0.0)
    coeffs: Optional[List[int]] = Field(default=None, description="Coefficient subset, all when absent")
    tolerance: float = Field(default=5e-2, gt=0.0)


class UQSpec(BaseModel):
    """Taylor-expansion study of a perforated cell."""
    model_config = ConfigDict(extra="forbid")

    direction: List[float] = Field(
        default_factory=lambda: [0.0, 0.0, 0.0, 0.5, 0.0],
        description="Coefficient-space direction, zero-padded to 2N+1",
    )
    epsilons: List[float] = Field(default_factory=lambda: [0.02, 0.01, 0.005])


class SweepSpec(BaseModel):
    """Run one job per value of a dotted config key."""
    model_config = ConfigDict(extra="forbid")

    key: str = Field(description="Dotted key, e.g. target.b11")
    values: List[Any]


class ExperimentConfig(BaseModel):
    """Complete description of one experiment."""
    model_config = ConfigDict(extra="forbid")

    case: CellCase = Field(default=CellCase.MIXTURE)
    sigma1: Scalar = Field(default=1.0, description="Matrix conductivity, number or expression")
    sigma2: Optional[Scalar] = Field(default=None, description="Inclusion conductivity; absent when perforated")
    target: Optional[TargetSpec] = None
    fourier: FourierSpec = Field(default_factory=FourierSpec)
    mesh: MeshSpec = Field(default_factory=MeshSpec)
    init: InitSpec = Field(default_factory=InitSpec)
    optimizer: OptimizerSpec = Field(default_factory=OptimizerSpec)
    solver: SolverSpec = Field(default_factory=SolverSpec)
    bounds: BoundsSpec = Field(default_factory=BoundsSpec)
    output: OutputSpec = Field(default_factory=OutputSpec)
    grad_check: GradCheckSpec = Field(default_factory=GradCheckSpec)
    uq: UQSpec = Field(default_factory=UQSpec)
    sweep: Optional[SweepSpec] = None

    @property
    def level(self) -> int:
        return self.mesh.level if self.mesh.level is not None else default_level()

    @property
    def output_dir(self) -> Path:
        return Path(self.output.dir or os.getenv("HOMOPT_OUT", "results"))

    @property
    def target_matrix(self) -> List[List[float]]:
        if self.target is None:
            raise ValidationError("this command needs a [target] table")
        b12 = self.target.b12
        return [[self.target.b11, b12], [b12, self.target.b22]]


def default_level() -> int:
    raw = os.getenv("HOMOPT_LEVEL", "4")
    try:
        return int(raw)
    except ValueError as e:
        raise ValidationError(f"HOMOPT_LEVEL must be an integer mesh level, got {raw!r}") from e


def default_log_level() -> str:
    return os.getenv("HOMOPT_LOG_LEVEL", "INFO")


def validate_experiment_config(config: ExperimentConfig) -> None:
    """
    Cross-field checks pydantic cannot express per field.

    Raises:
        ValidationError: If the config is inconsistent
    """
    if config.case == CellCase.PERFORATED and config.sigma2 is not None:
        raise ValidationError("perforated case takes no sigma2")

    if config.case == CellCase.MIXTURE and config.sigma2 is None:
        raise ValidationError("mixture case requires sigma2")

    if config.init.kind == "explicit":
        expected = 2 * config.fourier.N + 1
        if config.init.coeffs is None or len(config.init.coeffs) != expected:
            got = None if config.init.coeffs is None else len(config.init.coeffs)
            raise ValidationError(f"explicit coeffs must have length 2N+1 = {expected}, got {got}")

    if config.target is not None and config.target.b21 is not None:
        if config.target.b21 != config.target.b12:
            raise ValidationError(
                f"target must be symmetric: b12={config.target.b12}, b21={config.target.b21}"
            )

    if config.bounds.upper <= config.bounds.lower:
        raise ValidationError("bounds.upper must exceed bounds.lower")

    if len(config.uq.direction) > 2 * config.fourier.N + 1:
        raise ValidationError("uq.direction is longer than 2N+1")

    if config.output.theme not in THEMES:
        raise ValidationError(f"unknown theme {config.output.theme!r}; available: {sorted(THEMES)}")

    if not 0 <= config.level <= 8:
        raise ValidationError(f"mesh level must lie in [0, 8], got {config.level}")


def config_from_dict(data: Dict[str, Any]) -> ExperimentConfig:
    """
    Build and validate a config from plain data.

    Raises:
        ValidationError: On schema or consistency errors
    """
    try:
        config = ExperimentConfig.model_validate(data)
    except PydanticValidationError as e:
        raise ValidationError(str(e)) from e
    validate_experiment_config(config)
    return config


def load_config(path: Union[str, Path], overrides: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
    """
    Read a TOML experiment file and apply dotted-key overrides.

    Args:
        path: TOML file
        overrides: Mapping like {"mesh.level": 5}

    Raises:
        ValidationError: If the file is missing, malformed or inconsistent
    """
    path = Path(path)
    try:
        with open(path, "rb") as f:
            data = tomllib.load(f)
    except FileNotFoundError as e:
        raise ValidationError(f"config file not found: {path}") from e
    except tomllib.TOMLDecodeError as e:
        raise ValidationError(f"malformed config {path}: {e}") from e
    for key, value in (overrides or {}).items():
        set_dotted(data, key, value)
    return config_from_dict(data)


def set_dotted(data: Dict[str, Any], key: str, value: Any) -> None:
    """Set data['a']['b'] for key 'a.b', creating intermediate tables."""
    parts = key.split(".")
    node = data
    for part in parts[:-1]:
        node = node.setdefault(part, {})
    node[parts[-1]] = value
