"""
Result file writers.

`results.json` keeps a fixed key order and carries no clock-dependent data,
so identical configurations give byte-identical files; wall-clock timings and
the run timestamp go to `metadata.json`. Floats are written with Python's
shortest round-trip representation (at most 17 significant digits); CSV
files use `%.17g`.
"""

import json
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

from core.geometry import RadialShape, area, boundary_point, eval_radius
from core.homogenize import EffectiveTensor
from core.optimize import OptimizeRecord
from core.specs import CellCase, ExperimentConfig


SHAPE_SAMPLES = 512
CSV_FLOAT_FORMAT = "%.17g"


def _plain(value: Any) -> Any:
    """Convert numpy scalars and arrays into JSON-native values."""
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, np.generic):
        return value.item()
    return value


def write_json(payload: Dict[str, Any], path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_plain(payload), indent=2, allow_nan=False) + "\n")
    return path


def tensor_section(tensor: EffectiveTensor) -> Dict[str, Any]:
    return tensor.to_dict()


def bounds_section(tensor: EffectiveTensor, shape: RadialShape) -> Dict[str, Any]:
    section = {
        "reuss_lower": tensor.lower,
        "voigt_upper": tensor.upper,
        "eigenvalues": [float(e) for e in tensor.eigenvalues],
        "inclusion_fraction": area(shape),
    }
    if tensor.case == CellCase.PERFORATED:
        section["material_fraction"] = tensor.material_fraction
    return section


def build_results(
    config: ExperimentConfig,
    shape: RadialShape,
    tensor: EffectiveTensor,
    objective: Optional[float] = None,
    gradient_norm: Optional[float] = None,
    iterations: int = 0,
    residual: float = 0.0,
    termination: Optional[str] = None,
    extra: Optional[Dict[str, Any]] = None,
) -> Dict[str, Any]:
    """Assemble the results document in its fixed key order."""
    payload = {
        "config_echo": config.model_dump(mode="json"),
        "tensor": tensor_section(tensor),
        "bounds": bounds_section(tensor, shape),
        "objective": objective,
        "gradient_norm": gradient_norm,
        "solver_stats": {"iterations": iterations, "residual": residual},
        "termination": termination,
        "coefficients": shape.to_list(),
    }
    if extra:
        payload.update(extra)
    return payload


def write_metadata(out_dir: Path, command: str, timings: Dict[str, float]) -> Path:
    return write_json(
        {
            "command": command,
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "timings": timings,
        },
        out_dir / "metadata.json",
    )


def write_frame(df: pd.DataFrame, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT)
    return path


def shape_frame(shape: RadialShape, samples: int = SHAPE_SAMPLES) -> pd.DataFrame:
    """Columns phi, r, x, y on a uniform angle grid."""
    phi = np.arange(samples) * (2.0 * np.pi / samples)
    r, _ = eval_radius(shape, phi)
    points = boundary_point(shape, phi)
    return pd.DataFrame({"phi": phi, "r": r, "x": points[:, 0], "y": points[:, 1]})


def write_history(record: OptimizeRecord, path: Path) -> Path:
    return write_frame(record.to_frame(), path)


def write_shape_csv(shape: RadialShape, path: Path) -> Path:
    return write_frame(shape_frame(shape), path)


def grad_check_frame(
    indices: List[int],
    analytic: np.ndarray,
    finite_difference: np.ndarray
) -> pd.DataFrame:
    """Per-coefficient comparison table."""
    analytic = np.asarray(analytic, dtype=float)
    finite_difference = np.asarray(finite_difference, dtype=float)
    return pd.DataFrame({
        "coeff": indices,
        "analytic": analytic,
        "finite_difference": finite_difference,
        "abs_error": np.abs(analytic - finite_difference),
    })
