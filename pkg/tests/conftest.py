import numpy as np
import pytest

from core.coeff import SigmaPair, make_field
from core.fem import assemble_system, solve_cell_problems
from core.geometry import RadialShape, make_circle
from core.mesh import build_mesh
from core.specs import CellCase, config_from_dict


@pytest.fixture
def circle():
    return make_circle(0.25, degree=8)


@pytest.fixture
def lopsided():
    """Non-symmetric shape with cos and sin content in several modes."""
    coeffs = np.zeros(17)
    coeffs[0] = 0.25
    coeffs[1], coeffs[2] = 0.012, -0.008
    coeffs[3], coeffs[4] = 0.02, 0.01
    coeffs[5] = -0.006
    return RadialShape(coeffs)


@pytest.fixture
def stiff_inclusion():
    return SigmaPair(make_field(1.0), make_field(10.0))


@pytest.fixture
def hole():
    return SigmaPair(make_field(1.0))


@pytest.fixture(scope="module")
def solved_mixture():
    """Circle 0.25 with sigma = (1, 10) at level 3."""
    shape = make_circle(0.25, degree=8)
    sigma = SigmaPair(make_field(1.0), make_field(10.0))
    mesh = build_mesh(shape, 3, CellCase.MIXTURE)
    system = assemble_system(mesh, sigma, CellCase.MIXTURE)
    return mesh, sigma, system, solve_cell_problems(system)


@pytest.fixture
def make_config(tmp_path):
    """Build a validated config; keyword groups are merged over a small mixture run."""
    def build(**overrides):
        data = {
            "case": "mixture",
            "sigma1": 1.0,
            "sigma2": 10.0,
            "target": {"b11": 1.5, "b22": 1.4},
            "fourier": {"N": 4},
            "mesh": {"level": 2},
            "output": {"dir": str(tmp_path / "out")},
        }
        for key, value in overrides.items():
            if isinstance(value, dict) and isinstance(data.get(key), dict):
                data[key] = {**data[key], **value}
            elif value is None:
                data.pop(key, None)
            else:
                data[key] = value
        return config_from_dict(data)
    return build
