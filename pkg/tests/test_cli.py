import json
import pickle

import pytest

from cli import (
    EXIT_CONFIG,
    EXIT_GRAD_CHECK,
    EXIT_MESH,
    EXIT_NOT_CONVERGED,
    EXIT_OK,
    EXIT_SOLVER,
    build_parser,
    main,
)
from core.errors import ExpressionSyntaxError, SolverError
from core.specs import ValidationError, default_level, load_config


BASE = """
case = "mixture"
sigma1 = 1.0
sigma2 = {sigma2}

[target]
b11 = 1.5
b22 = 1.4

[fourier]
N = 2

[mesh]
level = 1
{extra}
"""


@pytest.fixture
def write_config(tmp_path):
    def write(sigma2="10.0", extra=""):
        path = tmp_path / "experiment.toml"
        path.write_text(BASE.format(sigma2=sigma2, extra=extra))
        return path
    return write


def run(*argv):
    return main(["--log-level", "WARNING", *argv])


class TestParser:
    def test_commands(self):
        parser = build_parser()
        for command in ("tensor", "grad-check", "optimize", "uq", "mesh-export"):
            args = parser.parse_args([command, "--config", "c.toml"])
            assert args.command == command and args.jobs == 1

    def test_common_flags(self):
        args = build_parser().parse_args(
            ["optimize", "--config", "c.toml", "--level", "5", "--seed", "3", "--out", "o", "--jobs", "4"]
        )
        assert (args.level, args.seed, args.out, args.jobs) == (5, 3, "o", 4)

    def test_overrides_reach_config(self, write_config, tmp_path):
        path = write_config(extra='[init]\nkind = "perturbed"\n')
        config = load_config(path, {"mesh.level": 3, "init.seed": 9, "output.dir": str(tmp_path / "x")})
        assert (config.level, config.init.seed, config.output_dir) == (3, 9, tmp_path / "x")


class TestExitCodes:
    def test_tensor_ok(self, write_config, tmp_path):
        out = tmp_path / "out"
        assert run("tensor", "--config", str(write_config()), "--out", str(out)) == EXIT_OK
        data = json.loads((out / "results.json").read_text())
        assert data["config_echo"]["mesh"]["level"] == 1

    def test_level_flag_overrides_file(self, write_config, tmp_path):
        out = tmp_path / "out"
        assert run("tensor", "--config", str(write_config()), "--level", "0", "--out", str(out)) == EXIT_OK
        assert json.loads((out / "results.json").read_text())["config_echo"]["mesh"]["level"] == 0

    def test_missing_config(self, tmp_path, capsys):
        assert run("tensor", "--config", str(tmp_path / "nope.toml")) == EXIT_CONFIG
        assert "error:" in capsys.readouterr().err

    def test_unknown_key(self, write_config, tmp_path):
        path = write_config(extra="[mesh_options]\nfoo = 1\n")
        assert run("tensor", "--config", str(path), "--out", str(tmp_path / "o")) == EXIT_CONFIG

    def test_perforated_with_inclusion_material(self, write_config, tmp_path):
        path = tmp_path / "perforated.toml"
        path.write_text(write_config().read_text().replace('"mixture"', '"perforated"'))
        assert run("tensor", "--config", str(path), "--out", str(tmp_path / "o")) == EXIT_CONFIG

    def test_expression_syntax_error(self, write_config, tmp_path, capsys):
        path = write_config(sigma2='"cos("')
        assert run("tensor", "--config", str(path), "--out", str(tmp_path / "o")) == EXIT_CONFIG
        assert "offset 4" in capsys.readouterr().err

    def test_invalid_shape(self, write_config, tmp_path):
        path = write_config(extra='[init]\nkind = "explicit"\ncoeffs = [0.495, 0.0, 0.0, 0.0, 0.0]\n')
        assert run("tensor", "--config", str(path), "--out", str(tmp_path / "o")) == EXIT_MESH

    def test_solver_failure(self, write_config, tmp_path, capsys):
        path = write_config(extra="[solver]\nmax_iter = 1\n")
        assert run("tensor", "--config", str(path), "--level", "2", "--out", str(tmp_path / "o")) == EXIT_SOLVER
        assert "did not converge" in capsys.readouterr().err

    def test_grad_check_flipped_sign(self, write_config, tmp_path):
        path = write_config(extra='[init]\nkind = "perturbed"\n')
        code = run(
            "grad-check", "--config", str(path), "--coeffs", "0,3", "--flip-sign", "--out", str(tmp_path / "o")
        )
        assert code == EXIT_GRAD_CHECK

    def test_grad_check_bad_coeffs(self, write_config, tmp_path):
        assert run("grad-check", "--config", str(write_config()), "--coeffs", "a,b") == EXIT_CONFIG

    def test_optimize_not_converged(self, write_config, tmp_path):
        path = write_config(extra="[optimizer]\nmax_iter = 1\n")
        assert run("optimize", "--config", str(path), "--out", str(tmp_path / "o")) == EXIT_NOT_CONVERGED
        assert (tmp_path / "o" / "history.csv").exists()

    def test_uq_needs_perforated(self, write_config, tmp_path):
        assert run("uq", "--config", str(write_config()), "--out", str(tmp_path / "o")) == EXIT_CONFIG

    def test_mesh_export(self, write_config, tmp_path):
        assert run("mesh-export", "--config", str(write_config()), "--out", str(tmp_path / "m")) == EXIT_OK
        assert (tmp_path / "m" / "mesh.txt").exists()

    def test_sweep_in_parallel(self, write_config, tmp_path):
        path = write_config(extra='[sweep]\nkey = "sigma2"\nvalues = [2.0, 3.0]\n')
        out = tmp_path / "sweep"
        assert run("tensor", "--config", str(path), "--out", str(out), "--jobs", "2") == EXIT_OK
        assert (out / "sigma2=2.0" / "results.json").exists()
        assert (out / "sigma2=3.0" / "results.json").exists()


def test_errors_survive_pickling():
    syntax = pickle.loads(pickle.dumps(ExpressionSyntaxError("expected ')'", 6)))
    assert syntax.offset == 6 and "offset 6" in str(syntax)
    solver = pickle.loads(pickle.dumps(SolverError("stalled", residual=0.5, iterations=3)))
    assert (solver.residual, solver.iterations) == (0.5, 3)


class TestRejectedCombinations:
    def test_grad_check_with_sweep(self, write_config, tmp_path, capsys):
        path = write_config(extra='[sweep]\nkey = "sigma2"\nvalues = [2.0, 3.0]\n')
        code = run("grad-check", "--config", str(path), "--jobs", "2", "--out", str(tmp_path / "o"))
        assert code == EXIT_CONFIG
        assert "[sweep]" in capsys.readouterr().err
        assert not (tmp_path / "o").exists()

    def test_bad_level_environment(self, write_config, tmp_path, monkeypatch, capsys):
        monkeypatch.setenv("HOMOPT_LEVEL", "abc")
        path = tmp_path / "no_level.toml"
        path.write_text(write_config().read_text().replace("[mesh]\nlevel = 1\n", ""))
        assert run("tensor", "--config", str(path), "--out", str(tmp_path / "o")) == EXIT_CONFIG
        assert "HOMOPT_LEVEL" in capsys.readouterr().err


class TestLevelEnvironment:
    def test_non_integer_is_validation_error(self, monkeypatch):
        monkeypatch.setenv("HOMOPT_LEVEL", "abc")
        with pytest.raises(ValidationError, match="HOMOPT_LEVEL"):
            default_level()

    def test_out_of_range_rejected_at_load(self, make_config, monkeypatch):
        monkeypatch.setenv("HOMOPT_LEVEL", "12")
        with pytest.raises(ValidationError, match="mesh level"):
            make_config(mesh={"level": None})

    def test_integer_is_used(self, make_config, monkeypatch):
        monkeypatch.setenv("HOMOPT_LEVEL", "3")
        assert default_level() == 3
        assert make_config(mesh={"level": None}).level == 3
