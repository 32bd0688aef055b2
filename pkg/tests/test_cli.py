import numpy as np
import pytest

from glpsfem import cli
from glpsfem.verification import CSV_COLUMNS


def run(tmp_path, *args):
    return cli.main([*args, "--out", str(tmp_path)])


def test_single_level_stokes(tmp_path, capsys):
    assert run(tmp_path, "convergence", "--problem", "stokes", "--levels", "1") == 0
    lines = (tmp_path / "convergence.csv").read_text().splitlines()
    assert lines[0].startswith("# glps-fem convergence --problem stokes --levels 1")
    assert lines[1] == ",".join(CSV_COLUMNS)
    assert len(lines) == 3
    assert all(f == "" for f in lines[2].split(",")[4::2])
    assert "stokes convergence" in capsys.readouterr().out
    assert (tmp_path / "summary.txt").exists()


def test_csv_is_reproducible(tmp_path):
    args = ["convergence", "--levels", "3", "--perturb", "--out", str(tmp_path)]
    assert cli.main(args) == 0
    first = (tmp_path / "convergence.csv").read_bytes()
    assert cli.main(args) == 0
    assert (tmp_path / "convergence.csv").read_bytes() == first


def test_exports(tmp_path):
    assert run(tmp_path, "convergence", "--levels", "2", "--export", "csv,vtk,mm") == 0
    names = {p.name for p in tmp_path.iterdir()}
    assert {"solution_0.vtk", "solution_1.vtk", "system_1_matrix.mtx", "system_1_rhs.mtx"} <= names
    vtk = (tmp_path / "solution_1.vtk").read_text()
    assert "VECTORS velocity double" in vtk and "SCALARS pressure double 1" in vtk


def test_solve_command(tmp_path, capsys):
    assert run(tmp_path, "solve", "--problem", "darcy", "--levels", "2", "--export", "vtk") == 0
    assert (tmp_path / "solution_1.vtk").exists()
    assert not (tmp_path / "convergence.csv").exists()
    assert "residual" in capsys.readouterr().out


def test_infsup_sweep(tmp_path):
    assert run(tmp_path, "infsup", "--levels", "2") == 0
    lines = (tmp_path / "infsup.csv").read_text().splitlines()
    assert lines[0].startswith("#") and lines[1] == "level,cells,gamma_h"
    gammas = [float(line.split(",")[2]) for line in lines[2:]]
    assert len(gammas) == 2 and min(gammas) > 0


def test_infsup_cap_is_refused(tmp_path, capsys):
    assert run(tmp_path, "infsup", "--levels", "5") == 1
    assert "refusing" in capsys.readouterr().err
    assert not (tmp_path / "infsup.csv").exists()


@pytest.mark.parametrize("args", [
    ["convergence", "--levels", "9"],
    ["convergence", "--levels", "0"],
    ["convergence", "--export", "png"],
    ["convergence", "--quad-degree", "12"],
    ["convergence", "--zeta", "2"],
    ["frobnicate"],
])
def test_bad_arguments_exit_nonzero(tmp_path, args):
    with pytest.raises(SystemExit) as exc:
        run(tmp_path, *args)
    assert exc.value.code != 0


def test_negative_beta_reports_error(tmp_path, capsys):
    assert run(tmp_path, "convergence", "--beta", "-1", "--levels", "1") == 1
    assert "glps-fem: error" in capsys.readouterr().err


def test_defaults_depend_on_problem():
    d = cli.parse_config(["convergence"])
    s = cli.parse_config(["convergence", "--problem", "stokes"])
    assert (d.beta, d.zeta, d.levels) == (10.0, 0.0, 5)
    assert (s.beta, s.zeta) == (1.0, 2.0)
    assert cli.parse_config(["infsup"]).levels == 3


def test_oscillation_indicator_detects_checkerboard(mesh64):
    from glpsfem.assembly import darcy_reference_problem
    from glpsfem.fe_space import P1Space
    prob = darcy_reference_problem()
    x, y = mesh64.vertices.T
    smooth = P1Space(mesh64).function(prob.pressure(x, y))
    assert cli.oscillation_indicator(mesh64, smooth, prob) < 0.5
    checker = P1Space(mesh64).function(np.where(np.arange(len(x)) % 2 == 0, 2.0, -2.0))
    assert cli.oscillation_indicator(mesh64, checker, prob) > 1.0


def test_beta_zero_runs_and_reports_indicator(tmp_path, capsys):
    assert run(tmp_path, "convergence", "--problem", "darcy", "--beta", "0", "--levels", "4") == 0
    out = capsys.readouterr().out
    assert "pressure oscillation indicator per level" in out


def test_instability_warning_is_emitted(tmp_path, monkeypatch, capsys):
    monkeypatch.setattr(cli, "oscillation_indicator", lambda *a: 3.0)
    with pytest.warns(RuntimeWarning, match="unstable"):
        cfg = cli.parse_config(["convergence", "--levels", "1", "--out", str(tmp_path)])
        assert cli.run_convergence(cfg) == 0
    assert "WARNING" in (tmp_path / "summary.txt").read_text()


def test_stokes_summary_documents_reference_comparison(tmp_path, capsys):
    assert run(tmp_path, "convergence", "--problem", "stokes", "--levels", "2") == 0
    assert "reference magnitudes" in (tmp_path / "summary.txt").read_text()
