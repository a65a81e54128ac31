from pathlib import Path

import numpy as np
import pytest

from erflow.cli import main
from erflow.cli.config import ConfigSyntaxError, Expression, load_config, parse_config
from erflow.cli.scenario import EXIT_CODES, ScenarioError, build_scenario, parse_side
from erflow.cli.writers import fields_to_csv, fields_to_vtk, nodal_fields, read_csv_fields
from erflow.mesh import TagKind, build_rectangle_mesh

SCENARIOS = Path(__file__).resolve().parents[1] / "scenarios"

STOKES_CAVITY = """\
mesh.nx = 4
mesh.ny = 4
flow.regime = STOKES
flow.field = 1 0
flow.velocity.x = where(y > 1 - 1e-12, 16 * x**2 * (1 - x)**2, 0)
model.variant = REGULAR
model.term.1.coefficient = constant 1
model.term.1.shear = constant 1
output.stem = cavity
"""


def test_parse_config_sections_and_comments():
    cfg = parse_config("# header\nseed = 3\nmesh.nx = 4  # trailing\n\nflow.regime = NONE\n", "t.cfg")
    assert cfg.get("seed") == "3" and cfg.get("mesh.nx") == "4"
    assert cfg.where("flow.regime") == "t.cfg:5"
    assert set(cfg.section("mesh")) == {"nx"}


@pytest.mark.parametrize("text", ["nx = 4\n", "mesh.nx\n", "= 3\n"])
def test_parse_config_rejects_bad_lines(text):
    with pytest.raises(ConfigSyntaxError, match=":1:"):
        parse_config(text, "bad.cfg")


def test_include_relative_and_cycle(tmp_path):
    (tmp_path / "sub").mkdir()
    (tmp_path / "sub" / "part.cfg").write_text("mesh.nx = 7\n")
    (tmp_path / "main.cfg").write_text("include = sub/part.cfg\nmesh.ny = 2\n")
    cfg = load_config(tmp_path / "main.cfg")
    assert cfg.get("mesh.nx") == "7" and cfg.get("mesh.ny") == "2"
    (tmp_path / "a.cfg").write_text("include = b.cfg\n")
    (tmp_path / "b.cfg").write_text("include = a.cfg\n")
    with pytest.raises(ConfigSyntaxError, match="cycle"):
        load_config(tmp_path / "a.cfg")


def test_expression_evaluation():
    e = Expression("where(y < 0.5, 1, 2) + sin(pi * x)")
    x = np.array([0.0, 0.5])
    assert np.allclose(e(x, np.array([0.2, 0.8])), [1.0, 3.0])
    assert Expression("2 * pi").constant and not e.constant
    assert Expression("3")(np.zeros((2, 3)), np.zeros((2, 3))).shape == (2, 3)


@pytest.mark.parametrize("text", ["__import__('os')", "x.real", "open('f')", "lambda: 1", "z + 1", "'a'",
                                  "[1, 2]", "sin(x, out=x)"])
def test_expression_rejects_unsafe_input(text):
    with pytest.raises(ConfigSyntaxError):
        Expression(text)


def test_parse_side():
    tags = parse_side("TRACTION; ELECTRODE 2")
    assert [(t.kind, t.index) for t in tags] == [(TagKind.TRACTION, 0), (TagKind.ELECTRODE, 2)]
    assert parse_side("DIRICHLET; GROUND 1")[1].kind is TagKind.ELECTRODE_GROUND


def test_unknown_key_reports_location(tmp_path):
    p = tmp_path / "x.cfg"
    p.write_text("mesh.nx = 2\nsolver.tol_velocityy = 1\n")
    with pytest.raises(ScenarioError) as info:
        build_scenario(load_config(p))
    assert info.value.exit_code == EXIT_CODES["config"] and "x.cfg:2" in str(info.value)


def test_electric_only_run(tmp_path):
    assert main(["solve", str(SCENARIOS / "electric_only.cfg"), "--output-dir", str(tmp_path)]) == 0
    cols = read_csv_fields((tmp_path / "two_layer.csv").read_text())
    mid = np.abs(cols["y"] - 0.5) < 1e-12
    assert mid.any() and np.allclose(cols["theta"][mid], 2.0 / 3.0, atol=1e-12)
    assert np.all(cols["u1"] == 0) and np.all(cols["p"] == 0)


def test_bad_electrode_exit_code(tmp_path, capsys):
    code = main(["solve", str(SCENARIOS / "bad_electrode.cfg"), "--output-dir", str(tmp_path)])
    assert code == 2
    assert "electrode" in capsys.readouterr().err


def test_missing_config_exit_code(tmp_path):
    assert main(["solve", str(tmp_path / "nope.cfg")]) == EXIT_CODES["config"]


def test_stokes_run_outputs_and_determinism(tmp_path):
    cfg = tmp_path / "cavity.cfg"
    cfg.write_text(STOKES_CAVITY)
    outs = []
    for k in range(2):
        d = tmp_path / f"run{k}"
        assert main(["solve", str(cfg), "--output-dir", str(d), "--format", "both"]) == 0
        outs.append({p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.suffix in (".csv", ".vtk")})
    assert set(outs[0]) >= {"cavity.csv", "cavity.vtk", "cavity_report.csv"}
    assert outs[0]["cavity.csv"] == outs[1]["cavity.csv"]
    cols = read_csv_fields(outs[0]["cavity.csv"].decode())
    top = np.abs(cols["y"] - 1) < 1e-12
    assert np.allclose(cols["u1"][top], 16 * cols["x"][top] ** 2 * (1 - cols["x"][top]) ** 2, atol=1e-12)
    assert np.all(cols["phi"] == 1.0)


def test_csv_zero_state_and_round_trip():
    mesh = build_rectangle_mesh(1, 1, 2, 2)
    f = nodal_fields(mesh)
    cols = read_csv_fields(fields_to_csv(f))
    for name in ("u1", "u2", "p", "theta", "absE", "I", "mu", "phi"):
        assert np.all(cols[name] == 0.0)
    rng = np.random.default_rng(0)
    for name in ("p", "theta", "mu"):
        f.columns[name] = rng.standard_normal(f.n) * 10.0 ** rng.integers(-300, 300, f.n)
    back = read_csv_fields(fields_to_csv(f))
    for name in ("p", "theta", "mu"):
        assert np.array_equal(back[name], f.columns[name])


def test_vtk_structure():
    mesh = build_rectangle_mesh(1, 1, 2, 3)
    text = fields_to_vtk(nodal_fields(mesh))
    lines = text.splitlines()
    assert lines[0].startswith("# vtk DataFile")
    assert f"CELLS {len(mesh.triangles)} {4 * len(mesh.triangles)}" in lines
    assert lines.count("5") == len(mesh.triangles)
    assert f"POINT_DATA {len(mesh.nodes)}" in lines


def test_unknown_suite_is_usage_error(capsys):
    with pytest.raises(SystemExit) as info:
        main(["validate", "nonsense"])
    assert info.value.code == 2


def test_validate_operators_suite(tmp_path, capsys):
    assert main(["validate", "operators", "--output-dir", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 4
    assert (tmp_path / "validation_operators.csv").exists()


def test_mesh_commands(tmp_path, capsys):
    m = tmp_path / "m.msh"
    assert main(["mesh", "gen", str(m), "--nx", "2", "--ny", "2", "--top", "DIRICHLET; ELECTRODE 1",
                 "--bottom", "DIRICHLET; GROUND 1"]) == 0
    assert main(["mesh", "refine", str(m), str(tmp_path / "r.msh")]) == 0
    assert main(["mesh", "check", str(tmp_path / "r.msh")]) == 0
    assert "triangles: 64" in capsys.readouterr().out
    (tmp_path / "bad.msh").write_text("nodes 1\n0 0\n")
    assert main(["mesh", "check", str(tmp_path / "bad.msh")]) == EXIT_CODES["mesh"]
