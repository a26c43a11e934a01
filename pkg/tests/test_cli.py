from __future__ import annotations

import json

import pytest

from vemspaces.cli import main


def test_convergence_writes_csv_with_rates(tmp_path, capsys):
    out = tmp_path / "t.csv"
    argv = ["convergence", "--dim", "2", "--family", "edge", "--variant", "serendipity", "--k", "2"]
    argv += ["--mesh", "hex_dominant", "--levels", "4", "--field", "trig", "--out", str(out), "--assert"]
    assert main(argv) == 0
    lines = [ln for ln in out.read_text().splitlines() if not ln.startswith("#")]
    assert len(lines) == 5
    assert "rate_L2" in lines[0]
    assert out.with_suffix(".json").exists()


def test_stdout_output_without_timestamp_is_stable(capsys):
    assert main(["convergence", "--k", "1", "--levels", "3", "--no-timestamp"]) == 0
    first = capsys.readouterr().out
    assert main(["convergence", "--k", "1", "--levels", "3", "--no-timestamp"]) == 0
    assert capsys.readouterr().out == first
    assert not first.startswith("#")


def test_config_file_and_flag_override(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"k": 3, "levels": 3, "mesh": "square_grid"}))
    assert main(["stability", "--config", str(cfg), "--k", "1", "--no-timestamp"]) == 0
    assert len(capsys.readouterr().out.strip().splitlines()) == 4


@pytest.mark.parametrize(
    "argv",
    [
        ["convergence", "--k", "0"],
        ["convergence", "--bogus"],
        ["convergence", "--config", "/nonexistent/c.json"],
        ["convergence", "--dim", "3", "--mesh", "square_grid"],
        ["nonsense"],
        ["mesh-check", "--mesh", "triangles"],
    ],
)
def test_validation_errors_exit_1(argv, capsys):
    assert main(argv) == 1
    assert "error" in capsys.readouterr().err


def test_assert_exit_codes(capsys):
    argv = ["convergence", "--k", "2", "--levels", "3", "--field", "trig", "--assert", "--no-timestamp"]
    assert main(argv) == 0
    # the edge-family stabilization is singular, so the 3D edge stability check fails
    argv = ["stability", "--dim", "3", "--family", "edge", "--mesh", "cube_grid", "--levels", "3", "--assert"]
    assert main(argv) == 2
    assert "singular" in capsys.readouterr().err


def test_mesh_check(capsys):
    assert main(["mesh-check", "--mesh", "square_grid", "--levels", "3", "--assert"]) == 0
    rows = [json.loads(ln) for ln in capsys.readouterr().out.splitlines()]
    assert len(rows) == 3 and all(r["M_i"] and r["MC"] for r in rows)


def test_unisolvence_table_matches_formulas(capsys):
    assert main(["unisolvence", "--dim", "2", "--k", "3", "--assert"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    header = lines[0].split(",")
    for line in lines[1:]:
        row = dict(zip(header, line.split(",")))
        assert row["dim"] == row["formula"]
        assert row["poly_rank"] == row["poly_cols"]


def test_unisolvence_3d(capsys):
    assert main(["unisolvence", "--dim", "3", "--k", "1", "--assert"]) == 0
    assert len(capsys.readouterr().out.strip().splitlines()) == 1 + 9


def test_gen_mesh(tmp_path):
    out = tmp_path / "m.json"
    assert main(["gen-mesh", "--mesh", "cube_grid", "--levels", "2", "--out", str(out)]) == 0
    assert json.loads((tmp_path / "m_L1.json").read_text())["dim"] == 3
