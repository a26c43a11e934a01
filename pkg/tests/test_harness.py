from __future__ import annotations

import json
import math

import numpy as np
import pytest

from vemspaces.harness import (
    COLUMNS,
    ConfigError,
    StudyConfig,
    check_table,
    dof_scaling_2d,
    expected_rates,
    make_field,
    run_convergence,
    run_stability,
)
from vemspaces.meshgeo import PolygonGeom
from vemspaces.vem2d import Space2D

from .conftest import UNIT_SQUARE


@pytest.mark.parametrize(
    "bad",
    [
        {"dim": 4},
        {"family": "nodal"},
        {"k": 0},
        {"levels": 2},
        {"mesh": "cube_grid"},
        {"field": "poly"},
        {"dim": 3, "mesh": "cube_grid", "family": "face", "variant": "serendipity"},
        {"gamma": 0.0},
        {"oracle_q": 1, "k": 2},
        {"typo": 1},
    ],
)
def test_invalid_configs_are_rejected(bad):
    with pytest.raises(ConfigError):
        StudyConfig.from_dict(bad)


def test_config_round_trip():
    cfg = StudyConfig.from_dict({"k": 2, "mesh": "hex_dominant", "field": "poly3"})
    assert StudyConfig.from_dict(cfg.to_dict()) == cfg


def test_fields():
    x = np.array([[0.2, 0.3], [0.9, 0.1]])
    assert np.all(make_field(StudyConfig(field="zero"))(x) == 0)
    s = make_field(StudyConfig(field="singular", alpha=0.5))
    assert np.all(np.isfinite(s(x)))
    p = make_field(StudyConfig(field="poly2", seed=3))
    q = make_field(StudyConfig(field="poly2", seed=3))
    assert np.array_equal(p(x), q(x))


def test_zero_field_gives_zero_errors():
    table = run_convergence(StudyConfig(k=1, field="zero", levels=3))
    for name in ("L2_interp", "diff_err", "proj_surrogate"):
        assert np.all(table.column(name) == 0)


@pytest.mark.parametrize("family", ["edge", "face"])
def test_polynomial_fields_are_interpolated_exactly(family):
    table = run_convergence(StudyConfig(k=2, family=family, field="poly2", mesh="distorted_quads", levels=3))
    for name in ("L2_interp", "diff_err", "proj_surrogate"):
        assert table.column(name).max() <= 1e-8


def test_polynomial_fields_in_3d():
    table = run_convergence(StudyConfig(dim=3, k=1, family="edge", field="poly1", mesh="cube_grid", levels=3))
    assert table.column("diff_err").max() <= 1e-8
    assert table.column("proj_surrogate").max() <= 1e-8
    assert np.all(np.isnan(table.column("L2_interp")))


def test_edge_k2_rates_on_square_grid():
    table = run_convergence(StudyConfig(k=2, mesh="square_grid", levels=4))
    assert table.final_rate("rate_L2") == pytest.approx(3.0, abs=0.1)
    assert table.final_rate("rate_diff") == pytest.approx(2.0, abs=0.1)
    errors = table.column("L2_interp")
    assert np.all(np.diff(errors) < 0)
    assert check_table(table) == []
    assert table.oracle_r is not None and table.oracle_r >= 3


def test_reduced_regularity_saturates():
    table = run_convergence(StudyConfig(k=2, field="singular", alpha=0.5, levels=4))
    assert table.final_rate("rate_L2") <= 1.0 + 0.5 + 0.3


def test_csv_is_deterministic_and_has_fixed_columns():
    cfg = StudyConfig(k=1, mesh="distorted_quads", levels=3, seed=4)
    a = run_convergence(cfg).to_csv(timestamp=False)
    b = run_convergence(cfg).to_csv(timestamp=False)
    assert a == b
    lines = a.strip().splitlines()
    assert lines[0].split(",") == list(COLUMNS)
    assert len(lines) == 4
    assert run_convergence(cfg).to_csv(timestamp=True).startswith("# generated")


def test_write_csv_and_json(tmp_path):
    table = run_convergence(StudyConfig(k=1, levels=3))
    table.write(tmp_path / "t.csv", timestamp=False)
    doc = json.loads((tmp_path / "t.json").read_text())
    assert doc["mode"] == "convergence" and len(doc["rows"]) == 3
    assert doc["rows"][0]["rate_L2"] is None
    table.write(tmp_path / "only.json")
    assert not (tmp_path / "only.csv").exists()


def test_stability_probe_hits_hand_value():
    table = run_stability(StudyConfig(k=1, levels=3, samples=20))
    assert table.rows[0].stab_ratio_max >= 1 + 2 * np.sqrt(2) - 1e-10
    assert all(math.isnan(r.L2_interp) for r in table.rows)
    assert check_table(table) == []
    assert max(e["mass_poly_defect"] for e in table.extras) <= 1e-10


def test_stability_3d_reports_definiteness():
    table = run_stability(StudyConfig(dim=3, k=1, family="face", mesh="cube_grid", levels=3, samples=20))
    assert all(e["stab_positive_definite"] and e["mass_positive_definite"] for e in table.extras)
    assert check_table(table) == []


def test_dof_scaling_classes():
    space = Space2D(PolygonGeom(UNIT_SQUARE * 0.5), 2)
    scale = dof_scaling_2d(space)
    h = space.h
    assert np.allclose(scale[space.edge_slice], 0.5)
    assert np.allclose(scale[space.x_slice], h**3)
    assert np.allclose(scale[space.diff_slice], h)


def test_expected_rates():
    assert expected_rates(StudyConfig(k=2)) == {"rate_L2": 2.75, "rate_diff": 1.75}
    assert expected_rates(StudyConfig(dim=3, mesh="cube_grid", family="edge", k=1)) == pytest.approx(
        {"rate_proj": 1.7, "rate_diff": 0.7}
    )
