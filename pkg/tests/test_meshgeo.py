from __future__ import annotations

import json

import numpy as np
import pytest

from vemspaces.meshgeo import (
    MeshError,
    PolygonGeom,
    face_lines,
    generate_mesh,
    parse_mesh,
    polygon_mesh,
    subtessellate,
    unit_cube_mesh,
    validate,
    write_mesh,
)

from .conftest import TRIANGLE, UNIT_SQUARE


def test_unit_square_geometry():
    mesh = polygon_mesh(UNIT_SQUARE)
    assert mesh.n_cells == 1 and len(mesh.edges) == 4
    frame = mesh.cell_frame(0)
    assert frame.diameter == pytest.approx(np.sqrt(2))
    assert frame.measure == pytest.approx(1.0)
    assert np.allclose(frame.barycenter, [0.5, 0.5])


def test_json_round_trip():
    mesh = generate_mesh("distorted_hexahedra", 0, seed=3)
    again = parse_mesh(json.dumps(write_mesh(mesh)))
    assert np.array_equal(again.vertices, mesh.vertices)
    assert all(np.array_equal(a, b) for a, b in zip(again.cells, mesh.cells))


def test_parse_rejects_bad_documents():
    with pytest.raises(MeshError, match="degenerate face"):
        parse_mesh({"dim": 2, "vertices": [[0, 0], [1, 0], [1, 1]], "faces": [[0, 1, 1, 2]]})
    with pytest.raises(MeshError, match="schema"):
        parse_mesh({"dim": 2, "vertices": [[0, 0, 0]], "faces": []})
    with pytest.raises(MeshError, match="schema"):
        parse_mesh({"dim": 3, "vertices": [[0, 0, 0]], "faces": [[0]]})
    with pytest.raises(MeshError, match="counter-clockwise"):
        parse_mesh({"dim": 2, "vertices": TRIANGLE[::-1].tolist(), "faces": [[0, 1, 2]]})


def test_watertightness_is_checked():
    doc = write_mesh(unit_cube_mesh())
    doc["cell_face_signs"][0][0] *= -1
    with pytest.raises(MeshError):
        parse_mesh(doc)


def test_square_grid_level_two():
    mesh = generate_mesh("square_grid", 2)
    assert mesh.n_cells == 16
    assert np.allclose(mesh.cell_diameters(), np.sqrt(2) / 4)


@pytest.mark.parametrize("family", ["distorted_quads", "distorted_hexahedra"])
def test_generators_are_deterministic(family):
    a = generate_mesh(family, 1, seed=7)
    b = generate_mesh(family, 1, seed=7)
    c = generate_mesh(family, 1, seed=8)
    assert np.array_equal(a.vertices, b.vertices)
    assert not np.array_equal(a.vertices, c.vertices)


@pytest.mark.parametrize("family", ["square_grid", "distorted_quads", "hex_dominant", "cube_grid"])
def test_refinement_halves_diameter(family):
    h = [generate_mesh(family, lv).h_max for lv in range(3)]
    assert h[1] / h[0] == pytest.approx(0.5, rel=0.2)
    assert h[2] / h[1] == pytest.approx(0.5, rel=0.2)


def test_generated_meshes_cover_the_domain():
    for family in ("square_grid", "distorted_quads", "hex_dominant"):
        mesh = generate_mesh(family, 1)
        assert sum(mesh.cell_frame(c).measure for c in range(mesh.n_cells)) == pytest.approx(1.0, abs=1e-13)
    mesh = generate_mesh("distorted_hexahedra", 0)
    assert sum(mesh.cell(c).volume for c in range(mesh.n_cells)) == pytest.approx(1.0, abs=1e-13)


def test_hex_dominant_passes_assumptions():
    rep = validate(generate_mesh("hex_dominant", 2))
    assert rep.m
    assert rep.min_ratio >= 0.05


def test_subtessellation_counts():
    mesh = polygon_mesh(UNIT_SQUARE)
    assert len(subtessellate(mesh, 0, 0).simplices) == 4
    tess = subtessellate(mesh, 0, 1)
    assert len(tess.simplices) == 16
    assert tess.measures.sum() == pytest.approx(1.0, abs=1e-14)
    assert len(subtessellate(unit_cube_mesh(), 0, 0).simplices) == 12
    assert subtessellate(unit_cube_mesh(), 0, 1).measures.sum() == pytest.approx(1.0, abs=1e-14)


def test_validator_flags():
    rep = validate(generate_mesh("square_grid", 1))
    assert rep.m and rep.mc
    short = polygon_mesh([[0, 0], [1, 0], [1, 1], [1e-4 * np.sqrt(2), 1], [0, 1]])
    assert not validate(short).m_ii
    ell = polygon_mesh([[0, 0], [2, 0], [2, 1], [1, 1], [1, 2], [0, 2]])
    rep = validate(ell)
    assert not rep.mc and rep.m


def test_face_lines():
    assert face_lines(PolygonGeom(TRIANGLE), 3) == (3, 1)
    assert face_lines(PolygonGeom(UNIT_SQUARE), 2) == (4, -1)
    split = PolygonGeom(np.array([[0, 0], [0.5, 0], [1, 0], [1, 1], [0, 1.0]]))
    assert face_lines(split, 2) == (4, -1)


def test_star_radius_of_square():
    rep = validate(polygon_mesh(UNIT_SQUARE))
    assert rep.star_ratio[0] == pytest.approx(0.5 / np.sqrt(2), abs=1e-9)
