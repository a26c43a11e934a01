from __future__ import annotations

from math import factorial

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vemspaces.meshgeo import polygon_mesh, unit_cube_mesh
from vemspaces.quadrature import MAX_DEGREE, composite_rule, reference_rule, segment_rule, simplex_rule

from .conftest import HEXAGON, UNIT_SQUARE


def test_segment_midpoint_rule_integrates_x():
    rule = reference_rule("segment", 1)
    assert len(rule.weights) == 1
    assert rule.integrate(rule.points[:, 0]) == pytest.approx(0.5, abs=1e-16)


def test_triangle_second_moment():
    rule = reference_rule("triangle", 2)
    assert rule.integrate(rule.points[:, 0] ** 2) == pytest.approx(1.0 / 12.0, abs=1e-15)


def test_tetra_xyz_matches_symbolic_value():
    rule = reference_rule("tetra", 3)
    x, y, z = rule.points.T
    assert rule.integrate(x * y * z) == pytest.approx(1.0 / 720.0, abs=1e-14)


@settings(max_examples=40, deadline=None)
@given(a=st.integers(0, 6), b=st.integers(0, 6), c=st.integers(0, 6))
def test_simplex_monomials_match_dirichlet_formula(a, b, c):
    # integral of x^a y^b z^c over the unit simplex is a! b! c! / (a+b+c+d)!
    tri = reference_rule("triangle", a + b)
    exact = factorial(a) * factorial(b) / factorial(a + b + 2)
    assert tri.integrate(tri.points[:, 0] ** a * tri.points[:, 1] ** b) == pytest.approx(exact, rel=1e-12)
    tet = reference_rule("tetra", a + b + c)
    p = tet.points
    exact = factorial(a) * factorial(b) * factorial(c) / factorial(a + b + c + 3)
    assert tet.integrate(p[:, 0] ** a * p[:, 1] ** b * p[:, 2] ** c) == pytest.approx(exact, rel=1e-12)


def test_weights_are_positive_and_degree_is_bounded():
    for kind in ("segment", "triangle", "tetra"):
        assert np.all(reference_rule(kind, 9).weights > 0)
    with pytest.raises(ValueError):
        reference_rule("triangle", MAX_DEGREE + 1)
    with pytest.raises(ValueError):
        reference_rule("triangle", -1)


def test_composite_rules_on_cells():
    sq = composite_rule(polygon_mesh(UNIT_SQUARE), 0, 2)
    assert sq.integrate(sq.points[:, 0] ** 2) == pytest.approx(1.0 / 3.0, abs=1e-14)
    hexa = composite_rule(polygon_mesh(HEXAGON), 0, 0)
    assert hexa.measure == pytest.approx(3 * np.sqrt(3) / 2, abs=1e-13)
    cube = composite_rule(unit_cube_mesh(), 0, 2)
    assert cube.integrate(cube.points[:, 0] ** 2) == pytest.approx(1.0 / 3.0, abs=1e-13)


def test_segment_rule_scales_with_length():
    rule = segment_rule(np.array([1.0, 1.0]), np.array([4.0, 5.0]), 4)
    assert rule.measure == pytest.approx(5.0)
    s = np.linalg.norm(rule.points - [1.0, 1.0], axis=1)
    assert rule.integrate(s**3) == pytest.approx(5.0**4 / 4)


def test_simplex_rule_handles_orientation():
    tri = np.array([[[0.0, 0.0], [0.0, 1.0], [1.0, 0.0]]])
    assert simplex_rule(tri, 3).measure == pytest.approx(0.5)
