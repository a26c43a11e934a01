from __future__ import annotations

import numpy as np
import pytest

from vemspaces.fields import VectorField, poly_field, random_trig, standard_trig
from vemspaces.meshgeo import PolygonGeom
from vemspaces.oracle2d import (
    LagrangeTriangle,
    OracleError,
    build_evaluator,
    build_fem_mesh,
    eval_virtual,
    reextract_dofs,
    unisolvence_report,
    virtual_error,
    virtual_norm,
)
from vemspaces.polycalc import Poly, dim_poly, vandermonde
from vemspaces.vem2d import Space2D, eval_dofs, l2_projection2d

from .conftest import HEXAGON, TRIANGLE, UNIT_SQUARE

FAMILIES = [("edge", "standard"), ("edge", "serendipity"), ("face", "standard"), ("face", "serendipity")]


@pytest.fixture(scope="module")
def square_k1():
    space = Space2D(PolygonGeom(UNIT_SQUARE), 1)
    return space, build_evaluator(space, r=3)


def test_lagrange_basis_is_nodal_and_complete():
    el = LagrangeTriangle(3)
    assert np.allclose(el.values(el.nodes), np.eye(len(el.nodes)), atol=1e-12)
    xi = np.random.default_rng(0).uniform(0, 0.5, (9, 2))
    assert np.allclose(el.values(xi).sum(axis=1), 1.0)
    assert np.allclose(el.grads(xi).sum(axis=1), 0.0, atol=1e-12)


def test_fem_mesh_node_count():
    # fan of a square refined once: 16 cubic triangles
    fem = build_fem_mesh(PolygonGeom(UNIT_SQUARE), 1, 3)
    assert len(fem.triangles) == 16
    n_vertices, n_edges = 13, 28
    assert fem.n_nodes == n_vertices + 2 * n_edges + len(fem.triangles)


@pytest.mark.parametrize("k", [1, 2, 3])
@pytest.mark.parametrize("family,variant", FAMILIES)
def test_polynomials_are_reconstructed_exactly(polygon, k, family, variant, rng):
    space = Space2D(polygon, k, family, variant)
    ev = build_evaluator(space, r=1)
    p = Poly.from_flat(space.frame, k, rng.standard_normal(2 * dim_poly(k, 2)), 2)
    assert virtual_error(ev, eval_dofs(space, p), poly_field(p)) <= 1e-8
    assert ev.neumann_residual <= 1e-10


@pytest.mark.parametrize("k", [1, 2, 3])
def test_potential_components_are_orthogonal(k, rng):
    space = Space2D(PolygonGeom(HEXAGON), k)
    ev = build_evaluator(space, r=2)
    d = rng.standard_normal(space.dim)
    scale = virtual_norm(ev, d) ** 2
    assert abs(ev.component_inner(d)) <= 1e-8 * scale


def test_zero_dofs_give_zero_norm(square_k1):
    space, ev = square_k1
    assert virtual_norm(ev, np.zeros(space.dim)) == 0.0


def test_points_outside_are_rejected(square_k1):
    _, ev = square_k1
    with pytest.raises(OracleError):
        eval_virtual(ev, np.zeros(11), np.array([[1.5, 0.5]]))


def test_bad_orders_are_rejected():
    space = Space2D(PolygonGeom(TRIANGLE), 2)
    with pytest.raises(ValueError):
        build_evaluator(space, r=1, q=2)
    with pytest.raises(ValueError):
        build_evaluator(space, r=-1)


def test_frozen_interpolation_error_on_unit_square(square_k1):
    space, ev = square_k1
    f = standard_trig(2).field()
    assert virtual_error(ev, eval_dofs(space, f), f) == pytest.approx(0.8128241025873283, rel=1e-8)
    d = np.arange(space.dim) / 10 - 0.3
    assert virtual_norm(ev, d) == pytest.approx(14.337242734426397, rel=1e-8)


def test_norms_settle_under_fem_refinement():
    space = Space2D(PolygonGeom(UNIT_SQUARE), 1)
    d = np.arange(space.dim) / 10 - 0.3
    n2, n3, n4 = (virtual_norm(build_evaluator(space, r=r), d) for r in (2, 3, 4))
    assert abs(n3 - n4) < abs(n2 - n3)
    assert abs(n3 - n4) <= 1e-5 * n4


def test_face_reconstruction_is_rotated_edge_reconstruction():
    poly = PolygonGeom(HEXAGON)
    face = Space2D(poly, 2, "face")
    edge = Space2D(poly, 2, "edge")
    f = random_trig(2, 5).field()
    pts = np.array([[0.1, 0.2], [-0.3, 0.4], [0.0, -0.5]])
    # a face function v corresponds to the edge function (-v2, v1) with the same DoFs up to sign
    vf = eval_virtual(build_evaluator(face, r=2), eval_dofs(face, f), pts)
    flip = np.array([[-1.0], [1.0]])
    rot = VectorField(2, lambda x: np.stack([-f(x)[:, 1], f(x)[:, 0]], axis=1), lambda x: f.jacobian(x)[:, ::-1] * flip)
    ve = eval_virtual(build_evaluator(edge, r=2), eval_dofs(edge, rot), pts)
    assert np.allclose(vf, np.stack([ve[:, 1], -ve[:, 0]], axis=1), atol=1e-10)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_interior_moments_are_reproduced(k):
    space = Space2D(PolygonGeom(HEXAGON), k)
    moments = reextract_dofs(build_evaluator(space, r=2))
    assert np.abs(moments[space.x_slice] - np.eye(space.dim)[space.x_slice]).max() <= 1e-8


def test_edge_moments_converge_under_fem_refinement():
    space = Space2D(PolygonGeom(UNIT_SQUARE), 2)
    errs = [np.abs(reextract_dofs(build_evaluator(space, r=r)) - np.eye(space.dim))[space.edge_slice].max() for r in (1, 2, 3)]
    assert errs[0] > errs[1] > errs[2]


def _sin_square_field() -> VectorField:
    def jac(x):
        j = np.zeros((len(x), 2, 2))
        j[:, 0, 0] = np.cos(x[:, 0])
        j[:, 1, 1] = 2 * x[:, 1]
        return j

    return VectorField(2, lambda x: np.stack([np.sin(x[:, 0]), x[:, 1] ** 2], axis=1), jac)


@pytest.mark.parametrize("k", [1, 2, 3])
@pytest.mark.parametrize("family", ["edge", "face"])
def test_projection_matches_projected_reconstruction(polygon, k, family):
    space = Space2D(polygon, k, family)
    d = eval_dofs(space, _sin_square_field())
    pts, w, vm = build_evaluator(space, r=2).quadrature_data
    vals = np.einsum("ncd,d->nc", vm, d)
    v = vandermonde(space.frame, pts, k)
    ref = np.linalg.solve((v * w[:, None]).T @ v, (v * w[:, None]).T @ vals).T
    assert np.abs(l2_projection2d(space, d, k).coeffs - ref).max() <= 1e-8


@pytest.mark.xfail(
    strict=True,
    reason="tangential traces enter the potential solves weakly, so re-extracted edge moments carry the FEM error",
)
def test_reconstruction_reproduces_every_dof():
    space = Space2D(PolygonGeom(UNIT_SQUARE), 2)
    moments = reextract_dofs(build_evaluator(space, r=3))
    assert np.abs(moments - np.eye(space.dim)).max() <= 1e-8


def test_unisolvence_examples():
    rep = unisolvence_report(Space2D(PolygonGeom(TRIANGLE), 1))
    assert rep.poly_rank == 6 == rep.poly_columns
    rep = unisolvence_report(Space2D(PolygonGeom(TRIANGLE), 2, "edge", "serendipity"))
    assert (rep.pis_rank, rep.pis_rows) == (12, 13)
    rep = unisolvence_report(Space2D(PolygonGeom(UNIT_SQUARE), 1), full=True)
    assert rep.full_min_sv > 1e-10 and rep.ok
