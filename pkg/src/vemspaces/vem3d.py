"""Face and edge virtual element spaces on polyhedra.

The face family ``V^f_{k-1}(E)`` (parameter k) carries normal moments of
degree k-1 on each face, moments against ``x_E ^ p`` for ``p`` in
``(P_k)^3`` and zero-mean divergence moments. The edge family
``V^e_k(E)`` carries edge moments, per-face tangential and rot moments
(through one 2D edge space per face) and volume moments of ``curl v``
against ``x_E ^ p`` and of ``v`` against ``x_E p``.

The test family ``x_E ^ (P_k)^3`` has the kernel ``x_E P_{k-1}``. A basis is
obtained by dropping the first-component monomials divisible by ``x_1``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Literal, Union

import numpy as np
import numpy.typing as npt

from .fields import FieldBatch, VectorField, as_batch, poly_basis_batch, tangential_batch
from .meshgeo import FacePlane, Mesh, PolygonGeom, PolyhedronGeom
from .polycalc import (
    CellFrame,
    Poly,
    apply_diff,
    cross_position,
    decompose_vector,
    dim_poly,
    exponents,
    vandermonde,
)
from .quadrature import segment_rule
from .vem2d import Space2D, _edge_gram, eval_dofs_batch

FloatArray = npt.NDArray[np.float64]
Family = Literal["edge", "face"]
Variant = Literal["standard", "serendipity"]


@dataclass(frozen=True)
class FaceNormalMoment:
    face: int
    alpha: tuple[int, ...]


@dataclass(frozen=True)
class VolCrossMoment:
    component: int
    alpha: tuple[int, ...]


@dataclass(frozen=True)
class VolDivMoment:
    alpha: tuple[int, ...]


@dataclass(frozen=True)
class EdgeMoment3D:
    edge: int
    j: int


@dataclass(frozen=True)
class FaceTangMoment:
    face: int
    alpha: tuple[int, ...]


@dataclass(frozen=True)
class FaceRotMoment:
    face: int
    alpha: tuple[int, ...]


@dataclass(frozen=True)
class VolCurlCrossMoment:
    component: int
    alpha: tuple[int, ...]


@dataclass(frozen=True)
class VolXMoment:
    alpha: tuple[int, ...]


Descriptor3D = Union[
    FaceNormalMoment, VolCrossMoment, VolDivMoment, EdgeMoment3D, FaceTangMoment, FaceRotMoment, VolCurlCrossMoment, VolXMoment
]


def cross_basis(k: int) -> list[tuple[int, tuple[int, ...]]]:
    """(component, multi-index) pairs spanning a complement of x P_{k-1} in (P_k)^3."""
    out = []
    for c in range(3):
        for al in exponents(k, 3):
            if c == 0 and al[0] > 0:
                continue
            out.append((c, tuple(int(a) for a in al)))
    return out


def cross_reduce(w: Poly, k: int) -> FloatArray:
    """Coordinates of x ^ w in the basis x ^ (e_c m_a) of :func:`cross_basis`.

    ``w`` is a 3-vector polynomial of degree at most k. The first-component
    monomials divisible by x_1 are moved into a multiple of x, which the
    cross product annihilates.
    """
    w = w.raise_degree(max(w.degree, 0))
    n = dim_poly(k, 3)
    coeffs = np.zeros((3, n))
    coeffs[:, : w.coeffs.shape[1]] = w.coeffs
    exps = exponents(k, 3)
    index = {tuple(int(a) for a in r): i for i, r in enumerate(exps)}
    # w_1 = w_1' + xi_1 r: subtract xi r from w
    for i, al in enumerate(exps):
        if al[0] == 0 or coeffs[0, i] == 0.0:
            continue
        r_exp = (int(al[0]) - 1, int(al[1]), int(al[2]))
        val = coeffs[0, i]
        coeffs[0, i] = 0.0
        for c in (1, 2):
            shifted = list(r_exp)
            shifted[c] += 1
            coeffs[c, index[tuple(shifted)]] -= val
    return np.array([coeffs[c, index[al]] for c, al in cross_basis(k)])


def _cross_basis_polys(frame: CellFrame, k: int) -> list[Poly]:
    """The test polynomials x_E ^ (e_c m_a)."""
    out = []
    n = dim_poly(k, 3)
    index = {tuple(int(a) for a in r): i for i, r in enumerate(exponents(k, 3))}
    for c, al in cross_basis(k):
        coeffs = np.zeros((3, n))
        coeffs[c, index[al]] = 1.0
        out.append(cross_position(Poly(frame, k, coeffs)))
    return out


class Space3D:
    """Local face (parameter k, order k-1) or edge (order k) space on a polyhedron."""

    def __init__(self, mesh: Mesh, cell: int, k: int, family: Family = "edge", variant: Variant = "standard") -> None:
        if mesh.dim != 3:
            raise ValueError("Space3D needs a 3D mesh")
        if k < 1:
            raise ValueError("order k must be at least 1")
        if family not in ("edge", "face"):
            raise ValueError(f"unknown family {family!r}")
        if variant not in ("standard", "serendipity"):
            raise ValueError(f"unknown variant {variant!r}")
        if family == "face" and variant != "standard":
            raise ValueError("the face family has no serendipity variant")
        self.mesh = mesh
        self.cell_index = cell
        self.geom: PolyhedronGeom = mesh.cell(cell)  # type: ignore[assignment]
        self.frame: CellFrame = self.geom.frame
        self.k = k
        self.family = family
        self.variant = variant
        self.faces = mesh.cells[cell]
        self.face_signs = mesh.cell_face_signs[cell]
        self.planes: list[FacePlane] = [mesh.face_plane(f) for f in self.faces]
        self.polygons: list[PolygonGeom] = [mesh.face_polygon(f) for f in self.faces]
        self.cross = cross_basis(k)
        layout: list[Descriptor3D] = []
        if family == "face":
            for i, _ in enumerate(self.faces):
                layout += [FaceNormalMoment(i, tuple(int(a) for a in al)) for al in exponents(k - 1, 2)]
            self.n_face_block = len(layout)
            layout += [VolCrossMoment(c, al) for c, al in self.cross]
            layout += [VolDivMoment(tuple(int(a) for a in al)) for al in exponents(k - 1, 3)[1:]]
        else:
            self.edges = mesh.cell_edges(cell)
            self.edge_pos = {int(g): i for i, g in enumerate(self.edges)}
            layout += [EdgeMoment3D(int(g), j) for g in self.edges for j in range(k + 1)]
            self.face_spaces = [self._face_space(f) for f in self.faces]
            self.tang_slices, self.rot_slices = [], []
            for i, sp in enumerate(self.face_spaces):
                start = len(layout)
                layout += [FaceTangMoment(i, d.alpha) for d in sp.layout[sp.x_slice]]
                self.tang_slices.append(slice(start, len(layout)))
            for i, sp in enumerate(self.face_spaces):
                start = len(layout)
                layout += [FaceRotMoment(i, d.alpha) for d in sp.layout[sp.diff_slice]]
                self.rot_slices.append(slice(start, len(layout)))
            layout += [VolCurlCrossMoment(c, al) for c, al in self.cross]
            layout += [VolXMoment(tuple(int(a) for a in al)) for al in exponents(k - 1, 3)]
        self.layout: tuple[Descriptor3D, ...] = tuple(layout)
        n = len(layout)
        n_cross = len(self.cross)
        if family == "face":
            self.cross_slice = slice(self.n_face_block, self.n_face_block + n_cross)
            self.div_slice = slice(self.n_face_block + n_cross, n)
        else:
            nx = dim_poly(k - 1, 3)
            self.curl_cross_slice = slice(n - nx - n_cross, n - nx)
            self.volx_slice = slice(n - nx, n)
        self._cache: dict = {}

    def _face_space(self, f: int) -> Space2D:
        key = ("face_space", int(f), self.k, self.variant)
        if key not in self.mesh.cache:
            self.mesh.cache[key] = Space2D(self.mesh.face_polygon(f), self.k, "edge", self.variant)
        return self.mesh.cache[key]

    @property
    def dim(self) -> int:
        return len(self.layout)

    @property
    def h(self) -> float:
        return self.frame.diameter

    def __repr__(self) -> str:
        return f"Space3D(k={self.k}, family={self.family}, variant={self.variant}, dim={self.dim})"

    # ------------------------------------------------------------- helpers

    def face_rule(self, i: int, degree: int) -> tuple[FloatArray, FloatArray, FloatArray]:
        """Face quadrature: local 2D points, 3D points, weights."""
        rule = self.polygons[i].frame.quad(degree)
        return rule.points, self.planes[i].to_global(rule.points), rule.weights

    @cached_property
    def outward_normals(self) -> FloatArray:
        return np.array([s * p.normal for p, s in zip(self.planes, self.face_signs)])

    @cached_property
    def _cross_coeffs(self) -> FloatArray:
        return np.stack([p.coeffs for p in _cross_basis_polys(self.frame, self.k)], axis=2)

    def cross_values(self, x: FloatArray) -> FloatArray:
        """Values of the test polynomials x_E ^ (e_c m_a), shape (n, 3, n_cross)."""
        v = vandermonde(self.frame, x, self.k + 1)
        return np.einsum("qa,iac->qic", v, self._cross_coeffs)

    @cached_property
    def _zero_mean(self) -> tuple[FloatArray, FloatArray]:
        """Tests (1, m_a - mean) against monomials of degree k-1 and the monomial means."""
        k1 = self.k - 1
        gram = self.frame.gram(k1)
        mint = self.frame.monomial_integrals(k1)
        mean = mint / self.frame.measure
        return np.vstack([mint[None, :], gram[1:] - mean[1:, None] * mint[None, :]]), mean

    def vector_gram(self, m: int) -> FloatArray:
        return np.kron(np.eye(3), self.frame.gram(m))

    # ------------------------------------------------------- face family

    @cached_property
    def normal_trace_matrices(self) -> list[FloatArray]:
        """Per face, DoFs -> coefficients of v . n_F (outward) in face monomials of degree k-1."""
        if self.family != "face":
            raise ValueError("normal traces belong to the face family")
        nf = dim_poly(self.k - 1, 2)
        out = []
        for i, poly in enumerate(self.polygons):
            sel = np.zeros((nf, self.dim))
            sel[:, i * nf : (i + 1) * nf] = np.eye(nf)
            out.append(np.linalg.solve(poly.frame.gram(self.k - 1), sel))
        return out

    @cached_property
    def div_matrix(self) -> FloatArray:
        """Face family: DoFs -> coefficients of div v in P_{k-1}(E)."""
        if self.family != "face":
            raise ValueError("div_matrix belongs to the face family")
        tests, _ = self._zero_mean
        nf = dim_poly(self.k - 1, 2)
        rhs = np.zeros((tests.shape[0], self.dim))
        for i in range(len(self.faces)):
            rhs[0, i * nf] = 1.0
        rhs[1:, self.div_slice] = np.eye(tests.shape[0] - 1)
        return np.linalg.solve(tests, rhs)

    def _face_family_projection(self, m: int) -> FloatArray:
        k = self.k
        n_m = dim_poly(m, 3)
        deg = 2 * k + 4
        rows = np.zeros((3 * n_m, self.dim))
        n_k1 = dim_poly(k - 1, 3)
        face_data = []
        for i in range(len(self.faces)):
            loc, pts, w = self.face_rule(i, deg)
            mono = vandermonde(self.polygons[i].frame, loc, k - 1)
            face_data.append((pts, w, mono, self.normal_trace_matrices[i]))
        for c in range(3):
            for a in range(n_m):
                coeffs = np.zeros((3, n_m))
                coeffs[c, a] = 1.0
                s, w_lift = decompose_vector("3d_grad_xwedge", Poly(self.frame, m, coeffs))
                row = rows[c * n_m + a]
                row[self.cross_slice] += cross_reduce(w_lift, k)
                gram = self.frame.gram(max(k - 1, s.degree))
                row -= (gram[:n_k1, : s.coeffs.shape[1]] @ s.coeffs[0]) @ self.div_matrix
                for pts, w, mono, tr in face_data:
                    row += ((w * s(pts)) @ mono) @ tr
        return np.linalg.solve(self.vector_gram(m), rows)

    # -------------------------------------------------------- edge family

    @cached_property
    def face_gather(self) -> list[FloatArray]:
        """Per face, 3D DoFs -> DoFs of the face's 2D edge space."""
        if self.family != "edge":
            raise ValueError("face_gather belongs to the edge family")
        k = self.k
        out = []
        for i, (f, sp) in enumerate(zip(self.faces, self.face_spaces)):
            g = np.zeros((sp.dim, self.dim))
            ids, sig = self.mesh.face_edges(f)
            for e_loc, (gid, sg) in enumerate(zip(ids, sig)):
                pos = self.edge_pos[int(gid)]
                for j in range(k + 1):
                    g[e_loc * (k + 1) + j, pos * (k + 1) + j] = float(sg) ** (j + 1)
            g[sp.x_slice, self.tang_slices[i]] = np.eye(sp.n_x)
            g[sp.diff_slice, self.rot_slices[i]] = np.eye(sp.n_diff)
            out.append(g)
        return out

    def _edge_family_projection(self, m: int) -> FloatArray:
        k = self.k
        n_m = dim_poly(m, 3)
        deg = 2 * k + 4
        rows = np.zeros((3 * n_m, self.dim))
        face_data = []
        for i, sp in enumerate(self.face_spaces):
            loc, pts, w = self.face_rule(i, deg)
            mono = vandermonde(sp.frame, loc, k + 1)
            proj = sp.projection_matrix(k + 1) @ self.face_gather[i]
            face_data.append((i, loc, pts, w, mono, proj))
        volx = self.volx_slice
        for c in range(3):
            for a in range(n_m):
                coeffs = np.zeros((3, n_m))
                coeffs[c, a] = 1.0
                a_lift, b = decompose_vector("3d_curl_x", Poly(self.frame, m, coeffs))
                row = rows[c * n_m + a]
                nb = b.coeffs.shape[1]
                row[volx.start : volx.start + nb] += b.coeffs[0]
                row[self.curl_cross_slice] += cross_reduce(a_lift, k)
                xa = cross_position(a_lift)
                for i, loc, pts, w, mono, proj in face_data:
                    g = xa(pts) @ self.planes[i].axes.T  # tangential comps in face coords
                    rg = np.stack([-g[:, 1], g[:, 0]], axis=1)
                    pair = np.concatenate([(w * rg[:, 0]) @ mono, (w * rg[:, 1]) @ mono])
                    row += self.face_signs[i] * (pair @ proj)
        return np.linalg.solve(self.vector_gram(m), rows)

    @cached_property
    def face_companion(self) -> Space3D:
        """Face-family space with the same parameter k on the same cell."""
        return Space3D(self.mesh, self.cell_index, self.k, "face")

    @cached_property
    def curl_matrix(self) -> FloatArray:
        """Edge family: DoFs -> face-family DoFs of curl v."""
        if self.family != "edge":
            raise ValueError("curl_matrix belongs to the edge family")
        comp = self.face_companion
        k = self.k
        nf = dim_poly(k - 1, 2)
        out = np.zeros((comp.dim, self.dim))
        for i, sp in enumerate(self.face_spaces):
            rot = sp.diff_matrix @ self.face_gather[i]  # rot_F v^F in face monomials of degree k-1
            out[i * nf : (i + 1) * nf] = self.face_signs[i] * sp.frame.gram(k - 1) @ rot
        out[comp.cross_slice, self.curl_cross_slice] = np.eye(len(self.cross))
        return out

    # ------------------------------------------------------------ common

    def projection_matrix(self, m: int) -> FloatArray:
        """DoFs -> coefficients of the L2 projection onto (P_m)^3."""
        top = self.k + 1 if self.family == "face" else self.k
        if not 0 <= m <= top:
            raise ValueError(f"projection degree {m} outside 0..{top}")
        key = ("proj", m)
        if key not in self._cache:
            if self.family == "face":
                self._cache[key] = self._face_family_projection(m)
            else:
                self._cache[key] = self._edge_family_projection(m)
        return self._cache[key]

    @property
    def poly_degree(self) -> int:
        """Largest m with (P_m)^3 contained in the space."""
        return self.k - 1 if self.family == "face" else self.k

    @cached_property
    def poly_dof_matrix(self) -> FloatArray:
        """DoFs of the basis of (P_poly_degree)^3, columns in Poly coefficient order."""
        return eval_dofs3d_batch(self, poly_basis_batch(self.frame, self.poly_degree), quad_degree=2 * self.k + 2)


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------


def build_space3d(mesh: Mesh, cell: int, k: int, family: Family = "edge", variant: Variant = "standard") -> Space3D:
    """Construct a local face or edge space on cell ``cell`` of a 3D mesh."""
    return Space3D(mesh, cell, k, family, variant)


def eval_dofs3d_batch(space: Space3D, batch: FieldBatch, quad_degree: int | None = None) -> FloatArray:
    """DoF values of every member of a field batch, shape (dim, nb)."""
    k = space.k
    if quad_degree is None:
        quad_degree = 2 * k + 12
    out = np.zeros((space.dim, batch.nb))
    rule = space.frame.quad(quad_degree + k + 1)
    pts, w = rule.points, rule.weights
    cross_vals = space.cross_values(pts)  # (q, 3, n_cross)
    if space.family == "face":
        nf = dim_poly(k - 1, 2)
        for i in range(len(space.faces)):
            loc, fpts, fw = space.face_rule(i, quad_degree + k)
            vn = np.einsum("nib,i->nb", batch.value(fpts), space.outward_normals[i])
            mono = vandermonde(space.polygons[i].frame, loc, k - 1)
            out[i * nf : (i + 1) * nf] = mono.T @ (fw[:, None] * vn)
        out[space.cross_slice] = np.einsum("q,qic,qib->cb", w, cross_vals, batch.value(pts))
        if k > 1:
            _, mean = space._zero_mean
            mono = vandermonde(space.frame, pts, k - 1)[:, 1:] - mean[None, 1:]
            out[space.div_slice] = mono.T @ (w[:, None] * batch.div(pts))
        return out
    mesh = space.mesh
    for g in space.edges:
        a, b = mesh.edges[g]
        pa, pb = mesh.vertices[a], mesh.vertices[b]
        r = segment_rule(pa, pb, quad_degree + k)
        length = np.linalg.norm(pb - pa)
        t = (pb - pa) / length
        xi = (r.points - pa) @ t / length - 0.5
        mono = xi[:, None] ** np.arange(k + 1)[None, :]
        pos = space.edge_pos[int(g)]
        vt = np.einsum("nib,i->nb", batch.value(r.points), t)
        out[pos * (k + 1) : (pos + 1) * (k + 1)] = mono.T @ (r.weights[:, None] * vt)
    for i, sp in enumerate(space.face_spaces):
        plane = space.planes[i]
        local = eval_dofs_batch(sp, tangential_batch(batch, plane.origin, plane.axes), quad_degree)
        out[space.tang_slices[i]] = local[sp.x_slice]
        out[space.rot_slices[i]] = local[sp.diff_slice]
    out[space.curl_cross_slice] = np.einsum("q,qic,qib->cb", w, cross_vals, batch.curl(pts))
    xe = pts - space.frame.barycenter
    mono = vandermonde(space.frame, pts, k - 1)
    out[space.volx_slice] = mono.T @ (w[:, None] * np.einsum("nib,ni->nb", batch.value(pts), xe))
    return out


def eval_dofs3d(space: Space3D, field: VectorField | Poly | FieldBatch, quad_degree: int | None = None) -> FloatArray:
    """DoF values of a field (the interpolant's defining functionals)."""
    return eval_dofs3d_batch(space, as_batch(field), quad_degree)[:, 0]


def div_poly3d(space: Space3D, dofs: FloatArray) -> Poly:
    """div v as a polynomial of degree k-1 (face family)."""
    if space.family != "face":
        raise ValueError("div_poly3d needs a face-family space")
    return Poly(space.frame, space.k - 1, space.div_matrix @ dofs)


def curl_to_face_dofs(space: Space3D, dofs: FloatArray) -> FloatArray:
    """Face-family DoFs of curl v for an edge-family DoF vector."""
    if space.family != "edge":
        raise ValueError("curl_to_face_dofs needs an edge-family space")
    return space.curl_matrix @ dofs


def l2_projection3d(space: Space3D, dofs: FloatArray, m: int) -> Poly:
    """L2 projection onto (P_m)^3."""
    return Poly.from_flat(space.frame, m, space.projection_matrix(m) @ dofs, 3)


def stabilization3d(space: Space3D) -> FloatArray:
    """Stabilization matrix on the DoF basis."""
    key = ("stab",)
    if key in space._cache:
        return space._cache[key]
    k, h = space.k, space.h
    s = np.zeros((space.dim, space.dim))
    if space.family == "face":
        for i, tr in enumerate(space.normal_trace_matrices):
            s += h * tr.T @ space.polygons[i].frame.gram(k - 1) @ tr
        d = space.div_matrix
        s += h**2 * d.T @ space.frame.gram(k - 1) @ d
        p = space.projection_matrix(k + 1)
        s += p.T @ space.vector_gram(k + 1) @ p
    else:
        for i, sp in enumerate(space.face_spaces):
            gth = space.face_gather[i]
            hf = sp.h
            for e, tr in enumerate(sp.trace_matrices):
                t = tr @ gth
                s += hf**2 * t.T @ _edge_gram(k, sp.polygon.edge_lengths[e]) @ t
            if space.variant == "standard":
                p = sp.projection_matrix(k + 1) @ gth
                s += hf * p.T @ sp.vector_gram(k + 1) @ p
            else:
                p = sp.serendipity_matrix @ gth
                s += hf * p.T @ sp.vector_gram(k) @ p
        c = space.curl_matrix
        s += h**2 * c.T @ stabilization3d(space.face_companion) @ c
    s = 0.5 * (s + s.T)
    space._cache[key] = s
    return s


def discrete_mass3d(space: Space3D) -> FloatArray:
    """Matrix of the discrete L2 form."""
    m = space.poly_degree
    p = space.projection_matrix(m)
    rem = np.eye(space.dim) - space.poly_dof_matrix @ p
    out = p.T @ space.vector_gram(m) @ p + rem.T @ stabilization3d(space) @ rem
    return 0.5 * (out + out.T)
