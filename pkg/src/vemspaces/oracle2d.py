"""Reconstruction of 2D virtual functions from their DoFs.

A virtual function is split as ``v = Pi_k v + u``. The polynomial part is
computed exactly from the DoFs. The remainder ``u`` is rebuilt from its own
DoFs through two potentials, ``u = curl rho + grad sigma``:

* ``rho`` solves a pure Neumann problem with data ``rot u`` and ``u . t``,
  fixed by a zero-mean constraint;
* ``sigma`` vanishes on the boundary and satisfies ``lap sigma = d`` for an
  unknown ``d`` in ``P_k``, which is pinned down by the interior moments
  ``int u . x m_a``.

Both problems are discretized with continuous Lagrange elements of order q
on the fan sub-triangulation refined r times. Face-family functions are
reconstructed through their pi/2 rotation, which is an edge-family function.
Every map here is linear in the DoFs and is stored as a dense matrix.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import numpy.typing as npt
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ._kernels import element_gram, locate_points
from .fields import VectorField
from .meshgeo import PolygonGeom, refine_triangles
from .polycalc import deriv_matrix, dim_poly, exponents, vandermonde
from .quadrature import reference_rule
from .vem2d import Space2D

FloatArray = npt.NDArray[np.float64]
IntArray = npt.NDArray[np.int64]


class OracleError(RuntimeError):
    """The reconstruction systems are singular or a point lies outside the polygon."""


# ---------------------------------------------------------------------------
# Lagrange elements
# ---------------------------------------------------------------------------


class LagrangeTriangle:
    """Nodal P_q basis on the unit triangle with equispaced nodes."""

    def __init__(self, q: int) -> None:
        if q < 1:
            raise ValueError("element order must be at least 1")
        self.q = q
        bary = [(q - i - j, i, j) for j in range(q + 1) for i in range(q + 1 - j)]
        self.bary = np.array(bary, dtype=np.int64)  # weights of the three vertices, summing to q
        self.nodes = self.bary[:, 1:] / q
        self.exps = exponents(q, 2)
        vander = self._mono(self.nodes)
        self.coeffs = np.linalg.inv(vander)  # (n_mono, n_nodes)
        self.n = len(bary)

    def _mono(self, xi: FloatArray) -> FloatArray:
        return np.prod(xi[:, None, :] ** self.exps[None, :, :], axis=2)

    def values(self, xi: FloatArray) -> FloatArray:
        return self._mono(np.atleast_2d(xi)) @ self.coeffs

    def grads(self, xi: FloatArray) -> FloatArray:
        """Reference gradients, shape (n_pts, n_nodes, 2)."""
        xi = np.atleast_2d(xi)
        out = np.zeros((len(xi), self.n, 2))
        for r in range(2):
            e = self.exps.copy()
            factor = e[:, r].astype(np.float64)
            e[:, r] = np.maximum(e[:, r] - 1, 0)
            dm = np.prod(xi[:, None, :] ** e[None, :, :], axis=2) * factor[None, :]
            out[:, :, r] = dm @ self.coeffs
        return out


@dataclass(frozen=True, eq=False)
class FemMesh:
    """Continuous P_q discretization of a polygon's refined fan triangulation."""

    element: LagrangeTriangle
    triangles: FloatArray  # (ne, 3, 2)
    elem_nodes: IntArray  # (ne, n_local) global node ids
    nodes: FloatArray  # (nn, 2)
    on_boundary: npt.NDArray[np.bool_]  # (nn,)
    boundary_edges: list[tuple[int, int, int, int]]  # (element, local vertex a, local vertex b, polygon edge)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @cached_property
    def inverse_maps(self) -> tuple[FloatArray, FloatArray]:
        """Inverse Jacobians (ne, 2, 2) and absolute determinants (ne,)."""
        b = np.stack([self.triangles[:, 1] - self.triangles[:, 0], self.triangles[:, 2] - self.triangles[:, 0]], axis=2)
        return np.linalg.inv(b), np.abs(np.linalg.det(b))

    def to_reference(self, elems: IntArray, points: FloatArray) -> FloatArray:
        binv, _ = self.inverse_maps
        return np.einsum("nij,nj->ni", binv[elems], points - self.triangles[elems, 0])

    def physical_grads(self, elems: IntArray, ref_grads: FloatArray) -> FloatArray:
        """Map reference gradients (n, nl, 2) of points in ``elems`` to physical ones."""
        binv, _ = self.inverse_maps
        return np.einsum("nlr,nrs->nls", ref_grads, binv[elems])


def _segment_distance(p: FloatArray, a: FloatArray, b: FloatArray) -> FloatArray:
    d = b - a
    t = np.clip(((p - a) @ d) / (d @ d), 0.0, 1.0)
    return np.linalg.norm(p - (a + t[:, None] * d), axis=1)


def build_fem_mesh(polygon: PolygonGeom, r: int, q: int) -> FemMesh:
    """Refined fan triangulation with globally numbered P_q nodes."""
    tris = polygon.fan_triangles()
    for _ in range(r):
        tris = refine_triangles(tris)
    element = LagrangeTriangle(q)
    # sub-triangle vertices coincide bitwise across elements
    verts, vid = np.unique(tris.reshape(-1, 2), axis=0, return_inverse=True)
    vid = vid.reshape(-1, 3)
    keys: dict[tuple, int] = {}
    elem_nodes = np.zeros((len(tris), element.n), dtype=np.int64)
    coords: list[FloatArray] = []
    for e in range(len(tris)):
        for l, w in enumerate(element.bary):
            key = tuple(sorted((int(vid[e, i]), int(w[i])) for i in range(3) if w[i] > 0))
            idx = keys.get(key)
            if idx is None:
                idx = len(keys)
                keys[key] = idx
                coords.append(sum(w[i] * verts[vid[e, i]] for i in range(3)) / q)
            elem_nodes[e, l] = idx
    nodes = np.array(coords)
    tol = 1e-10 * polygon.diameter
    pv = polygon.vertices
    n_edges = polygon.n_edges
    dist = np.stack([_segment_distance(nodes, pv[i], pv[(i + 1) % n_edges]) for i in range(n_edges)], axis=1)
    on_boundary = dist.min(axis=1) <= tol
    vdist = np.stack([_segment_distance(verts, pv[i], pv[(i + 1) % n_edges]) for i in range(n_edges)], axis=1)
    bedges = []
    for e in range(len(tris)):
        for a, b in ((0, 1), (1, 2), (2, 0)):
            on = (vdist[vid[e, a]] <= tol) & (vdist[vid[e, b]] <= tol)
            hits = np.flatnonzero(on)
            if hits.size:
                bedges.append((e, a, b, int(hits[0])))
    return FemMesh(element, tris, elem_nodes, nodes, on_boundary, bedges)


# ---------------------------------------------------------------------------
# evaluator
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Potentials:
    """Nodal values of both potentials and the recovered divergence coefficients."""

    rho: FloatArray
    sigma: FloatArray
    div_coeffs: FloatArray


class VirtualEvaluator:
    """Linear reconstruction of the virtual functions of one 2D space."""

    def __init__(self, space: Space2D, r: int = 3, q: int | None = None) -> None:
        if q is None:
            q = space.k + 2
        if r < 0:
            raise ValueError("refinement level must be non-negative")
        if q < space.k + 1:
            raise ValueError("FEM order q must be at least k+1")
        self.space = space
        self.r = r
        self.q = q
        self.rotated = space.family == "face"
        self.twin = Space2D(space.polygon, space.k, "edge", "standard")
        self.fem = build_fem_mesh(space.polygon, r, q)
        twin = self.twin
        # space DoFs -> edge-picture standard DoFs -> remainder DoFs
        self.to_edge = space.edge_picture
        proj = twin.projection_matrix(space.k)
        self.poly_map = proj @ self.to_edge
        self.remainder = (np.eye(twin.dim) - twin.poly_dof_matrix @ proj) @ self.to_edge
        self._assemble()

    # -- assembly ----------------------------------------------------------

    def _assemble(self) -> None:
        fem, twin, k = self.fem, self.twin, self.space.k
        el = fem.element
        rule = reference_rule("triangle", 2 * self.q + k + 2)
        binv, det = fem.inverse_maps
        ne, nl, nn = len(fem.triangles), el.n, fem.n_nodes
        vals = el.values(rule.points)  # (nq, nl)
        ref_g = el.grads(rule.points)  # (nq, nl, 2)
        grads = np.einsum("qlr,ers->eqls", ref_g, binv)
        weights = rule.weights[None, :] * det[:, None]
        pts = fem.triangles[:, :1, :] + np.einsum("qr,ers->eqs", rule.points, self._edge_matrix())
        self._quad = (pts, weights, vals, grads)
        kloc = element_gram(grads, grads, weights)
        rows = np.repeat(fem.elem_nodes, nl, axis=1).ravel()
        cols = np.tile(fem.elem_nodes, (1, nl)).ravel()
        stiff = sp.csr_matrix((kloc.ravel(), (rows, cols)), shape=(nn, nn))
        flat_pts = pts.reshape(-1, 2)
        n_rot = dim_poly(k - 1, 2)
        n_k = dim_poly(k, 2)
        mono_rot = vandermonde(twin.frame, flat_pts, k - 1).reshape(ne, -1, n_rot)
        mono_k = vandermonde(twin.frame, flat_pts, k).reshape(ne, -1, n_k)
        # (phi_i, m_b) and (curl phi_i, x m_a)
        load_rot = self._scatter(np.einsum("eq,ql,eqb->elb", weights, vals, mono_rot), n_rot)
        load_k = self._scatter(np.einsum("eq,ql,eqb->elb", weights, vals, mono_k), n_k)
        xe = pts - twin.frame.barycenter
        curl = np.stack([grads[..., 1], -grads[..., 0]], axis=-1)
        curl_x = self._scatter(np.einsum("eq,eqlc,eqc,eqa->ela", weights, curl, xe, mono_k), n_k)
        mass_vec = load_k[:, 0]  # m_0 = 1
        # rho: [K m; m' 0] [rho; lam] = [rhs; 0]
        rhs_rho = load_rot @ twin.diff_matrix
        for e, a, b, pe in fem.boundary_edges:
            rhs_rho -= self._edge_load(e, a, b, pe) @ twin.trace_matrices[pe]
        neumann = sp.bmat([[stiff, sp.csr_matrix(mass_vec[:, None])], [sp.csr_matrix(mass_vec[None, :]), None]]).tocsc()
        rhs = np.vstack([rhs_rho, np.zeros((1, twin.dim))])
        try:
            rho_map = spla.splu(neumann).solve(rhs)[:nn]
        except RuntimeError as exc:  # pragma: no cover - singular factorization
            raise OracleError(f"Neumann system is singular: {exc}") from exc
        # sigma and d: [K_II B_I; C 0] [sigma_I; d] = [0; X - (curl rho, x m)]
        interior = np.flatnonzero(~fem.on_boundary)
        ni = len(interior)
        kii = stiff[interior][:, interior]
        bi = sp.csr_matrix(load_k[interior])
        scale = np.array([2.0 + sum(a) for a in exponents(k, 2)])
        c = -sp.diags(scale) @ bi.T
        saddle = sp.bmat([[kii, bi], [c, None]]).tocsc()
        xmom = np.zeros((n_k, twin.dim))
        xmom[:, twin.x_slice] = np.eye(n_k)
        rhs = np.vstack([np.zeros((ni, twin.dim)), xmom - curl_x.T @ rho_map])
        try:
            sol = spla.splu(saddle).solve(rhs)
        except RuntimeError as exc:
            raise OracleError(f"potential system is singular (raise r or q): {exc}") from exc
        if not np.all(np.isfinite(sol)):
            raise OracleError("potential system is singular (raise r or q)")
        sigma_map = np.zeros((nn, twin.dim))
        sigma_map[interior] = sol[:ni]
        self.rho_map = rho_map @ self.remainder
        self.sigma_map = sigma_map @ self.remainder
        self.div_map = sol[ni:] @ self.remainder
        # the basis sums to one, so column sums give int rot u - int_bd u.t
        self.neumann_residual = float(np.abs(rhs_rho.sum(axis=0) @ self.remainder).max())

    def _edge_matrix(self) -> FloatArray:
        t = self.fem.triangles
        return np.stack([t[:, 1] - t[:, 0], t[:, 2] - t[:, 0]], axis=1)  # (ne, 2 (r), 2 (s))

    def _scatter(self, local: FloatArray, width: int) -> FloatArray:
        """Sum element blocks (ne, nl, width) into a dense (nn, width) array."""
        out = np.zeros((self.fem.n_nodes, width))
        np.add.at(out, self.fem.elem_nodes.ravel(), local.reshape(-1, width))
        return out

    def _edge_load(self, e: int, a: int, b: int, pe: int) -> FloatArray:
        """(phi_i, xi^j) over one boundary sub-edge lying on polygon edge ``pe``."""
        fem, k = self.fem, self.space.k
        tri = fem.triangles[e]
        rule = reference_rule("segment", self.q + k + 2)
        pts = tri[a] + rule.points[:, :1] * (tri[b] - tri[a])
        w = rule.weights * np.linalg.norm(tri[b] - tri[a])
        ref = fem.to_reference(np.full(len(pts), e), pts)
        phi = fem.element.values(ref)
        poly = self.space.polygon
        start = poly.vertices[pe]
        xi = np.linalg.norm(pts - start, axis=1) / poly.edge_lengths[pe] - 0.5
        mono = xi[:, None] ** np.arange(k + 1)[None, :]
        out = np.zeros((fem.n_nodes, k + 1))
        np.add.at(out, fem.elem_nodes[e], phi.T @ (w[:, None] * mono))
        return out

    # -- evaluation --------------------------------------------------------

    def _rotate(self, vals: FloatArray) -> FloatArray:
        """Map edge-picture values (..., 2, dim) back to the space's own picture."""
        if not self.rotated:
            return vals
        return np.stack([vals[..., 1, :], -vals[..., 0, :]], axis=-2)

    def _fem_parts(self, elems: IntArray, ref: FloatArray) -> tuple[FloatArray, FloatArray]:
        """curl rho and grad sigma (n, 2, dim) at points given by element and reference coordinates."""
        g = self.fem.physical_grads(elems, self.fem.element.grads(ref))  # (n, nl, 2)
        ids = self.fem.elem_nodes[elems]  # (n, nl)
        rho = self.rho_map[ids]  # (n, nl, dim)
        sig = self.sigma_map[ids]
        grad_rho = np.einsum("nls,nld->nsd", g, rho)
        curl_rho = np.stack([grad_rho[:, 1], -grad_rho[:, 0]], axis=1)
        grad_sigma = np.einsum("nls,nld->nsd", g, sig)
        return curl_rho, grad_sigma

    def _poly_part(self, points: FloatArray) -> FloatArray:
        n = dim_poly(self.space.k, 2)
        v = vandermonde(self.twin.frame, points, self.space.k)
        return np.stack([v @ self.poly_map[:n], v @ self.poly_map[n:]], axis=1)

    def value_matrix(self, points: FloatArray) -> FloatArray:
        """Linear map from DoFs to values at ``points``, shape (n, 2, dim)."""
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        elems = locate_points(points, self.fem.triangles, 1e-10)
        if np.any(elems < 0):
            raise OracleError("point outside the polygon")
        ref = self.fem.to_reference(elems, points)
        curl_rho, grad_sigma = self._fem_parts(elems, ref)
        return self._rotate(self._poly_part(points) + curl_rho + grad_sigma)

    @cached_property
    def quadrature_data(self) -> tuple[FloatArray, FloatArray, FloatArray]:
        """Composite quadrature points (N, 2), weights (N,) and the value map (N, 2, dim)."""
        pts, weights, vals, grads = self._quad
        ne, nq = weights.shape
        ids = self.fem.elem_nodes
        grad_rho = np.einsum("eqls,eld->eqsd", grads, self.rho_map[ids])
        grad_sig = np.einsum("eqls,eld->eqsd", grads, self.sigma_map[ids])
        fem_vals = np.stack([grad_rho[:, :, 1], -grad_rho[:, :, 0]], axis=2) + grad_sig
        flat = pts.reshape(-1, 2)
        total = self._poly_part(flat) + fem_vals.reshape(ne * nq, 2, -1)
        return flat, weights.ravel(), self._rotate(total)

    @cached_property
    def gram(self) -> FloatArray:
        """Oracle L2 Gram matrix: dofs' G dofs = ||v_h||^2."""
        _, w, vmat = self.quadrature_data
        g = np.einsum("n,ncd,nce->de", w, vmat, vmat)
        return 0.5 * (g + g.T)

    def potentials(self, dofs: FloatArray) -> Potentials:
        """Potentials of the non-polynomial remainder of a virtual function."""
        return Potentials(self.rho_map @ dofs, self.sigma_map @ dofs, self.div_map @ dofs)

    def component_inner(self, dofs: FloatArray) -> float:
        """(curl rho, grad sigma) of the remainder, which vanishes for exact potentials."""
        pts, weights, vals, grads = self._quad
        ids = self.fem.elem_nodes
        grad_rho = np.einsum("eqls,el->eqs", grads, (self.rho_map @ dofs)[ids])
        grad_sig = np.einsum("eqls,el->eqs", grads, (self.sigma_map @ dofs)[ids])
        curl_rho = np.stack([grad_rho[..., 1], -grad_rho[..., 0]], axis=-1)
        return float(np.sum(weights * np.sum(curl_rho * grad_sig, axis=-1)))


def build_evaluator(space: Space2D, r: int = 3, q: int | None = None) -> VirtualEvaluator:
    """Assemble and factorize the reconstruction systems of a 2D space."""
    return VirtualEvaluator(space, r, q)


def eval_virtual(evaluator: VirtualEvaluator, dofs: FloatArray, points: FloatArray) -> FloatArray:
    """Values (n, 2) of the reconstructed virtual function."""
    return np.einsum("ncd,d->nc", evaluator.value_matrix(points), np.asarray(dofs, dtype=np.float64))


def virtual_norm(evaluator: VirtualEvaluator, dofs: FloatArray) -> float:
    """L2 norm of the reconstructed virtual function."""
    d = np.asarray(dofs, dtype=np.float64)
    return float(np.sqrt(max(d @ evaluator.gram @ d, 0.0)))


def virtual_error(evaluator: VirtualEvaluator, dofs: FloatArray, field: VectorField) -> float:
    """L2 distance between an analytic field and the reconstruction."""
    pts, w, vmat = evaluator.quadrature_data
    diff = field(pts) - np.einsum("ncd,d->nc", vmat, np.asarray(dofs, dtype=np.float64))
    return float(np.sqrt(np.sum(w * np.sum(diff**2, axis=1))))


def reextract_dofs(evaluator: VirtualEvaluator, quad_degree: int | None = None) -> FloatArray:
    """DoFs of the reconstructed basis functions, shape (dim, dim).

    Edge and interior moments are integrated directly. The rot/div moments
    are taken in weak form, against curl or grad of the zero-mean test
    monomials plus a boundary term, so only values of the reconstruction
    are needed. For an exact reconstruction the result is the identity.
    """
    space = evaluator.space
    k, poly, frame = space.k, space.polygon, space.frame
    face = space.family == "face"
    if quad_degree is None:
        quad_degree = 2 * evaluator.q + k
    out = np.zeros((space.dim, space.dim))
    _, mean = space._zero_mean_gram
    n_test = dim_poly(k - 1, 2)
    boundary = np.zeros((n_test, space.dim))
    for e in range(poly.n_edges):
        pts, w, mono = space._edge_monomials(e, quad_degree)
        direction = poly.normals[e] if face else poly.tangents[e]
        trace = np.einsum("ncd,c->nd", evaluator.value_matrix(pts), direction)
        out[e * (k + 1) : (e + 1) * (k + 1)] = mono.T @ (w[:, None] * trace)
        tests = vandermonde(frame, pts, k - 1) - mean[None, :]
        boundary += tests.T @ (w[:, None] * trace)
    pts, w, vmat = evaluator.quadrature_data
    xf = pts - frame.barycenter
    if face:
        xf = np.stack([-xf[:, 1], xf[:, 0]], axis=1)
    if space.n_x:
        mono = vandermonde(frame, pts, space.x_degree)
        out[space.x_slice] = mono.T @ (w[:, None] * np.einsum("ncd,nc->nd", vmat, xf))
    if space.n_diff:
        low = vandermonde(frame, pts, max(k - 2, 0))
        grads = [low @ deriv_matrix(k - 1, 2, i) / frame.diameter for i in range(2)]
        # face: -(v, grad q); edge: (v, curl q) with curl q = (dq/dy, -dq/dx)
        test = np.stack([-grads[0], -grads[1]] if face else [grads[1], -grads[0]], axis=1)
        pair = np.einsum("n,ncb,ncd->bd", w, test, vmat)
        out[space.diff_slice] = (pair + boundary)[1:]
    return out


@dataclass(frozen=True)
class UnisolvenceReport:
    dim: int
    poly_rank: int
    poly_columns: int
    poly_min_sv: float
    pis_rank: int | None
    pis_rows: int | None
    pis_columns: int | None
    pis_min_sv: float | None
    full_min_sv: float | None

    @property
    def ok(self) -> bool:
        full = self.poly_rank == self.poly_columns
        if self.pis_rank is not None:
            full = full and self.pis_rank == self.pis_columns
        if self.full_min_sv is not None:
            full = full and self.full_min_sv > 1e-10
        return full


def _scaled_sv(mat: FloatArray) -> FloatArray:
    """Singular values after normalizing columns to unit length."""
    norms = np.linalg.norm(mat, axis=0)
    return np.linalg.svd(mat / np.where(norms > 0, norms, 1.0), compute_uv=False)


def unisolvence_report(space: Space2D, full: bool | None = None, r: int = 2) -> UnisolvenceReport:
    """Ranks of the polynomial DoF matrix, the serendipity system and (optionally) the oracle Gram."""
    sv = _scaled_sv(space.poly_dof_matrix)
    poly_rank = int(np.sum(sv > 1e-10 * sv[0]))
    pis = (None, None, None, None)
    if space.variant == "serendipity":
        a, _, ssv = space._pis_system
        pis = (space.pis_rank, a.shape[0], a.shape[1], float(ssv[-1] / ssv[0]))
    if full is None:
        full = space.k <= 2
    full_sv = None
    if full:
        g = build_evaluator(space, r=r).gram
        ev = np.linalg.eigvalsh(g / np.max(np.abs(np.diag(g))))
        full_sv = float(max(ev[0], 0.0))
    return UnisolvenceReport(space.dim, poly_rank, space.poly_dof_matrix.shape[1], float(sv[-1] / sv[0]), *pis, full_sv)
