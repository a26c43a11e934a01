"""Edge and face virtual element spaces on polygons.

Every computable object is a matrix acting on the DoF vector of a
:class:`Space2D`. The edge family (tangential continuity) is implemented
directly. The face family is the edge family applied to the rotated field
``R v = (-v_2, v_1)``: normal components become tangential ones, ``div``
becomes ``rot`` and the moments against ``x^perp`` change sign. Polynomial
outputs are rotated back with ``R^{-1} w = (w_2, -w_1)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Literal, Union

import numpy as np
import numpy.typing as npt
import scipy.linalg as sla

from .fields import FieldBatch, VectorField, as_batch, poly_basis_batch
from .meshgeo import AssumptionParams, PolygonGeom, face_lines
from .polycalc import (
    CellFrame,
    Poly,
    decompose_vector,
    dim_poly,
    exponents,
    vandermonde,
)
from .quadrature import segment_rule

FloatArray = npt.NDArray[np.float64]
Family = Literal["edge", "face"]
Variant = Literal["standard", "serendipity"]

PIS_RCOND = 1e-10


@dataclass(frozen=True)
class EdgeMoment:
    edge: int
    j: int


@dataclass(frozen=True)
class InteriorXMoment:
    alpha: tuple[int, ...]


@dataclass(frozen=True)
class DiffMoment:
    alpha: tuple[int, ...]


Descriptor = Union[EdgeMoment, InteriorXMoment, DiffMoment]


@dataclass(frozen=True)
class EdgePoly:
    """Polynomial in the arclength along an edge.

    Coefficients refer to ((s - L/2) / L)**j with s in [0, L] measured from
    the edge's first vertex.
    """

    length: float
    degree: int
    coeffs: FloatArray

    def __call__(self, s: FloatArray) -> FloatArray:
        xi = np.asarray(s, dtype=np.float64) / self.length - 0.5
        return np.polynomial.polynomial.polyval(xi, self.coeffs)


@dataclass(frozen=True)
class TriNormParams:
    gamma: float = 1.0
    gamma_hat: float = 1.0

    def __post_init__(self) -> None:
        if not (self.gamma > 0 and self.gamma_hat > 0):
            raise ValueError("norm weights must be positive")


class SerendipityError(ValueError):
    """Raised when the serendipity construction is not admissible."""


def _edge_gram(k: int, length: float) -> FloatArray:
    """Gram matrix of ((s - L/2)/L)**j on an edge of the given length."""
    j = np.arange(k + 1)
    p = j[:, None] + j[None, :]
    # integral of xi**p over [-1/2, 1/2]
    vals = np.where(p % 2 == 0, 2.0 * 0.5 ** (p + 1) / (p + 1), 0.0)
    return length * vals


def _rotate_back(rows: FloatArray) -> FloatArray:
    """Map coefficient rows of w = R v back to v = (w_2, -w_1)."""
    n = rows.shape[0] // 2
    return np.vstack([rows[n:], -rows[:n]])


class Space2D:
    """Local edge or face virtual element space of order k on a polygon."""

    def __init__(
        self,
        polygon: PolygonGeom,
        k: int,
        family: Family = "edge",
        variant: Variant = "standard",
        assumptions: AssumptionParams = AssumptionParams(),
    ) -> None:
        if k < 1:
            raise ValueError("order k must be at least 1")
        if family not in ("edge", "face"):
            raise ValueError(f"unknown family {family!r}")
        if variant not in ("standard", "serendipity"):
            raise ValueError(f"unknown variant {variant!r}")
        self.polygon = polygon
        self.frame: CellFrame = polygon.frame
        self.k = k
        self.family = family
        self.variant = variant
        self.eta, self.beta = face_lines(polygon, k)
        if variant == "serendipity":
            ang = polygon.corner_angles
            if not (polygon.convex and ang.min() > assumptions.eps and ang.max() < np.pi - assumptions.eps):
                raise SerendipityError("serendipity spaces need a convex face with interior angles bounded away from 0 and pi")
        n_e = polygon.n_edges
        x_deg = k if variant == "standard" else self.beta
        layout: list[Descriptor] = [EdgeMoment(e, j) for e in range(n_e) for j in range(k + 1)]
        layout += [InteriorXMoment(tuple(int(a) for a in al)) for al in exponents(x_deg, 2)] if x_deg >= 0 else []
        layout += [DiffMoment(tuple(int(a) for a in al)) for al in exponents(k - 1, 2)[1:]]
        self.layout: tuple[Descriptor, ...] = tuple(layout)
        self.n_edge_dofs = n_e * (k + 1)
        self.n_x = dim_poly(x_deg, 2)
        self.n_diff = dim_poly(k - 1, 2) - 1
        self.x_degree = x_deg
        self.edge_slice = slice(0, self.n_edge_dofs)
        self.x_slice = slice(self.n_edge_dofs, self.n_edge_dofs + self.n_x)
        self.diff_slice = slice(self.n_edge_dofs + self.n_x, len(layout))

    # ------------------------------------------------------------------ basics

    @property
    def dim(self) -> int:
        return len(self.layout)

    @property
    def n_std(self) -> int:
        return self.n_edge_dofs + dim_poly(self.k, 2) + self.n_diff

    @property
    def h(self) -> float:
        return self.frame.diameter

    def __repr__(self) -> str:
        return f"Space2D(k={self.k}, family={self.family}, variant={self.variant}, dim={self.dim})"

    @cached_property
    def sign(self) -> FloatArray:
        """Diagonal map from this layout to the edge picture (x-moments flip for faces)."""
        s = np.ones(self.dim)
        if self.family == "face":
            s[self.x_slice] = -1.0
        return s

    def _edge_rule(self, e: int, degree: int):
        v = self.polygon.vertices
        return segment_rule(v[e], v[(e + 1) % len(v)], degree)

    def _edge_monomials(self, e: int, degree: int) -> tuple[FloatArray, FloatArray, FloatArray]:
        """Edge rule points, weights and monomial values (n_qp, k+1)."""
        rule = self._edge_rule(e, degree)
        start = self.polygon.vertices[e]
        length = self.polygon.edge_lengths[e]
        s = np.linalg.norm(rule.points - start, axis=1) / length - 0.5
        mono = s[:, None] ** np.arange(self.k + 1)[None, :]
        return rule.points, rule.weights, mono

    # ------------------------------------------------------- edge-picture data
    # The matrices below act on edge-picture DoFs of the *standard* layout.

    @cached_property
    def _std_index(self) -> dict[str, slice]:
        ne = self.n_edge_dofs
        nx = dim_poly(self.k, 2)
        return {"edge": slice(0, ne), "x": slice(ne, ne + nx), "diff": slice(ne + nx, ne + nx + self.n_diff)}

    @cached_property
    def _trace_std(self) -> list[FloatArray]:
        out = []
        k = self.k
        for e in range(self.polygon.n_edges):
            g = _edge_gram(k, self.polygon.edge_lengths[e])
            sel = np.zeros((k + 1, self.n_std))
            sel[:, e * (k + 1) : (e + 1) * (k + 1)] = np.eye(k + 1)
            out.append(np.linalg.solve(g, sel))
        return out

    @cached_property
    def _zero_mean_gram(self) -> tuple[FloatArray, FloatArray]:
        """Tests (1, m_a - mean) for rot moments: Gram against monomials of degree k-1."""
        k1 = self.k - 1
        gram = self.frame.gram(k1)
        mint = self.frame.monomial_integrals(k1)
        mean = mint / self.frame.measure
        tests = np.vstack([mint[None, :], gram[1:] - mean[1:, None] * mint[None, :]])
        return tests, mean

    @cached_property
    def _rot_std(self) -> FloatArray:
        tests, _ = self._zero_mean_gram
        rhs = np.zeros((tests.shape[0], self.n_std))
        k = self.k
        for e in range(self.polygon.n_edges):
            rhs[0, e * (k + 1)] = 1.0
        rhs[1:, self._std_index["diff"]] = np.eye(self.n_diff)
        return np.linalg.solve(tests, rhs)

    def _tangential_derivatives(self, e: int, degree: int) -> FloatArray:
        """d/dt of the monomials of degree <= k+1 at the edge rule points."""
        pts, _, _ = self._edge_monomials(e, degree)
        t = self.polygon.tangents[e]
        exps = exponents(self.k + 1, 2)
        loc = self.frame.local(pts)
        out = np.zeros((len(pts), len(exps)))
        for i in range(2):
            lowered = exps.copy()
            lowered[:, i] = np.maximum(lowered[:, i] - 1, 0)
            out += t[i] * exps[None, :, i] * np.prod(loc[:, None, :] ** lowered[None], axis=2)
        return out / self.h

    def _boundary_pairing(self, scalar_values: list[FloatArray], degree: int) -> FloatArray:
        """Row vector of sum_e int_e (v.t) g over standard DoFs, g given at edge points."""
        row = np.zeros(self.n_std)
        for e, vals in enumerate(scalar_values):
            _, w, mono = self._edge_monomials(e, degree)
            row += ((w * vals) @ mono) @ self._trace_std[e]
        return row

    def _proj_std(self, m: int) -> FloatArray:
        key = ("proj", m)
        if key in self._cache:
            return self._cache[key]
        k = self.k
        n_m = dim_poly(m, 2)
        deg = 2 * k + 4
        rows = np.zeros((2 * n_m, self.n_std))
        gram_all = self.frame.gram(max(k - 1, m + 2))
        n_k1 = dim_poly(k - 1, 2)
        xs = self._std_index["x"]
        for c in range(2):
            for a in range(n_m):
                coeffs = np.zeros((2, n_m))
                coeffs[c, a] = 1.0
                q = Poly(self.frame, m, coeffs)
                s, cx = decompose_vector("2d_curl_x", q)
                row = rows[c * n_m + a]
                row[xs.start : xs.start + cx.coeffs.shape[1]] += cx.coeffs[0]
                ns = s.coeffs.shape[1]
                row += (gram_all[:n_k1, :ns] @ s.coeffs[0]) @ self._rot_std
                vals = [s(self._edge_monomials(e, deg)[0]) for e in range(self.polygon.n_edges)]
                row -= self._boundary_pairing(vals, deg)
        mass = np.kron(np.eye(2), self.frame.gram(m))
        out = np.linalg.solve(mass, rows)
        self._cache[key] = out
        return out

    @cached_property
    def _cache(self) -> dict:
        return {}

    # ------------------------------------------------------------ serendipity

    def _x_moment_matrix(self, k_poly: int, k_mom: int) -> FloatArray:
        """Matrix giving int p . x_F m_a for p in (P_{k_poly})^2, |a| <= k_mom."""
        gram = self.frame.gram(max(k_poly, k_mom + 1))
        npoly = dim_poly(k_poly, 2)
        nmom = dim_poly(k_mom, 2)
        idx = {tuple(r): i for i, r in enumerate(exponents(k_mom + 1, 2))}
        out = np.zeros((nmom, 2 * npoly))
        for a, al in enumerate(exponents(k_mom, 2)):
            for c in range(2):
                shifted = list(al)
                shifted[c] += 1
                out[a, c * npoly : (c + 1) * npoly] = self.h * gram[idx[tuple(shifted)], :npoly]
        return out

    @cached_property
    def _pis_system(self) -> tuple[FloatArray, FloatArray, FloatArray]:
        """Functional matrices (A on polynomial coefficients, B on edge-picture DoFs) and singular values."""
        k, h = self.k, self.h
        npk = dim_poly(k, 2)
        deg = 2 * k + 4
        ne = self.polygon.n_edges
        # polynomial tangential traces at edge points: (n_qp, 2*npk) per edge
        a_rows, b_rows = [], []
        std_to_space = self._std_selector
        tq_grad = []
        for e in range(ne):
            pts, w, mono = self._edge_monomials(e, deg)
            t = self.polygon.tangents[e]
            v = vandermonde(self.frame, pts, k)
            ptrace = np.hstack([t[0] * v, t[1] * v])
            tq_grad.append((w, ptrace, self._tangential_derivatives(e, deg), mono, e))
        # (a) boundary moments against grad q . t for q of degree 1..k+1
        nq = dim_poly(k + 1, 2)
        a_a = np.zeros((nq - 1, 2 * npk))
        b_a = np.zeros((nq - 1, self.n_std))
        for w, ptrace, dt, mono, e in tq_grad:
            a_a += (dt[:, 1:] * w[:, None]).T @ ptrace
            b_a += ((dt[:, 1:] * w[:, None]).T @ mono) @ self._trace_std[e]
        a_rows.append(a_a)
        b_rows.append(b_a)
        # (b) total circulation
        a_b = sum(w @ ptrace for w, ptrace, _, _, _ in tq_grad)[None, :] / h
        b_b = np.zeros((1, self.n_std))
        for e in range(ne):
            b_b[0, e * (k + 1)] = 1.0 / h
        a_rows.append(a_b)
        b_rows.append(b_b)
        # (c) zero-mean rot moments
        if self.n_diff:
            tests, _ = self._zero_mean_gram
            rot_poly = self._rot_of_polys()
            a_rows.append(tests[1:] @ rot_poly / h)
            b_c = np.zeros((self.n_diff, self.n_std))
            b_c[:, self._std_index["diff"]] = np.eye(self.n_diff) / h
            b_rows.append(b_c)
        # (d) x-moments up to beta
        if self.beta >= 0:
            nb = dim_poly(self.beta, 2)
            a_rows.append(self._x_moment_matrix(k, self.beta) / h**3)
            b_d = np.zeros((nb, self.n_std))
            xs = self._std_index["x"]
            b_d[:, xs.start : xs.start + nb] = np.eye(nb) / h**3
            b_rows.append(b_d)
        a_mat = np.vstack(a_rows)
        b_mat = np.vstack(b_rows) @ std_to_space
        sv = np.linalg.svd(a_mat, compute_uv=False)
        return a_mat, b_mat, sv

    def _rot_of_polys(self) -> FloatArray:
        """Coefficients (degree k-1) of rot p for the basis of (P_k)^2."""
        from .polycalc import deriv_matrix

        k = self.k
        d0 = deriv_matrix(k, 2, 0) / self.h
        d1 = deriv_matrix(k, 2, 1) / self.h
        return np.hstack([-d1, d0])

    @cached_property
    def _std_selector(self) -> FloatArray:
        """Embed this layout's edge, rot and low x-moment DoFs into the standard layout.

        Used only by the functional system, which never reads the x-moments
        beyond degree beta.
        """
        sel = np.zeros((self.n_std, self.dim))
        sel[: self.n_edge_dofs, : self.n_edge_dofs] = np.eye(self.n_edge_dofs)
        xs = self._std_index["x"]
        sel[xs.start : xs.start + self.n_x, self.x_slice] = np.eye(self.n_x)
        sel[self._std_index["diff"], self.diff_slice] = np.eye(self.n_diff)
        return sel

    @cached_property
    def pis_rank(self) -> int:
        a, _, sv = self._pis_system
        return int((sv > PIS_RCOND * sv[0]).sum())

    @cached_property
    def _pis_edge(self) -> FloatArray:
        """Pi_S on edge-picture DoFs of this layout (2*pi_k rows)."""
        a, b, sv = self._pis_system
        npk2 = 2 * dim_poly(self.k, 2)
        if self.pis_rank != npk2:
            raise SerendipityError(f"serendipity functionals have rank {self.pis_rank} < {npk2}; singular values {sv}")
        u, s, vt = np.linalg.svd(a, full_matrices=False)
        r = self.pis_rank
        pinv = vt[:r].T @ np.diag(1.0 / s[:r]) @ u[:, :r].T
        return pinv @ b

    def pis_residual(self, dofs: FloatArray) -> float:
        """Relative residual of the functional system for the given DoFs."""
        a, b, _ = self._pis_system
        rhs = b @ (self.sign * dofs)
        c = self._pis_edge @ (self.sign * dofs)
        return float(np.linalg.norm(a @ c - rhs) / max(np.linalg.norm(rhs), 1e-300))

    @cached_property
    def _expand_edge(self) -> FloatArray:
        """Map edge-picture DoFs of this layout to edge-picture standard DoFs."""
        if self.variant == "standard":
            return np.eye(self.dim)
        out = self._std_selector.copy()
        lo = dim_poly(self.beta, 2)
        xs = self._std_index["x"]
        xmat = self._x_moment_matrix(self.k, self.k)
        out[xs.start + lo : xs.stop] = xmat[lo:] @ self._pis_edge
        return out

    @cached_property
    def _q(self) -> FloatArray:
        """Space DoFs -> edge-picture standard DoFs."""
        return self._expand_edge * self.sign[None, :]

    # -------------------------------------------------------- public matrices

    @property
    def edge_picture(self) -> FloatArray:
        """DoFs -> standard edge-family DoFs of the function (rotated by pi/2 for faces)."""
        return self._q

    @cached_property
    def trace_matrices(self) -> list[FloatArray]:
        """Per edge, DoFs -> coefficients of v.t_e (edge) or v.n_e (face)."""
        return [t @ self._q for t in self._trace_std]

    @cached_property
    def diff_matrix(self) -> FloatArray:
        """DoFs -> coefficients of rot v (edge) or div v (face) in P_{k-1}."""
        return self._rot_std @ self._q

    def projection_matrix(self, m: int) -> FloatArray:
        """DoFs -> coefficients of the L2 projection onto (P_m)^2."""
        if not 0 <= m <= self.k + 1:
            raise ValueError(f"projection degree {m} outside 0..{self.k + 1}")
        p = self._proj_std(m) @ self._q
        return _rotate_back(p) if self.family == "face" else p

    @cached_property
    def serendipity_matrix(self) -> FloatArray:
        """DoFs -> coefficients of the serendipity projection in (P_k)^2."""
        p = self._pis_edge * self.sign[None, :]
        return _rotate_back(p) if self.family == "face" else p

    @cached_property
    def poly_dof_matrix(self) -> FloatArray:
        """DoFs of the basis of (P_k)^2 (columns ordered as Poly coefficients)."""
        return eval_dofs_batch(self, poly_basis_batch(self.frame, self.k), quad_degree=2 * self.k + 2)

    def vector_gram(self, m: int) -> FloatArray:
        return np.kron(np.eye(2), self.frame.gram(m))


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------


def build_space2d(
    face: PolygonGeom,
    k: int,
    family: Family = "edge",
    variant: Variant = "standard",
    assumptions: AssumptionParams = AssumptionParams(),
) -> Space2D:
    """Construct a local edge or face space of order k on a polygon."""
    return Space2D(face, k, family, variant, assumptions)


def eval_dofs_batch(space: Space2D, batch: FieldBatch, quad_degree: int | None = None) -> FloatArray:
    """DoF values of every member of a field batch, shape (dim, nb)."""
    k = space.k
    if quad_degree is None:
        quad_degree = 2 * k + 12
    poly = space.polygon
    out = np.zeros((space.dim, batch.nb))
    face = space.family == "face"
    for e in range(poly.n_edges):
        pts, w, mono = space._edge_monomials(e, quad_degree + k)
        direction = poly.normals[e] if face else poly.tangents[e]
        vals = np.einsum("nib,i->nb", batch.value(pts), direction)
        out[e * (k + 1) : (e + 1) * (k + 1)] = mono.T @ (w[:, None] * vals)
    rule = space.frame.quad(quad_degree + k + 1)
    pts, w = rule.points, rule.weights
    xf = pts - space.frame.barycenter
    if face:
        xf = np.stack([-xf[:, 1], xf[:, 0]], axis=1)
    if space.n_x:
        mono = vandermonde(space.frame, pts, space.x_degree)
        vals = np.einsum("nib,ni->nb", batch.value(pts), xf)
        out[space.x_slice] = mono.T @ (w[:, None] * vals)
    if space.n_diff:
        diff = batch.div(pts) if face else batch.rot(pts)
        _, mean = space._zero_mean_gram
        mono = vandermonde(space.frame, pts, k - 1)[:, 1:] - mean[None, 1:]
        out[space.diff_slice] = mono.T @ (w[:, None] * diff)
    return out


def eval_dofs(space: Space2D, field: VectorField | Poly, quad_degree: int | None = None) -> FloatArray:
    """DoF values of a field (the interpolant's defining functionals)."""
    return eval_dofs_batch(space, as_batch(field), quad_degree)[:, 0]


def boundary_trace(space: Space2D, dofs: FloatArray) -> list[EdgePoly]:
    """Per-edge polynomial v.t_e (edge family) or v.n_e (face family)."""
    return [
        EdgePoly(float(space.polygon.edge_lengths[e]), space.k, t @ dofs)
        for e, t in enumerate(space.trace_matrices)
    ]


def diff_poly(space: Space2D, dofs: FloatArray) -> Poly:
    """rot v (edge family) or div v (face family) as a polynomial of degree k-1."""
    return Poly(space.frame, space.k - 1, space.diff_matrix @ dofs)


def l2_projection2d(space: Space2D, dofs: FloatArray, m: int) -> Poly:
    """L2 projection of the virtual function onto (P_m)^2."""
    return Poly.from_flat(space.frame, m, space.projection_matrix(m) @ dofs, 2)


def serendipity_project(space: Space2D, dofs_or_poly: FloatArray | Poly) -> Poly:
    """Serendipity projection onto (P_k)^2 of DoFs or of a polynomial."""
    if isinstance(dofs_or_poly, Poly):
        dofs = eval_dofs(space, dofs_or_poly, quad_degree=2 * space.k + 2)
    else:
        dofs = np.asarray(dofs_or_poly, dtype=np.float64)
    return Poly.from_flat(space.frame, space.k, space.serendipity_matrix @ dofs, 2)


def serendipity_expand(space: Space2D, sdofs: FloatArray) -> FloatArray:
    """Standard-layout DoFs of a serendipity function."""
    if space.variant != "serendipity":
        raise ValueError("serendipity_expand needs a serendipity space")
    std_sign = np.ones(space.n_std)
    if space.family == "face":
        std_sign[space._std_index["x"]] = -1.0
    return std_sign * (space._q @ sdofs)


def standard_counterpart(space: Space2D) -> Space2D:
    return Space2D(space.polygon, space.k, space.family, "standard")


def stabilization2d(space: Space2D) -> FloatArray:
    """Stabilization matrix on the DoF basis."""
    h = space.h
    k = space.k
    poly = space.polygon
    s = np.zeros((space.dim, space.dim))
    for e, t in enumerate(space.trace_matrices):
        s += h * t.T @ _edge_gram(k, poly.edge_lengths[e]) @ t
    d = space.diff_matrix
    s += h**2 * d.T @ space.frame.gram(k - 1) @ d
    if space.variant == "standard":
        p = space.projection_matrix(k + 1)
        s += p.T @ space.vector_gram(k + 1) @ p
    else:
        p = space.serendipity_matrix
        s += p.T @ space.vector_gram(k) @ p
    return 0.5 * (s + s.T)


def discrete_mass2d(space: Space2D, stab: FloatArray | None = None) -> FloatArray:
    """Matrix of the discrete L2 form: projection Gram plus stabilized remainder."""
    p = space.projection_matrix(space.k)
    if stab is None:
        stab = stabilization2d(space)
    rem = np.eye(space.dim) - space.poly_dof_matrix @ p
    m = p.T @ space.vector_gram(space.k) @ p + rem.T @ stab @ rem
    return 0.5 * (m + m.T)


def _rayleigh_sup(b: FloatArray, gram: FloatArray, pseudo: bool = False) -> float:
    """sup over c of (b . c) / sqrt(c' G c)."""
    if b.size == 0:
        return 0.0
    if pseudo:
        val = b @ np.linalg.pinv(gram, rcond=1e-12, hermitian=True) @ b
    else:
        val = b @ sla.solve(gram, b, assume_a="pos")
    return float(np.sqrt(max(val, 0.0)))


def tri_norm(space: Space2D, data: FloatArray | Poly, params: TriNormParams = TriNormParams()) -> float:
    """Boundary-and-moment norm of a virtual or polynomial function."""
    dofs = eval_dofs(space, data, quad_degree=2 * space.k + 2) if isinstance(data, Poly) else np.asarray(data)
    dofs_e = space._q @ dofs  # edge picture, standard layout
    k, h = space.k, space.h
    poly = space.polygon
    circ = sum(dofs_e[e * (k + 1)] for e in range(poly.n_edges))
    term1 = params.gamma * h / np.sqrt(poly.area) * abs(circ)
    term2 = 0.0
    if space.n_diff:
        _, mean = space._zero_mean_gram
        g = space.frame.gram(k - 1)[1:, 1:] - space.frame.measure * np.outer(mean[1:], mean[1:])
        term2 = params.gamma * h * _rayleigh_sup(dofs_e[space._std_index["diff"]], g)
    _, b, _ = space._pis_system
    nq = dim_poly(k + 1, 2) - 1
    pairing = b[:nq] @ (space.sign * dofs)
    hmat = _tangential_gram(space)
    term3 = params.gamma_hat * np.sqrt(h) * _rayleigh_sup(pairing, hmat, pseudo=True)
    term4 = 0.0
    if space.beta >= 0:
        nb = dim_poly(space.beta, 2)
        xs = space._std_index["x"]
        term4 = _rayleigh_sup(dofs_e[xs.start : xs.start + nb], space.frame.gram(space.beta)) / h
    return float(term1 + term2 + term3 + term4)


def _tangential_gram(space: Space2D) -> FloatArray:
    """Boundary Gram of the tangential derivatives of monomials of degree 1..k+1."""
    key = ("tgram",)
    if key in space._cache:
        return space._cache[key]
    k = space.k
    deg = 2 * k + 4
    n = dim_poly(k + 1, 2) - 1
    out = np.zeros((n, n))
    for e in range(space.polygon.n_edges):
        _, w, _ = space._edge_monomials(e, deg)
        dt = space._tangential_derivatives(e, deg)[:, 1:]
        out += dt.T @ (w[:, None] * dt)
    space._cache[key] = out
    return out
