"""Analytic vector fields with exact Jacobians.

Fields are used to drive interpolation studies and DoF evaluation. Each
field returns values of shape (n, d) and Jacobians of shape (n, d, d) with
``jac[:, i, j] = d v_i / d x_j``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import numpy.typing as npt

from .polycalc import CellFrame, Poly, apply_diff, deriv_matrix, dim_poly, vandermonde

FloatArray = npt.NDArray[np.float64]


@dataclass(frozen=True)
class VectorField:
    dim: int
    value: Callable[[FloatArray], FloatArray]
    jacobian: Callable[[FloatArray], FloatArray]
    name: str = "field"

    def __call__(self, x: FloatArray) -> FloatArray:
        return self.value(np.atleast_2d(x))

    def div(self, x: FloatArray) -> FloatArray:
        return np.trace(self.jacobian(np.atleast_2d(x)), axis1=1, axis2=2)

    def rot(self, x: FloatArray) -> FloatArray:
        """Scalar rot v = d v_2/dx_1 - d v_1/dx_2 (2D)."""
        j = self.jacobian(np.atleast_2d(x))
        return j[:, 1, 0] - j[:, 0, 1]

    def curl(self, x: FloatArray) -> FloatArray:
        j = self.jacobian(np.atleast_2d(x))
        return np.stack([j[:, 2, 1] - j[:, 1, 2], j[:, 0, 2] - j[:, 2, 0], j[:, 1, 0] - j[:, 0, 1]], axis=1)

    def curl_field(self, hessian: Callable[[FloatArray], FloatArray]) -> VectorField:
        """The curl as a field; needs the second derivatives ``hessian[n, i, j, l]``."""

        def jac(x: FloatArray) -> FloatArray:
            h = hessian(np.atleast_2d(x))
            return np.stack(
                [h[:, 2, 1, :] - h[:, 1, 2, :], h[:, 0, 2, :] - h[:, 2, 0, :], h[:, 1, 0, :] - h[:, 0, 1, :]], axis=1
            )

        return VectorField(3, self.curl, jac, f"curl({self.name})")


def poly_field(p: Poly) -> VectorField:
    """Wrap a vector polynomial as a field."""
    d = p.dim
    grads = [apply_diff("grad2" if d == 2 else "grad3", p.component(i)) for i in range(p.arity)]

    def jac(x: FloatArray) -> FloatArray:
        return np.stack([g(x).reshape(-1, d) for g in grads], axis=1)

    return VectorField(d, lambda x: p(x).reshape(-1, p.arity), jac, "poly")


def zero_field(dim: int) -> VectorField:
    return VectorField(dim, lambda x: np.zeros((len(x), dim)), lambda x: np.zeros((len(x), dim, dim)), "zero")


def constant_field(c: FloatArray) -> VectorField:
    c = np.asarray(c, dtype=np.float64)
    d = c.size
    return VectorField(
        d, lambda x: np.broadcast_to(c, (len(x), d)).copy(), lambda x: np.zeros((len(x), d, d)), "constant"
    )


@dataclass(frozen=True)
class TrigField:
    """v_i(x) = sum_t a[t, i] * sin(w[t] . x + phase[t]).

    Second derivatives are available, so the curl of a 3D trig field is
    itself a field with an exact Jacobian.
    """

    amp: FloatArray  # (n_terms, d)
    freq: FloatArray  # (n_terms, d)
    phase: FloatArray  # (n_terms,)

    @property
    def dim(self) -> int:
        return self.amp.shape[1]

    def value(self, x: FloatArray) -> FloatArray:
        arg = np.atleast_2d(x) @ self.freq.T + self.phase
        return np.sin(arg) @ self.amp

    def jacobian(self, x: FloatArray) -> FloatArray:
        arg = np.atleast_2d(x) @ self.freq.T + self.phase
        return np.einsum("nt,ti,tj->nij", np.cos(arg), self.amp, self.freq)

    def hessian(self, x: FloatArray) -> FloatArray:
        arg = np.atleast_2d(x) @ self.freq.T + self.phase
        return -np.einsum("nt,ti,tj,tl->nijl", np.sin(arg), self.amp, self.freq, self.freq)

    def field(self) -> VectorField:
        return VectorField(self.dim, self.value, self.jacobian, "trig")

    def curl(self) -> VectorField:
        return self.field().curl_field(self.hessian)


def random_trig(dim: int, seed: int, n_terms: int = 3, max_freq: float = 3.0) -> TrigField:
    """Random smooth trigonometric field."""
    rng = np.random.default_rng(seed)
    return TrigField(
        rng.normal(size=(n_terms, dim)),
        rng.uniform(-max_freq, max_freq, size=(n_terms, dim)),
        rng.uniform(0, 2 * np.pi, size=n_terms),
    )


def standard_trig(dim: int) -> TrigField:
    """Fixed smooth field used by the convergence studies."""
    if dim == 2:
        return TrigField(
            np.array([[1.0, 0.0], [0.0, 1.0], [0.5, -0.7]]),
            np.array([[np.pi, 0.5 * np.pi], [-0.5 * np.pi, np.pi], [2.0, 1.0]]),
            np.array([0.3, 1.1, 0.0]),
        )
    return TrigField(
        np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.4, -0.6, 0.5]]),
        np.array([[0.0, np.pi, 0.5 * np.pi], [0.5 * np.pi, 0.0, np.pi], [np.pi, 0.5 * np.pi, 0.0], [1.0, 2.0, -1.5]]),
        np.array([0.3, 1.1, 0.7, 0.0]),
    )


def singular_field(dim: int, center: FloatArray, alpha: float) -> VectorField:
    """|x - x0|^alpha times a smooth vector field (reduced regularity at x0)."""
    center = np.asarray(center, dtype=np.float64)
    smooth = TrigField(np.eye(dim), np.ones((dim, dim)) + np.eye(dim), np.linspace(0.2, 0.9, dim))

    def value(x: FloatArray) -> FloatArray:
        r = np.linalg.norm(np.atleast_2d(x) - center, axis=1)
        return (r**alpha)[:, None] * smooth.value(x)

    def jacobian(x: FloatArray) -> FloatArray:
        x = np.atleast_2d(x)
        d = x - center
        r = np.linalg.norm(d, axis=1)
        safe = np.where(r > 0, r, 1.0)
        grad_r_alpha = (alpha * safe ** (alpha - 2))[:, None] * d
        grad_r_alpha[r == 0] = 0.0
        return np.einsum("ni,nj->nij", smooth.value(x), grad_r_alpha) + (r**alpha)[:, None, None] * smooth.jacobian(x)

    return VectorField(dim, value, jacobian, f"singular(alpha={alpha})")


@dataclass(frozen=True)
class FieldBatch:
    """A batch of nb vector fields sampled together.

    ``value(x)`` has shape (n, d, nb) and ``jacobian(x)`` shape (n, d, d, nb).
    DoF evaluation works on batches so that whole polynomial bases are
    processed with one pass over the quadrature points.
    """

    dim: int
    nb: int
    value: Callable[[FloatArray], FloatArray]
    jacobian: Callable[[FloatArray], FloatArray]

    def div(self, x: FloatArray) -> FloatArray:
        return np.trace(self.jacobian(x), axis1=1, axis2=2)

    def rot(self, x: FloatArray) -> FloatArray:
        j = self.jacobian(x)
        return j[:, 1, 0] - j[:, 0, 1]

    def curl(self, x: FloatArray) -> FloatArray:
        j = self.jacobian(x)
        return np.stack([j[:, 2, 1] - j[:, 1, 2], j[:, 0, 2] - j[:, 2, 0], j[:, 1, 0] - j[:, 0, 1]], axis=1)


def as_batch(field: VectorField | Poly | FieldBatch) -> FieldBatch:
    """Wrap a single field or polynomial as a batch of one."""
    if isinstance(field, FieldBatch):
        return field
    if isinstance(field, Poly):
        field = poly_field(field)
    f = field
    return FieldBatch(
        f.dim, 1, lambda x: f(np.atleast_2d(x))[:, :, None], lambda x: f.jacobian(np.atleast_2d(x))[..., None]
    )


def poly_basis_batch(frame: CellFrame, degree: int) -> FieldBatch:
    """The canonical basis of (P_degree)^d; member c * n + a is e_c m_a."""
    d = frame.dim
    n = dim_poly(degree, d)
    eye = np.eye(d)
    # gradients of the scaled monomials, as degree-`degree` coefficient matrices
    grads = []
    for i in range(d):
        g = np.zeros((n, n))
        dm = deriv_matrix(degree, d, i)
        g[: dm.shape[0]] = dm
        grads.append(g / frame.diameter)

    def value(x: FloatArray) -> FloatArray:
        v = vandermonde(frame, np.atleast_2d(x), degree)
        return np.einsum("ce,qa->qcea", eye, v).reshape(len(v), d, d * n)

    def jacobian(x: FloatArray) -> FloatArray:
        v = vandermonde(frame, np.atleast_2d(x), degree)
        dv = np.stack([v @ g for g in grads], axis=1)  # (q, j, a)
        return np.einsum("ce,qja->qcjea", eye, dv).reshape(len(v), d, d, d * n)

    return FieldBatch(d, d * n, value, jacobian)


def tangential_batch(batch: FieldBatch, origin: FloatArray, axes: FloatArray) -> FieldBatch:
    """Tangential part of a 3D batch on a plane, in the plane's 2D coordinates."""

    def lift(xi: FloatArray) -> FloatArray:
        return origin + np.atleast_2d(xi) @ axes

    return FieldBatch(
        2,
        batch.nb,
        lambda xi: np.einsum("ai,nib->nab", axes, batch.value(lift(xi))),
        lambda xi: np.einsum("ai,nijb,cj->nacb", axes, batch.jacobian(lift(xi)), axes),
    )
