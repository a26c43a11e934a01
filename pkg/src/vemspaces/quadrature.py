"""Gauss rules on reference simplices and composite rules on polytopes.

Reference rules are conical (collapsed) products of Gauss-Legendre and
Gauss-Jacobi points, so every weight is positive and exactness holds for all
polynomials up to the requested total degree.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Literal

import numpy as np
import numpy.typing as npt
from scipy.special import roots_jacobi

FloatArray = npt.NDArray[np.float64]
Kind = Literal["segment", "triangle", "tetra"]

MAX_DEGREE = 40


@dataclass(frozen=True, eq=False)
class QuadRule:
    """Quadrature points and positive weights on some domain."""

    kind: str
    points: FloatArray
    weights: FloatArray
    degree: int

    @property
    def measure(self) -> float:
        return float(self.weights.sum())

    def integrate(self, values: FloatArray) -> FloatArray:
        """Integrate point values (leading axis = points)."""
        return np.tensordot(self.weights, values, axes=(0, 0))


def _gauss_jacobi01(n: int, alpha: float) -> tuple[FloatArray, FloatArray]:
    """Gauss-Jacobi rule on [0, 1] with weight (1 - t)**alpha."""
    if alpha == 0:
        x, w = np.polynomial.legendre.leggauss(n)
    else:
        x, w = roots_jacobi(n, alpha, 0.0)
    return 0.5 * (x + 1.0), w / 2.0 ** (alpha + 1.0)


@lru_cache(maxsize=None)
def _reference(kind: str, degree: int) -> tuple[FloatArray, FloatArray]:
    n = degree // 2 + 1
    if kind == "segment":
        t, w = _gauss_jacobi01(n, 0)
        return t[:, None], w
    if kind == "triangle":
        u, wu = _gauss_jacobi01(n, 0)
        v, wv = _gauss_jacobi01(n, 1)
        uu, vv = np.meshgrid(u, v, indexing="ij")
        pts = np.stack([uu * (1 - vv), vv], axis=-1).reshape(-1, 2)
        return pts, np.outer(wu, wv).ravel()
    if kind == "tetra":
        u, wu = _gauss_jacobi01(n, 0)
        v, wv = _gauss_jacobi01(n, 1)
        s, ws = _gauss_jacobi01(n, 2)
        uu, vv, ss = np.meshgrid(u, v, s, indexing="ij")
        pts = np.stack([uu * (1 - vv) * (1 - ss), vv * (1 - ss), ss], axis=-1).reshape(-1, 3)
        return pts, np.einsum("i,j,k->ijk", wu, wv, ws).ravel()
    raise ValueError(f"unknown reference domain {kind!r}")


def reference_rule(kind: Kind, degree: int) -> QuadRule:
    """Rule on [0,1], the unit triangle or the unit tetrahedron.

    Exact for polynomials of total degree at most ``degree``.
    """
    if not 0 <= degree <= MAX_DEGREE:
        raise ValueError(f"quadrature degree {degree} outside supported range 0..{MAX_DEGREE}")
    pts, wts = _reference(kind, int(degree))
    pts.setflags(write=False)
    wts.setflags(write=False)
    return QuadRule(kind, pts, wts, int(degree))


def simplex_rule(simplices: FloatArray, degree: int) -> QuadRule:
    """Composite rule over a stack of simplices.

    ``simplices`` has shape (n, d+1, d): segments in 1D are not supported
    here, use :func:`segment_rule`.
    """
    simplices = np.asarray(simplices, dtype=np.float64)
    d = simplices.shape[2]
    ref = reference_rule("triangle" if d == 2 else "tetra", degree)
    origin = simplices[:, 0, :]
    jac = simplices[:, 1:, :] - origin[:, None, :]  # (n, d, d) rows = edge vectors
    dets = np.abs(np.linalg.det(jac))
    pts = origin[:, None, :] + np.einsum("qi,nij->nqj", ref.points, jac)
    wts = dets[:, None] * ref.weights[None, :]
    return QuadRule("triangle" if d == 2 else "tetra", pts.reshape(-1, d), wts.ravel(), degree)


def segment_rule(start: FloatArray, end: FloatArray, degree: int) -> QuadRule:
    """Gauss rule on the straight segment from ``start`` to ``end``."""
    start = np.asarray(start, dtype=np.float64)
    end = np.asarray(end, dtype=np.float64)
    ref = reference_rule("segment", degree)
    t = ref.points[:, 0]
    pts = start[None, :] + t[:, None] * (end - start)[None, :]
    return QuadRule("segment", pts, ref.weights * float(np.linalg.norm(end - start)), degree)


def composite_rule(mesh, entity: int, degree: int) -> QuadRule:
    """Rule on a mesh cell (2D polygon or 3D polyhedron) via its fan split."""
    from .meshgeo import subtessellate

    sub = subtessellate(mesh, entity, 0)
    return simplex_rule(sub.simplices, degree)
