"""Hot numerical kernels with a numba backend and a pure-numpy fallback.

The backend is chosen once at import time. Set ``VEMSPACES_DISABLE_NUMBA=1``
to force the numpy path (useful for debugging and for platforms without
numba). Both implementations are always importable under explicit names so
they can be compared directly.
"""

from __future__ import annotations

import os

import numpy as np
import numpy.typing as npt

try:
    import numba

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _HAVE_NUMBA = False

USE_NUMBA = _HAVE_NUMBA and os.environ.get("VEMSPACES_DISABLE_NUMBA", "0") not in ("1", "true", "yes")

FloatArray = npt.NDArray[np.float64]
IntArray = npt.NDArray[np.int64]


# ---------------------------------------------------------------------------
# numpy implementations
# ---------------------------------------------------------------------------


def vandermonde_numpy(xi: FloatArray, exps: IntArray) -> FloatArray:
    """Evaluate monomials ``prod_i xi_i**exps[j, i]`` at every point."""
    xi = np.asarray(xi, dtype=np.float64)
    exps = np.asarray(exps, dtype=np.int64)
    out = np.ones((xi.shape[0], exps.shape[0]))
    for i in range(xi.shape[1]):
        out *= xi[:, i : i + 1] ** exps[None, :, i]
    return out


def element_gram_numpy(left: FloatArray, right: FloatArray, weights: FloatArray) -> FloatArray:
    """Batched weighted Gram matrices.

    ``left`` has shape (n_elem, n_qp, n_left, n_comp), ``right`` has shape
    (n_elem, n_qp, n_right, n_comp) and ``weights`` (n_elem, n_qp). Returns
    ``out[e, i, j] = sum_q w[e, q] * <left[e, q, i], right[e, q, j]>``.
    """
    return np.einsum("eq,eqic,eqjc->eij", weights, left, right, optimize=True)


def locate_points_numpy(points: FloatArray, triangles: FloatArray, tol: float = 1e-12) -> IntArray:
    """Index of a triangle containing each point, or -1.

    ``triangles`` has shape (n_tri, 3, 2). Points on shared edges are assigned
    to the first containing triangle.
    """
    points = np.asarray(points, dtype=np.float64)
    a = triangles[:, 0]
    e1 = triangles[:, 1] - a
    e2 = triangles[:, 2] - a
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    out = np.full(points.shape[0], -1, dtype=np.int64)
    for p in range(points.shape[0]):
        d = points[p] - a
        l1 = (d[:, 0] * e2[:, 1] - d[:, 1] * e2[:, 0]) / det
        l2 = (e1[:, 0] * d[:, 1] - e1[:, 1] * d[:, 0]) / det
        inside = (l1 >= -tol) & (l2 >= -tol) & (l1 + l2 <= 1.0 + tol)
        hit = np.flatnonzero(inside)
        if hit.size:
            out[p] = hit[0]
    return out


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

if _HAVE_NUMBA:
    _jit = numba.njit(cache=True)

    @_jit
    def vandermonde_numba(xi, exps):  # pragma: no cover - compiled
        n, d = xi.shape
        m = exps.shape[0]
        out = np.ones((n, m))
        for p in range(n):
            for j in range(m):
                v = 1.0
                for i in range(d):
                    e = exps[j, i]
                    x = xi[p, i]
                    for _ in range(e):
                        v *= x
                out[p, j] = v
        return out

    @_jit
    def element_gram_numba(left, right, weights):  # pragma: no cover - compiled
        ne, nq, nl, nc = left.shape
        nr = right.shape[2]
        out = np.zeros((ne, nl, nr))
        for e in range(ne):
            for q in range(nq):
                w = weights[e, q]
                for i in range(nl):
                    for j in range(nr):
                        s = 0.0
                        for c in range(nc):
                            s += left[e, q, i, c] * right[e, q, j, c]
                        out[e, i, j] += w * s
        return out

    @_jit
    def locate_points_numba(points, triangles, tol=1e-12):  # pragma: no cover - compiled
        n = points.shape[0]
        nt = triangles.shape[0]
        out = np.full(n, -1, dtype=np.int64)
        for p in range(n):
            px = points[p, 0]
            py = points[p, 1]
            for t in range(nt):
                ax = triangles[t, 0, 0]
                ay = triangles[t, 0, 1]
                e1x = triangles[t, 1, 0] - ax
                e1y = triangles[t, 1, 1] - ay
                e2x = triangles[t, 2, 0] - ax
                e2y = triangles[t, 2, 1] - ay
                det = e1x * e2y - e1y * e2x
                dx = px - ax
                dy = py - ay
                l1 = (dx * e2y - dy * e2x) / det
                l2 = (e1x * dy - e1y * dx) / det
                if l1 >= -tol and l2 >= -tol and l1 + l2 <= 1.0 + tol:
                    out[p] = t
                    break
        return out

else:  # pragma: no cover
    vandermonde_numba = vandermonde_numpy
    element_gram_numba = element_gram_numpy
    locate_points_numba = locate_points_numpy


def vandermonde(xi: FloatArray, exps: IntArray) -> FloatArray:
    """Monomial values at points; dispatches to the active backend."""
    xi = np.ascontiguousarray(xi, dtype=np.float64)
    exps = np.ascontiguousarray(exps, dtype=np.int64)
    if USE_NUMBA:
        return vandermonde_numba(xi, exps)
    return vandermonde_numpy(xi, exps)


def element_gram(left: FloatArray, right: FloatArray, weights: FloatArray) -> FloatArray:
    """Batched weighted Gram matrices; dispatches to the active backend."""
    left = np.ascontiguousarray(left, dtype=np.float64)
    right = np.ascontiguousarray(right, dtype=np.float64)
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    if USE_NUMBA:
        return element_gram_numba(left, right, weights)
    return element_gram_numpy(left, right, weights)


def locate_points(points: FloatArray, triangles: FloatArray, tol: float = 1e-12) -> IntArray:
    """Point location in a triangle soup; dispatches to the active backend."""
    points = np.ascontiguousarray(points, dtype=np.float64)
    triangles = np.ascontiguousarray(triangles, dtype=np.float64)
    if USE_NUMBA:
        return locate_points_numba(points, triangles, tol)
    return locate_points_numpy(points, triangles, tol)


def backend_name() -> str:
    """Name of the active backend."""
    return "numba" if USE_NUMBA else "numpy"
