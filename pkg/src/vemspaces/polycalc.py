"""Scaled monomial polynomials on cells and the constructive decompositions.

A :class:`Poly` stores coefficients over scaled monomials
``((x - b) / h) ** alpha`` attached to a :class:`CellFrame` (barycenter ``b``
and diameter ``h``). Monomials are ordered by total degree and then
lexicographically with the first exponent descending.

The decompositions of vector polynomial spaces rely on the Euler identity:
for a homogeneous polynomial ``q`` of degree ``m`` in ``d`` variables,
``div(x q) = (d + m) q``. In scaled coordinates this is scale-free, so every
lift below is a closed-form rescaling of homogeneous parts.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from math import comb
from typing import Callable, Literal

import numpy as np
import numpy.typing as npt

from . import _kernels
from .quadrature import QuadRule, simplex_rule

FloatArray = npt.NDArray[np.float64]

DiffKind = Literal["grad2", "curl2", "rot2", "div2", "grad3", "curl3", "div3", "lap"]
LiftKind = Literal["div2", "rot2", "div3", "curl3"]
PotentialKind = Literal["grad2", "curl2", "grad3"]
DecompKind = Literal["2d_curl_x", "2d_grad_xperp", "3d_curl_x", "3d_grad_xwedge"]

COMPAT_TOL = 1e-12


def dim_poly(k: int, d: int) -> int:
    """Dimension of the polynomials of degree at most ``k`` in ``d`` variables."""
    if k < 0:
        return 0
    return comb(k + d, d)


@lru_cache(maxsize=None)
def exponents(k: int, d: int) -> npt.NDArray[np.int64]:
    """Multi-indices of degree at most ``k`` in the canonical order."""
    out: list[tuple[int, ...]] = []
    for m in range(k + 1):
        out.extend(_homogeneous(m, d))
    arr = np.array(out, dtype=np.int64).reshape(-1, d)
    arr.setflags(write=False)
    return arr


def _homogeneous(m: int, d: int) -> list[tuple[int, ...]]:
    if d == 1:
        return [(m,)]
    res = []
    for first in range(m, -1, -1):
        res.extend((first, *rest) for rest in _homogeneous(m - first, d - 1))
    return res


@lru_cache(maxsize=None)
def _index(k: int, d: int) -> dict[tuple[int, ...], int]:
    return {tuple(int(a) for a in row): i for i, row in enumerate(exponents(k, d))}


@lru_cache(maxsize=None)
def total_degrees(k: int, d: int) -> npt.NDArray[np.int64]:
    """Total degree of each monomial in the canonical order."""
    return exponents(k, d).sum(axis=1)


@lru_cache(maxsize=None)
def deriv_matrix(k: int, d: int, i: int) -> FloatArray:
    """Matrix of d/dxi_i from degree-k to degree-(k-1) coefficients (scaled variables)."""
    rows = dim_poly(max(k - 1, 0), d)
    out = np.zeros((rows, dim_poly(k, d)))
    idx = _index(max(k - 1, 0), d)
    for col, alpha in enumerate(exponents(k, d)):
        if alpha[i] == 0:
            continue
        beta = list(alpha)
        beta[i] -= 1
        out[idx[tuple(beta)], col] = alpha[i]
    out.setflags(write=False)
    return out


@lru_cache(maxsize=None)
def mul_matrix(k: int, d: int, i: int) -> FloatArray:
    """Matrix of multiplication by xi_i from degree k to degree k+1."""
    out = np.zeros((dim_poly(k + 1, d), dim_poly(k, d)))
    idx = _index(k + 1, d)
    for col, alpha in enumerate(exponents(k, d)):
        beta = list(alpha)
        beta[i] += 1
        out[idx[tuple(beta)], col] = 1.0
    out.setflags(write=False)
    return out


# ---------------------------------------------------------------------------
# frames
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CellFrame:
    """Barycenter, diameter and measure of a cell, plus a simplicial split.

    ``simplices`` (shape (n, dim+1, dim)) is only used to integrate monomials
    exactly, e.g. to compute cell means.
    """

    dim: int
    barycenter: FloatArray
    diameter: float
    measure: float
    simplices: FloatArray
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self) -> None:
        if self.dim not in (2, 3):
            raise ValueError("frame dimension must be 2 or 3")
        if not (self.diameter > 0 and self.measure > 0):
            raise ValueError("frame diameter and measure must be positive")

    def local(self, x: FloatArray) -> FloatArray:
        """Scaled coordinates (x - b) / h."""
        return (np.asarray(x, dtype=np.float64) - self.barycenter) / self.diameter

    def quad(self, degree: int) -> QuadRule:
        """Composite rule on the cell, exact to ``degree``."""
        key = ("quad", degree)
        if key not in self._cache:
            self._cache[key] = simplex_rule(self.simplices, degree)
        return self._cache[key]

    def monomial_integrals(self, k: int) -> FloatArray:
        """Exact integrals of all scaled monomials of degree at most ``k``."""
        key = ("mint", k)
        if key not in self._cache:
            q = self.quad(k)
            self._cache[key] = q.weights @ vandermonde(self, q.points, k)
        return self._cache[key]

    def gram(self, k: int) -> FloatArray:
        """Exact Gram matrix of the scalar monomials of degree at most ``k``."""
        key = ("gram", k)
        if key not in self._cache:
            q = self.quad(2 * k)
            v = vandermonde(self, q.points, k)
            self._cache[key] = v.T @ (q.weights[:, None] * v)
        return self._cache[key]


def vandermonde(frame: CellFrame, x: FloatArray, k: int) -> FloatArray:
    """Values of the scaled monomials of degree at most ``k`` at points ``x``."""
    return _kernels.vandermonde(frame.local(x), exponents(k, frame.dim))


# ---------------------------------------------------------------------------
# polynomials
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Poly:
    """Scalar or vector polynomial over scaled monomials of a frame.

    ``coeffs`` has shape (arity, dim_poly(degree, frame.dim)).
    """

    frame: CellFrame
    degree: int
    coeffs: FloatArray

    def __post_init__(self) -> None:
        c = np.atleast_2d(np.asarray(self.coeffs, dtype=np.float64))
        if c.shape[1] != dim_poly(self.degree, self.frame.dim):
            raise ValueError(
                f"coefficient length {c.shape[1]} does not match degree {self.degree} in {self.frame.dim}D"
            )
        object.__setattr__(self, "coeffs", c)

    @property
    def arity(self) -> int:
        return self.coeffs.shape[0]

    @property
    def dim(self) -> int:
        return self.frame.dim

    @classmethod
    def zero(cls, frame: CellFrame, degree: int, arity: int = 1) -> Poly:
        return cls(frame, degree, np.zeros((arity, dim_poly(degree, frame.dim))))

    @classmethod
    def from_flat(cls, frame: CellFrame, degree: int, flat: FloatArray, arity: int) -> Poly:
        return cls(frame, degree, np.asarray(flat, dtype=np.float64).reshape(arity, -1))

    @property
    def flat(self) -> FloatArray:
        return self.coeffs.ravel()

    def __call__(self, x: FloatArray) -> FloatArray:
        """Values at points; shape (n,) for scalars and (n, arity) otherwise."""
        vals = vandermonde(self.frame, np.atleast_2d(x), self.degree) @ self.coeffs.T
        return vals[:, 0] if self.arity == 1 else vals

    def raise_degree(self, k: int) -> Poly:
        """Same polynomial with coefficients padded to degree ``k``."""
        if k < self.degree:
            raise ValueError("cannot lower the degree")
        out = np.zeros((self.arity, dim_poly(k, self.dim)))
        out[:, : self.coeffs.shape[1]] = self.coeffs
        return Poly(self.frame, k, out)

    def _aligned(self, other: Poly) -> tuple[Poly, Poly]:
        if other.frame is not self.frame:
            raise ValueError("polynomials live on different frames")
        if other.arity != self.arity:
            raise ValueError("arity mismatch")
        k = max(self.degree, other.degree)
        return self.raise_degree(k), other.raise_degree(k)

    def __add__(self, other: Poly) -> Poly:
        a, b = self._aligned(other)
        return Poly(self.frame, a.degree, a.coeffs + b.coeffs)

    def __sub__(self, other: Poly) -> Poly:
        a, b = self._aligned(other)
        return Poly(self.frame, a.degree, a.coeffs - b.coeffs)

    def __mul__(self, scalar: float) -> Poly:
        return Poly(self.frame, self.degree, self.coeffs * float(scalar))

    __rmul__ = __mul__

    def __neg__(self) -> Poly:
        return self * -1.0

    def component(self, i: int) -> Poly:
        return Poly(self.frame, self.degree, self.coeffs[i : i + 1])

    def integral(self) -> FloatArray:
        """Integral over the cell, one value per component."""
        return self.coeffs @ self.frame.monomial_integrals(self.degree)

    def mean(self) -> FloatArray:
        return self.integral() / self.frame.measure

    def homogeneous_part(self, m: int) -> Poly:
        mask = total_degrees(self.degree, self.dim) == m
        return Poly(self.frame, self.degree, self.coeffs * mask)

    def scale_homogeneous(self, func: Callable[[npt.NDArray[np.int64]], FloatArray]) -> Poly:
        """Multiply each homogeneous part of degree m by ``func(m)``."""
        factors = func(total_degrees(self.degree, self.dim))
        return Poly(self.frame, self.degree, self.coeffs * factors[None, :])

    def coeff_norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))


def stack(parts: list[Poly]) -> Poly:
    """Stack scalar polynomials into a vector polynomial."""
    k = max(p.degree for p in parts)
    return Poly(parts[0].frame, k, np.vstack([p.raise_degree(k).coeffs for p in parts]))


def constant(frame: CellFrame, value: FloatArray | float) -> Poly:
    vals = np.atleast_1d(np.asarray(value, dtype=np.float64))
    return Poly(frame, 0, vals[:, None])


def position(frame: CellFrame) -> Poly:
    """The shifted position x - b as a degree-1 vector polynomial."""
    d = frame.dim
    c = np.zeros((d, dim_poly(1, d)))
    c[np.arange(d), 1 + np.arange(d)] = frame.diameter
    return Poly(frame, 1, c)


def position_perp(frame: CellFrame) -> Poly:
    """The rotated position (-x2, x1), relative to the barycenter (2D only)."""
    if frame.dim != 2:
        raise ValueError("position_perp is defined in 2D only")
    c = np.zeros((2, 3))
    c[0, 2] = -frame.diameter
    c[1, 1] = frame.diameter
    return Poly(frame, 1, c)


# ---------------------------------------------------------------------------
# differential operators
# ---------------------------------------------------------------------------


def _partial(p: Poly, comp: int, i: int) -> FloatArray:
    """Coefficients of d/dx_i of component ``comp`` (degree max(k-1, 0))."""
    return deriv_matrix(p.degree, p.dim, i) @ p.coeffs[comp] / p.frame.diameter


def apply_diff(kind: DiffKind, p: Poly) -> Poly:
    """Exact differentiation at the coefficient level."""
    need = {
        "grad2": (2, 1),
        "curl2": (2, 1),
        "rot2": (2, 2),
        "div2": (2, 2),
        "grad3": (3, 1),
        "curl3": (3, 3),
        "div3": (3, 3),
    }
    if kind == "lap":
        if p.arity != 1:
            raise ValueError("lap needs a scalar polynomial")
        g = apply_diff("grad2" if p.dim == 2 else "grad3", p)
        return apply_diff("div2" if p.dim == 2 else "div3", g)
    if kind not in need:
        raise ValueError(f"unknown operator {kind!r}")
    d, arity = need[kind]
    if p.dim != d or p.arity != arity:
        raise ValueError(f"{kind} needs a {d}D polynomial with {arity} component(s), got {p.dim}D/{p.arity}")
    k = max(p.degree - 1, 0)
    if kind in ("grad2", "grad3"):
        c = np.vstack([_partial(p, 0, i) for i in range(d)])
    elif kind == "curl2":
        c = np.vstack([_partial(p, 0, 1), -_partial(p, 0, 0)])
    elif kind == "rot2":
        c = (_partial(p, 1, 0) - _partial(p, 0, 1))[None, :]
    elif kind in ("div2", "div3"):
        c = sum(_partial(p, i, i) for i in range(d))[None, :]
    else:  # curl3
        c = np.vstack(
            [
                _partial(p, 2, 1) - _partial(p, 1, 2),
                _partial(p, 0, 2) - _partial(p, 2, 0),
                _partial(p, 1, 0) - _partial(p, 0, 1),
            ]
        )
    return Poly(p.frame, k, c)


def mul_position(p: Poly) -> Poly:
    """(x - b) * p for a scalar polynomial p."""
    if p.arity != 1:
        raise ValueError("mul_position needs a scalar polynomial")
    d = p.dim
    h = p.frame.diameter
    c = np.vstack([h * mul_matrix(p.degree, d, i) @ p.coeffs[0] for i in range(d)])
    return Poly(p.frame, p.degree + 1, c)


def mul_position_perp(p: Poly) -> Poly:
    """(x - b)^perp * p = (-x2 p, x1 p) for a scalar 2D polynomial p."""
    if p.arity != 1 or p.dim != 2:
        raise ValueError("mul_position_perp needs a scalar 2D polynomial")
    h = p.frame.diameter
    c = np.vstack([-h * mul_matrix(p.degree, 2, 1) @ p.coeffs[0], h * mul_matrix(p.degree, 2, 0) @ p.coeffs[0]])
    return Poly(p.frame, p.degree + 1, c)


def cross_position(q: Poly) -> Poly:
    """(x - b) ^ q for a 3-vector polynomial q."""
    if q.arity != 3 or q.dim != 3:
        raise ValueError("cross_position needs a 3D vector polynomial")
    h = q.frame.diameter
    k = q.degree

    def xq(i: int, j: int) -> FloatArray:
        return h * mul_matrix(k, 3, i) @ q.coeffs[j]

    c = np.vstack([xq(1, 2) - xq(2, 1), xq(2, 0) - xq(0, 2), xq(0, 1) - xq(1, 0)])
    return Poly(q.frame, k + 1, c)


def dot_position(q: Poly) -> Poly:
    """(x - b) . q for a vector polynomial q."""
    h = q.frame.diameter
    c = sum(h * mul_matrix(q.degree, q.dim, i) @ q.coeffs[i] for i in range(q.dim))
    return Poly(q.frame, q.degree + 1, c[None, :])


# ---------------------------------------------------------------------------
# lifts and potentials
# ---------------------------------------------------------------------------


def _check_small(value: float, scale: float, what: str) -> None:
    if value > COMPAT_TOL * max(scale, 1e-300):
        raise ValueError(f"incompatible input: {what} residual {value:.3e} relative to scale {scale:.3e}")


def poly_lift(kind: LiftKind, target: Poly) -> Poly:
    """Invert q -> div(x q), rot(x^perp q), div(x q) in 3D, or curl(x ^ q).

    Each map acts diagonally on homogeneous parts, so the inverse rescales
    the degree-m part of ``target`` by 1/(m+2), 1/(m+2), 1/(m+3) and
    -1/(m+2) respectively. The curl3 branch requires a divergence-free
    target and returns the divergence-free preimage.
    """
    if kind in ("div2", "rot2"):
        if target.arity != 1 or target.dim != 2:
            raise ValueError(f"{kind} lift needs a scalar 2D target")
        return target.scale_homogeneous(lambda m: 1.0 / (m + 2.0))
    if kind == "div3":
        if target.arity != 1 or target.dim != 3:
            raise ValueError("div3 lift needs a scalar 3D target")
        return target.scale_homogeneous(lambda m: 1.0 / (m + 3.0))
    if kind == "curl3":
        if target.arity != 3 or target.dim != 3:
            raise ValueError("curl3 lift needs a 3D vector target")
        div = apply_diff("div3", target)
        _check_small(div.coeff_norm() * target.frame.diameter, target.coeff_norm(), "divergence")
        return target.scale_homogeneous(lambda m: -1.0 / (m + 2.0))
    raise ValueError(f"unknown lift {kind!r}")


def poly_potential(kind: PotentialKind, vector: Poly) -> Poly:
    """Zero-mean scalar s with grad s, curl s (2D) or grad s (3D) equal to ``vector``."""
    if kind == "curl2":
        if vector.arity != 2 or vector.dim != 2:
            raise ValueError("curl2 potential needs a 2D vector")
        _check_small(
            apply_diff("div2", vector).coeff_norm() * vector.frame.diameter, vector.coeff_norm(), "divergence"
        )
        rotated = Poly(vector.frame, vector.degree, np.vstack([-vector.coeffs[1], vector.coeffs[0]]))
        return _gradient_potential(rotated)
    if kind == "grad2":
        if vector.arity != 2 or vector.dim != 2:
            raise ValueError("grad2 potential needs a 2D vector")
        _check_small(apply_diff("rot2", vector).coeff_norm() * vector.frame.diameter, vector.coeff_norm(), "rot")
        return _gradient_potential(vector)
    if kind == "grad3":
        if vector.arity != 3 or vector.dim != 3:
            raise ValueError("grad3 potential needs a 3D vector")
        _check_small(apply_diff("curl3", vector).coeff_norm() * vector.frame.diameter, vector.coeff_norm(), "curl")
        return _gradient_potential(vector)
    raise ValueError(f"unknown potential {kind!r}")


def _gradient_potential(vector: Poly) -> Poly:
    # x . f_m is homogeneous of degree m+1 and its gradient is (m+1) f_m
    s = dot_position(vector)
    s = s.scale_homogeneous(lambda m: 1.0 / np.maximum(m, 1))
    return s - constant(s.frame, s.mean())


def decompose_vector(kind: DecompKind, q: Poly) -> tuple[Poly, Poly]:
    """Split a vector polynomial along one of the four direct sums.

    * ``2d_curl_x``: q = curl s + x c, returns (s, c)
    * ``2d_grad_xperp``: q = grad s + x^perp c, returns (s, c)
    * ``3d_curl_x``: q = curl(x ^ a) + x b, returns (a, b)
    * ``3d_grad_xwedge``: q = grad s + x ^ w, returns (s, w)
    """
    if kind == "2d_curl_x":
        c = poly_lift("div2", apply_diff("div2", q))
        s = poly_potential("curl2", q - mul_position(c))
        return s, c
    if kind == "2d_grad_xperp":
        c = poly_lift("rot2", apply_diff("rot2", q))
        s = poly_potential("grad2", q - mul_position_perp(c))
        return s, c
    if kind == "3d_curl_x":
        b = poly_lift("div3", apply_diff("div3", q))
        a = poly_lift("curl3", q - mul_position(b))
        return a, b
    if kind == "3d_grad_xwedge":
        w = poly_lift("curl3", apply_diff("curl3", q))
        s = poly_potential("grad3", q - cross_position(w))
        return s, w
    raise ValueError(f"unknown decomposition {kind!r}")


# ---------------------------------------------------------------------------
# projections
# ---------------------------------------------------------------------------


def l2_project_analytic(f: Callable[[FloatArray], FloatArray], k: int, frame: CellFrame, quad: QuadRule) -> Poly:
    """Componentwise L2 projection of a callable onto polynomials of degree k."""
    vals = np.asarray(f(quad.points), dtype=np.float64)
    if vals.ndim == 1:
        vals = vals[:, None]
    v = vandermonde(frame, quad.points, k)
    gram = v.T @ (quad.weights[:, None] * v)
    rhs = v.T @ (quad.weights[:, None] * vals)
    coeffs = np.linalg.solve(gram, rhs)
    return Poly(frame, k, coeffs.T)
