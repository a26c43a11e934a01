"""Polytopal meshes in 2D and 3D: geometry, orientation, splitting, validation.

Conventions:

* 2D faces (the cells of a 2D mesh) are stored counter-clockwise. The edge
  tangent of a face follows the loop and the outward normal is the tangent
  rotated clockwise, so ``t_e = (-n_2, n_1)``.
* 3D faces are stored once with a right-handed normal from their loop; every
  cell lists its faces together with a sign that is +1 when the stored normal
  points out of the cell.
* Global edges are stored as sorted vertex pairs and oriented from the lower
  to the higher vertex index.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Sequence

import numpy as np
import numpy.typing as npt
from scipy.optimize import linprog

from .polycalc import CellFrame

FloatArray = npt.NDArray[np.float64]
IntArray = npt.NDArray[np.int64]

FAMILIES_2D = ("square_grid", "distorted_quads", "hex_dominant")
FAMILIES_3D = ("cube_grid", "distorted_hexahedra")


class MeshError(ValueError):
    """Invalid mesh input."""


# ---------------------------------------------------------------------------
# polygon geometry
# ---------------------------------------------------------------------------


def _cross2(a: FloatArray, b: FloatArray) -> FloatArray:
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def _diameter(points: FloatArray) -> float:
    diff = points[:, None, :] - points[None, :, :]
    return float(np.sqrt((diff**2).sum(-1)).max())


def _chebyshev_center(normals: FloatArray, offsets: FloatArray) -> tuple[FloatArray, float]:
    """Largest ball inside {x : normals @ x <= offsets}; returns (center, radius)."""
    d = normals.shape[1]
    a_ub = np.hstack([normals, np.linalg.norm(normals, axis=1)[:, None]])
    cost = np.zeros(d + 1)
    cost[-1] = -1.0
    res = linprog(cost, A_ub=a_ub, b_ub=offsets, bounds=[(None, None)] * d + [(0, None)], method="highs")
    if not res.success:
        return np.full(d, np.nan), 0.0
    return res.x[:d], float(res.x[-1])


@dataclass(frozen=True, eq=False)
class PolygonGeom:
    """A simple polygon given by counter-clockwise vertices in its own plane."""

    vertices: FloatArray

    @cached_property
    def n_edges(self) -> int:
        return self.vertices.shape[0]

    @cached_property
    def edge_vectors(self) -> FloatArray:
        return np.roll(self.vertices, -1, axis=0) - self.vertices

    @cached_property
    def edge_lengths(self) -> FloatArray:
        return np.linalg.norm(self.edge_vectors, axis=1)

    @cached_property
    def tangents(self) -> FloatArray:
        return self.edge_vectors / self.edge_lengths[:, None]

    @cached_property
    def normals(self) -> FloatArray:
        t = self.tangents
        return np.stack([t[:, 1], -t[:, 0]], axis=1)

    @cached_property
    def edge_midpoints(self) -> FloatArray:
        return self.vertices + 0.5 * self.edge_vectors

    @cached_property
    def signed_area(self) -> float:
        v = self.vertices
        return 0.5 * float(_cross2(v, np.roll(v, -1, axis=0)).sum())

    @cached_property
    def area(self) -> float:
        return abs(self.signed_area)

    @cached_property
    def centroid(self) -> FloatArray:
        v = self.vertices
        w = np.roll(v, -1, axis=0)
        c = _cross2(v, w)
        return ((v + w) * c[:, None]).sum(0) / (6.0 * self.signed_area)

    @cached_property
    def diameter(self) -> float:
        return _diameter(self.vertices)

    def in_kernel(self, point: FloatArray, tol: float = 1e-12) -> bool:
        """True if ``point`` sees the whole boundary (inside all edge half-planes)."""
        lhs = ((point[None, :] - self.vertices) * self.normals).sum(1)
        return bool(np.all(lhs <= tol * self.diameter))

    @cached_property
    def chebyshev(self) -> tuple[FloatArray, float]:
        """Center and radius of the largest disk inside the kernel."""
        offsets = (self.normals * self.vertices).sum(1)
        return _chebyshev_center(self.normals, offsets)

    @cached_property
    def fan_point(self) -> FloatArray:
        if self.in_kernel(self.centroid, tol=-1e-10):
            return self.centroid
        center, radius = self.chebyshev
        if radius <= 0:
            raise MeshError("polygon is not star-shaped; no fan point exists")
        return center

    @cached_property
    def interior_angles(self) -> FloatArray:
        t_in = np.roll(self.tangents, 1, axis=0)
        t_out = self.tangents
        turn = np.arctan2(_cross2(t_in, t_out), (t_in * t_out).sum(1))
        return np.pi - turn

    @cached_property
    def corner_angles(self) -> FloatArray:
        """Interior angles at geometric corners; straight-angle vertices on a split edge are skipped."""
        ang = self.interior_angles
        corners = ang[np.abs(ang - np.pi) > 1e-9]
        return corners if corners.size else ang

    @cached_property
    def convex(self) -> bool:
        return bool(np.all(self.interior_angles <= np.pi + 1e-12))

    def fan_triangles(self) -> FloatArray:
        """Triangles joining each edge to the fan point, shape (n, 3, 2)."""
        c = np.broadcast_to(self.fan_point, self.vertices.shape)
        return np.stack([c, self.vertices, np.roll(self.vertices, -1, axis=0)], axis=1)

    @cached_property
    def frame(self) -> CellFrame:
        return CellFrame(2, self.centroid, self.diameter, self.area, self.fan_triangles())

    def lines(self, tol: float = 1e-9) -> int:
        """Number of distinct straight lines supporting the boundary edges."""
        reps: list[tuple[FloatArray, FloatArray]] = []
        for t, p in zip(self.tangents, self.vertices):
            same = False
            for t0, p0 in reps:
                angle = abs(float(_cross2(t, t0)))
                offset = abs(float(_cross2(t0, p - p0)))
                if angle <= tol and offset <= tol * self.diameter:
                    same = True
                    break
            if not same:
                reps.append((t, p))
        return len(reps)


def face_lines(face: PolygonGeom, k: int) -> tuple[int, int]:
    """(eta, beta): number of boundary lines and k + 1 - eta."""
    eta = face.lines()
    return eta, k + 1 - eta


# ---------------------------------------------------------------------------
# polyhedron geometry
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FacePlane:
    """Embedding of a planar face: origin (face barycenter), in-plane axes, normal."""

    origin: FloatArray
    axes: FloatArray  # (2, 3)
    normal: FloatArray

    def to_local(self, x: FloatArray) -> FloatArray:
        return (np.asarray(x) - self.origin) @ self.axes.T

    def to_global(self, xi: FloatArray) -> FloatArray:
        return self.origin + np.asarray(xi) @ self.axes

    def tangential(self, v: FloatArray) -> FloatArray:
        """In-plane components of 3D vectors."""
        return np.asarray(v) @ self.axes.T


def _face_plane(points: FloatArray) -> tuple[FacePlane, PolygonGeom, float]:
    """Plane, local polygon and planarity residual of a 3D vertex loop."""
    nxt = np.roll(points, -1, axis=0)
    normal = np.cross(points, nxt).sum(0)  # Newell
    norm = np.linalg.norm(normal)
    if norm == 0:
        raise MeshError("degenerate face: zero area")
    normal = normal / norm
    edges = nxt - points
    lengths = np.linalg.norm(edges, axis=1)
    first = int(np.argmax(lengths > 1e-14 * lengths.max()))
    e1 = edges[first] - (edges[first] @ normal) * normal
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(normal, e1)
    axes = np.vstack([e1, e2])
    center0 = points.mean(0)
    local0 = (points - center0) @ axes.T
    poly0 = PolygonGeom(local0)
    origin = center0 + poly0.centroid @ axes
    residual = float(np.abs((points - origin) @ normal).max())
    plane = FacePlane(origin, axes, normal)
    return plane, PolygonGeom(plane.to_local(points)), residual


@dataclass(frozen=True, eq=False)
class PolyhedronGeom:
    """A polyhedral cell: its face loops (outward), faces' planes and volume split."""

    vertices: FloatArray  # global vertex array
    loops: tuple[IntArray, ...]  # outward-oriented vertex loops
    planes: tuple[FacePlane, ...]  # stored planes (not flipped)
    signs: IntArray

    @cached_property
    def outward_normals(self) -> FloatArray:
        return np.array([s * p.normal for p, s in zip(self.planes, self.signs)])

    @cached_property
    def boundary_triangles(self) -> FloatArray:
        """Fan triangulation of each outward-oriented face, shape (n, 3, 3)."""
        tris = []
        for loop in self.loops:
            pts = self.vertices[loop]
            for i in range(1, len(loop) - 1):
                tris.append([pts[0], pts[i], pts[i + 1]])
        return np.array(tris)

    @cached_property
    def volume(self) -> float:
        t = self.boundary_triangles
        return float(np.einsum("ni,ni->n", t[:, 0], np.cross(t[:, 1], t[:, 2])).sum() / 6.0)

    @cached_property
    def centroid(self) -> FloatArray:
        t = self.boundary_triangles
        vols = np.einsum("ni,ni->n", t[:, 0], np.cross(t[:, 1], t[:, 2])) / 6.0
        cents = t.sum(1) / 4.0
        return (vols[:, None] * cents).sum(0) / vols.sum()

    @cached_property
    def diameter(self) -> float:
        idx = np.unique(np.concatenate(self.loops))
        return _diameter(self.vertices[idx])

    def in_kernel(self, point: FloatArray, tol: float = 1e-12) -> bool:
        for loop, n in zip(self.loops, self.outward_normals):
            if n @ (point - self.vertices[loop].mean(0)) > tol * self.diameter:
                return False
        return True

    @cached_property
    def chebyshev(self) -> tuple[FloatArray, float]:
        n = self.outward_normals
        offsets = np.array([nn @ self.vertices[loop].mean(0) for nn, loop in zip(n, self.loops)])
        return _chebyshev_center(n, offsets)

    @cached_property
    def fan_point(self) -> FloatArray:
        if self.in_kernel(self.centroid, tol=-1e-10):
            return self.centroid
        center, radius = self.chebyshev
        if radius <= 0:
            raise MeshError("polyhedron is not star-shaped; no fan point exists")
        return center

    def fan_tetrahedra(self) -> FloatArray:
        t = self.boundary_triangles
        c = np.broadcast_to(self.fan_point, (t.shape[0], 1, 3))
        return np.concatenate([c, t], axis=1)

    @cached_property
    def frame(self) -> CellFrame:
        return CellFrame(3, self.centroid, self.diameter, self.volume, self.fan_tetrahedra())


# ---------------------------------------------------------------------------
# mesh
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Mesh:
    """Polygonal (dim 2) or polyhedral (dim 3) mesh."""

    dim: int
    vertices: FloatArray
    faces: tuple[IntArray, ...]
    cells: tuple[IntArray, ...] = ()
    cell_face_signs: tuple[IntArray, ...] = ()
    cache: dict = field(default_factory=dict, compare=False, repr=False)

    # -- topology ---------------------------------------------------------

    @cached_property
    def _edge_data(self) -> tuple[IntArray, list[IntArray], list[IntArray]]:
        index: dict[tuple[int, int], int] = {}
        face_edges: list[IntArray] = []
        face_signs: list[IntArray] = []
        for loop in self.faces:
            ids, sg = [], []
            for a, b in zip(loop, np.roll(loop, -1)):
                key = (int(min(a, b)), int(max(a, b)))
                if key not in index:
                    index[key] = len(index)
                ids.append(index[key])
                sg.append(1 if a < b else -1)
            face_edges.append(np.array(ids, dtype=np.int64))
            face_signs.append(np.array(sg, dtype=np.int64))
        edges = np.array(sorted(index, key=index.get), dtype=np.int64).reshape(-1, 2)
        return edges, face_edges, face_signs

    @property
    def edges(self) -> IntArray:
        return self._edge_data[0]

    def face_edges(self, f: int) -> tuple[IntArray, IntArray]:
        """Global edge ids of face ``f`` in loop order and loop-vs-global orientation signs."""
        return self._edge_data[1][f], self._edge_data[2][f]

    @property
    def n_cells(self) -> int:
        return len(self.faces) if self.dim == 2 else len(self.cells)

    # -- geometry ---------------------------------------------------------

    @cached_property
    def _faces_geometry(self) -> list[tuple[FacePlane | None, PolygonGeom]]:
        out = []
        for loop in self.faces:
            pts = self.vertices[loop]
            if self.dim == 2:
                out.append((None, PolygonGeom(pts)))
            else:
                plane, poly, res = _face_plane(pts)
                out.append((plane, poly))
        return out

    def face_polygon(self, f: int) -> PolygonGeom:
        """Face as a 2D polygon (physical coordinates in 2D, plane coordinates in 3D)."""
        return self._faces_geometry[f][1]

    def face_plane(self, f: int) -> FacePlane:
        plane = self._faces_geometry[f][0]
        if plane is None:
            raise ValueError("face planes exist for 3D meshes only")
        return plane

    @cached_property
    def _cells_geometry(self) -> list[PolyhedronGeom]:
        out = []
        for faces, signs in zip(self.cells, self.cell_face_signs):
            loops = tuple(self.faces[f] if s > 0 else self.faces[f][::-1] for f, s in zip(faces, signs))
            planes = tuple(self._faces_geometry[f][0] for f in faces)
            out.append(PolyhedronGeom(self.vertices, loops, planes, np.asarray(signs)))
        return out

    def cell(self, c: int) -> PolyhedronGeom | PolygonGeom:
        if self.dim == 2:
            return self.face_polygon(c)
        return self._cells_geometry[c]

    def cell_edges(self, c: int) -> IntArray:
        """Sorted global edge ids on the boundary of a 3D cell (or of a 2D face)."""
        if self.dim == 2:
            return np.sort(self.face_edges(c)[0])
        return np.unique(np.concatenate([self.face_edges(f)[0] for f in self.cells[c]]))

    def cell_frame(self, c: int) -> CellFrame:
        return self.cell(c).frame

    def cell_diameters(self) -> FloatArray:
        return np.array([self.cell(c).diameter for c in range(self.n_cells)])

    @property
    def h_max(self) -> float:
        return float(self.cell_diameters().max())


# ---------------------------------------------------------------------------
# JSON
# ---------------------------------------------------------------------------


def parse_mesh(document: dict[str, Any] | str) -> Mesh:
    """Build a mesh from its JSON document (dict or JSON text) and check it."""
    if isinstance(document, str):
        document = json.loads(document)
    try:
        dim = int(document["dim"])
        verts = np.asarray(document["vertices"], dtype=np.float64)
        faces = tuple(np.asarray(f, dtype=np.int64) for f in document["faces"])
    except (KeyError, TypeError, ValueError) as exc:
        raise MeshError(f"schema violation: {exc}") from exc
    if dim not in (2, 3) or verts.ndim != 2 or verts.shape[1] != dim:
        raise MeshError("schema violation: vertex array does not match dim")
    cells: tuple[IntArray, ...] = ()
    signs: tuple[IntArray, ...] = ()
    if dim == 3:
        if "cells" not in document or "cell_face_signs" not in document:
            raise MeshError("schema violation: 3D meshes need cells and cell_face_signs")
        cells = tuple(np.asarray(c, dtype=np.int64) for c in document["cells"])
        signs = tuple(np.asarray(s, dtype=np.int64) for s in document["cell_face_signs"])
        if len(cells) != len(signs) or any(len(c) != len(s) for c, s in zip(cells, signs)):
            raise MeshError("schema violation: cell_face_signs shape differs from cells")
    mesh = Mesh(dim, verts, faces, cells, signs)
    _check_mesh(mesh)
    return mesh


def write_mesh(mesh: Mesh) -> dict[str, Any]:
    doc: dict[str, Any] = {
        "dim": mesh.dim,
        "vertices": mesh.vertices.tolist(),
        "faces": [f.tolist() for f in mesh.faces],
    }
    if mesh.dim == 3:
        doc["cells"] = [c.tolist() for c in mesh.cells]
        doc["cell_face_signs"] = [s.tolist() for s in mesh.cell_face_signs]
    return doc


def _check_mesh(mesh: Mesh) -> None:
    nv = mesh.vertices.shape[0]
    for i, loop in enumerate(mesh.faces):
        if len(loop) < 3 or len(set(loop.tolist())) != len(loop):
            raise MeshError(f"degenerate face {i}: repeated or too few vertices")
        if loop.min() < 0 or loop.max() >= nv:
            raise MeshError(f"face {i} references a missing vertex")
    for i in range(len(mesh.faces)):
        try:
            plane, poly = mesh._faces_geometry[i]
        except MeshError as exc:
            raise MeshError(f"degenerate face {i}: {exc}") from exc
        if mesh.dim == 2 and poly.signed_area <= 0:
            raise MeshError(f"face {i} is not counter-clockwise or has zero area")
        if poly.edge_lengths.min() <= 1e-14 * poly.diameter:
            raise MeshError(f"degenerate face {i}: zero-length edge")
        if mesh.dim == 3:
            _, _, res = _face_plane(mesh.vertices[mesh.faces[i]])
            if res > 1e-10 * poly.diameter:
                raise MeshError(f"face {i} is not planar (residual {res:.2e})")
    if mesh.dim == 3:
        for c, (faces, signs) in enumerate(zip(mesh.cells, mesh.cell_face_signs)):
            count: dict[tuple[int, int], int] = {}
            for f, s in zip(faces, signs):
                loop = mesh.faces[f] if s > 0 else mesh.faces[f][::-1]
                for a, b in zip(loop, np.roll(loop, -1)):
                    count[(int(a), int(b))] = count.get((int(a), int(b)), 0) + 1
            for (a, b), n in count.items():
                if n != 1 or count.get((b, a), 0) != 1:
                    raise MeshError(f"cell {c} is not watertight or has inconsistent face signs")
            if mesh.cell(c).volume <= 0:
                raise MeshError(f"degenerate cell {c}: non-positive volume (check face signs)")


def polygon_mesh(vertices: Sequence[Sequence[float]]) -> Mesh:
    """Single-polygon 2D mesh."""
    v = np.asarray(vertices, dtype=np.float64)
    return parse_mesh({"dim": 2, "vertices": v.tolist(), "faces": [list(range(len(v)))]})


def polyhedron_mesh(vertices: Sequence[Sequence[float]], faces: Sequence[Sequence[int]]) -> Mesh:
    """Single-cell 3D mesh from outward-oriented face loops."""
    return parse_mesh(
        {
            "dim": 3,
            "vertices": np.asarray(vertices, dtype=np.float64).tolist(),
            "faces": [list(f) for f in faces],
            "cells": [list(range(len(faces)))],
            "cell_face_signs": [[1] * len(faces)],
        }
    )


def unit_cube_mesh() -> Mesh:
    return cube_grid(1)


def prism_mesh() -> Mesh:
    """Right triangular prism over the unit triangle, height 1."""
    v = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1], [1, 0, 1], [0, 1, 1]]
    f = [[0, 2, 1], [3, 4, 5], [0, 1, 4, 3], [1, 2, 5, 4], [2, 0, 3, 5]]
    return polyhedron_mesh(v, f)


def tetra_mesh() -> Mesh:
    v = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]]
    f = [[0, 2, 1], [0, 1, 3], [1, 2, 3], [0, 3, 2]]
    return polyhedron_mesh(v, f)


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------


def _quad_grid(n: int, perturb: float = 0.0, seed: int = 0) -> Mesh:
    xs = np.linspace(0.0, 1.0, n + 1)
    xx, yy = np.meshgrid(xs, xs, indexing="ij")
    verts = np.stack([xx.ravel(), yy.ravel()], axis=1)
    vid = lambda i, j: i * (n + 1) + j  # noqa: E731
    faces = [[vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)] for i in range(n) for j in range(n)]
    if perturb > 0:
        verts = _perturb(verts, np.array(faces), 1.0 / n, perturb, seed)
    return parse_mesh({"dim": 2, "vertices": verts.tolist(), "faces": faces})


def _perturb(verts: FloatArray, cells: IntArray, spacing: float, amplitude: float, seed: int) -> FloatArray:
    """Randomly move interior vertices of a unit grid by at most ``amplitude * spacing``.

    The interior vertex next to the origin is moved deterministically along
    the diagonal, which stretches the corner cell to exactly ``1 + amplitude / 2``
    times the grid-cell diagonal. All other moves are drawn in a fixed vertex
    order and rejected when an incident cell would exceed that diameter, so
    the maximal diameter is the same multiple of the spacing on every level.
    """
    rng = np.random.default_rng(seed)
    verts = verts.copy()
    d = verts.shape[1]
    stretch = 0.5 * amplitude
    max_diam = (1.0 + stretch) * np.sqrt(d) * spacing
    interior = np.all((verts > 1e-12) & (verts < 1 - 1e-12), axis=1)
    incident: list[list[int]] = [[] for _ in range(verts.shape[0])]
    for c, cell in enumerate(cells):
        for v in cell:
            incident[v].append(c)
    anchor = int(np.argmin(np.abs(verts - spacing).sum(1)))
    verts[anchor] += stretch * spacing
    for v in np.flatnonzero(interior):
        if v == anchor:
            continue
        for _ in range(20):
            step = rng.normal(size=d)
            step *= amplitude * spacing * rng.uniform() ** (1.0 / d) / np.linalg.norm(step)
            trial = verts[v] + step
            ok = True
            for c in incident[v]:
                pts = verts[cells[c]].copy()
                pts[list(cells[c]).index(v)] = trial
                if _diameter(pts) > max_diam * (1 - 1e-9):
                    ok = False
                    break
            if ok:
                verts[v] = trial
                break
    return verts


def square_grid(n: int) -> Mesh:
    return _quad_grid(n)


def hex_dominant(n: int) -> Mesh:
    """Honeycomb-like mesh of the unit square with ``n`` rows of cells.

    Rows of staggered bricks whose horizontal interfaces zig-zag, so interior
    cells are convex hexagons; cells along the boundary are pentagons or
    quadrilaterals with straight boundary sides.
    """
    hgt = 1.0 / n
    width = 1.0 / n
    shift = hgt / 6.0
    verts: list[tuple[float, float]] = []
    index: dict[tuple[int, int], int] = {}

    def vertex(line: int, half: int) -> int:
        # vertex on horizontal interface ``line`` at x = half * width / 2
        key = (line, half)
        if key not in index:
            y = line * hgt
            if 0 < line < n:
                # displacement: down if it is the bottom midpoint of the brick above
                offset_above = (line % 2) * 1  # in half-widths
                mid_above = (half - offset_above - 1) % 2 == 0
                y += -shift if mid_above else shift
            index[key] = len(verts)
            verts.append((half * width / 2.0, y))
        return index[key]

    faces = []
    for row in range(n):
        off = row % 2  # brick offset in half-widths
        starts = list(range(off, 2 * n, 2))
        bounds = ([0] if off else []) + starts + ([2 * n] if starts[-1] != 2 * n else [])
        for a, b in zip(bounds[:-1], bounds[1:]):
            loop = []
            # bottom edge, left to right
            for hh in range(a, b + 1):
                if row == 0 and a < hh < b:
                    continue
                loop.append(vertex(row, hh))
            # top edge, right to left
            for hh in range(b, a - 1, -1):
                if row == n - 1 and a < hh < b:
                    continue
                loop.append(vertex(row + 1, hh))
            faces.append(loop)
    return parse_mesh({"dim": 2, "vertices": [list(v) for v in verts], "faces": faces})


def _hex_grid(n: int, perturb: float = 0.0, seed: int = 0) -> Mesh:
    xs = np.linspace(0.0, 1.0, n + 1)
    g = np.stack(np.meshgrid(xs, xs, xs, indexing="ij"), axis=-1).reshape(-1, 3)
    distorted = perturb > 0
    vid = lambda i, j, k: (i * (n + 1) + j) * (n + 1) + k  # noqa: E731
    if distorted:
        corners = np.array(
            [
                [vid(i + a, j + b, k + d) for a in (0, 1) for b in (0, 1) for d in (0, 1)]
                for i in range(n)
                for j in range(n)
                for k in range(n)
            ]
        )
        g = _perturb(g, corners, 1.0 / n, perturb, seed)
    faces: list[list[int]] = []
    face_index: dict[tuple[int, ...], int] = {}

    def add(loop: list[int]) -> list[tuple[int, int]]:
        """Register a face loop (split into triangles when distorted)."""
        pieces = [loop]
        if distorted:
            # split along the diagonal through the smallest vertex index
            r = int(np.argmin(loop))
            lp = loop[r:] + loop[:r]
            pieces = [[lp[0], lp[1], lp[2]], [lp[0], lp[2], lp[3]]]
        out = []
        for p in pieces:
            key = tuple(sorted(p))
            if key in face_index:
                out.append((face_index[key], -1))
            else:
                face_index[key] = len(faces)
                faces.append(p)
                out.append((face_index[key], 1))
        return out

    cells, signs = [], []
    for i in range(n):
        for j in range(n):
            for k in range(n):
                c = [vid(i + a, j + b, k + d) for a in (0, 1) for b in (0, 1) for d in (0, 1)]
                v000, v001, v010, v011, v100, v101, v110, v111 = c
                loops = [
                    [v000, v010, v110, v100],  # z- ... outward loops
                    [v000, v100, v101, v001],
                    [v000, v001, v011, v010],
                    [v111, v101, v100, v110],
                    [v111, v110, v010, v011],
                    [v111, v011, v001, v101],
                ]
                cf, cs = [], []
                for lp in loops:
                    for f, sgn in add(lp):
                        cf.append(f)
                        cs.append(sgn)
                cells.append(cf)
                signs.append(cs)
    return parse_mesh(
        {"dim": 3, "vertices": g.tolist(), "faces": faces, "cells": cells, "cell_face_signs": signs}
    )


def cube_grid(n: int) -> Mesh:
    return _hex_grid(n)


def generate_mesh(family: str, level: int, seed: int = 0) -> Mesh:
    """Refinement-sequence meshes of the unit square or cube.

    The maximal cell diameter halves with each level. Distorted families move
    interior vertices by at most 0.2 times the grid spacing.
    """
    if level < 0:
        raise ValueError("level must be non-negative")
    if family == "square_grid":
        return square_grid(2**level)
    if family == "distorted_quads":
        return _quad_grid(2 ** (level + 1), perturb=0.2, seed=seed)
    if family == "hex_dominant":
        return hex_dominant(3 * 2**level)
    if family == "cube_grid":
        return cube_grid(2**level)
    if family == "distorted_hexahedra":
        return _hex_grid(2 ** (level + 1), perturb=0.2, seed=seed)
    raise ValueError(f"unknown mesh family {family!r}")


# ---------------------------------------------------------------------------
# sub-tessellation
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SubTess:
    """Simplicial split of one mesh cell."""

    simplices: FloatArray  # (n, d+1, d)
    parent: int
    level: int

    @property
    def measures(self) -> FloatArray:
        s = self.simplices
        jac = s[:, 1:, :] - s[:, :1, :]
        fact = 2.0 if s.shape[2] == 2 else 6.0
        return np.abs(np.linalg.det(jac)) / fact


def refine_triangles(tris: FloatArray) -> FloatArray:
    """Split every triangle into four through its edge midpoints."""
    a, b, c = tris[:, 0], tris[:, 1], tris[:, 2]
    ab, bc, ca = (a + b) / 2, (b + c) / 2, (c + a) / 2
    return np.concatenate(
        [np.stack(t, axis=1) for t in ((a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca))], axis=0
    )


def refine_tetrahedra(tets: FloatArray) -> FloatArray:
    """Split every tetrahedron into eight (Bey's red refinement)."""
    x0, x1, x2, x3 = (tets[:, i] for i in range(4))
    m = lambda p, q: (p + q) / 2  # noqa: E731
    x01, x02, x03, x12, x13, x23 = m(x0, x1), m(x0, x2), m(x0, x3), m(x1, x2), m(x1, x3), m(x2, x3)
    kids = [
        (x0, x01, x02, x03),
        (x01, x1, x12, x13),
        (x02, x12, x2, x23),
        (x03, x13, x23, x3),
        (x01, x02, x03, x13),
        (x01, x02, x12, x13),
        (x02, x03, x13, x23),
        (x02, x12, x13, x23),
    ]
    return np.concatenate([np.stack(t, axis=1) for t in kids], axis=0)


def subtessellate(mesh: Mesh, entity: int, r: int) -> SubTess:
    """Fan split of a cell from its barycenter (or a kernel point), refined r times."""
    if r < 0:
        raise ValueError("refinement level must be non-negative")
    geom = mesh.cell(entity)
    if mesh.dim == 2:
        s = geom.fan_triangles()
        for _ in range(r):
            s = refine_triangles(s)
    else:
        s = geom.fan_tetrahedra()
        for _ in range(r):
            s = refine_tetrahedra(s)
    return SubTess(s, entity, r)


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AssumptionParams:
    rho: float = 0.05
    eps: float = 0.1

    def __post_init__(self) -> None:
        if not 0 < self.rho < 1:
            raise ValueError("rho must lie in (0, 1)")
        if not 0 < self.eps < np.pi / 2:
            raise ValueError("eps must lie in (0, pi/2)")


@dataclass
class AssumptionReport:
    """Per-entity quality measures and global pass flags."""

    star_ratio: FloatArray  # per cell
    edge_ratio: FloatArray  # per face: min h_e / h_F
    convex: npt.NDArray[np.bool_]  # per face
    min_angle: FloatArray  # per face
    max_angle: FloatArray  # per face
    face_star_ratio: FloatArray  # per face (3D), equal to star_ratio in 2D
    face_cell_ratio: FloatArray  # per cell (3D): min h_F / h_E
    m_i: bool
    m_ii: bool
    m_iii: bool
    mc: bool

    @property
    def m(self) -> bool:
        return self.m_i and self.m_ii and self.m_iii

    @property
    def min_ratio(self) -> float:
        """Smallest of the quantities compared against rho."""
        vals = [self.star_ratio.min(), self.edge_ratio.min(), self.face_star_ratio.min()]
        if self.face_cell_ratio.size:
            vals.append(self.face_cell_ratio.min())
        return float(min(vals))

    def summary(self) -> dict[str, Any]:
        return {
            "M_i": self.m_i,
            "M_ii": self.m_ii,
            "M_iii": self.m_iii,
            "MC": self.mc,
            "min_star_ratio": float(self.star_ratio.min()),
            "min_face_star_ratio": float(self.face_star_ratio.min()),
            "min_edge_ratio": float(self.edge_ratio.min()),
            "min_angle": float(self.min_angle.min()),
            "max_angle": float(self.max_angle.max()),
            "min_ratio": self.min_ratio,
        }


def validate(mesh: Mesh, params: AssumptionParams = AssumptionParams()) -> AssumptionReport:
    """Evaluate the star-shapedness, edge-length and convexity assumptions."""
    polys = [mesh.face_polygon(f) for f in range(len(mesh.faces))]
    face_star = np.array([p.chebyshev[1] / p.diameter for p in polys])
    edge_ratio = np.array([p.edge_lengths.min() / p.diameter for p in polys])
    convex = np.array([p.convex for p in polys])
    min_ang = np.array([p.corner_angles.min() for p in polys])
    max_ang = np.array([p.corner_angles.max() for p in polys])
    mc = bool(np.all(convex) and np.all(min_ang > params.eps) and np.all(max_ang < np.pi - params.eps))
    if mesh.dim == 2:
        star = face_star
        m_i = bool(np.all(star >= params.rho))
        m_ii = bool(np.all(edge_ratio >= params.rho))
        return AssumptionReport(star, edge_ratio, convex, min_ang, max_ang, face_star, np.zeros(0), m_i, m_ii, True, mc)
    star = np.array([mesh.cell(c).chebyshev[1] / mesh.cell(c).diameter for c in range(mesh.n_cells)])
    fc = np.array(
        [min(polys[f].diameter for f in faces) / mesh.cell(c).diameter for c, faces in enumerate(mesh.cells)]
    )
    m_i = bool(np.all(star >= params.rho))
    m_ii = bool(np.all(face_star >= params.rho))
    m_iii = bool(np.all(edge_ratio >= params.rho) and np.all(fc >= params.rho))
    return AssumptionReport(star, edge_ratio, convex, min_ang, max_ang, face_star, fc, m_i, m_ii, m_iii, mc)
