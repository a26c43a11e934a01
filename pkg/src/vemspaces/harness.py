"""Mesh-refinement convergence and stability studies.

Each study walks a refinement sequence of one mesh family, builds the local
spaces cell by cell and aggregates per-cell quantities as root-sum-squares.
Cells that are translates of each other share their space (and, in 2D,
their reconstruction evaluator): the field is shifted instead of the cell.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field, fields
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable

import numpy as np
import numpy.typing as npt

from .fields import VectorField, poly_field, random_trig, singular_field, standard_trig, zero_field
from .meshgeo import FAMILIES_2D, FAMILIES_3D, Mesh, PolygonGeom, generate_mesh, validate
from .oracle2d import VirtualEvaluator, build_evaluator, eval_virtual, virtual_error
from .polycalc import CellFrame, Poly, dim_poly
from .vem2d import (
    EdgeMoment,
    InteriorXMoment,
    Space2D,
    TriNormParams,
    diff_poly,
    discrete_mass2d,
    eval_dofs,
    l2_projection2d,
    stabilization2d,
    tri_norm,
)
from .vem3d import (
    Space3D,
    curl_to_face_dofs,
    discrete_mass3d,
    div_poly3d,
    eval_dofs3d,
    l2_projection3d,
    stabilization3d,
)

FloatArray = npt.NDArray[np.float64]

COLUMNS = (
    "level",
    "h_max",
    "n_cells",
    "L2_interp",
    "rate_L2",
    "diff_err",
    "rate_diff",
    "proj_surrogate",
    "rate_proj",
    "stab_ratio_min",
    "stab_ratio_max",
    "assumption_min_ratio",
)

# relative eigenvalue below which a symmetric matrix counts as singular
PD_TOL = 1e-12
# relative defect of the discrete mass on polynomial inputs
MASS_TOL = 1e-10


class ConfigError(ValueError):
    """Invalid study configuration."""


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


@dataclass
class StudyConfig:
    dim: int = 2
    family: str = "edge"
    variant: str = "standard"
    k: int = 1
    mesh: str = "square_grid"
    levels: int = 4
    seed: int = 0
    field: str = "trig"
    alpha: float = 0.5
    quad_degree: int | None = None
    oracle_r: int = 3
    oracle_q: int | None = None
    oracle_gate: float = 0.01
    oracle_max_r: int = 5
    gamma: float = 1.0
    gamma_hat: float = 1.0
    samples: int = 200

    def validate(self) -> None:
        if self.dim not in (2, 3):
            raise ConfigError("dim must be 2 or 3")
        if self.family not in ("edge", "face"):
            raise ConfigError("family must be 'edge' or 'face'")
        if self.variant not in ("standard", "serendipity"):
            raise ConfigError("variant must be 'standard' or 'serendipity'")
        if self.dim == 3 and self.family == "face" and self.variant == "serendipity":
            raise ConfigError("the 3D face family has no serendipity variant")
        if self.k < 1:
            raise ConfigError("k must be at least 1")
        allowed = FAMILIES_2D if self.dim == 2 else FAMILIES_3D
        if self.mesh not in allowed:
            raise ConfigError(f"mesh family {self.mesh!r} is not a {self.dim}D family {allowed}")
        if self.levels < 3:
            raise ConfigError("levels must be at least 3 to estimate rates")
        if not _known_field(self.field):
            raise ConfigError(f"unknown field {self.field!r}")
        if self.oracle_r < 0 or self.oracle_max_r < self.oracle_r:
            raise ConfigError("oracle refinement levels are inconsistent")
        if self.oracle_q is not None and self.oracle_q < self.k + 1:
            raise ConfigError("oracle FEM order must be at least k+1")
        if not (self.gamma > 0 and self.gamma_hat > 0):
            raise ConfigError("gamma and gamma_hat must be positive")
        if self.samples < 1:
            raise ConfigError("samples must be positive")

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> StudyConfig:
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
        cfg = cls(**data)
        cfg.validate()
        return cfg

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def _known_field(name: str) -> bool:
    if name in ("zero", "trig", "random_trig", "singular"):
        return True
    return name.startswith("poly") and name[4:].isdigit()


def make_field(config: StudyConfig, frame: CellFrame | None = None) -> VectorField:
    """Analytic field named by ``config.field``.

    ``polyN`` is a random vector polynomial of degree N (seeded), ``singular``
    is |x|^alpha times a smooth field, with the singular point at the origin,
    which is a vertex of every generated mesh.
    """
    d = config.dim
    name = config.field
    if name == "zero":
        return zero_field(d)
    if name == "trig":
        return standard_trig(d).field()
    if name == "random_trig":
        return random_trig(d, config.seed).field()
    if name == "singular":
        return singular_field(d, np.zeros(d), config.alpha)
    deg = int(name[4:])
    rng = np.random.default_rng(config.seed)
    if frame is None:
        frame = CellFrame(d, np.zeros(d), 1.0, 1.0, np.zeros((0, d + 1, d)))
    return poly_field(Poly.from_flat(frame, deg, rng.standard_normal(d * dim_poly(deg, d)), d))


def _shifted(f: VectorField, shift: FloatArray) -> VectorField:
    return VectorField(f.dim, lambda x: f(x + shift), lambda x: f.jacobian(x + shift), f.name)


# ---------------------------------------------------------------------------
# tables
# ---------------------------------------------------------------------------


@dataclass
class ErrorRow:
    level: int
    h_max: float
    n_cells: int
    L2_interp: float = math.nan
    rate_L2: float = math.nan
    diff_err: float = math.nan
    rate_diff: float = math.nan
    proj_surrogate: float = math.nan
    rate_proj: float = math.nan
    stab_ratio_min: float = math.nan
    stab_ratio_max: float = math.nan
    assumption_min_ratio: float = math.nan


@dataclass
class ErrorTable:
    """Per-level results of one study plus flags and diagnostics."""

    mode: str
    config: StudyConfig
    rows: list[ErrorRow] = field(default_factory=list)
    extras: list[dict[str, Any]] = field(default_factory=list)
    flags: list[str] = field(default_factory=list)
    oracle_r: int | None = None
    wall_clock: float = 0.0

    def column(self, name: str) -> FloatArray:
        return np.array([getattr(r, name) for r in self.rows], dtype=np.float64)

    def fill_rates(self) -> None:
        for metric, rate in (("L2_interp", "rate_L2"), ("diff_err", "rate_diff"), ("proj_surrogate", "rate_proj")):
            for prev, row in zip(self.rows, self.rows[1:]):
                a, b = getattr(prev, metric), getattr(row, metric)
                setattr(row, rate, math.log2(a / b) if a > 0 and b > 0 else math.nan)

    def final_rate(self, name: str) -> float:
        return float(self.column(name)[-1]) if len(self.rows) > 1 else math.nan

    def band_spread(self) -> float:
        """Level-to-level spread of the stability band extremes."""
        lo, hi = self.column("stab_ratio_min"), self.column("stab_ratio_max")
        return float(max(lo.max() / lo.min(), hi.max() / hi.min()))

    def to_csv(self, timestamp: bool = True) -> str:
        buf = io.StringIO()
        if timestamp:
            buf.write(f"# generated {datetime.now(timezone.utc).isoformat(timespec='seconds')}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(COLUMNS)
        for row in self.rows:
            writer.writerow([_fmt(getattr(row, c)) for c in COLUMNS])
        return buf.getvalue()

    def to_json(self, timestamp: bool = True) -> str:
        doc: dict[str, Any] = {
            "mode": self.mode,
            "config": self.config.to_dict(),
            "columns": list(COLUMNS),
            "rows": [{c: _json_num(getattr(r, c)) for c in COLUMNS} for r in self.rows],
            "extras": self.extras,
            "flags": self.flags,
            "oracle_r": self.oracle_r,
        }
        if timestamp:
            doc["generated"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
            doc["wall_clock_s"] = round(self.wall_clock, 3)
        return json.dumps(doc, indent=2, sort_keys=True, default=_json_default)

    def write(self, path: str | Path, timestamp: bool = True) -> None:
        """Write CSV (plus a JSON sibling), or JSON only for a .json path."""
        path = Path(path)
        if path.suffix == ".json":
            path.write_text(self.to_json(timestamp))
            return
        path.write_text(self.to_csv(timestamp))
        path.with_suffix(".json").write_text(self.to_json(timestamp))


def _fmt(value: float | int) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return "nan" if math.isnan(value) else f"{value:.10e}"


def _json_default(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"cannot serialize {type(value).__name__}")


def _json_num(value: float | int) -> float | int | None:
    if isinstance(value, (int, np.integer)):
        return int(value)
    return None if math.isnan(value) else float(value)


# ---------------------------------------------------------------------------
# shape caches
# ---------------------------------------------------------------------------


def _shape_key(vertices: FloatArray, extra: tuple = ()) -> tuple:
    rel = vertices - vertices[0]
    scale = np.abs(rel).max()
    return (vertices.shape, np.round(rel / scale, 12).tobytes(), round(float(scale), 14), extra)


class _Shapes2D:
    """Spaces and evaluators shared by translated copies of a polygon."""

    def __init__(self, config: StudyConfig) -> None:
        self.config = config
        self.spaces: dict[tuple, Space2D] = {}
        self.evaluators: dict[tuple, VirtualEvaluator] = {}
        self.matrices: dict[tuple, dict[str, FloatArray]] = {}

    def lookup(self, polygon: PolygonGeom) -> tuple[tuple, Space2D, FloatArray]:
        key = _shape_key(polygon.vertices)
        if key not in self.spaces:
            ref = PolygonGeom(polygon.vertices - polygon.vertices[0])
            c = self.config
            self.spaces[key] = Space2D(ref, c.k, c.family, c.variant)  # type: ignore[arg-type]
        return key, self.spaces[key], polygon.vertices[0]

    def evaluator(self, key: tuple, r: int) -> VirtualEvaluator:
        ekey = (key, r)
        if ekey not in self.evaluators:
            self.evaluators[ekey] = build_evaluator(self.spaces[key], r, self.config.oracle_q)
        return self.evaluators[ekey]

    def forms(self, key: tuple) -> dict[str, FloatArray]:
        if key not in self.matrices:
            space = self.spaces[key]
            stab = stabilization2d(space)
            self.matrices[key] = {"stab": stab, "mass": discrete_mass2d(space, stab)}
        return self.matrices[key]


class _Shapes3D:
    """Spaces shared by translated copies of a polyhedral cell."""

    def __init__(self, config: StudyConfig) -> None:
        self.config = config
        self.spaces: dict[tuple, Space3D] = {}

    def lookup(self, mesh: Mesh, cell: int) -> tuple[tuple, Space3D, FloatArray]:
        faces = [mesh.faces[f] for f in mesh.cells[cell]]
        ids = np.unique(np.concatenate(faces))  # sorted, so edge orientations are preserved
        local = {int(g): i for i, g in enumerate(ids)}
        loops = tuple(tuple(local[int(v)] for v in loop) for loop in faces)
        signs = tuple(int(s) for s in mesh.cell_face_signs[cell])
        verts = mesh.vertices[ids]
        key = _shape_key(verts, (loops, signs))
        if key not in self.spaces:
            sub = Mesh(
                3,
                verts - verts[0],
                tuple(np.array(lp, dtype=np.int64) for lp in loops),
                (np.arange(len(loops), dtype=np.int64),),
                (np.array(signs, dtype=np.int64),),
            )
            c = self.config
            self.spaces[key] = Space3D(sub, 0, c.k, c.family, c.variant)  # type: ignore[arg-type]
        return key, self.spaces[key], verts[0]


# ---------------------------------------------------------------------------
# studies
# ---------------------------------------------------------------------------


def _l2_sq(frame: CellFrame, degree: int, func: Callable[[FloatArray], FloatArray]) -> float:
    rule = frame.quad(degree)
    vals = func(rule.points)
    if vals.ndim == 1:
        return float(rule.weights @ vals**2)
    return float(rule.weights @ np.sum(vals**2, axis=1))


def _assumption_row(mesh: Mesh, config: StudyConfig, table: ErrorTable, level: int) -> float:
    report = validate(mesh)
    needs_mc = config.variant == "serendipity"
    if not report.m:
        table.flags.append(f"level {level}: mesh assumption (M) fails")
    if needs_mc and not report.mc:
        table.flags.append(f"level {level}: convexity assumption (MC) fails")
    return report.min_ratio


def _cell_errors_2d(
    space: Space2D, ev: VirtualEvaluator, f: VectorField, qdeg: int
) -> tuple[FloatArray, tuple[float, float, float]]:
    k = space.k
    d = eval_dofs(space, f, qdeg)
    l2 = virtual_error(ev, d, f) ** 2
    dp = diff_poly(space, d)
    ref_diff = f.div if space.family == "face" else f.rot
    diff = _l2_sq(space.frame, qdeg + k, lambda x: ref_diff(x) - dp(x))
    proj = l2_projection2d(space, d, k)
    pe = _l2_sq(space.frame, qdeg + k, lambda x: f(x) - proj(x))
    return d, (l2, diff, pe)


def _oracle_self_error(shapes: _Shapes2D, mesh: Mesh, base: VectorField, r: int, qdeg: int) -> float:
    """Root-sum-square of ||v_r - v_(r+1)|| over the cells, times 2 (Richardson, order one)."""
    total = 0.0
    for c in range(mesh.n_cells):
        key, space, shift = shapes.lookup(mesh.face_polygon(c))
        f = _shifted(base, shift)
        d = eval_dofs(space, f, qdeg)
        fine = shapes.evaluator(key, r + 1)
        pts, w, vmat = fine.quadrature_data
        diff = np.einsum("ncd,d->nc", vmat, d) - eval_virtual(shapes.evaluator(key, r), d, pts)
        total += float(w @ np.sum(diff**2, axis=1))
    return 2.0 * math.sqrt(total)


def _convergence_2d(config: StudyConfig, table: ErrorTable) -> None:
    base = make_field(config)
    qdeg = config.quad_degree or 2 * config.k + 8
    shapes = _Shapes2D(config)
    r = config.oracle_r
    for level in range(config.levels):
        mesh = generate_mesh(config.mesh, level, config.seed)
        while True:
            sums = np.zeros(3)
            for c in range(mesh.n_cells):
                key, space, shift = shapes.lookup(mesh.face_polygon(c))
                _, errs = _cell_errors_2d(space, shapes.evaluator(key, r), _shifted(base, shift), qdeg)
                sums += errs
            l2, diff, proj = np.sqrt(sums)
            if level > 0:
                break
            gate = _gate_check(config, shapes, mesh, base, r, qdeg, l2, table)
            if gate or r >= config.oracle_max_r:
                break
            r += 1
        table.oracle_r = r
        row = ErrorRow(level, mesh.h_max, mesh.n_cells, float(l2), math.nan, float(diff), math.nan, float(proj))
        row.assumption_min_ratio = _assumption_row(mesh, config, table, level)
        table.rows.append(row)
        table.extras.append({"level": level, "oracle_r": r})


def _gate_check(
    config: StudyConfig, shapes: _Shapes2D, mesh: Mesh, base: VectorField, r: int, qdeg: int, l2: float, table: ErrorTable
) -> bool:
    if l2 <= 1e-10:
        table.flags.append("oracle gate skipped: interpolation error at round-off level")
        return True
    est = _oracle_self_error(shapes, mesh, base, r, qdeg)
    ok = est <= config.oracle_gate * l2
    table.extras.append({"oracle_gate": {"r": r, "self_error": est, "vem_error": l2, "ok": ok}})
    if not ok and r >= config.oracle_max_r:
        table.flags.append(f"oracle gate failed at r={r}: self error {est:.3e} vs VEM error {l2:.3e}")
    return ok


def _convergence_3d(config: StudyConfig, table: ErrorTable) -> None:
    base = make_field(config)
    k = config.k
    qdeg = config.quad_degree or 2 * k + 8
    shapes = _Shapes3D(config)
    for level in range(config.levels):
        mesh = generate_mesh(config.mesh, level, config.seed)
        sums = np.zeros(2)
        for c in range(mesh.n_cells):
            _, space, shift = shapes.lookup(mesh, c)
            f = _shifted(base, shift)
            d = eval_dofs3d(space, f, qdeg)
            if space.family == "face":
                dp = div_poly3d(space, d)
                diff = _l2_sq(space.frame, qdeg + k, lambda x: f.div(x) - dp(x))
                proj = l2_projection3d(space, d, k + 1)
            else:
                comp = space.face_companion
                cp = l2_projection3d(comp, curl_to_face_dofs(space, d), k + 1)
                diff = _l2_sq(space.frame, qdeg + k, lambda x: f.curl(x) - cp(x))
                proj = l2_projection3d(space, d, k)
            pe = _l2_sq(space.frame, qdeg + k, lambda x: f(x) - proj(x))
            sums += (diff, pe)
        diff, proj = np.sqrt(sums)
        row = ErrorRow(level, mesh.h_max, mesh.n_cells, diff_err=float(diff), proj_surrogate=float(proj))
        row.assumption_min_ratio = _assumption_row(mesh, config, table, level)
        table.rows.append(row)


def dof_scaling_2d(space: Space2D) -> FloatArray:
    """Natural size of each DoF for a function of unit magnitude on the cell."""
    h = space.h
    out = np.empty(space.dim)
    for i, desc in enumerate(space.layout):
        if isinstance(desc, EdgeMoment):
            out[i] = space.polygon.edge_lengths[desc.edge]
        elif isinstance(desc, InteriorXMoment):
            out[i] = h**3
        else:
            out[i] = h
    return out


def _stability_2d(config: StudyConfig, table: ErrorTable) -> None:
    shapes = _Shapes2D(config)
    params = TriNormParams(config.gamma, config.gamma_hat)
    r = config.oracle_r
    for level in range(config.levels):
        mesh = generate_mesh(config.mesh, level, config.seed)
        rng = np.random.default_rng(config.seed + 7919 * level)
        stab, mass, norm = [], [], []
        poly_defect = 0.0
        for i in range(config.samples):
            c = int(rng.integers(mesh.n_cells))
            key, space, _ = shapes.lookup(mesh.face_polygon(c))
            forms = shapes.forms(key)
            gram = shapes.evaluator(key, r).gram
            if i == 0:
                # the constant field (1, 0) as a reference probe
                d = space.poly_dof_matrix[:, 0].copy()
            else:
                d = rng.standard_normal(space.dim) * dof_scaling_2d(space)
            nrm = float(d @ gram @ d)
            stab.append(float(d @ forms["stab"] @ d) / nrm)
            mass.append(float(d @ forms["mass"] @ d) / nrm)
            norm.append(tri_norm(space, d, params) / math.sqrt(nrm))
            # polynomial consistency of the discrete mass
            coeffs = rng.standard_normal(2 * dim_poly(space.k, 2))
            dp = space.poly_dof_matrix @ coeffs
            exact = float(coeffs @ space.vector_gram(space.k) @ coeffs)
            poly_defect = max(poly_defect, abs(float(dp @ forms["mass"] @ dp) - exact) / exact)
        row = ErrorRow(level, mesh.h_max, mesh.n_cells, stab_ratio_min=min(stab), stab_ratio_max=max(stab))
        row.assumption_min_ratio = _assumption_row(mesh, config, table, level)
        table.rows.append(row)
        table.extras.append(
            {
                "level": level,
                "mass_ratio": [min(mass), max(mass)],
                "tri_norm_ratio": [min(norm), max(norm)],
                "mass_poly_defect": poly_defect,
            }
        )
    table.oracle_r = r


def _stability_3d(config: StudyConfig, table: ErrorTable) -> None:
    shapes = _Shapes3D(config)
    for level in range(config.levels):
        mesh = generate_mesh(config.mesh, level, config.seed)
        rng = np.random.default_rng(config.seed + 7919 * level)
        min_stab_eig = min_mass_eig = math.inf
        forms: dict[tuple, tuple[FloatArray, FloatArray]] = {}
        cells = []
        for c in range(mesh.n_cells):
            key, space, _ = shapes.lookup(mesh, c)
            cells.append(key)
            if key in forms:
                continue
            s, m = stabilization3d(space), discrete_mass3d(space)
            forms[key] = (s, m)
            es, em = np.linalg.eigvalsh(s), np.linalg.eigvalsh(m)
            min_stab_eig = min(min_stab_eig, es[0] / es[-1])
            min_mass_eig = min(min_mass_eig, em[0] / em[-1])
        stab, mass = [], []
        for _ in range(config.samples):
            key = cells[int(rng.integers(mesh.n_cells))]
            space = shapes.spaces[key]
            s, m = forms[key]
            coeffs = rng.standard_normal(3 * dim_poly(space.poly_degree, 3))
            d = space.poly_dof_matrix @ coeffs
            exact = float(coeffs @ space.vector_gram(space.poly_degree) @ coeffs)
            stab.append(float(d @ s @ d) / exact)
            mass.append(float(d @ m @ d) / exact)
        row = ErrorRow(level, mesh.h_max, mesh.n_cells, stab_ratio_min=min(stab), stab_ratio_max=max(stab))
        row.assumption_min_ratio = _assumption_row(mesh, config, table, level)
        table.rows.append(row)
        table.extras.append(
            {
                "level": level,
                "mass_ratio": [min(mass), max(mass)],
                "stab_min_rel_eig": min_stab_eig,
                "mass_min_rel_eig": min_mass_eig,
                "stab_positive_definite": bool(min_stab_eig > PD_TOL),
                "mass_positive_definite": bool(min_mass_eig > PD_TOL),
            }
        )
        if min_stab_eig <= PD_TOL:
            table.flags.append(f"level {level}: stabilization matrix is singular on some cell")
        if min_mass_eig <= PD_TOL:
            table.flags.append(f"level {level}: discrete mass matrix is singular on some cell")


def run_convergence(config: StudyConfig) -> ErrorTable:
    """Interpolation errors and observed rates over the refinement sequence."""
    config.validate()
    table = ErrorTable("convergence", config)
    start = time.perf_counter()
    if config.dim == 2:
        _convergence_2d(config, table)
    else:
        _convergence_3d(config, table)
    table.fill_rates()
    table.wall_clock = time.perf_counter() - start
    return table


def run_stability(config: StudyConfig) -> ErrorTable:
    """Sampled stabilization and discrete-mass ratios over the refinement sequence."""
    config.validate()
    table = ErrorTable("stability", config)
    start = time.perf_counter()
    if config.dim == 2:
        _stability_2d(config, table)
    else:
        _stability_3d(config, table)
    table.wall_clock = time.perf_counter() - start
    return table


# ---------------------------------------------------------------------------
# acceptance thresholds
# ---------------------------------------------------------------------------


def expected_rates(config: StudyConfig) -> dict[str, float]:
    """Minimum observed rates between the two finest levels for smooth fields."""
    k = config.k
    if config.dim == 2:
        return {"rate_L2": k + 1 - 0.25, "rate_diff": k - 0.25}
    if config.family == "face":
        return {"rate_diff": k - 0.25, "rate_proj": k - 0.25}
    return {"rate_proj": k + 1 - 0.3, "rate_diff": k - 0.3}


def check_table(table: ErrorTable) -> list[str]:
    """Failures of a table against its acceptance thresholds (empty when it passes)."""
    failures = [f for f in table.flags if "gate failed" in f or "singular" in f]
    if table.mode == "convergence":
        if table.config.field in ("trig", "random_trig"):
            for name, threshold in expected_rates(table.config).items():
                rate = table.final_rate(name)
                if not rate >= threshold:
                    failures.append(f"{name} = {rate:.3f} < {threshold:.3f}")
    elif len(table.rows) > 1:
        spread = table.band_spread()
        if not spread <= 10.0:
            failures.append(f"stability band spread {spread:.2f} > 10")
        defect = max((e.get("mass_poly_defect", 0.0) for e in table.extras), default=0.0)
        if not defect <= MASS_TOL:
            failures.append(f"discrete mass misses polynomials by {defect:.2e}")
    return failures
