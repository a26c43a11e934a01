"""Command-line entry point for studies, mesh checks and rank tables."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .harness import ConfigError, ErrorTable, StudyConfig, check_table, run_convergence, run_stability
from .meshgeo import MeshError, PolygonGeom, generate_mesh, prism_mesh, tetra_mesh, unit_cube_mesh, validate, write_mesh
from .oracle2d import unisolvence_report
from .polycalc import dim_poly
from .vem2d import SerendipityError, Space2D
from .vem3d import Space3D

EXIT_OK, EXIT_INVALID, EXIT_ASSERT = 0, 1, 2

SHAPES_2D = {
    "triangle": [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
    "square": [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
    "hexagon": [[np.cos(t), np.sin(t)] for t in np.arange(6) * np.pi / 3],
}


class _Parser(argparse.ArgumentParser):
    """Argument parser that raises instead of exiting, so bad input maps to exit code 1."""

    def error(self, message: str) -> None:  # type: ignore[override]
        raise ConfigError(message)


def _study_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dim", type=int)
    p.add_argument("--family", choices=("edge", "face"))
    p.add_argument("--variant", choices=("standard", "serendipity"))
    p.add_argument("--k", type=int)
    p.add_argument("--mesh")
    p.add_argument("--levels", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--field")
    p.add_argument("--alpha", type=float, help="exponent of the singular field")
    p.add_argument("--gamma", type=float)
    p.add_argument("--gamma-hat", dest="gamma_hat", type=float)
    p.add_argument("--samples", type=int)
    p.add_argument("--oracle-r", dest="oracle_r", type=int)
    p.add_argument("--config", help="JSON file with StudyConfig keys; flags override it")
    p.add_argument("--out", help="output path (.csv writes a JSON sibling, .json writes JSON only)")
    p.add_argument("--assert", dest="check", action="store_true", help="exit 2 if acceptance thresholds fail")
    p.add_argument("--no-timestamp", dest="timestamp", action="store_false")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="vemspaces", description="Edge and face virtual element studies")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, text in (("convergence", "interpolation rates"), ("stability", "stabilization bands")):
        _study_flags(sub.add_parser(name, help=text))
    mc = sub.add_parser("mesh-check", help="mesh assumption report per level")
    mc.add_argument("--mesh", required=True)
    mc.add_argument("--levels", type=int, default=3)
    mc.add_argument("--seed", type=int, default=0)
    mc.add_argument("--out")
    mc.add_argument("--assert", dest="check", action="store_true")
    un = sub.add_parser("unisolvence", help="DoF counts and ranks on reference cells")
    un.add_argument("--dim", type=int, default=2)
    un.add_argument("--k", type=int, default=1)
    un.add_argument("--out")
    un.add_argument("--assert", dest="check", action="store_true")
    gm = sub.add_parser("gen-mesh", help="write generated meshes as JSON")
    gm.add_argument("--mesh", required=True)
    gm.add_argument("--levels", type=int, default=1)
    gm.add_argument("--seed", type=int, default=0)
    gm.add_argument("--out", required=True)
    return parser


def _load_config(args: argparse.Namespace) -> StudyConfig:
    data: dict[str, Any] = {}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
    keys = ("dim", "family", "variant", "k", "mesh", "levels", "seed", "field", "alpha", "gamma", "gamma_hat", "samples", "oracle_r")
    for key in keys:
        value = getattr(args, key)
        if value is not None:
            data[key] = value
    return StudyConfig.from_dict(data)


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _run_study(args: argparse.Namespace) -> int:
    config = _load_config(args)
    table: ErrorTable = run_convergence(config) if args.command == "convergence" else run_stability(config)
    if args.out:
        table.write(args.out, args.timestamp)
    else:
        sys.stdout.write(table.to_csv(args.timestamp))
    for flag in table.flags:
        print(f"flag: {flag}", file=sys.stderr)
    if args.check:
        failures = check_table(table)
        for f in failures:
            print(f"FAIL: {f}", file=sys.stderr)
        return EXIT_ASSERT if failures else EXIT_OK
    return EXIT_OK


def _mesh_check(args: argparse.Namespace) -> int:
    rows = []
    for level in range(args.levels):
        mesh = generate_mesh(args.mesh, level, args.seed)
        summary = {"level": level, "n_cells": mesh.n_cells, "h_max": mesh.h_max, **validate(mesh).summary()}
        rows.append(summary)
    text = "".join(json.dumps(r, sort_keys=True) + "\n" for r in rows)
    _emit(text, args.out)
    ok = all(r["M_i"] and r["M_ii"] and r["M_iii"] and r["MC"] for r in rows)
    print(f"{args.mesh}: (M) and (MC) {'pass' if ok else 'FAIL'} on {args.levels} level(s)", file=sys.stderr)
    return EXIT_ASSERT if args.check and not ok else EXIT_OK


def expected_dim_2d(n_edges: int, k: int, variant: str, beta: int) -> int:
    if variant == "standard":
        return n_edges * (k + 1) + dim_poly(k, 2) + dim_poly(k - 1, 2) - 1
    return n_edges * (k + 1) + dim_poly(k - 1, 2) + (dim_poly(beta, 2) if beta >= 0 else 0) - 1


def expected_dim_3d(space: Space3D) -> int:
    k = space.k
    if space.family == "face":
        return len(space.faces) * dim_poly(k - 1, 2) + 3 * dim_poly(k, 3) - 1
    n_edges = len(space.edges)
    per_face = sum(sp.n_x + sp.n_diff for sp in space.face_spaces)
    return n_edges * (k + 1) + per_face + 3 * dim_poly(k, 3)


def _unisolvence(args: argparse.Namespace) -> int:
    if args.k < 1:
        raise ConfigError("k must be at least 1")
    rows: list[dict[str, Any]] = []
    if args.dim == 2:
        for name, verts in SHAPES_2D.items():
            poly = PolygonGeom(np.array(verts))
            for family in ("edge", "face"):
                for variant in ("standard", "serendipity"):
                    space = Space2D(poly, args.k, family, variant)
                    rep = unisolvence_report(space, full=False)
                    rows.append(
                        {
                            "shape": name,
                            "family": family,
                            "variant": variant,
                            "dim": space.dim,
                            "formula": expected_dim_2d(poly.n_edges, args.k, variant, space.beta),
                            "poly_rank": rep.poly_rank,
                            "poly_cols": rep.poly_columns,
                            "pis_rank": rep.pis_rank,
                            "pis_rows": rep.pis_rows,
                        }
                    )
    elif args.dim == 3:
        for name, mesh in (("cube", unit_cube_mesh()), ("prism", prism_mesh()), ("tetrahedron", tetra_mesh())):
            for family, variant in (("face", "standard"), ("edge", "standard"), ("edge", "serendipity")):
                try:
                    space = Space3D(mesh, 0, args.k, family, variant)  # type: ignore[arg-type]
                except SerendipityError:
                    continue
                mat = space.poly_dof_matrix
                sv = np.linalg.svd(mat / np.linalg.norm(mat, axis=0), compute_uv=False)
                rows.append(
                    {
                        "shape": name,
                        "family": family,
                        "variant": variant,
                        "dim": space.dim,
                        "formula": expected_dim_3d(space),
                        "poly_rank": int(np.sum(sv > 1e-10 * sv[0])),
                        "poly_cols": mat.shape[1],
                        "pis_rank": None,
                        "pis_rows": None,
                    }
                )
    else:
        raise ConfigError("dim must be 2 or 3")
    header = list(rows[0])
    lines = [",".join(header)] + [",".join("" if r[h] is None else str(r[h]) for h in header) for r in rows]
    _emit("\n".join(lines) + "\n", args.out)
    ok = all(r["dim"] == r["formula"] and r["poly_rank"] == r["poly_cols"] for r in rows)
    return EXIT_ASSERT if args.check and not ok else EXIT_OK


def _gen_mesh(args: argparse.Namespace) -> int:
    out = Path(args.out)
    for level in range(args.levels):
        mesh = generate_mesh(args.mesh, level, args.seed)
        path = out if args.levels == 1 else out.with_name(f"{out.stem}_L{level}{out.suffix or '.json'}")
        path.write_text(json.dumps(write_mesh(mesh)))
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command in ("convergence", "stability"):
            return _run_study(args)
        if args.command == "mesh-check":
            return _mesh_check(args)
        if args.command == "unisolvence":
            return _unisolvence(args)
        return _gen_mesh(args)
    except (ConfigError, MeshError, SerendipityError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


def cli(argv: Sequence[str] | None = None) -> int:
    return main(argv)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
