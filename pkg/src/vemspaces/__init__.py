"""Edge and face virtual element spaces on polygons and polyhedra."""

from .harness import StudyConfig, run_convergence, run_stability
from .meshgeo import Mesh, PolygonGeom, generate_mesh, parse_mesh, validate
from .oracle2d import build_evaluator, eval_virtual, virtual_error, virtual_norm
from .vem2d import Space2D, build_space2d, eval_dofs
from .vem3d import Space3D, build_space3d, eval_dofs3d

__all__ = [
    "Mesh",
    "PolygonGeom",
    "Space2D",
    "Space3D",
    "StudyConfig",
    "build_evaluator",
    "build_space2d",
    "build_space3d",
    "eval_dofs",
    "eval_dofs3d",
    "eval_virtual",
    "generate_mesh",
    "parse_mesh",
    "run_convergence",
    "run_stability",
    "validate",
    "virtual_error",
    "virtual_norm",
]
