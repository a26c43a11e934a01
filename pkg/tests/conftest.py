from __future__ import annotations

import numpy as np
import pytest

from vemspaces.meshgeo import PolygonGeom, prism_mesh, tetra_mesh, unit_cube_mesh

UNIT_SQUARE = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
TRIANGLE = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
HEXAGON = np.array([[np.cos(t), np.sin(t)] for t in np.arange(6) * np.pi / 3])
CENTERED_SQUARE = UNIT_SQUARE - 0.5

POLYGONS = {"triangle": TRIANGLE, "square": UNIT_SQUARE, "hexagon": HEXAGON}


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20261015)


@pytest.fixture(params=sorted(POLYGONS))
def polygon(request) -> PolygonGeom:
    return PolygonGeom(POLYGONS[request.param])


@pytest.fixture
def square() -> PolygonGeom:
    return PolygonGeom(UNIT_SQUARE)


@pytest.fixture(scope="session")
def cube_frame():
    return unit_cube_mesh().cell_frame(0)


def solid_meshes():
    return {"cube": unit_cube_mesh(), "prism": prism_mesh(), "tetrahedron": tetra_mesh()}


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    import sys

    module = sys.modules.get("tests.test_acceptance")
    if module is None or not module.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(module.RESULTS):
        terminalreporter.write_line(module.RESULTS[n])
