from __future__ import annotations

import os
import subprocess
import sys

import numpy as np
import pytest

from vemspaces import _kernels as K
from vemspaces.polycalc import exponents

pytestmark = pytest.mark.skipif(not K._HAVE_NUMBA, reason="numba not importable")


def test_vandermonde_backends_agree(rng):
    xi = rng.uniform(-1, 1, (50, 3))
    exps = exponents(4, 3)
    assert np.allclose(K.vandermonde_numba(xi, exps), K.vandermonde_numpy(xi, exps), rtol=1e-13, atol=0)


def test_element_gram_backends_agree(rng):
    left = rng.standard_normal((7, 12, 5, 2))
    right = rng.standard_normal((7, 12, 4, 2))
    w = rng.uniform(0, 1, (7, 12))
    assert np.allclose(K.element_gram_numba(left, right, w), K.element_gram_numpy(left, right, w), rtol=1e-12)


def test_locate_points_backends_agree(rng):
    tris = np.array([[[0, 0], [1, 0], [0, 1]], [[1, 0], [1, 1], [0, 1]]], dtype=float)
    pts = rng.uniform(-0.2, 1.2, (200, 2))
    fast, slow = K.locate_points_numba(pts, tris), K.locate_points_numpy(pts, tris)
    assert np.array_equal(fast, slow)
    inside = (pts >= 0).all(axis=1) & (pts <= 1).all(axis=1)
    assert np.all((fast >= 0) == inside)


def test_env_flag_selects_numpy_backend():
    env = dict(os.environ, VEMSPACES_DISABLE_NUMBA="1")
    out = subprocess.run(
        [sys.executable, "-c", "from vemspaces._kernels import backend_name; print(backend_name())"],
        env=env,
        capture_output=True,
        text=True,
        check=True,
    )
    assert out.stdout.strip() == "numpy"
