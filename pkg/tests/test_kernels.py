import os
import subprocess
import sys

import numpy as np
import pytest

from endolab import kernels
from endolab.maps import perturb_map

needs_numba = pytest.mark.skipif(not kernels.HAVE_NUMBA, reason="numba not installed")


@pytest.fixture
def backend():
    before = kernels.get_backend()
    yield kernels.set_backend
    kernels.set_backend(before)


def _maps(A, con, destroyers):
    return {"A": A, "f": con.f, "h": con.h, "g": destroyers[2e-4], "pert": perturb_map(con.h, 1e-3, 0)}


def _points(params, n=20000, seed=1):
    rng = np.random.default_rng(seed)
    x, y = rng.random(n), rng.random(n)
    # half the points inside the bump support where the kernels do real work
    x[: n // 2] = rng.uniform(*params.psi.support, n // 2)
    y[: n // 2] = rng.uniform(*params.phi.support, n // 2)
    return x, y


@needs_numba
@pytest.mark.parametrize("name", ["A", "f", "h", "g", "pert"])
def test_backends_agree_on_lifts(backend, A, con, destroyers, params, name):
    m = _maps(A, con, destroyers)[name]
    x, y = _points(params)
    backend("numpy")
    ref = kernels.lift_points(m, x, y)
    backend("numba")
    got = kernels.lift_points(m, x, y)
    assert np.max(np.abs(ref - got)) <= 1e-13


@needs_numba
def test_destroyer_strip_agreement(backend, destroyers):
    from endolab.lab import sample_strip

    g = destroyers[1e-4]
    x, y, _ = sample_strip(g, 5000, seed=2)
    backend("numpy")
    ref = kernels.lift_points(g, x, y)
    backend("numba")
    assert np.max(np.abs(ref - kernels.lift_points(g, x, y))) <= 1e-13


@needs_numba
@pytest.mark.parametrize("name", ["f", "h"])
def test_backends_agree_on_short_orbits(backend, A, con, destroyers, params, name):
    m = _maps(A, con, destroyers)[name]
    x, y = _points(params, 5000)
    backend("numpy")
    rx, ry = kernels.iterate_points(m, x, y, 3)
    backend("numba")
    gx, gy = kernels.iterate_points(m, x, y, 3)
    d = np.abs(np.stack([rx - gx, ry - gy]))
    assert np.max(np.minimum(d, 1 - d)) <= 1e-9


@needs_numba
def test_occupancy_identical_for_linear_map(backend, A):
    rng = np.random.default_rng(0)
    x, y = rng.random(5000), rng.random(5000)
    backend("numpy")
    ref = kernels.iterate_bin(A, x, y, 4, 64)
    backend("numba")
    got = kernels.iterate_bin(A, x, y, 4, 64)
    assert ref.shape == (5, 64, 64) and ref.dtype == bool
    assert np.array_equal(ref, got)


def test_iterate_points_stays_on_torus(A, con):
    rng = np.random.default_rng(0)
    x, y = kernels.iterate_points(con.h, rng.random(1000), rng.random(1000), 5)
    assert np.all((0 <= x) & (x < 1) & (0 <= y) & (y < 1))


def test_set_backend_validates(backend):
    with pytest.raises(ValueError):
        backend("cuda")


def test_env_flag_selects_numpy():
    env = dict(os.environ, ENDOLAB_DISABLE_NUMBA="1")
    out = subprocess.run(
        [sys.executable, "-c", "from endolab import kernels; print(kernels.get_backend())"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == "numpy"
    env["ENDOLAB_DISABLE_NUMBA"] = "0"
    out = subprocess.run(
        [sys.executable, "-c", "from endolab import kernels; print(kernels.get_backend())"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == ("numba" if kernels.HAVE_NUMBA else "numpy")
