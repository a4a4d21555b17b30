import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from endolab.cones import (
    SampledCurve,
    certification_grid,
    cone_margin,
    default_seed_curve,
    cone_bound_residual,
    expansion_margin,
    growth_run,
    growth_steps_bound,
    iterate_curve,
    linear_expansion_ratio,
    search_params,
)
from endolab.maps import perturb_map
from endolab.params import MapParams
from endolab.torus import GridSpec


@given(st.floats(0.01, 3.0))
def test_linear_cone_margin_closed_form(a0):
    from endolab.maps import build_A

    cert = cone_margin(build_A(), a0, GridSpec(16))
    # (1, a0) -> (8, 2 a0): image slope a0 / 4
    assert cert.margin == pytest.approx(0.75 * a0, rel=1e-12)


@given(st.floats(0.0, 10.0))
def test_linear_expansion_ratio_against_brute_force(a0):
    s = np.linspace(-a0, a0, 4001)
    brute = np.min(np.hypot(8.0, 2.0 * s) / np.hypot(1.0, s))
    assert linear_expansion_ratio(a0) == pytest.approx(brute, rel=1e-9)


def test_expansion_on_A_matches_probe_minimum(A):
    a0 = 1.0
    cert = expansion_margin(A, a0, GridSpec(8))
    assert cert.details["min_ratio"] == pytest.approx(linear_expansion_ratio(a0), rel=1e-12)


@given(st.floats(1.0, 1e4), st.floats(1e-6, 1e-2), st.floats(0.01, 2.0))
def test_cone_bound_residual_formula(M, delta, a0):
    assert cone_bound_residual(M, delta, a0) == pytest.approx((M * delta - 2 * a0) / 8, rel=1e-9, abs=1e-15)


def test_search_params_certifies_default_family():
    sr = search_params(0.01, 2.0, n=256)
    assert sr.passed
    assert sr.a0 == 1.0
    assert sr.cone_bound_residual < 0
    assert sr.delta0 == pytest.approx(1.0 / sr.M, rel=1e-12) or sr.halvings > 0


def test_search_params_rejects_bad_a():
    with pytest.raises(ValueError):
        search_params(0.01, 0.0)


@pytest.mark.parametrize("name", ["f", "h"])
def test_cones_certified_on_construction(con, params, name):
    m = getattr(con, name)
    grid = certification_grid(params, 256)
    assert cone_margin(m, params.a0, grid).passed
    assert expansion_margin(m, params.a0, grid).passed


@pytest.mark.parametrize("seed", range(3))
def test_cones_survive_small_perturbations(con, params, seed):
    m = perturb_map(con.h, 1e-3, seed)
    grid = certification_grid(params, 256)
    assert cone_margin(m, params.a0, grid).passed
    assert expansion_margin(m, params.a0, grid).passed


def test_narrow_cone_fails_for_f(con, params):
    # the bump tilts horizontal vectors by up to |psi' phi| / 8, more than 0.05
    assert not cone_margin(con.f, 0.05, certification_grid(params, 256)).passed


def test_horizontal_segment_scales_by_eight_under_A(A):
    seg = SampledCurve.segment((0.3, 0.7), length=1e-3, step=1e-5)
    img = iterate_curve(A, seg, a0=0.5)
    assert img.diameter == pytest.approx(8e-3, rel=1e-12)
    assert img.meta["outside_cone"] == 0 and img.meta["reversals"] == 0


def test_segment_has_requested_sup_diameter():
    seg = SampledCurve.segment((0.1, 0.1), direction=(1.0, 0.3), length=2e-3)
    assert seg.diameter == pytest.approx(2e-3, rel=1e-12)


def test_curve_rejects_large_lift_jumps():
    with pytest.raises(ValueError):
        SampledCurve(np.array([[0.0, 0.0], [0.6, 0.0]]), 0.6)


@given(st.floats(1e-5, 1e-2), st.floats(0.1, 1.0))
def test_growth_bound_formula(d0, target):
    if d0 < target:
        n = growth_steps_bound(d0, target)
        assert d0 * 1.2**n >= target * (1 - 1e-12)
        assert d0 * 1.2 ** (n - 1) < target


def test_growth_from_default_seed(con, params):
    seed = default_seed_curve(params, 1e-3)
    rep = growth_run(con.h, seed, params.a0, params=params)
    assert rep.certificate.passed
    assert rep.bound == 31
    assert rep.steps <= rep.bound
    assert rep.diameters[-1] >= 8 * params.r
    assert rep.diameters[0] == pytest.approx(1e-3, rel=1e-9)
    assert all(r >= 1.2 for r in rep.ratios)


def test_seed_crosses_S_transversally(params):
    from endolab.critical import critical_residual

    seed = default_seed_curve(params)
    G, _, _ = critical_residual(params, seed.points[:, 0], seed.points[:, 1])
    assert np.sum(np.sign(G[1:]) != np.sign(G[:-1])) >= 1
    assert math.isclose(seed.points[0, 1], params.y0 - 2 * params.eta)
