import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from endolab.critical import (
    ANGLE_THRESHOLD,
    CriticalError,
    DetLevel,
    classify,
    critical_residual,
    default_critical_grid,
    find_non_fold_points,
    gamma1,
    hausdorff,
    sample_critical_set,
    trace_graph,
    transversality_to_rank1,
)
from endolab.params import MapParams

LOG2 = math.log(2.0)


def non_fold_oracle(theta, center=1 / 16):
    # psi(x) = 2  <=>  u^4 + L u^2 - L = 0 with u = (x - c) / theta
    u = math.sqrt((-LOG2 + math.sqrt(LOG2**2 + 4 * LOG2)) / 2)
    return center - theta * u, center + theta * u


@pytest.fixture(scope="module")
def extraction(params):
    return sample_critical_set(params, default_critical_grid(params, 512))


def test_S_is_one_closed_oval(extraction, params):
    assert len(extraction.curves) == 1
    curve = extraction.curves[0]
    assert curve.closed and not extraction.failures
    xl, xh = params.psi.support
    yl, yh = params.phi.support
    p = curve.points
    assert xl < p[:, 0].min() and p[:, 0].max() < xh
    assert yl < p[:, 1].min() and p[:, 1].max() < yh


def test_samples_solve_the_residual(extraction, params):
    p = extraction.points
    G, _, _ = critical_residual(params, p[:, 0], p[:, 1])
    assert np.max(np.abs(G)) < 1e-10


def test_non_fold_points_match_closed_form(params, extraction):
    rep = find_non_fold_points(params, extraction)
    x0, x1 = non_fold_oracle(params.theta)
    got = sorted(p[0] for p in rep.points)
    assert got[0] == pytest.approx(x0, abs=1e-14)
    assert got[1] == pytest.approx(x1, abs=1e-14)
    for p in rep.points:
        assert p[1] == pytest.approx(0.25 + params.delta / 8, abs=1e-15)


@pytest.mark.parametrize("theta", [0.005, 0.0075, 0.01])
def test_non_fold_oracle_across_theta(theta):
    p = MapParams(theta=theta, delta=0.004)
    rep = find_non_fold_points(p, sample_critical_set(p, default_critical_grid(p, 256)))
    x0, x1 = non_fold_oracle(theta)
    assert sorted(q[0] for q in rep.points) == pytest.approx([x0, x1], abs=1e-13)


def test_non_fold_points_have_vertical_tangent(params, extraction):
    rep = find_non_fold_points(params, extraction)
    for s in rep.samples:
        assert not s.fold
        assert abs(s.tangent[0]) < 1e-12
    assert rep.certificate().passed


def test_all_other_samples_are_folds(params, extraction):
    rep = find_non_fold_points(params, extraction)
    assert rep.n_checked > 0.8 * len(extraction)
    assert rep.min_angle_off_balls > ANGLE_THRESHOLD


def test_fold_point_at_origin_of_image(params):
    s = classify((1 / 16, 0.25), params)
    assert s.fold and s.transversality_angle == pytest.approx(math.pi / 2, abs=1e-12)


def test_classify_rejects_regular_point(params):
    with pytest.raises(CriticalError):
        classify((0.3, 0.7), params)


def test_det_and_residual_extractions_coincide(params, con, extraction):
    ext_f = sample_critical_set(DetLevel(con.f), default_critical_grid(params, 512))
    assert hausdorff(extraction, ext_f) < 1e-9


def test_hausdorff_properties(extraction):
    assert hausdorff(extraction, extraction) == 0.0


def test_graph_residual_and_derivatives(params):
    g = trace_graph(params)
    xs = np.linspace(*g.window, 777)
    assert np.max(np.abs(g.residual(xs))) < 1e-12
    y, y1, y2 = g.y(xs, order=2)
    h = 1e-7
    fd1 = (g.y(xs + h) - g.y(xs - h)) / (2 * h)
    assert np.allclose(y1, fd1, atol=1e-6)
    _, y1p = g.y(xs + h, order=1)
    _, y1m = g.y(xs - h, order=1)
    assert np.allclose(y2, (y1p - y1m) / (2 * h), rtol=1e-4, atol=1e-3)


def test_graph_passes_through_fold_point(params):
    g = trace_graph(params)
    assert float(g.y(np.array([1 / 16]))[0]) == pytest.approx(0.25, abs=1e-15)
    v, d1, _ = g.c(np.array([1 / 16]), 2)
    assert abs(v[0]) < 1e-15 and abs(d1[0]) < 1e-12


@given(st.floats(0.3, 1.0), st.sampled_from([-1.0, 1.0]))
def test_critical_value_offset_is_flat_at_fold(s, sign):
    p = MapParams()
    g = trace_graph(p)
    c = lambda t: abs(float(g.c(np.array([1 / 16 + sign * t * p.beta]))[0]))
    # halving the distance to the fold divides the offset by at least 2^5
    assert c(s / 2) <= c(s) / 32 + 1e-16


def test_gamma1_fits_budget(con):
    b = con.gamma.bounds()
    assert b["sup"] <= 2 * con.budget.a
    assert b["sup_d1"] <= con.budget.a1
    assert b["sup_d2"] <= con.budget.a2


def test_gamma1_shrinks_window_when_budget_tight(params):
    from endolab.maps import flattening_budget

    g = trace_graph(params, beta=params.beta)
    tight = flattening_budget(params.epsilon / 100, params.r)
    out = gamma1(g, tight)
    assert out.graph.window[1] - out.graph.window[0] <= g.window[1] - g.window[0]


def test_transversality(con):
    assert transversality_to_rank1(con.f).passed
    assert transversality_to_rank1(con.h).passed
