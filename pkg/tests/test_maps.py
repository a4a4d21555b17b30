import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from endolab.checks import IDENTITY, fd_derivatives, near_identity_certificate
from endolab.maps import (
    BudgetError,
    Composite,
    action_matrix,
    build_destroyer,
    build_f,
    ck_distance,
    flattening_budget,
    perturb_map,
    strip_gap_constant,
    trap_strip,
)
from endolab.params import MapParams, ParamError
from endolab.torus import FOLD_CENTER, GridSpec, mat_det, torus_dist, wrap_diff

unit = st.floats(0.0, 1.0, exclude_max=True)


def _support_samples(params, n=400, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.uniform(*params.psi.support, n)
    y = rng.uniform(*params.phi.support, n)
    return x, y


def test_linear_map_values(A):
    L = A.lift([0.5, 0.1], [0.5, 0.3])
    assert np.allclose(L, [[4.0, 1.0], [0.8, 0.6]])
    assert np.allclose(A.evaluate(0.5, 0.5), [[0.0, 0.0]])


def test_f_closed_form(con, params):
    x, y = 1 / 16 + 0.003, 0.2512
    expected_y = 2 * y - float(params.psi(x)) * float(params.phi(y))
    out = con.f.lift([x], [y])[0]
    assert out[0] == 8 * x and out[1] == pytest.approx(expected_y, abs=1e-15)


def test_det_is_eight_times_residual(con, params):
    x, y = _support_samples(params)
    det = mat_det(con.f.jacobian(x, y))
    G = 2 - params.psi(x) * params.phi.d1(y)
    assert np.allclose(det, 8 * G, atol=1e-12)


@given(unit, unit)
def test_f_equals_A_off_the_bump(x, y):
    p = MapParams()
    f = build_f(p)
    inside = p.psi.support[0] < x < p.psi.support[1] and p.phi.support[0] < y < p.phi.support[1]
    if not inside:
        L = f.lift([x], [y])[0]
        assert L[0] == 8 * x and L[1] == 2 * y


@given(unit, unit)
def test_h_equals_f_outside_flattening_support(x, y):
    from endolab.maps import construction

    con = construction(MapParams())
    img = con.f.lift([x], [y])[0]
    X, Y = img
    far = abs(wrap_diff(X - 0.5)) >= con.F.taper.outer or abs(wrap_diff(Y - 0.5)) >= con.F.bump.outer + 2 * con.budget.a
    if far:
        assert np.allclose(con.h.lift([x], [y])[0], img, atol=0, rtol=0)


@pytest.mark.parametrize("which", ["f", "F", "h", "g", "pert"])
def test_jets_match_scaled_finite_differences(con, params, destroyers, which):
    """FD at steps matched to the profile widths; errors must shrink like h^2."""
    m = {"f": con.f, "F": con.F, "h": con.h, "g": destroyers[2e-4], "pert": perturb_map(con.h, 1e-3, 7)}[which]
    if which == "F":
        rng = np.random.default_rng(3)
        x = 0.5 + rng.uniform(-1, 1, 400) * con.F.taper.outer
        y = 0.5 + rng.uniform(-1, 1, 400) * con.F.bump.outer
    elif which == "g":
        from endolab.lab import sample_strip

        x, y, _ = sample_strip(m, 400, seed=3)
        # widen to the transition layer of the collapse
        y = y + np.random.default_rng(4).uniform(-1, 1, 400) * 1.5 * m.eta
    else:
        x, y = _support_samples(params)
    step = {"g": 1e-7, "F": 1e-6}.get(which, 4e-7)
    errs = []
    for h in (step, step / 2):
        eJ, eH = fd_derivatives(m, x, y, h1=h, h2=h)
        errs.append((eJ.max(), eH.max()))
    _, J, H = m.jet(x, y)
    tol_J = 1e-6 * np.abs(J).max() + 1e-8
    tol_H = 1e-4 * np.abs(H).max() + 1e-7
    assert errs[1][0] <= tol_J
    assert errs[1][1] <= tol_H
    # quadratic convergence of the Hessian check rules out a missing term
    assert errs[1][1] < 0.4 * errs[0][1] or errs[1][1] < 1e-3 * tol_H + 1e-8


def test_composite_chain_rule_against_manual_product(con, params):
    x, y = _support_samples(params, 50)
    comp = Composite(con.F, con.f)
    Ji = con.f.jacobian(x, y)
    Li = con.f.lift(x, y)
    Jo = con.F.jacobian(Li[:, 0], Li[:, 1])
    assert np.allclose(comp.jacobian(x, y), Jo @ Ji, atol=1e-12)


def test_perturbation_c2_bound_is_respected(con):
    P = perturb_map(con.h, 1e-3, 11)
    assert P.c2_bound() == pytest.approx(1e-3, rel=1e-12)
    rep = ck_distance(P, con.h, GridSpec(128))
    assert rep.c2 <= 1e-3


def test_perturbations_are_seeded(con):
    a, b = perturb_map(con.h, 1e-3, 1), perturb_map(con.h, 1e-3, 1)
    assert np.array_equal(a.cos_coef, b.cos_coef)
    assert not np.array_equal(a.cos_coef, perturb_map(con.h, 1e-3, 2).cos_coef)


def test_ck_distance_zero_on_self_and_identity(con):
    assert ck_distance(con.h, con.h, GridSpec(64)).c2 == 0.0
    rep = ck_distance(IDENTITY, IDENTITY, GridSpec(8))
    assert rep.c0 == rep.c1 == rep.c2 == 0.0


def test_ck_distance_of_A_and_f_is_bump_size(con, A, params):
    rep = ck_distance(con.f, A, GridSpec(256).with_refinement(GridSpec(256, (*params.psi.support, *params.phi.support))))
    ys = np.linspace(*params.phi.support, 20001)
    sup_bump = 4 * np.max(np.abs(params.phi(ys)))
    assert rep.c0 == pytest.approx(sup_bump, rel=1e-3)


def test_action_matrices(con, A, destroyers):
    for m in (A, con.f, con.h, destroyers[1e-4]):
        assert action_matrix(m).tolist() == [[8, 0], [0, 2]]


def test_flattening_budget_order(params):
    b = flattening_budget(params.epsilon, params.r, params.b)
    assert 0 < b.a < b.a1 < b.a2 < params.epsilon
    with pytest.raises(BudgetError):
        flattening_budget(0.0, params.r)


def test_flattening_offset_fits_budget(con):
    rep = con.F.check_budget()
    for k, v in rep["measured"].items():
        assert v <= rep["limits"][k]


def test_F_is_C2_close_to_identity(con, params):
    assert near_identity_certificate(con.F, params.epsilon, 256).passed


def test_destroyer_collapses_strip_onto_critical_values(con, destroyers):
    g = destroyers[2e-4]
    s = trap_strip(g)
    xs = s["center_x"] + np.linspace(-1, 1, 21) * s["half_width_x"]
    for dy in (-0.9, 0.0, 0.9):
        ys = s["graph"].y(xs) + dy * s["half_width_y"]
        L = g.collapse.lift(xs, ys)
        crit = con.f.lift(xs, s["graph"].y(xs))
        assert np.allclose(L, crit, atol=1e-15)


def test_destroyer_rejects_eta_above_rho(params, con):
    with pytest.raises(ParamError) as exc:
        build_destroyer(params, 2 * con.rho)
    assert exc.value.invariant == "eta < rho"


def test_destroyer_support_inside_ball(destroyers, params):
    g = destroyers[4e-4]
    rng = np.random.default_rng(0)
    pts = rng.random((20000, 2))
    far = torus_dist(pts, FOLD_CENTER) >= params.r
    diff = g.collapse.lift(pts[far, 0], pts[far, 1]) - build_f(params).lift(pts[far, 0], pts[far, 1])
    assert np.max(np.abs(diff)) == 0.0


def test_strip_gap_positive(destroyers):
    gaps = [strip_gap_constant(g) for g in destroyers.values()]
    assert min(gaps) > 1000.0
