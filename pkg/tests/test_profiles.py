import csv
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import brentq

from endolab.profiles import (
    Anchor,
    ProfileConstraints,
    ProfileError,
    build_phi,
    build_plateau,
    build_psi,
    constraints_for,
    dump_csv,
    fd_errors,
    verify_profile,
)

# unit-scale templates: the literal absolute FD tolerances (1e-6 at step 1e-5)
# only make sense when the profile varies on an O(1) scale
UNIT_TEMPLATES = [build_psi(1.0, peak=1.0), build_phi(1.0), build_plateau(0.5, 1.0)]


def test_psi_anchors():
    psi = build_psi(0.01)
    v, d1, d2 = (float(t) for t in psi.derivatives(1 / 16, 2))
    assert v == 4.0 and d1 == 0.0 and d2 == 0.0
    assert psi.support == pytest.approx((1 / 16 - 0.01, 1 / 16 + 0.01))


def test_psi_has_unique_critical_point():
    psi = build_psi(0.01)
    xs = psi.center + psi.theta * np.linspace(-0.9, 0.9, 20_001)
    d1 = psi.d1(xs)
    left, right = xs < 1 / 16, xs > 1 / 16
    assert np.all(d1[left] > 0) and np.all(d1[right] < 0)


def test_psi_level_points_match_root_finder():
    psi = build_psi(0.01)
    lo, hi = psi.level_points(2.0)
    ref_lo = brentq(lambda x: float(psi(x)) - 2.0, psi.support[0], 1 / 16, xtol=1e-16)
    ref_hi = brentq(lambda x: float(psi(x)) - 2.0, 1 / 16, psi.support[1], xtol=1e-16)
    assert lo == pytest.approx(ref_lo, abs=1e-14)
    assert hi == pytest.approx(ref_hi, abs=1e-14)


def test_psi_max_slope_value():
    # sup |psi'| for theta = 0.01: frozen from a dense-grid evaluation
    psi = build_psi(0.01)
    dense = float(np.max(np.abs(psi.d1(np.linspace(*psi.support, 2_000_001)))))
    assert psi.max_slope() == pytest.approx(dense, rel=1e-9)
    assert psi.max_slope() == pytest.approx(1381.94, rel=1e-5)


def test_phi_anchors_and_sign_pattern():
    delta = 0.004
    phi = build_phi(delta)
    assert float(phi(0.25)) == pytest.approx(0.0, abs=1e-12)
    assert float(phi.d1(0.25)) == pytest.approx(0.5, abs=1e-10)
    y0 = 0.25 + delta / 8
    assert float(phi.d1(y0)) == pytest.approx(1.0, abs=1e-10)
    assert float(phi.d2(y0)) == pytest.approx(0.0, abs=1e-7)
    ys = np.linspace(*phi.support, 100_001)
    d1 = phi.d1(ys)
    assert d1.max() == pytest.approx(1.0, abs=1e-6)  # y0 is the global max of phi'
    assert np.max(np.abs(phi(ys))) < delta


def test_plateau_shape():
    p = build_plateau(0.5, 1.0)
    assert float(p(0.0)) == 1.0 and float(p(0.5)) == 1.0 and float(p(1.0)) == 0.0
    xs = np.linspace(0.5, 1.0, 10_001)
    assert np.all(np.diff(p(xs)) <= 1e-15)
    assert np.max(np.abs(p.d1(xs))) <= p.slope_bound()


@pytest.mark.parametrize("prof", UNIT_TEMPLATES, ids=lambda p: p.kind)
def test_literal_fd_tolerance_on_unit_templates(prof):
    rng = np.random.default_rng(1)
    lo, hi = prof.support
    xs = rng.uniform(lo, hi, 1000)
    h = 1e-5
    v0, d1, d2 = prof.derivatives(xs, 2)
    fd1 = (prof(xs + h) - prof(xs - h)) / (2 * h)
    fd2 = (prof.d1(xs + h) - prof.d1(xs - h)) / (2 * h)
    assert np.max(np.abs(d1 - fd1)) <= 1e-6
    assert np.max(np.abs(d2 - fd2)) <= 1e-6


@pytest.mark.parametrize("prof", [build_psi(0.01), build_phi(0.004), build_plateau(0.0052, 0.0104)], ids=lambda p: p.kind)
def test_verify_profile_on_construction_scales(prof):
    c = verify_profile(prof, constraints_for(prof))
    assert c.passed, c.details


def test_fd_errors_are_scale_invariant():
    a, b = build_psi(0.01), build_psi(1.0)
    xs_a = a.center + a.theta * np.linspace(-0.9, 0.9, 101)
    xs_b = b.center + b.theta * np.linspace(-0.9, 0.9, 101)
    ea = fd_errors(a, xs_a, 1e-4)
    eb = fd_errors(b, xs_b, 1e-4)
    assert np.allclose(ea[0], eb[0], atol=1e-9)


@given(st.floats(1e-4, 0.2), st.floats(-10, 10))
def test_psi_vanishes_outside_support(theta, t):
    psi = build_psi(theta)
    x = psi.center + theta * (1 + abs(t))
    assert all(float(v) == 0.0 for v in psi.derivatives(x, 2))


@given(st.floats(1e-4, 0.05))
def test_phi_anchor_residuals_for_any_width(delta):
    phi = build_phi(delta)
    assert max(a.residual(phi) for a in phi.anchors()) < 1e-10
    assert float(phi(phi.support[0])) == 0.0 and float(phi(phi.support[1])) == 0.0


@given(st.floats(0.01, 1.0), st.floats(1.01, 3.0), st.floats(-5, 5))
def test_plateau_values_in_unit_interval(inner, ratio, x):
    p = build_plateau(inner, inner * ratio)
    v = float(p(x * inner * ratio))
    assert 0.0 <= v <= 1.0


def test_anchor_outside_support_is_rejected():
    with pytest.raises(ProfileError):
        ProfileConstraints(anchors=(Anchor(2.0, value=0.0),), support=(0.0, 1.0))


def test_bad_widths_raise():
    with pytest.raises(ProfileError):
        build_psi(0.0)
    with pytest.raises(ProfileError):
        build_phi(-1.0)


def test_dump_csv_columns_and_repr(tmp_path):
    path = tmp_path / "psi.csv"
    dump_csv(build_psi(0.01), path, n=101)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["x", "value", "d1", "d2"]
    assert len(rows) == 102
    x = float(rows[50][0])
    assert repr(x) == rows[50][0]
    assert math.isfinite(float(rows[50][1]))


def test_profile_json_fields():
    d = build_phi(0.004).to_json()
    assert set(d) == {"kind", "parameters", "anchors", "support"}
