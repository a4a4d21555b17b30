import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from endolab.lab import (
    TRAP_TOL,
    ball_growth_run,
    covering_exponent_linear,
    density_diagnostic,
    invariant_circle_check,
    random_balls,
    sample_strip,
    trap_demo,
)
from endolab.torus import FOLD_CENTER, SupBall, circle_dist, torus_dist

ETAS = [4e-4, 2e-4, 1e-4]


# ---------------------------------------------------------------- covering exponent


@pytest.mark.parametrize(
    "w,h,expected", [(1 / 64, 1 / 64, 6), (1.0, 1.0, 0), (1 / 8, 1 / 2, 1), (1 / 8, 1 / 8, 3), (1 / 16, 1 / 16, 4)]
)
def test_covering_exponent_examples(w, h, expected):
    assert covering_exponent_linear(w, h) == expected


@given(st.floats(1e-6, 1.0), st.floats(1e-6, 1.0))
def test_covering_exponent_is_minimal(w, h):
    m = covering_exponent_linear(w, h)
    assert 8.0**m * w >= 1 and 2.0**m * h >= 1
    if m:
        assert 8.0 ** (m - 1) * w < 1 or 2.0 ** (m - 1) * h < 1


@given(st.floats(1e-6, 1.0), st.floats(1e-6, 1.0))
def test_covering_exponent_closed_form(w, h):
    m = covering_exponent_linear(w, h)
    closed = max(math.ceil(-math.log2(w) / 3 - 1e-12), math.ceil(-math.log2(h) - 1e-12), 0)
    assert abs(m - closed) <= 1  # log rounding at exact powers
    assert m == closed or 8.0**closed * w < 1 or 2.0**closed * h < 1


@pytest.mark.parametrize("bad", [(0.0, 0.5), (0.5, 1.5), (-1.0, 0.2)])
def test_covering_exponent_rejects_bad_boxes(bad):
    with pytest.raises(ValueError):
        covering_exponent_linear(*bad)


@pytest.mark.parametrize("side", [1 / 8, 1 / 16, 1 / 64])
def test_density_on_linear_map_matches_exponent(A, side):
    ball = SupBall((0.3, 0.6), side / 2)
    rep = density_diagnostic(A, ball, m_max=8, bins=64, n_points=200_000, seed=1)
    m = covering_exponent_linear(side, side)
    assert rep.first_full == m
    assert rep.fractions[m - 1] < rep.threshold


def test_union_occupancy_is_monotone(con):
    rep = density_diagnostic(con.h, SupBall((0.7, 0.2), 1 / 64), m_max=6, bins=64, n_points=50_000)
    u = rep.union_fractions
    assert all(a <= b for a, b in zip(u, u[1:]))
    assert all(f <= g for f, g in zip(rep.fractions, u))


def test_density_validates_inputs(A):
    with pytest.raises(ValueError):
        density_diagnostic(A, SupBall((0.5, 0.5), 1e-4))
    with pytest.raises(ValueError):
        density_diagnostic(A, SupBall((0.5, 0.5), 0.1), bins=2048)


def test_density_is_seeded(con):
    ball = SupBall((0.2, 0.9), 1 / 32)
    a = density_diagnostic(con.h, ball, m_max=3, bins=32, n_points=10_000, seed=5)
    b = density_diagnostic(con.h, ball, m_max=3, bins=32, n_points=10_000, seed=5)
    assert a.fractions == b.fractions


def test_pgm_header_and_size(A):
    rep = density_diagnostic(A, SupBall((0.5, 0.5), 1 / 16), m_max=4, bins=32, n_points=20_000)
    data = rep.pgm_bytes()
    header = b"P5\n32 32\n255\n"
    assert data.startswith(header)
    assert len(data) == len(header) + 32 * 32
    # the full torus is eventually hit, so no bin stays black
    assert min(data[len(header):]) > 0


def test_random_balls_are_seeded():
    assert random_balls(3, 0.01, 4) == random_balls(3, 0.01, 4)
    assert random_balls(3, 0.01, 4) != random_balls(3, 0.01, 5)


# ---------------------------------------------------------------- trapping


@pytest.mark.parametrize("eta", ETAS)
def test_destroyer_traps_strip(destroyers, params, eta):
    rep = trap_demo(destroyers[eta], params, n_iter=10, samples=10_000)
    assert rep.first_image_band <= 1e-12
    assert rep.first_trapped == 2
    assert rep.certificate().passed


def test_strip_samples_lie_in_small_ball(destroyers, params):
    g = destroyers[2e-4]
    x, y, _ = sample_strip(g, 2000)
    assert np.all(torus_dist(np.column_stack([x, y]), FOLD_CENTER) < params.r)


def test_unperturbed_map_lets_strip_escape(con, destroyers, params):
    rep = trap_demo(destroyers[2e-4], params, n_iter=10, samples=10_000, m=con.h)
    assert not rep.trapped
    k = next(k for k, d in enumerate(rep.max_distance) if k >= 2 and d > 1e-3)
    assert k <= 10
    assert rep.escape is not None and rep.escape["distance"] > 1e-3


def test_trap_to_dict_fields(destroyers, params):
    d = trap_demo(destroyers[4e-4], params, n_iter=4, samples=500).to_dict()
    for key in ("V", "first_trapped_iterate", "max_distance_to_circle", "tolerance"):
        assert key in d
    assert d["tolerance"] == TRAP_TOL


def test_destroyer_does_not_cover(destroyers):
    g = destroyers[2e-4]
    x, y, _ = sample_strip(g, 20_000)
    rep = density_diagnostic(g, SupBall(FOLD_CENTER, 1 / 64), m_max=10, bins=128, points=(x, y))
    assert rep.first_full is None
    assert rep.union_fractions[-1] < 0.05


@pytest.mark.parametrize("name", ["A", "f", "h", "g"])
def test_circle_y0_is_invariant(A, con, destroyers, name):
    m = {"A": A, "f": con.f, "h": con.h, "g": destroyers[1e-4]}[name]
    assert invariant_circle_check(m).passed


# ---------------------------------------------------------------- orbits avoiding the fold region


@pytest.mark.slow
def test_ball_growth_orbit(con, params):
    ball = SupBall((0.8, 0.7), 1 / 64)
    cert = ball_growth_run(con.h, ball, params.a0, params, n_iter=30)
    assert cert.passed
    assert cert.details["orbit_defect"] < 1e-12
    assert cert.details["min_distance_to_fold_center"] > 2 * params.r
