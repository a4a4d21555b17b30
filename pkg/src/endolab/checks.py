"""Certificates for the structural facts of the construction.

Each function returns a :class:`~endolab.certificate.Certificate`; the CLI and
the test suite share them.
"""

from __future__ import annotations

import numpy as np

from .certificate import Certificate, from_bound
from .critical import (
    DetLevel,
    default_critical_grid,
    hausdorff,
    sample_critical_set,
)
from .maps import A_MATRIX, TorusMap, action_matrix, ck_distance
from .params import MapParams
from .torus import FOLD_CENTER, GridSpec, mat_det, torus_dist, wrap_diff


class _Identity(TorusMap):
    name = "Id"

    def jet(self, x, y):
        x = np.atleast_1d(np.asarray(x, dtype=float)).ravel()
        y = np.atleast_1d(np.asarray(y, dtype=float)).ravel()
        n = len(x)
        J = np.broadcast_to(np.eye(2), (n, 2, 2)).copy()
        return np.column_stack([x, y]), J, np.zeros((n, 2, 2, 2))


IDENTITY = _Identity()


def determinant_anchors(f: TorusMap, params: MapParams, n: int = 10_000, seed: int = 0, tol: float = 1e-9) -> Certificate:
    """``det Df = -16`` at ``(1/16, y0)`` and ``16`` at ``n`` random points outside ``B(c1, r)``."""
    d0 = float(mat_det(f.jacobian([1.0 / 16.0], [params.y0]))[0])
    rng = np.random.default_rng(seed)
    pts = np.empty((0, 2))
    while len(pts) < n:
        cand = rng.random((2 * n, 2))
        cand = cand[torus_dist(cand, FOLD_CENTER) > params.r]
        pts = np.concatenate([pts, cand])[:n]
    det = mat_det(f.jacobian(pts[:, 0], pts[:, 1]))
    err_out = float(np.max(np.abs(det - 16.0)))
    err_peak = abs(d0 + 16.0)
    worst = max(err_out, err_peak)
    return from_bound(
        "determinant_anchors",
        worst,
        tol,
        grid={"random_points": n, "seed": seed},
        details={"det_at_peak": d0, "max_error_outside_ball": err_out},
    )


def point_anchors(f: TorusMap, A: TorusMap, h: TorusMap, tol: float = 1e-12) -> Certificate:
    checks = {
        "f(1/16,1/4)=(1/2,1/2)": (f, (1.0 / 16.0, 0.25), (0.5, 0.5)),
        "A(1/2,1/2)=(0,0)": (A, (0.5, 0.5), (0.0, 0.0)),
        "h(1/16,1/4)=(1/2,1/2)": (h, (1.0 / 16.0, 0.25), (0.5, 0.5)),
    }
    errs = {}
    for key, (m, p, q) in checks.items():
        img = m.evaluate([p[0]], [p[1]])[0]
        errs[key] = float(np.max(np.abs(wrap_diff(img - np.asarray(q)))))
    return from_bound("point_anchors", max(errs.values()), tol, details=errs)


def fd_derivatives(m: TorusMap, x, y, h1: float = 1e-5, h2: float = 1e-4):
    """Max deviations of the analytic Jacobian and second derivatives from central differences.

    The Jacobian is compared with differences of values at step ``h1``; the
    second derivatives with differences of the analytic Jacobian at step ``h2``.
    """
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    _, J, H = m.jet(x, y)
    fd_J = np.empty_like(J)
    fd_H = np.empty_like(H)
    for k, (dx, dy) in enumerate(((1.0, 0.0), (0.0, 1.0))):
        Lp = m.lift(x + dx * h1, y + dy * h1)
        Lm = m.lift(x - dx * h1, y - dy * h1)
        fd_J[:, :, k] = (Lp - Lm) / (2 * h1)
        Jp = m.jacobian(x + dx * h2, y + dy * h2)
        Jm = m.jacobian(x - dx * h2, y - dy * h2)
        fd_H[:, :, :, k] = (Jp - Jm) / (2 * h2)
    eJ = np.max(np.abs(J - fd_J), axis=(1, 2))
    eH = np.max(np.abs(H - fd_H), axis=(1, 2, 3))
    return eJ, eH


def derivative_certificate(m: TorusMap, grid: GridSpec, tol1: float = 1e-5, tol2: float = 1e-3) -> Certificate:
    x, y = grid.points()
    eJ, eH = fd_derivatives(m, x, y)
    i, j = int(np.argmax(eJ)), int(np.argmax(eH))
    margin = min(tol1 - eJ[i], tol2 - eH[j])
    return Certificate(
        f"derivative_oracle[{m.name}]",
        margin=float(margin),
        grid=grid.describe(),
        tolerance=tol1,
        witness={"jacobian": [float(x[i]), float(y[i])], "second": [float(x[j]), float(y[j])]},
        details={"max_jacobian_error": float(eJ[i]), "max_second_error": float(eH[j]), "tol_second": tol2},
    )


def flattening_certificate(con, tol: float = 1e-9) -> Certificate:
    """Critical points whose image abscissa is within ``rho`` of 1/2 land on ``y = 1/2``.

    Also checks ``gamma1(1/2) = 1/2`` with vanishing first two derivatives.
    """
    window = con.fold_window
    rho = window.rho
    g = con.gamma
    v, d1, d2 = (float(t[0]) for t in g.offset(np.array([0.5]), 2))
    xs = np.linspace(*con.graph.window, 20_001)
    ys = con.graph.y(xs)
    img = con.h.lift(xs, ys)
    near = np.abs(wrap_diff(img[:, 0] - 0.5)) < rho
    dev = float(np.max(np.abs(wrap_diff(img[near, 1] - 0.5)))) if np.any(near) else 0.0
    margins = {
        "rho > 0": rho,
        "line": tol - dev,
        "gamma1(1/2)": tol - abs(v),
        "gamma1'(1/2)": 1e-8 - abs(d1),
        "gamma1''(1/2)": 1e-8 - abs(d2),
    }
    return Certificate(
        "flattening",
        margin=min(margins.values()),
        tolerance=tol,
        details={
            "rho": rho,
            "samples_in_window": int(near.sum()),
            "max_line_deviation": dev,
            "gamma1_offset": [v, d1, d2],
            "fold_window": window.to_dict(),
            "margins": margins,
        },
    )


def critical_sets_agree(f: TorusMap, h: TorusMap, params: MapParams, n: int = 512, tol: float = 1e-8) -> Certificate:
    """``S_h = S_f``: both extracted as zero sets of ``det`` on the same grid."""
    grid = default_critical_grid(params, n)
    ef = sample_critical_set(DetLevel(f), grid)
    eh = sample_critical_set(DetLevel(h), grid)
    d = hausdorff(ef, eh)
    return from_bound(
        "critical_set_S_h_equals_S_f",
        d,
        tol,
        grid=grid.describe(),
        details={"hausdorff": d, "samples_f": len(ef), "samples_h": len(eh)},
    )


def kernel_certificate(m: TorusMap, params: MapParams, n: int = 512, tol: float = 1e-9) -> Certificate:
    """The kernel of ``Dm`` is the vertical direction at every extracted critical point."""
    ext = sample_critical_set(DetLevel(m), default_critical_grid(params, n))
    k = ext.concat("kernel").reshape(-1, 2)
    dev = float(np.max(np.abs(k[:, 0]))) if len(k) else 0.0
    J = m.jacobian(ext.points[:, 0], ext.points[:, 1])
    col = float(np.max(np.abs(J[:, :, 1]))) if len(k) else 0.0
    return from_bound(
        f"kernel_vertical[{m.name}]",
        max(dev, col / 8.0),
        tol,
        details={"samples": len(k), "max_kernel_x": dev, "max_second_column": col},
    )


def action_certificate(maps) -> Certificate:
    got = {m.name: action_matrix(m).tolist() for m in maps}
    bad = sum(1 for v in got.values() if v != A_MATRIX.astype(int).tolist())
    return Certificate("homotopy_class_A", margin=0.5 - bad, details=got)


def near_identity_certificate(F: TorusMap, epsilon: float, n: int = 512) -> Certificate:
    """``d_C2(F, Id) < epsilon`` on a torus grid refined over the support of ``F``."""
    W = F.taper.outer
    D = F.bump.outer + 2 * F.budget.a
    grid = GridSpec(n).with_refinement(GridSpec(n, (0.5 - W, 0.5 + W, 0.5 - D, 0.5 + D)))
    rep = ck_distance(F, IDENTITY, grid)
    return Certificate(
        "flattening_close_to_identity",
        margin=epsilon - rep.c2,
        grid=grid.describe(),
        tolerance=epsilon,
        details=rep.to_dict(),
    )
