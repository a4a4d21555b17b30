"""Horizontal cone fields: grid certificates, curve iteration, fold surgery, diameter growth."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .certificate import Certificate
from .critical import DetLevel, classify, find_non_fold_points
from .maps import TorusMap, build_f
from .params import MapParams
from .torus import FOLD_CENTER, GridSpec, box_around, sup_diameter, torus_dist, wrap_diff

EXPANSION_THRESHOLD = 4.0
PROBES = (-1.0, -0.5, 0.0, 0.5, 1.0)


class ConeCollapse(RuntimeError):
    """A Jacobian sends a boundary ray of the cone to a vertical vector."""


class SurgeryError(RuntimeError):
    pass


# ---------------------------------------------------------------- grids


def certification_grid(params: MapParams, n: int = 512) -> GridSpec:
    """Torus grid plus an ``n x n`` refinement over ``supp psi x supp phi``.

    The refinement matters: ``phi`` lives on a band of width ``delta`` that a
    coarse torus grid can miss entirely.
    """
    box = (*params.psi.support, *params.phi.support)
    return GridSpec(n).with_refinement(GridSpec(n, box))


# ---------------------------------------------------------------- certificates


def _jacobians(m: TorusMap, grid: GridSpec, chunk=1 << 16):
    x, y = grid.points()
    for s in range(0, len(x), chunk):
        xs, ys = x[s : s + chunk], y[s : s + chunk]
        yield xs, ys, m.jacobian(xs, ys)


def cone_margin(m: TorusMap, a0: float, grid: GridSpec) -> Certificate:
    """Margin ``a0 - |w2| / |w1|`` over images ``w = J (1, +-a0)`` of the boundary rays.

    Both image rays must also point to the same side (equal sign of ``w1``),
    otherwise the image of the cone is the complementary sector.
    """
    if not a0 > 0:
        raise ValueError("a0 must be positive")
    worst, where = np.inf, None
    flipped = 0
    for xs, ys, J in _jacobians(m, grid):
        ratios = []
        w1s = []
        for sgn in (1.0, -1.0):
            w1 = J[:, 0, 0] + sgn * a0 * J[:, 0, 1]
            w2 = J[:, 1, 0] + sgn * a0 * J[:, 1, 1]
            if np.any(w1 == 0):
                i = int(np.flatnonzero(w1 == 0)[0])
                raise ConeCollapse(f"boundary ray maps to a vertical vector at ({xs[i]}, {ys[i]})")
            ratios.append(np.abs(w2) / np.abs(w1))
            w1s.append(w1)
        marg = a0 - np.maximum(ratios[0], ratios[1])
        same = np.sign(w1s[0]) == np.sign(w1s[1])
        flipped += int((~same).sum())
        marg = np.where(same, marg, -np.inf)
        i = int(np.argmin(marg))
        if marg[i] < worst:
            worst, where = float(marg[i]), [float(xs[i]), float(ys[i])]
    return Certificate(
        "cone_invariance",
        margin=worst,
        grid=grid.describe(),
        tolerance=a0,
        witness=where,
        details={"a0": a0, "map": m.name, "flipped": flipped},
    )


def expansion_margin(m: TorusMap, a0: float, grid: GridSpec, threshold: float = EXPANSION_THRESHOLD) -> Certificate:
    """``min |J v| / |v| - threshold`` over probes ``v = (1, t a0)``, t in {-1, -1/2, 0, 1/2, 1}."""
    worst, where = np.inf, None
    for xs, ys, J in _jacobians(m, grid):
        low = np.full(len(xs), np.inf)
        for t in PROBES:
            v = np.array([1.0, t * a0])
            w = J @ v
            low = np.minimum(low, np.linalg.norm(w, axis=1) / np.linalg.norm(v))
        i = int(np.argmin(low))
        if low[i] - threshold < worst:
            worst, where = float(low[i] - threshold), [float(xs[i]), float(ys[i])]
    return Certificate(
        "cone_expansion",
        margin=worst,
        grid=grid.describe(),
        tolerance=threshold,
        witness=where,
        details={"a0": a0, "map": m.name, "probes": list(PROBES), "min_ratio": worst + threshold},
    )


def linear_expansion_ratio(a0: float, A=((8.0, 0.0), (0.0, 2.0))) -> float:
    """Exact minimum of ``|A v| / |v|`` over the closed cone for diagonal ``A``.

    ``|A(1, s)|^2 / |(1, s)|^2`` is monotone in ``s^2``, so the minimum sits on
    the axis or on the boundary.
    """
    lam, mu = A[0][0], A[1][1]
    edge = math.hypot(lam, mu * a0) / math.hypot(1.0, a0)
    return min(abs(lam), edge)


@dataclass
class SearchResult:
    a0: float
    delta0: float
    M: float
    cone_bound_residual: float
    halvings: int
    certificates: list = field(default_factory=list)

    @property
    def passed(self):
        return self.cone_bound_residual < 0 and all(c.passed for c in self.certificates)


def cone_bound_residual(M: float, delta: float, a0: float) -> float:
    """``M delta / 8 + 6 a0 / 8 - a0``; negative means the analytic cone bound holds."""
    return M * delta / 8.0 + 6.0 * a0 / 8.0 - a0


def search_params(theta: float, a: float, n: int = 512, base: MapParams | None = None, M: float | None = None) -> SearchResult:
    """Pick ``a0 = a / 2`` and the half-slack ``delta0 = a0 / M``; certify, halving on failure."""
    if not a > 0:
        raise ValueError("a must be positive")
    a0 = a / 2.0
    base = MapParams(theta=theta) if base is None else base.with_(theta=theta)
    if M is None:
        M = base.psi.max_slope()
    delta0 = a0 * 8.0 * (1.0 - 6.0 / 8.0) / (2.0 * M)
    halvings = 0
    while True:
        if delta0 < 1e-8:
            raise ValueError("delta0 underflowed 1e-8 without passing the cone certificates")
        params = base.with_(delta=delta0)
        f = build_f(params)
        grid = certification_grid(params, n)
        certs = [cone_margin(f, a0, grid), expansion_margin(f, a0, grid)]
        if all(c.passed for c in certs):
            return SearchResult(a0, delta0, M, cone_bound_residual(M, delta0, a0), halvings, certs)
        delta0 /= 2.0
        halvings += 1


# ---------------------------------------------------------------- curves


@dataclass
class SampledCurve:
    """Polyline in the plane (a lift of a torus curve), sampled at a roughly uniform step."""

    points: np.ndarray
    step: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        if len(self.points) > 1:
            jumps = np.abs(np.diff(self.points, axis=0))
            if np.any(jumps >= 0.5):
                raise ValueError("lift jumps of 1/2 or more: resample more densely")

    def __len__(self):
        return len(self.points)

    @property
    def diameter(self) -> float:
        return sup_diameter(self.points)

    @property
    def tangents(self):
        d = np.gradient(self.points, axis=0)
        n = np.linalg.norm(d, axis=1, keepdims=True)
        return d / np.where(n > 0, n, 1.0)

    @property
    def arclength(self):
        seg = np.linalg.norm(np.diff(self.points, axis=0), axis=1)
        return np.concatenate([[0.0], np.cumsum(seg)])

    def cone_violations(self, a0: float) -> int:
        t = self.tangents
        return int(np.sum(np.abs(t[:, 1]) >= a0 * np.abs(t[:, 0])))

    def at(self, u):
        """Points at fractional sample indices ``u`` (linear interpolation)."""
        u = np.clip(np.asarray(u, dtype=float), 0, len(self.points) - 1)
        i = np.minimum(np.floor(u).astype(int), len(self.points) - 2)
        w = (u - i)[:, None]
        return (1 - w) * self.points[i] + w * self.points[i + 1]

    def sub(self, start: int, stop: int) -> "SampledCurve":
        return SampledCurve(self.points[start:stop].copy(), self.step)

    @classmethod
    def segment(cls, center, direction=(1.0, 0.0), length=1e-3, step=None):
        direction = np.asarray(direction, dtype=float)
        direction = direction / np.max(np.abs(direction))  # sup-norm diameter = length
        step = length / 100.0 if step is None else step
        n = max(3, int(math.ceil(length / step)) + 1)
        t = np.linspace(-0.5, 0.5, n) * length
        pts = np.asarray(center, dtype=float) + t[:, None] * direction
        return cls(pts, length / (n - 1))


def _resample_preimages(images: np.ndarray, step: float):
    seg = np.linalg.norm(np.diff(images, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    n = max(3, int(math.ceil(s[-1] / step)) + 1)
    targets = np.linspace(0.0, s[-1], n)
    return np.interp(targets, s, np.arange(len(images), dtype=float))


def iterate_curve(m: TorusMap, curve: SampledCurve, a0: float | None = None, step: float | None = None) -> SampledCurve:
    """Map a curve and resample the image at a uniform arclength step.

    The new samples are exact images of points on the input polyline, chosen
    so that consecutive images are ``step`` apart (default
    ``min(1e-3, curve.step)``).
    """
    step = min(1e-3, curve.step) if step is None else step
    raw = m.lift(curve.points[:, 0], curve.points[:, 1])
    if len(raw) > 1 and np.any(np.abs(np.diff(raw, axis=0)) >= 0.5):
        raise ValueError("image samples jump by 1/2 or more: input curve too coarse")
    u = _resample_preimages(raw, step)
    pre = curve.at(u)
    img = m.lift(pre[:, 0], pre[:, 1])
    out = SampledCurve(img, step)
    out.meta = {
        "preimage": pre,
        "ratio": out.diameter / curve.diameter if curve.diameter > 0 else np.inf,
    }
    if a0 is not None:
        out.meta["outside_cone"] = out.cone_violations(a0)
    # tangent reversals reveal a fold in the image
    t = out.tangents
    ref = t[np.argmax(np.abs(t[:, 0]))] if len(t) else np.array([1.0, 0.0])
    proj = t @ ref
    out.meta["reversals"] = int(np.sum(np.sign(proj[1:]) * np.sign(proj[:-1]) < 0))
    return out


# ---------------------------------------------------------------- surgery


def _crossings(m: TorusMap, curve: SampledCurve):
    level = DetLevel(m)
    pts = curve.points
    R = level(pts[:, 0], pts[:, 1])[0]
    idx = np.flatnonzero(np.sign(R[:-1]) * np.sign(R[1:]) < 0)
    out = []
    for i in idx:
        p0, p1 = pts[i], pts[i + 1]

        def r(s, p0=p0, p1=p1):
            q = p0 + s * (p1 - p0)
            return float(level(np.array([q[0]]), np.array([q[1]]))[0][0])

        s = brentq(r, 0.0, 1.0, xtol=1e-16, rtol=1e-15, maxiter=200)
        out.append((i + s, p0 + s * (p1 - p0), p1 - p0))
    return out


def _solve_preimage(m: TorusMap, target, guess, iters: int = 60, tol: float = 1e-13):
    z = np.array(guess, dtype=float)
    for _ in range(iters):
        L, J, _ = m.jet(z[:1], z[1:])
        r = wrap_diff(L[0] - target)
        if np.max(np.abs(r)) <= tol:
            return z, float(np.max(np.abs(r))), float(np.linalg.det(J[0]))
        z = z - np.linalg.solve(J[0], r)
    L, J, _ = m.jet(z[:1], z[1:])
    return z, float(np.max(np.abs(wrap_diff(L[0] - target)))), float(np.linalg.det(J[0]))


def fold_surgery(m: TorusMap, curve: SampledCurve, epsilon_push: float, a0: float = 1.0, step: float | None = None) -> SampledCurve:
    """Map ``curve`` and push the image off the critical values near each fold crossing.

    At a fold crossing ``p`` with kernel ``k``, the image of a neighbourhood of
    ``p`` lies on the side of the image curve pointed to by the second
    directional derivative ``D^2 m_p (k, k)``. Samples within
    ``epsilon_push`` of ``m(p)`` are displaced to that side by the bump
    ``A (1 - (d / epsilon_push)^2)^2`` with ``A = epsilon_push a0 / 16``;
    every displaced sample is then pulled back by Newton to confirm it has a
    nonsingular preimage.
    """
    crossings = _crossings(m, curve)
    out = iterate_curve(m, curve, a0, step)
    pushes = []
    for u, p, direction in crossings:
        sample = classify(p, m)
        if not sample.fold:
            raise SurgeryError(f"curve meets a non-fold critical point at {tuple(p)}")
        k = np.array(sample.kernel)
        L, J, H = m.jet(p[:1], p[1:])
        w = np.einsum("ijk,j,k->i", H[0], k, k)
        tau = J[0] @ (direction / np.linalg.norm(direction))
        n = np.array([-tau[1], tau[0]]) / np.linalg.norm(tau)
        side = float(n @ w)
        if side == 0.0:
            raise SurgeryError(f"flat fold at {tuple(p)}: push side undefined")
        n = n if side > 0 else -n
        amp = epsilon_push * a0 / 16.0
        z = L[0]
        d = np.linalg.norm(out.points - z, axis=1)
        near = d < epsilon_push
        bump = amp * (1.0 - (d[near] / epsilon_push) ** 2) ** 2
        out.points[near] += bump[:, None] * n

        # pull back the pushed samples through the fold side
        worst_res, min_det = 0.0, np.inf
        pre = out.meta["preimage"][near]
        for q, b0, g in zip(out.points[near], bump, pre):
            s = math.sqrt(2.0 * b0 / abs(side)) if b0 > 0 else 0.0
            guess = g + s * k
            zq, res, det = _solve_preimage(m, q, guess)
            worst_res = max(worst_res, res)
            min_det = min(min_det, abs(det))
        pushes.append(
            {
                "point": [float(v) for v in p],
                "image": [float(v) for v in z],
                "angle": sample.transversality_angle,
                "pushed": int(near.sum()),
                "amplitude": amp,
                "pullback_residual": worst_res,
                "min_abs_det": float(min_det) if np.isfinite(min_det) else None,
            }
        )
    out.meta["surgeries"] = pushes
    out.meta["ratio"] = out.diameter / curve.diameter if curve.diameter > 0 else np.inf
    out.meta["diameter_floor"] = 4.0 * curve.diameter - 2.0 * epsilon_push
    return out


# ---------------------------------------------------------------- growth


def _split_outside(curve: SampledCurve, centers, radius):
    pts = curve.points
    keep = np.ones(len(pts), dtype=bool)
    for c in centers:
        keep &= torus_dist(pts, c) >= radius
    runs = []
    start = None
    for i, k in enumerate(keep):
        if k and start is None:
            start = i
        if not k and start is not None:
            runs.append((start, i))
            start = None
    if start is not None:
        runs.append((start, len(pts)))
    return runs


def cap_diameter(curve: SampledCurve, cap: float) -> SampledCurve:
    """Longest initial piece of the curve whose diameter stays below ``cap``."""
    pts = curve.points
    lo = np.minimum.accumulate(pts, axis=0)
    hi = np.maximum.accumulate(pts, axis=0)
    ext = np.max(hi - lo, axis=1)
    stop = int(np.searchsorted(ext >= cap, True))
    return curve if stop >= len(pts) else curve.sub(0, max(stop, 2))


@dataclass
class GrowthReport:
    diameters: list
    ratios: list
    surgeries: list
    component_fractions: list
    steps: int
    bound: int
    target: float
    certificate: Certificate
    curve: SampledCurve | None = None

    def rows(self):
        for i, d in enumerate(self.diameters):
            yield {
                "step": i,
                "diameter": d,
                "ratio": self.ratios[i - 1] if i else None,
                "surgery_count": self.surgeries[i - 1] if i else 0,
            }


def growth_steps_bound(d0: float, target: float) -> int:
    return int(math.ceil(math.log(target / d0) / math.log(6.0 / 5.0)))


def growth_run(m: TorusMap, curve: SampledCurve, a0: float, n: int | None = None, params: MapParams | None = None, epsilon_push: float | None = None) -> GrowthReport:
    """Iterate cut-and-surgery steps until the diameter reaches ``8 r``.

    Each step removes the samples inside the sup-balls of radius ``eta``
    around the two non-fold points, keeps the widest remaining component
    (required to carry at least 3/10 of the diameter), and applies
    :func:`fold_surgery`; the step ratio must be at least 6/5.
    """
    params = m.params if params is None else params
    target = 8.0 * params.r
    d0 = curve.diameter
    bound = growth_steps_bound(d0, target) if d0 < target else 0
    n = bound if n is None else n
    nonfold = find_non_fold_points(params).points
    diameters = [d0]
    ratios, surg, fractions = [], [], []
    cur = curve
    steps = 0
    while cur.diameter < target and steps < n:
        if cur.diameter > 10.0 * params.r:
            cur = cap_diameter(cur, 10.0 * params.r)
        d_before = cur.diameter
        runs = _split_outside(cur, nonfold, params.eta)
        if not runs:
            break
        pieces = [cur.sub(a, b) for a, b in runs if b - a >= 2]
        best = max(pieces, key=lambda c: c.diameter)
        fractions.append(best.diameter / d_before)
        eps = min(1e-4, 0.05 * best.diameter) if epsilon_push is None else epsilon_push
        nxt = fold_surgery(m, best, eps, a0)
        ratios.append(nxt.diameter / d_before)
        surg.append(len(nxt.meta["surgeries"]))
        diameters.append(nxt.diameter)
        cur = nxt
        steps += 1
    reached = cur.diameter >= target and steps <= bound
    margins = [r - 1.2 for r in ratios] + [f - 0.3 for f in fractions]
    margin = min(margins) if margins else (1.0 if reached else -1.0)
    if not reached:
        margin = min(margin, -1.0)
    cert = Certificate(
        "diameter_growth",
        margin=margin,
        tolerance=1.2,
        details={
            "initial_diameter": d0,
            "final_diameter": cur.diameter,
            "target": target,
            "steps": steps,
            "step_bound": bound,
            "min_ratio": min(ratios) if ratios else None,
            "min_component_fraction": min(fractions) if fractions else None,
        },
    )
    return GrowthReport(diameters, ratios, surg, fractions, steps, bound, target, cert, cur)


def default_seed_curve(params: MapParams, length: float = 1e-3, step: float = 1e-5) -> SampledCurve:
    """Horizontal seed centred on the right arc of S, ``2 eta`` below the non-fold point.

    The centre solves ``psi(x) phi'(y) = 2`` at that height, so the seed crosses S
    transversally at a fold point.
    """
    y = params.y0 - 2.0 * params.eta
    x = params.psi.level_points(2.0 / float(params.phi.d1(y)))[1]
    return SampledCurve.segment((x, y), (1.0, 0.0), length, step)


def fold_ball(params: MapParams, factor: float = 2.0):
    return box_around(FOLD_CENTER, factor * params.r, factor * params.r)
