"""Mod-1 geometry on the 2-torus: points, lifts, sup-norm balls, 2x2 matrices, grids."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .certificate import Certificate

# Centres used throughout the construction: the fold point, its image under A,
# and the image of that (a fixed point of A).
FOLD_CENTER = (1.0 / 16.0, 1.0 / 4.0)
IMAGE_CENTER = (0.5, 0.5)
ORIGIN = (0.0, 0.0)


class TorusPoint(NamedTuple):
    x: float
    y: float


class PlanarVec(NamedTuple):
    v1: float
    v2: float


def wrap(x, y=None):
    """Reduce coordinates mod 1 into [0, 1).

    Accepts ``wrap((x, y))`` or ``wrap(x, y)``; scalars give a TorusPoint,
    arrays give a tuple of arrays.
    """
    if y is None:
        x, y = x
    xa = np.asarray(x, dtype=float)
    ya = np.asarray(y, dtype=float)
    if not (np.all(np.isfinite(xa)) and np.all(np.isfinite(ya))):
        raise ValueError("cannot wrap non-finite coordinates")
    wx = np.mod(xa, 1.0)
    wy = np.mod(ya, 1.0)
    # np.mod can return 1.0 for tiny negative inputs
    wx = np.where(wx >= 1.0, 0.0, wx)
    wy = np.where(wy >= 1.0, 0.0, wy)
    if wx.ndim == 0 and wy.ndim == 0:
        return TorusPoint(float(wx), float(wy))
    return wx, wy


def wrap_diff(d):
    """Representative of ``d`` mod 1 in [-1/2, 1/2)."""
    d = np.asarray(d, dtype=float)
    return d - np.floor(d + 0.5)


def torus_dist(p, q):
    """Sup-norm distance on the torus (vectorised over leading axes)."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    d = np.abs(wrap_diff(p - q))
    out = np.max(d, axis=-1)
    return float(out) if out.ndim == 0 else out


def circle_dist(a, b):
    """Distance on the unit circle R/Z."""
    return np.abs(wrap_diff(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)))


@dataclass(frozen=True)
class SupBall:
    """Open sup-norm ball ``{p : torus_dist(center, p) < radius}``."""

    center: tuple
    radius: float

    def __post_init__(self):
        if not (0.0 < self.radius < 0.5):
            raise ValueError(f"radius must lie in (0, 1/2), got {self.radius}")

    def contains(self, x, y=None):
        if y is None:
            pts = np.asarray(x, dtype=float)
        else:
            pts = np.stack(np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float)), axis=-1)
        return torus_dist(pts, self.center) < self.radius

    __contains__ = contains


def sup_ball(center, radius: float) -> SupBall:
    return SupBall(tuple(float(c) for c in center), float(radius))


# ---------------------------------------------------------------- lifts


def lift_path(points, start=None, max_jump: float = 0.5):
    """Greedy planar lift of a sequence of torus points.

    Each point is replaced by the representative closest to the previously
    lifted point. Raises ``ValueError`` if a step of the lift is not strictly
    shorter than ``max_jump`` in each coordinate (the sequence is too coarse
    for an unambiguous lift).
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("points must have shape (n, 2)")
    if len(pts) == 0:
        return pts.copy()
    steps = wrap_diff(np.diff(pts, axis=0))
    if np.any(np.abs(steps) >= max_jump):
        raise ValueError("consecutive points too far apart to lift unambiguously")
    if start is None:
        first = pts[0]
    else:
        # representative of pts[0] nearest to the requested start
        start = np.asarray(start, dtype=float)
        first = start + wrap_diff(pts[0] - start)
    out = np.empty_like(pts)
    out[0] = first
    out[1:] = first + np.cumsum(steps, axis=0)
    return out


def project(lifted):
    x, y = wrap(lifted[:, 0], lifted[:, 1])
    return np.column_stack([x, y])


def sup_diameter(lifted) -> float:
    """Diameter of a lifted point set in the sup norm."""
    pts = np.asarray(lifted, dtype=float)
    if len(pts) == 0:
        return 0.0
    ext = pts.max(axis=0) - pts.min(axis=0)
    return float(ext.max())


# ---------------------------------------------------------------- 2x2 algebra


def mat_apply(m, v):
    m = np.asarray(m, dtype=float)
    v = np.asarray(v, dtype=float)
    return np.einsum("...ij,...j->...i", m, v)


def mat_det(m):
    m = np.asarray(m, dtype=float)
    d = m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]
    return float(d) if d.ndim == 0 else d


def mat_rank(m, tol: float = 1e-12) -> int:
    s = mat_singular_values(m)
    return int(np.sum(np.asarray(s) > tol * max(1.0, float(np.max(s)))))


def mat_singular_values(m):
    """Singular values (largest first) of one or many 2x2 matrices, closed form."""
    m = np.asarray(m, dtype=float)
    fro2 = np.sum(m * m, axis=(-2, -1))
    det = m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]
    disc = np.sqrt(np.maximum(fro2 * fro2 - 4.0 * det * det, 0.0))
    s1 = np.sqrt(0.5 * (fro2 + disc))
    # s2 from the product identity is more accurate than the difference formula
    s2 = np.where(s1 > 0, np.abs(det) / np.where(s1 > 0, s1, 1.0), 0.0)
    if s1.ndim == 0:
        return float(s1), float(s2)
    return np.stack([s1, s2], axis=-1)


# ---------------------------------------------------------------- grids


@dataclass(frozen=True)
class GridSpec:
    """Sampling grid: a uniform torus grid plus optional refinement boxes.

    With ``box=None`` the grid is the vertex grid ``{(i/n, j/n)}`` of the
    torus; otherwise it is an inclusive ``n x n`` lattice over
    ``box = (x0, x1, y0, y1)``.
    """

    n: int
    box: tuple | None = None
    refine: tuple = ()

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("grid must be nonempty")

    def _own_points(self):
        if self.box is None:
            ticks = np.arange(self.n) / self.n
            gx, gy = np.meshgrid(ticks, ticks, indexing="ij")
        else:
            x0, x1, y0, y1 = self.box
            gx, gy = np.meshgrid(
                np.linspace(x0, x1, self.n), np.linspace(y0, y1, self.n), indexing="ij"
            )
        return gx.ravel(), gy.ravel()

    def points(self):
        xs, ys = [], []
        gx, gy = self._own_points()
        xs.append(gx)
        ys.append(gy)
        for sub in self.refine:
            sx, sy = sub.points()
            xs.append(sx)
            ys.append(sy)
        return np.concatenate(xs), np.concatenate(ys)

    @property
    def size(self) -> int:
        return self.n * self.n + sum(sub.size for sub in self.refine)

    def describe(self) -> dict:
        out = {"n": self.n, "box": list(self.box) if self.box is not None else "torus"}
        if self.refine:
            out["refine"] = [sub.describe() for sub in self.refine]
        return out

    def with_refinement(self, *subs) -> "GridSpec":
        return GridSpec(self.n, self.box, tuple(self.refine) + tuple(subs))


def box_around(center, hx: float, hy: float):
    cx, cy = center
    return (cx - hx, cx + hx, cy - hy, cy + hy)


# ---------------------------------------------------------------- radius conditions


def _arcs_disjoint(c1, h1, c2, h2) -> tuple[bool, float]:
    """Open arc (c1-h1, c1+h1) vs closed arc [c2-h2, c2+h2] on R/Z.

    Returns (disjoint, gap); a gap of 0 still counts as disjoint because one
    arc is open.
    """
    if 2 * h1 >= 1.0 or 2 * h2 >= 1.0:
        return False, -1.0
    gap = float(circle_dist(c1, c2)) - (h1 + h2)
    return gap >= 0.0, gap


def _boxes_disjoint(c1, half1, c2, half2) -> tuple[bool, float]:
    """Product boxes are disjoint iff some coordinate projection is."""
    res = [_arcs_disjoint(c1[i], half1[i], c2[i], half2[i]) for i in range(2)]
    gap = max(g for _, g in res)
    return any(ok for ok, _ in res), gap


def check_r_conditions(r: float, A=((8, 0), (0, 2))) -> Certificate:
    """Check the three placement conditions on the radius ``r``.

    1. ``A(B(c1, r))`` misses the closure of ``B(c1, r)``;
    2. every ``A``-preimage of ``B(c2, r)`` misses the circle ``{y = 0}``;
    3. the balls around ``c1``, ``c2`` and the origin are pairwise disjoint.

    Balls are sup-norm boxes, so for diagonal ``A`` every condition reduces to
    interval arithmetic on the circle.
    """
    A = np.asarray(A, dtype=float)
    if A[0, 1] != 0 or A[1, 0] != 0:
        raise ValueError("check_r_conditions handles diagonal matrices only")
    lam, mu = float(A[0, 0]), float(A[1, 1])
    if not (0.0 < r < 0.5):
        return Certificate("r_conditions", margin=-1.0, details={"r": r, "reason": "r outside (0, 1/2)"})
    c1 = np.array(FOLD_CENTER)
    c2 = np.array(IMAGE_CENTER)
    c0 = np.array(ORIGIN)

    image_center = np.mod(A @ c1, 1.0)
    ok1, gap1 = _boxes_disjoint(image_center, (abs(lam) * r, abs(mu) * r), c1, (r, r))

    # preimages of the y-interval (1/2 - r, 1/2 + r) under y -> mu*y are
    # ((1/2 +- r) + k)/mu for k = 0..|mu|-1
    n_branch = int(round(abs(mu)))
    branches = []
    gap2 = np.inf
    for k in range(n_branch):
        lo = ((c2[1] - r) + k) / mu
        hi = ((c2[1] + r) + k) / mu
        lo, hi = min(lo, hi), max(lo, hi)
        branches.append([lo, hi])
        centre = 0.5 * (lo + hi)
        half = 0.5 * (hi - lo)
        gap2 = min(gap2, float(circle_dist(centre, 0.0)) - half)
    ok2 = gap2 > 0

    pairs = {"c1-c2": (c1, c2), "c2-origin": (c2, c0), "origin-c1": (c0, c1)}
    gaps3 = {}
    for name, (p, q) in pairs.items():
        gaps3[name] = float(torus_dist(p, q)) - 2 * r
    ok3 = all(g >= 0 for g in gaps3.values())

    margin = min(gap1, gap2, min(gaps3.values()))
    if margin == 0.0 and ok1 and ok2 and ok3:
        margin = 5e-324
    if not (ok1 and ok2 and ok3):
        margin = min(margin, -abs(margin)) if margin != 0 else -5e-324
    return Certificate(
        "r_conditions",
        margin=margin,
        tolerance=0.0,
        details={
            "r": r,
            "A": A.tolist(),
            "image_misses_ball": {"ok": ok1, "gap": gap1},
            "preimage_misses_circle": {"ok": ok2, "gap": gap2, "y_ranges": branches},
            "balls_disjoint": {"ok": ok3, "gaps": gaps3},
        },
    )
