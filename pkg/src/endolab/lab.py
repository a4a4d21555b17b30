"""End-to-end experiments: the invariant circle, trapping by the destroyer,
covering of the torus by iterated balls, and orbits avoiding the fold region."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .certificate import Certificate, from_bound
from .cones import (
    SampledCurve,
    _resample_preimages,
    _solve_preimage,
    _split_outside,
    cap_diameter,
    growth_run,
)
from .kernels import iterate_bin
from .maps import TorusMap, trap_strip
from .torus import FOLD_CENTER, SupBall, circle_dist, torus_dist, wrap_diff

TRAP_TOL = 1e-7
CIRCLE_TOL = 1e-12


# ---------------------------------------------------------------- invariant circle


def invariant_circle_check(m: TorusMap, samples: int = 4096) -> Certificate:
    """Certify that ``m`` maps ``{y = 0}`` into itself on ``samples`` equispaced points."""
    x = (np.arange(samples) + 0.5) / samples
    L = m.lift(x, np.zeros_like(x))
    d = circle_dist(L[:, 1], 0.0)
    i = int(np.argmax(d))
    return from_bound(
        f"invariant_circle[{m.name}]",
        float(d[i]),
        CIRCLE_TOL,
        grid={"samples": samples},
        witness=[float(x[i]), 0.0],
        details={"max_distance": float(d[i])},
    )


# ---------------------------------------------------------------- trapping


@dataclass
class TrapReport:
    map_name: str
    center_x: float
    half_width_x: float
    half_width_y: float
    samples: int
    n_iter: int
    max_distance: list  # index k: max over samples of the distance of the k-th image to {y = 0}
    first_image_band: float  # max distance of the first image to {y = 1/2}
    first_trapped: int | None
    escape: dict | None = None
    tolerance: float = TRAP_TOL

    @property
    def trapped(self) -> bool:
        return self.first_trapped is not None and self.first_trapped <= 2

    def certificate(self) -> Certificate:
        tail = self.max_distance[2:]
        worst = max(tail) if tail else 0.0
        return from_bound(
            f"trap[{self.map_name}]",
            worst,
            self.tolerance,
            grid={"samples": self.samples, "n_iter": self.n_iter},
            witness=self.escape,
            details={
                "first_trapped_iterate": self.first_trapped,
                "first_image_band": self.first_image_band,
                "strip": [self.center_x, self.half_width_x, self.half_width_y],
            },
        )

    def to_dict(self) -> dict:
        return {
            "map": self.map_name,
            "V": {
                "center_x": self.center_x,
                "half_width_x": self.half_width_x,
                "half_width_y": self.half_width_y,
                "description": "|x - center_x| < half_width_x, |y - y(x)| < half_width_y",
            },
            "samples": self.samples,
            "n_iter": self.n_iter,
            "max_distance_to_circle": self.max_distance,
            "first_image_distance_to_half": self.first_image_band,
            "first_trapped_iterate": self.first_trapped,
            "tolerance": self.tolerance,
            "escape": self.escape,
        }


def sample_strip(g, samples: int, seed: int = 0):
    """Uniform samples of the open trap strip of the destroyer ``g``."""
    s = trap_strip(g)
    rng = np.random.default_rng(seed)
    u = rng.uniform(-1.0, 1.0, samples)
    v = rng.uniform(-1.0, 1.0, samples)
    x = s["center_x"] + u * s["half_width_x"]
    y = s["graph"].y(x) + v * s["half_width_y"]
    return x, y, s


def trap_demo(g, params=None, n_iter: int = 10, samples: int = 10_000, seed: int = 0, m: TorusMap | None = None) -> TrapReport:
    """Iterate samples of the trap strip of ``g`` under ``m`` (default ``g``).

    Passing ``m = h`` runs the same strip under the unperturbed map, which is
    expected to escape.
    """
    m = g if m is None else m
    x, y, s = sample_strip(g, samples, seed)
    orbit = [np.column_stack([x, y])]
    for _ in range(n_iter):
        p = m.evaluate(orbit[-1][:, 0], orbit[-1][:, 1])
        orbit.append(p)
    dist = [float(np.max(circle_dist(p[:, 1], 0.0))) for p in orbit]
    band = float(np.max(circle_dist(orbit[1][:, 1], 0.5))) if n_iter >= 1 else math.nan
    first = None
    for k in range(n_iter + 1):
        if all(d <= TRAP_TOL for d in dist[k:]):
            first = k
            break
    escape = None
    if first is None or first > 2:
        per = np.array([circle_dist(p[:, 1], 0.0) for p in orbit[2:]])
        if per.size:
            kk, i = np.unravel_index(int(np.argmax(per)), per.shape)
            escape = {
                "sample": [float(x[i]), float(y[i])],
                "iterate": int(kk) + 2,
                "distance": float(per[kk, i]),
                "orbit": [[float(p[i, 0]), float(p[i, 1])] for p in orbit],
            }
    return TrapReport(
        m.name,
        float(s["center_x"]),
        float(s["half_width_x"]),
        float(s["half_width_y"]),
        samples,
        n_iter,
        dist,
        band,
        first,
        escape,
    )


# ---------------------------------------------------------------- covering


def covering_exponent_linear(box_w: float, box_h: float) -> int:
    """Least ``m`` with ``8**m * box_w >= 1`` and ``2**m * box_h >= 1``."""
    if not (0 < box_w <= 1 and 0 < box_h <= 1):
        raise ValueError("box sides must lie in (0, 1]")
    m = 0
    while 8.0**m * box_w < 1.0 or 2.0**m * box_h < 1.0:
        m += 1
    return m


@dataclass
class CoverReport:
    map_name: str
    center: tuple
    radius: float
    bins: int
    n_points: int
    fractions: list  # per-iterate image occupancy
    union_fractions: list  # occupancy of the union of images up to each iterate
    threshold: float
    first_full: int | None
    first_hit: np.ndarray | None = field(default=None, repr=False)

    def to_row(self) -> dict:
        return {
            "map": self.map_name,
            "center_x": self.center[0],
            "center_y": self.center[1],
            "radius": self.radius,
            "bins": self.bins,
            "n_points": self.n_points,
            "first_full": self.first_full if self.first_full is not None else -1,
            "final_fraction": self.fractions[-1],
            "final_union_fraction": self.union_fractions[-1],
        }

    def to_dict(self) -> dict:
        d = self.to_row()
        d.update(fractions=self.fractions, union_fractions=self.union_fractions, threshold=self.threshold)
        return d

    def pgm_bytes(self) -> bytes:
        """8-bit P5 image; brighter bins were reached earlier, black bins never."""
        fh = self.first_hit
        levels = len(self.fractions)
        img = np.zeros((self.bins, self.bins), dtype=np.uint8)
        hit = fh >= 0
        img[hit] = (255 - (fh[hit] * 200) // max(levels - 1, 1)).astype(np.uint8)
        # rows top to bottom = y descending; columns = x
        raster = img.T[::-1]
        header = f"P5\n{self.bins} {self.bins}\n255\n".encode("ascii")
        return header + raster.tobytes()

    def write_pgm(self, path) -> Path:
        path = Path(path)
        path.write_bytes(self.pgm_bytes())
        return path


def ball_samples(ball: SupBall, n_points: int = 1_000_000, seed: int = 0):
    """Seeded uniform random points in a sup-ball.

    A regular lattice is avoided on purpose: under the linear map it stays a
    lattice and aliases onto a few bins.
    """
    rng = np.random.default_rng(seed)
    t = rng.uniform(-1.0, 1.0, (n_points, 2)) * ball.radius
    return np.mod(ball.center[0] + t[:, 0], 1.0), np.mod(ball.center[1] + t[:, 1], 1.0)


def density_diagnostic(
    m: TorusMap,
    ball: SupBall,
    m_max: int = 20,
    bins: int = 256,
    n_points: int = 1_000_000,
    seed: int = 0,
    points=None,
) -> CoverReport:
    """Bin occupancy of ``m^k(ball)`` for ``k = 0..m_max``.

    "Full" means at least ``1 - 1/bins**2`` of the bins are hit; this is a
    resolution-limited stand-in for surjectivity. ``points`` overrides the
    random samples of the ball (used to seed the destroyer's trap strip).
    """
    if ball.radius < 1e-3:
        raise ValueError("ball radius must be at least 1e-3")
    if not 1 <= bins <= 1024:
        raise ValueError("bins must lie in [1, 1024]")
    x, y = ball_samples(ball, n_points, seed) if points is None else points
    hits = iterate_bin(m, x, y, m_max, bins)
    total = bins * bins
    fractions = [float(h.sum()) / total for h in hits]
    union = np.logical_or.accumulate(hits, axis=0)
    union_fractions = [float(u.sum()) / total for u in union]
    threshold = 1.0 - 1.0 / total
    first = next((k for k, f in enumerate(fractions) if f >= threshold), None)
    first_hit = np.where(union[-1], np.argmax(hits, axis=0), -1)
    return CoverReport(
        m.name,
        (float(ball.center[0]), float(ball.center[1])),
        float(ball.radius),
        bins,
        len(x),
        fractions,
        union_fractions,
        threshold,
        first,
        first_hit,
    )


def random_balls(count: int, radius: float, seed: int = 0):
    rng = np.random.default_rng(seed)
    return [SupBall((float(c[0]), float(c[1])), radius) for c in rng.random((count, 2))]


# ---------------------------------------------------------------- orbits avoiding the fold region


class RefinementError(RuntimeError):
    pass


def _image_with_params(m: TorusMap, curve: SampledCurve, step: float):
    raw = m.lift(curve.points[:, 0], curve.points[:, 1])
    if np.any(np.abs(np.diff(raw, axis=0)) >= 0.5):
        raise RefinementError("curve too coarse to map")
    u = _resample_preimages(raw, step)
    pre = curve.at(u)
    return SampledCurve(m.lift(pre[:, 0], pre[:, 1]), step), u


def _pick_avoiding(curve: SampledCurve, center, radius: float, min_diam: float, cap: float):
    runs = _split_outside(curve, [center], radius)
    best = None
    for a, b in runs:
        if b - a < 2:
            continue
        piece = curve.sub(a, b)
        if piece.diameter >= min_diam and (best is None or piece.diameter > best[2].diameter):
            best = (a, b, piece)
    if best is None:
        return None
    a, b, piece = best
    capped = cap_diameter(piece, cap)
    # recentre the lift so coordinates stay O(1) along long chains
    capped = SampledCurve(capped.points - np.floor(capped.points[0]), capped.step)
    return a, a + len(capped), capped


def ball_growth_run(m: TorusMap, ball: SupBall, a0: float, params=None, n_iter: int = 100, step: float = 2e-4) -> Certificate:
    """Grow a chord of ``ball`` and follow an orbit that never enters ``B((1/16, 1/4), 2r)``.

    A horizontal chord is grown until its diameter reaches ``8 r``. A piece of
    diameter at least ``2 r`` outside the ``2r``-ball is kept, mapped, cut
    again, ``n_iter`` times. The nested pieces pin down parameter intervals on
    the first piece; once those fall below ``1e-12`` forward tracking is
    meaningless, so the orbit is recovered by pulling the midpoint of the last
    piece back through the chain with Newton's method.
    """
    params = m.params if params is None else params
    r = params.r
    center = FOLD_CENTER
    chord = SampledCurve.segment(ball.center, (1.0, 0.0), 1.98 * ball.radius, step=min(step, ball.radius / 50))
    grown = growth_run(m, chord, a0, params=params)
    if grown.curve.diameter < 8 * r:
        raise RefinementError("chord did not reach diameter 8r")
    pick = _pick_avoiding(grown.curve, center, 2 * r, 2 * r, 2.5 * r)
    if pick is None:
        raise RefinementError("no piece of diameter 2r avoids the 2r-ball")
    pieces = [pick[2]]
    starts, params_u, image_diams = [], [], []
    for k in range(n_iter):
        img, u = _image_with_params(m, pieces[-1], step)
        image_diams.append(img.diameter)
        pick = _pick_avoiding(img, center, 2 * r, 2 * r, 2.5 * r)
        if pick is None:
            raise RefinementError(f"no admissible piece at iterate {k + 1}")
        a, _, piece = pick
        starts.append(a)
        params_u.append(u)
        pieces.append(piece)

    # nested parameter intervals on the first piece, in arclength units
    widths = []
    for k in range(1, n_iter + 1):
        lo, hi = 0.0, float(len(pieces[k]) - 1)
        for j in range(k, 0, -1):
            idx = np.arange(len(params_u[j - 1]), dtype=float)
            lo = float(np.interp(starts[j - 1] + lo, idx, params_u[j - 1]))
            hi = float(np.interp(starts[j - 1] + hi, idx, params_u[j - 1]))
        widths.append(abs(hi - lo) * pieces[0].step)
    depth = next((k + 1 for k, w in enumerate(widths) if w < 1e-12), None)

    # pull the midpoint of the last piece back to an exact orbit
    last = pieces[-1]
    mid = len(last) // 2
    orbit = [last.points[mid]]
    u_idx = float(mid)
    for k in range(n_iter, 0, -1):
        idx = np.arange(len(params_u[k - 1]), dtype=float)
        u_idx = float(np.interp(starts[k - 1] + u_idx, idx, params_u[k - 1]))
        guess = pieces[k - 1].at(np.array([u_idx]))[0]
        z, res, det = _solve_preimage(m, orbit[0], guess, tol=1e-15)
        if res > 1e-12:
            raise RefinementError(f"pullback residual {res:.3g} at iterate {k}")
        orbit.insert(0, z)
    orbit = np.array(orbit)
    img = m.lift(orbit[:-1, 0], orbit[:-1, 1])
    defect = float(np.max(np.abs(wrap_diff(img - orbit[1:]))))
    dist = torus_dist(np.mod(orbit, 1.0), center)
    margins = {
        "avoid_2r_ball": float(np.min(dist) - 2 * r),
        "image_diameter_8r": float(min(image_diams) / (8 * r) - 1.0),
        "pseudo_orbit_defect": 1e-12 - defect,
        "chord_growth": grown.certificate.margin,
    }
    return Certificate(
        "ball_growth",
        margin=min(margins.values()),
        tolerance=2 * r,
        witness=[float(orbit[0, 0] % 1.0), float(orbit[0, 1] % 1.0)],
        details={
            "ball": {"center": list(ball.center), "radius": ball.radius},
            "margins": margins,
            "n_iter": n_iter,
            "growth_diameters": grown.diameters,
            "min_image_diameter": min(image_diams),
            "min_distance_to_fold_center": float(np.min(dist)),
            "orbit_defect": defect,
            "nested_widths": widths[:20],
            "refinement_depth": depth,
        },
    )
