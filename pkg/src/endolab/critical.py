"""Critical set of the fold family: extraction, classification, and the implicit graph.

For ``f(x, y) = (8x, 2y - psi(x) phi(y))`` the Jacobian determinant is
``8 G`` with ``G = 2 - psi(x) phi'(y)``, so the critical set is the zero set
of ``G``. For a general map the residual ``det(J) / 8`` is used instead.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.spatial import cKDTree

from .certificate import Certificate
from .params import MapParams
from .profiles import ProfileError
from .torus import GridSpec, IMAGE_CENTER, torus_dist, wrap_diff

ANGLE_THRESHOLD = 1e-3
ROOT_TOL = 1e-10
MAX_NEWTON = 50


class CriticalError(RuntimeError):
    pass


# ---------------------------------------------------------------- residuals


def critical_residual(params: MapParams, x, y):
    """``G = 2 - psi(x) phi'(y)`` and its gradient ``(-psi' phi', -psi phi'')``."""
    x = np.mod(np.asarray(x, dtype=float), 1.0)
    y = np.mod(np.asarray(y, dtype=float), 1.0)
    ps, dps = params.psi.derivatives(x, 1)
    _, dph, ddph = params.phi.derivatives(y, 2)
    G = 2.0 - ps * dph
    gx = -dps * dph
    gy = -ps * ddph
    return G, gx, gy


class ParamsLevel:
    """Critical residual of the fold family built from ``params``."""

    def __init__(self, params: MapParams):
        self.params = params

    def __call__(self, x, y):
        return critical_residual(self.params, x, y)

    def kernel(self, x, y):
        # the second column of Df vanishes on S, so the kernel is vertical
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.array([0.0, 1.0]), x.shape + (2,)).copy()


class DetLevel:
    """Residual ``det(J) / scale`` of a differentiable map, with exact gradient."""

    def __init__(self, m, scale: float = 8.0):
        self.map = m
        self.scale = scale

    def __call__(self, x, y):
        x = np.asarray(x, dtype=float)
        shape = x.shape
        _, J, H = self.map.jet(x.ravel(), np.asarray(y, dtype=float).ravel())
        det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
        # d/dx_k det = H00k J11 + J00 H11k - H01k J10 - J01 H10k
        grad = (
            H[:, 0, 0, :] * J[:, 1, 1, None]
            + J[:, 0, 0, None] * H[:, 1, 1, :]
            - H[:, 0, 1, :] * J[:, 1, 0, None]
            - J[:, 0, 1, None] * H[:, 1, 0, :]
        )
        s = self.scale
        return (det / s).reshape(shape), (grad[:, 0] / s).reshape(shape), (grad[:, 1] / s).reshape(shape)

    def kernel(self, x, y):
        J = self.map.jacobian(np.asarray(x, float).ravel(), np.asarray(y, float).ravel())
        # kernel of a rank-one matrix is orthogonal to its dominant row
        n0 = np.hypot(J[:, 0, 0], J[:, 0, 1])
        n1 = np.hypot(J[:, 1, 0], J[:, 1, 1])
        row = np.where((n0 >= n1)[:, None], J[:, 0, :], J[:, 1, :])
        k = np.stack([-row[:, 1], row[:, 0]], axis=-1)
        k /= np.linalg.norm(k, axis=-1, keepdims=True)
        k *= np.where(k[:, 1:2] < 0, -1.0, 1.0)
        return k


def as_level(source):
    if isinstance(source, MapParams):
        return ParamsLevel(source)
    if isinstance(source, (ParamsLevel, DetLevel)):
        return source
    return DetLevel(source)


# ---------------------------------------------------------------- classification


@dataclass
class CriticalSample:
    point: tuple
    tangent: tuple
    kernel: tuple
    fold: bool
    transversality_angle: float
    residual: float = 0.0

    @property
    def fold_flag(self) -> str:
        return "fold" if self.fold else "non_fold"


def _angles(tangent, kernel):
    dot = np.abs(np.sum(tangent * kernel, axis=-1))
    cross = np.abs(tangent[..., 0] * kernel[..., 1] - tangent[..., 1] * kernel[..., 0])
    return np.arctan2(cross, dot)


def classify(point, source, threshold: float = ANGLE_THRESHOLD) -> CriticalSample:
    """Classify one critical point as fold or non-fold.

    The tangent to S is the gradient of the residual rotated by a right angle;
    the point is a fold iff the tangent makes an angle above ``threshold``
    with the kernel of the Jacobian.
    """
    level = as_level(source)
    x, y = float(point[0]), float(point[1])
    G, gx, gy = (float(np.ravel(v)[0]) for v in level(np.array([x]), np.array([y])))
    if abs(G) > ROOT_TOL:
        raise CriticalError(f"point ({x}, {y}) is not critical: residual {G:.3e}")
    norm = np.hypot(gx, gy)
    if norm == 0.0:
        raise CriticalError(f"degenerate gradient at ({x}, {y}); tangent undefined")
    t = np.array([-gy, gx]) / norm
    if t[0] < 0 or (t[0] == 0 and t[1] < 0):
        t = -t
    k = level.kernel(np.array([x]), np.array([y]))[0]
    ang = float(_angles(t, k))
    return CriticalSample((x, y), tuple(t), tuple(k), ang > threshold, ang, G)


# ---------------------------------------------------------------- extraction


@dataclass
class CriticalCurve:
    """One polyline of critical samples with per-sample classification."""

    points: np.ndarray
    grad: np.ndarray
    tangent: np.ndarray
    kernel: np.ndarray
    angle: np.ndarray
    residual: np.ndarray
    closed: bool
    threshold: float = ANGLE_THRESHOLD

    @property
    def fold(self):
        return self.angle > self.threshold

    def __len__(self):
        return len(self.points)

    def samples(self):
        for i in range(len(self.points)):
            yield CriticalSample(
                tuple(self.points[i]),
                tuple(self.tangent[i]),
                tuple(self.kernel[i]),
                bool(self.angle[i] > self.threshold),
                float(self.angle[i]),
                float(self.residual[i]),
            )


@dataclass
class Extraction:
    curves: list
    grid: GridSpec
    failures: list = field(default_factory=list)

    @property
    def points(self):
        if not self.curves:
            return np.empty((0, 2))
        return np.concatenate([c.points for c in self.curves])

    def concat(self, attr):
        if not self.curves:
            return np.empty((0,))
        return np.concatenate([getattr(c, attr) for c in self.curves])

    def __len__(self):
        return sum(len(c) for c in self.curves)


def critical_box(params: MapParams, pad: float = 0.02):
    """Box ``supp psi x supp phi`` (slightly padded) that contains S."""
    xl, xh = params.psi.support
    yl, yh = params.phi.support
    px = pad * (xh - xl)
    py = pad * (yh - yl)
    return (xl - px, xh + px, yl - py, yh + py)


def default_critical_grid(params: MapParams, n: int = 512) -> GridSpec:
    return GridSpec(n, critical_box(params))


def _refine_edges(level, p0, p1, v0, v1, tol=ROOT_TOL):
    """Safeguarded Newton on each segment ``p0 + s (p1 - p0)``, s in [0, 1]."""
    d = p1 - p0
    lo = np.zeros(len(p0))
    hi = np.ones(len(p0))
    neg_at_lo = v0 < 0
    s = np.clip(v0 / (v0 - v1), 0.0, 1.0)
    done = np.zeros(len(p0), dtype=bool)
    best_val = np.full(len(p0), np.inf)
    best_s = s.copy()
    for _ in range(MAX_NEWTON):
        act = ~done
        if not np.any(act):
            break
        pts = p0[act] + s[act, None] * d[act]
        val, gx, gy = level(pts[:, 0], pts[:, 1])
        better = np.abs(val) < best_val[act]
        idx = np.flatnonzero(act)
        best_val[idx[better]] = np.abs(val[better])
        best_s[idx[better]] = s[idx[better]]
        conv = np.abs(val) <= tol
        done[idx[conv]] = True
        # shrink bracket
        is_neg = val < 0
        move_lo = is_neg == neg_at_lo[act]
        lo[idx[move_lo]] = s[idx[move_lo]]
        hi[idx[~move_lo]] = s[idx[~move_lo]]
        slope = gx * d[act, 0] + gy * d[act, 1]
        with np.errstate(divide="ignore", invalid="ignore"):
            step = s[act] - val / slope
        bad = ~np.isfinite(step) | (step <= lo[act]) | (step >= hi[act])
        step[bad] = 0.5 * (lo[act][bad] + hi[act][bad])
        upd = idx[~conv]
        s[upd] = step[~conv]
        if np.all(hi[act] - lo[act] == 0):
            break
    pts = p0 + best_s[:, None] * d
    return pts, best_val, best_val <= tol


def sample_critical_set(source, grid: GridSpec | None = None, threshold: float = ANGLE_THRESHOLD) -> Extraction:
    """Marching-squares extraction of the zero set of the critical residual.

    ``source`` is a :class:`MapParams` (residual ``G``) or a map exposing
    ``jet`` (residual ``det J / 8``). Each sign-changing grid edge is refined
    by safeguarded Newton to ``|residual| <= 1e-10``; crossings are chained
    into polylines through shared cells, saddle cells being resolved by the
    residual at the cell centre.
    """
    level = as_level(source)
    if grid is None:
        if isinstance(source, MapParams):
            grid = default_critical_grid(source)
        elif hasattr(source, "params"):
            grid = default_critical_grid(source.params)
        else:
            raise ValueError("a grid is required for maps without params")
    if grid.box is None:
        raise ValueError("critical extraction needs a box grid")
    n = grid.n
    x0, x1, y0, y1 = grid.box
    xs = np.linspace(x0, x1, n)
    ys = np.linspace(y0, y1, n)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    V = level(X, Y)[0]
    pos = V >= 0

    ex = pos[:-1, :] != pos[1:, :]  # edge (i,j)-(i+1,j)
    ey = pos[:, :-1] != pos[:, 1:]  # edge (i,j)-(i,j+1)
    nx_edges = (n - 1) * n

    ix, jx = np.nonzero(ex)
    iy, jy = np.nonzero(ey)
    ids = np.concatenate([ix * n + jx, nx_edges + iy * (n - 1) + jy])
    p0 = np.concatenate(
        [np.column_stack([xs[ix], ys[jx]]), np.column_stack([xs[iy], ys[jy]])]
    )
    p1 = np.concatenate(
        [np.column_stack([xs[ix + 1], ys[jx]]), np.column_stack([xs[iy], ys[jy + 1]])]
    )
    v0 = np.concatenate([V[ix, jx], V[iy, jy]])
    v1 = np.concatenate([V[ix + 1, jx], V[iy, jy + 1]])
    if len(ids) == 0:
        return Extraction([], grid)

    roots, res, ok = _refine_edges(level, p0, p1, v0, v1)
    failures = [tuple(p) for p in roots[~ok]]
    root_of = {int(e): k for k, e in enumerate(ids)}

    # cell (i,j) edges: bottom ex[i,j], top ex[i,j+1], left ey[i,j], right ey[i+1,j]
    def hid(i, j):
        return i * n + j

    def vid(i, j):
        return nx_edges + i * (n - 1) + j

    cells = set()
    for i, j in zip(ix, jx):
        if j < n - 1:
            cells.add((i, j))
        if j > 0:
            cells.add((i, j - 1))
    for i, j in zip(iy, jy):
        if i < n - 1:
            cells.add((i, j))
        if i > 0:
            cells.add((i - 1, j))

    adj: dict[int, list] = {}

    def link(a, b):
        adj.setdefault(a, []).append(b)
        adj.setdefault(b, []).append(a)

    saddle_cells = [c for c in cells if ex[c[0], c[1]] and ex[c[0], c[1] + 1] and ey[c[0], c[1]] and ey[c[0] + 1, c[1]]]
    centre_sign = {}
    if saddle_cells:
        sc = np.array(saddle_cells)
        cxs = 0.5 * (xs[sc[:, 0]] + xs[sc[:, 0] + 1])
        cys = 0.5 * (ys[sc[:, 1]] + ys[sc[:, 1] + 1])
        cv = level(cxs, cys)[0] >= 0
        centre_sign = {tuple(c): bool(s) for c, s in zip(saddle_cells, cv)}

    for i, j in cells:
        bottom, top = hid(i, j), hid(i, j + 1)
        left, right = vid(i, j), vid(i + 1, j)
        present = [e for e, on in ((bottom, ex[i, j]), (right, ey[i + 1, j]), (top, ex[i, j + 1]), (left, ey[i, j])) if on]
        if len(present) == 2:
            link(present[0], present[1])
        elif len(present) == 4:
            if centre_sign[(i, j)] == pos[i, j]:
                # corners (i,j) and (i+1,j+1) joined through the centre
                link(bottom, right)
                link(top, left)
            else:
                link(bottom, left)
                link(right, top)

    curves = []
    seen = set()

    def walk(start):
        chain = [start]
        seen.add(start)
        prev, cur = None, start
        while True:
            nxt = [e for e in adj.get(cur, []) if e != prev and e not in seen]
            if not nxt:
                break
            prev, cur = cur, nxt[0]
            chain.append(cur)
            seen.add(cur)
        closed = len(chain) > 2 and start in adj.get(chain[-1], [])
        return chain, closed

    ends = [e for e, nb in adj.items() if len(nb) == 1]
    order = ends + [e for e in adj if e not in ends]
    for e in order:
        if e in seen:
            continue
        chain, closed = walk(e)
        curves.append(_make_curve(level, roots[[root_of[c] for c in chain]], closed, threshold))
    return Extraction(curves, grid, failures)


def _make_curve(level, pts, closed, threshold):
    G, gx, gy = level(pts[:, 0], pts[:, 1])
    grad = np.column_stack([gx, gy])
    norm = np.linalg.norm(grad, axis=1, keepdims=True)
    tangent = np.column_stack([-gy, gx]) / np.where(norm > 0, norm, 1.0)
    # orient along the chain
    step = np.gradient(pts, axis=0) if len(pts) > 1 else tangent
    flip = np.sum(step * tangent, axis=1) < 0
    tangent[flip] *= -1
    kernel = level.kernel(pts[:, 0], pts[:, 1])
    angle = _angles(tangent, kernel)
    return CriticalCurve(pts, grad, tangent, kernel, angle, G, closed, threshold)


def hausdorff(a: Extraction, b: Extraction) -> float:
    """Sup-norm Hausdorff distance between two sampled critical sets."""
    pa, pb = a.points, b.points
    if len(pa) == 0 and len(pb) == 0:
        return 0.0
    if len(pa) == 0 or len(pb) == 0:
        return np.inf
    da, _ = cKDTree(pb).query(pa, p=np.inf)
    db, _ = cKDTree(pa).query(pb, p=np.inf)
    return float(max(da.max(), db.max()))


# ---------------------------------------------------------------- non-fold points


@dataclass
class NonFoldReport:
    points: list
    samples: list
    min_angle_off_balls: float
    ball_radius: float
    n_checked: int

    def certificate(self) -> Certificate:
        margin = min(
            self.min_angle_off_balls - ANGLE_THRESHOLD,
            min(ANGLE_THRESHOLD - s.transversality_angle for s in self.samples),
        )
        return Certificate(
            "non_fold_points",
            margin=margin,
            tolerance=ANGLE_THRESHOLD,
            witness=[list(p) for p in self.points],
            details={
                "min_angle_off_balls": self.min_angle_off_balls,
                "ball_radius": self.ball_radius,
                "samples_checked": self.n_checked,
                "tangents": [list(s.tangent) for s in self.samples],
            },
        )


def find_non_fold_points(params: MapParams, extraction: Extraction | None = None, ball_radius: float | None = None) -> NonFoldReport:
    """Locate the two non-fold points ``(x, y0)`` with ``psi(x) = 2``.

    Bisection on each monotone side of the bump gives the two x values;
    the extracted polylines are then swept to confirm that every sample
    outside the sup-balls of radius ``ball_radius`` (default ``eta``) around
    them is of fold type.
    """
    psi = params.psi
    c, th = psi.center, psi.theta
    if psi.peak <= 2.0:
        raise ProfileError("psi never reaches 2: no non-fold points")
    xs = []
    for lo, hi in ((c - th, c), (c, c + th)):
        fl = float(psi(lo)) - 2.0
        fh = float(psi(hi)) - 2.0
        if fl * fh > 0:
            raise CriticalError("psi = 2 does not have exactly two solutions")
        xs.append(brentq(lambda x: float(psi(x)) - 2.0, lo, hi, xtol=1e-18, rtol=1e-15, maxiter=200))
    y0 = params.phi.y_peak
    points = [(xs[0], y0), (xs[1], y0)]
    samples = [classify(p, params) for p in points]

    if extraction is None:
        extraction = sample_critical_set(params)
    radius = params.eta if ball_radius is None else ball_radius
    pts = extraction.points
    ang = extraction.concat("angle")
    far = np.ones(len(pts), dtype=bool)
    for p in points:
        far &= torus_dist(pts, p) >= radius
    min_angle = float(ang[far].min()) if np.any(far) else np.inf
    return NonFoldReport(points, samples, min_angle, radius, int(far.sum()))


# ---------------------------------------------------------------- implicit graph


@dataclass
class CriticalGraph:
    """Bottom branch ``y(x)`` of S near the fold, ``G(x, y(x)) = 0``.

    Evaluation starts from cubic Hermite interpolation of dense samples and
    closes with Newton in ``y``; derivatives follow from implicit
    differentiation.
    """

    params: MapParams
    window: tuple
    xs: np.ndarray
    ys: np.ndarray
    dys: np.ndarray

    @property
    def hx(self) -> float:
        return float(self.xs[1] - self.xs[0])

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        return (x >= self.window[0]) & (x <= self.window[1])

    def _guess(self, x):
        k = np.clip(((x - self.xs[0]) / self.hx).astype(int), 0, len(self.xs) - 2)
        h = self.hx
        t = (x - self.xs[k]) / h
        t2, t3 = t * t, t * t * t
        return (
            (2 * t3 - 3 * t2 + 1) * self.ys[k]
            + (t3 - 2 * t2 + t) * h * self.dys[k]
            + (-2 * t3 + 3 * t2) * self.ys[k + 1]
            + (t3 - t2) * h * self.dys[k + 1]
        )

    def y(self, x, order: int = 0):
        """``y(x)`` and, up to ``order`` (<= 2), its derivatives."""
        x = np.asarray(x, dtype=float)
        shape = x.shape
        x = x.ravel()
        psi, phi = self.params.psi, self.params.phi
        ps, dps, ddps = psi.derivatives(x, 2)
        y = self._guess(x)
        for _ in range(6):
            _, d1, d2 = phi.derivatives(y, 2)
            G = 2.0 - ps * d1
            step = G / (-ps * d2)
            y = y - step
            if np.all(np.abs(step) <= 1e-16):
                break
        out = [y.reshape(shape)]
        if order >= 1:
            _, d1, d2, d3 = phi.derivatives(y, 3)
            Gx = -dps * d1
            Gy = -ps * d2
            y1 = -Gx / Gy
            out.append(y1.reshape(shape))
            if order >= 2:
                Gxx = -ddps * d1
                Gxy = -dps * d2
                Gyy = -ps * d3
                y2 = -(Gxx + 2 * Gxy * y1 + Gyy * y1 * y1) / Gy
                out.append(y2.reshape(shape))
        return out if order else out[0]

    def c(self, x, order: int = 0):
        """Critical value curve ``c(x) = 2 y(x) - psi(x) phi(y(x))`` minus 1/2, with derivatives.

        Returned as ``c - 1/2`` to keep the tiny offset from the fold value
        free of cancellation.
        """
        x = np.asarray(x, dtype=float)
        ys = self.y(x, order=1 if order >= 2 else 0)
        y = ys[0] if order >= 2 else ys
        psi, phi = self.params.psi, self.params.phi
        ps, dps, ddps = psi.derivatives(x, 2)
        ph, dph = phi.derivatives(y, 1)
        out = [2.0 * (y - 0.25) - ps * ph]
        if order >= 1:
            # on S the y-derivative of q vanishes, so c' = q_x
            out.append(-dps * ph)
        if order >= 2:
            out.append(-ddps * ph - dps * dph * ys[1])
        return out if order else out[0]

    def residual(self, x):
        y = self.y(x)
        return critical_residual(self.params, x, y)[0]


def trace_graph(params: MapParams, beta: float | None = None, step: float | None = None) -> CriticalGraph:
    """Continue ``G(x, y) = 0`` from the fold point across ``|x - 1/16| <= beta``."""
    beta = params.beta if beta is None else beta
    step = params.theta / 512.0 if step is None else step
    c = params.psi.center
    n_half = max(2, int(np.ceil(beta / step)))
    xs = c + beta * np.arange(-n_half, n_half + 1) / n_half
    psi, phi = params.psi, params.phi
    ps, dps = psi.derivatives(xs, 1)
    ys = np.empty_like(xs)
    order = np.argsort(np.abs(xs - c), kind="stable")
    # continuation outward from the centre, each Newton warm-started by its neighbour
    ys[order[0]] = 0.25
    for idx in order:
        nb = idx - 1 if xs[idx] > c else idx + 1
        y = ys[nb] if (0 <= nb < len(xs) and idx != order[0]) else 0.25
        for _ in range(60):
            _, d1, d2 = phi.derivatives(y, 2)
            G = 2.0 - ps[idx] * d1
            Gy = -ps[idx] * d2
            if abs(Gy) < 1e-8:
                raise CriticalError(f"|psi phi''| < 1e-8 at x={xs[idx]}: window too wide")
            dy = G / Gy
            y -= dy
            if abs(dy) <= 1e-16:
                break
        else:
            raise CriticalError(f"Newton for y(x) did not converge at x={xs[idx]}")
        ys[idx] = y
    _, d1, d2 = phi.derivatives(ys, 2)
    Gy = -ps * d2
    if np.min(np.abs(Gy)) < 1e-8:
        raise CriticalError("|psi phi''| < 1e-8 on the graph window: window too wide")
    dys = -(-dps * d1) / Gy
    return CriticalGraph(params, (c - beta, c + beta), xs, ys, dys)


@dataclass
class Gamma1:
    """``gamma1(t) = c(t / 8)`` on the image window ``|t - 1/2| <= 8 beta``."""

    graph: CriticalGraph

    @property
    def window(self):
        lo, hi = self.graph.window
        return (8.0 * lo, 8.0 * hi)

    @property
    def half_width(self):
        return 8.0 * (self.graph.window[1] - self.graph.window[0]) / 2.0

    def offset(self, t, order: int = 0):
        """``gamma1 - 1/2`` and derivatives (scaled by 1/8 per order)."""
        x = np.asarray(t, dtype=float) / 8.0
        vals = self.graph.c(x, order)
        if not order:
            return vals
        return [v / 8.0**k for k, v in enumerate(vals)]

    def __call__(self, t):
        return 0.5 + self.offset(t)

    def bounds(self, n: int = 4001):
        t = np.linspace(*self.window, n)
        v, d1, d2 = self.offset(t, 2)
        return {
            "sup": float(np.max(np.abs(v))),
            "sup_d1": float(np.max(np.abs(d1))),
            "sup_d2": float(np.max(np.abs(d2))),
        }


def gamma1(graph: CriticalGraph, budget=None, min_beta: float | None = None):
    """Build ``gamma1`` and, given a budget, shrink the window until it fits.

    ``budget`` needs attributes ``a``, ``a1``, ``a2``; the three bounds are
    ``sup |gamma1 - 1/2| <= 2a``, ``sup |gamma1'| <= a1``,
    ``sup |gamma1''| <= a2``. Returns the curve; its graph carries the final
    window.
    """
    g = Gamma1(graph)
    if budget is None:
        return g
    params = graph.params
    floor = params.theta / 512.0 * 4 if min_beta is None else min_beta
    beta = (graph.window[1] - graph.window[0]) / 2.0
    while True:
        b = g.bounds()
        if b["sup"] <= 2 * budget.a and b["sup_d1"] <= budget.a1 and b["sup_d2"] <= budget.a2:
            return g
        beta /= 2.0
        if beta < floor:
            raise CriticalError(f"gamma1 bounds fail down to beta={beta:.3e}: {b}")
        g = Gamma1(trace_graph(params, beta=beta))


# ---------------------------------------------------------------- fold image window


@dataclass
class FoldWindow:
    rho: float
    rho_graph: float
    rho_other: float
    cap: float
    worst_line_deviation: float
    n_graph: int
    n_other: int

    def __float__(self):
        return float(self.rho)

    def to_dict(self):
        return dict(self.__dict__)


def fold_image_window(h, graph: CriticalGraph, extraction: Extraction | None = None, tol: float = 1e-9) -> FoldWindow:
    """Largest sup-radius ``rho <= 8 beta`` around (1/2, 1/2) where ``h(S)`` is a horizontal segment.

    Two conditions bound ``rho``: traced graph samples whose image abscissa
    lies within ``rho`` of 1/2 must land on ``y = 1/2`` (within ``tol``), and
    no other critical image may enter the open ball.
    """
    cap = 8.0 * (graph.window[1] - graph.window[0]) / 2.0
    xs = np.linspace(graph.window[0], graph.window[1], 4 * len(graph.xs) + 1)
    ys = graph.y(xs)
    img = h.lift(xs, ys)
    dt = np.abs(wrap_diff(img[:, 0] - IMAGE_CENTER[0]))
    dev = np.abs(wrap_diff(img[:, 1] - IMAGE_CENTER[1]))
    bad = dev > tol
    rho_graph = float(dt[bad].min()) if np.any(bad) else np.inf

    if extraction is None:
        extraction = sample_critical_set(graph.params)
    pts = extraction.points
    rho_other = np.inf
    n_other = 0
    if len(pts):
        im = h.lift(pts[:, 0], pts[:, 1])
        off = np.abs(wrap_diff(im[:, 1] - 0.5)) > tol
        n_other = int(off.sum())
        if np.any(off):
            rho_other = float(np.min(torus_dist(im[off], IMAGE_CENTER)))
    rho = min(cap, rho_graph, rho_other)
    if np.any(bad & (dt == 0)):
        rho = 0.0
    return FoldWindow(
        rho=float(rho),
        rho_graph=float(rho_graph),
        rho_other=float(rho_other),
        cap=float(cap),
        worst_line_deviation=float(dev[dt < rho].max()) if np.any(dt < rho) else 0.0,
        n_graph=len(xs),
        n_other=n_other,
    )


# ---------------------------------------------------------------- transversality


def transversality_to_rank1(m, grid: GridSpec | None = None, floor: float = 1e-6) -> Certificate:
    """The critical set of ``m`` is a regular level set of ``det Dm``.

    Margin is ``min |grad det| - floor`` along the extracted polylines; with
    no critical points the check passes vacuously.
    """
    level = DetLevel(m, scale=1.0)
    if grid is None:
        grid = default_critical_grid(m.params)
    ext = sample_critical_set(level, grid)
    if len(ext) == 0:
        return Certificate("transversality_rank1", margin=np.inf, grid=grid.describe(), tolerance=floor, details={"samples": 0})
    g = np.concatenate([np.linalg.norm(c.grad, axis=1) for c in ext.curves])
    worst = int(np.argmin(g))
    return Certificate(
        "transversality_rank1",
        margin=float(g[worst] - floor),
        grid=grid.describe(),
        tolerance=floor,
        witness=list(ext.points[worst]),
        details={"samples": len(g), "min_grad_det": float(g[worst]), "failures": len(ext.failures)},
    )
