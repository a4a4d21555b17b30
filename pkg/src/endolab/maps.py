"""Differentiable torus maps with exact first and second derivatives.

Every map exposes ``lift(x, y)`` (planar values of a continuous lift, so
``evaluate = wrap . lift``) and ``jet(x, y)`` returning the lift values, the
Jacobians ``(N, 2, 2)`` and the Hessian tensors ``(N, 2, 2, 2)`` with
``H[n, i, j, k] = d^2 m_i / dx_j dx_k``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .certificate import Certificate
from .critical import (
    CriticalGraph,
    Gamma1,
    fold_image_window,
    gamma1,
    sample_critical_set,
    trace_graph,
)
from .params import MapParams, ParamError
from .profiles import Plateau, build_plateau
from .torus import GridSpec, TorusPoint, lift_path, wrap, wrap_diff

A_MATRIX = np.array([[8.0, 0.0], [0.0, 2.0]])
SAFETY = 0.9


class BudgetError(ValueError):
    """The flattening data violate one of the C2 budget bullets (named in ``bullet``)."""

    def __init__(self, bullet: str, detail: str = ""):
        self.bullet = bullet
        super().__init__(f"flattening budget violated: {bullet}" + (f" ({detail})" if detail else ""))


def _xy(x, y):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    x, y = np.broadcast_arrays(x, y)
    return x.ravel(), y.ravel()


# ---------------------------------------------------------------- base class


class TorusMap:
    name = "map"
    support_note = "everywhere"
    params: MapParams | None = None

    def lift(self, x, y):
        return self.jet(x, y)[0]

    def jet(self, x, y):
        raise NotImplementedError

    def evaluate(self, x, y):
        L = self.lift(x, y)
        wx, wy = wrap(L[:, 0], L[:, 1])
        return np.column_stack([wx, wy])

    def __call__(self, p):
        out = self.evaluate(p[0], p[1])[0]
        return TorusPoint(float(out[0]), float(out[1]))

    def jacobian(self, x, y):
        return self.jet(x, y)[1]

    def hessian(self, x, y):
        return self.jet(x, y)[2]

    def second_derivs(self, x, y):
        """``(N, 2, 3)``: per component the xx, xy, yy partials."""
        H = self.hessian(x, y)
        return np.stack([H[:, :, 0, 0], H[:, :, 0, 1], H[:, :, 1, 1]], axis=-1)

    def kernel_spec(self):
        """Parameters for the compiled evaluator, or ``None`` if unsupported."""
        return None

    def describe(self) -> dict:
        out = {"name": self.name, "support": self.support_note}
        if self.params is not None:
            out["params"] = self.params.to_json()
        return out

    def __repr__(self):
        return f"<{type(self).__name__} {self.name}>"


class LinearMap(TorusMap):
    def __init__(self, A=A_MATRIX, name="A"):
        A = np.asarray(A, dtype=float)
        if not np.array_equal(A, np.round(A)):
            raise ValueError("torus endomorphisms need an integer matrix")
        self.A = A
        self.name = name

    def lift(self, x, y):
        x, y = _xy(x, y)
        return np.column_stack([self.A[0, 0] * x + self.A[0, 1] * y, self.A[1, 0] * x + self.A[1, 1] * y])

    def jet(self, x, y):
        x, y = _xy(x, y)
        n = len(x)
        J = np.broadcast_to(self.A, (n, 2, 2)).copy()
        return self.lift(x, y), J, np.zeros((n, 2, 2, 2))

    def kernel_spec(self):
        return {"kind": "linear", "A": self.A}


def build_A() -> LinearMap:
    return LinearMap()


# ---------------------------------------------------------------- fold family


class FoldMap(TorusMap):
    """``f(x, y) = (8x, 2y - psi(x) phi(y))``."""

    def __init__(self, params: MapParams, name="f"):
        self.params = params
        self.name = name
        lo, hi = params.psi.support
        self.support_note = f"supp psi x supp phi = [{lo}, {hi}] x {list(params.phi.support)}"

    def _bump(self, x, y, order):
        xm = np.mod(x, 1.0)
        ym = np.mod(y, 1.0)
        return self.params.psi.derivatives(xm, order), self.params.phi.derivatives(ym, order)

    def lift(self, x, y):
        x, y = _xy(x, y)
        psi, phi = self.params.psi, self.params.phi
        q = 2.0 * y
        xm, ym = np.mod(x, 1.0), np.mod(y, 1.0)
        m = (xm > psi.support[0]) & (xm < psi.support[1]) & (ym > phi.support[0]) & (ym < phi.support[1])
        if np.any(m):
            q[m] -= psi(xm[m]) * phi(ym[m])
        return np.column_stack([8.0 * x, q])

    def jet(self, x, y):
        x, y = _xy(x, y)
        (ps, dps, ddps), (ph, dph, ddph) = self._bump(x, y, 2)
        n = len(x)
        L = np.column_stack([8.0 * x, 2.0 * y - ps * ph])
        J = np.zeros((n, 2, 2))
        J[:, 0, 0] = 8.0
        J[:, 1, 0] = -dps * ph
        J[:, 1, 1] = 2.0 - ps * dph
        H = np.zeros((n, 2, 2, 2))
        H[:, 1, 0, 0] = -ddps * ph
        H[:, 1, 0, 1] = H[:, 1, 1, 0] = -dps * dph
        H[:, 1, 1, 1] = -ps * ddph
        return L, J, H

    def kernel_spec(self):
        return {"kind": "family", "params": self.params}


def build_f(params: MapParams) -> FoldMap:
    params.validate()
    return FoldMap(params)


class CollapsedFoldMap(FoldMap):
    """Fold map whose second component is pinned to the critical value near the graph.

    ``q~ = q - P (q - c(x))`` with ``P = beta_x(x - 1/16) chi(y - y(x))``;
    on ``{P = 1}`` the map sends every point to ``(8x, c(x))``, the image of
    the critical point above ``x``.
    """

    def __init__(self, params: MapParams, graph: CriticalGraph, eta: float, name="f_collapsed"):
        super().__init__(params, name)
        self.graph = graph
        self.eta = float(eta)
        half = (graph.window[1] - graph.window[0]) / 2.0
        self.x_cut: Plateau = build_plateau(half / 2.0, half)
        self.chi: Plateau = build_plateau(self.eta / 2.0, self.eta)
        self.center = params.psi.center
        self.support_note = (
            f"strip |x - {self.center}| < {half}, |y - y(x)| < {self.eta}"
        )

    @property
    def inner_half_width(self) -> float:
        return self.x_cut.inner

    def _strip_mask(self, x):
        return np.abs(wrap_diff(x - self.center)) < self.x_cut.outer

    def _collapse(self, x, y, order):
        """P, D and their partials on the x-window rows."""
        xm = self.center + wrap_diff(x - self.center)
        ym = np.mod(y, 1.0)
        B = self.x_cut.derivatives(xm - self.center, order)
        yx = self.graph.y(xm, order) if order else [self.graph.y(xm)]
        s = wrap_diff(ym - yx[0])
        X = self.chi.derivatives(s, order)
        c = self.graph.c(xm, order) if order else [self.graph.c(xm)]
        ps = self.params.psi.derivatives(xm, order)
        ph = self.params.phi.derivatives(ym, order)
        P = B[0] * X[0]
        D = 2.0 * (ym - 0.25) - ps[0] * ph[0] - c[0]
        out = {"P": P, "D": D}
        if order >= 1:
            y1 = yx[1]
            out["Px"] = B[1] * X[0] - B[0] * X[1] * y1
            out["Py"] = B[0] * X[1]
            out["Dx"] = -ps[1] * ph[0] - c[1]
            out["Dy"] = 2.0 - ps[0] * ph[1]
        if order >= 2:
            y2 = yx[2]
            out["Pxx"] = B[2] * X[0] - 2 * B[1] * X[1] * y1 + B[0] * X[2] * y1 * y1 - B[0] * X[1] * y2
            out["Pxy"] = B[1] * X[1] - B[0] * X[2] * y1
            out["Pyy"] = B[0] * X[2]
            out["Dxx"] = -ps[2] * ph[0] - c[2]
            out["Dxy"] = -ps[1] * ph[1]
            out["Dyy"] = -ps[0] * ph[2]
        return out

    def lift(self, x, y):
        x, y = _xy(x, y)
        L = super().lift(x, y)
        m = self._strip_mask(x)
        if np.any(m):
            k = self._collapse(x[m], y[m], 0)
            L[m, 1] -= k["P"] * k["D"]
        return L

    def jet(self, x, y):
        x, y = _xy(x, y)
        L, J, H = super().jet(x, y)
        m = self._strip_mask(x)
        if np.any(m):
            k = self._collapse(x[m], y[m], 2)
            P, D = k["P"], k["D"]
            L[m, 1] -= P * D
            J[m, 1, 0] -= k["Px"] * D + P * k["Dx"]
            J[m, 1, 1] -= k["Py"] * D + P * k["Dy"]
            hxx = k["Pxx"] * D + 2 * k["Px"] * k["Dx"] + P * k["Dxx"]
            hxy = k["Pxy"] * D + k["Px"] * k["Dy"] + k["Py"] * k["Dx"] + P * k["Dxy"]
            hyy = k["Pyy"] * D + 2 * k["Py"] * k["Dy"] + P * k["Dyy"]
            H[m, 1, 0, 0] -= hxx
            H[m, 1, 0, 1] -= hxy
            H[m, 1, 1, 0] -= hxy
            H[m, 1, 1, 1] -= hyy
        return L, J, H

    def kernel_spec(self):
        return {"kind": "family", "params": self.params, "collapse": self}


# ---------------------------------------------------------------- flattening


@dataclass(frozen=True)
class FlatteningBudget:
    """Bounds ``a, a1, a2`` on the graph offset, derived from ``(epsilon, r, b)``.

    ``m1``, ``m2`` are the measured suprema of the first two derivatives of the
    y-bump of width ``delta0``.
    """

    epsilon: float
    b: float
    delta0: float
    m1: float
    m2: float
    a: float
    a1: float
    a2: float
    bullets: dict = field(default_factory=dict, compare=False, hash=False)

    def to_json(self):
        return {k: getattr(self, k) for k in ("epsilon", "b", "delta0", "m1", "m2", "a", "a1", "a2")} | {
            "bullets": self.bullets
        }


def flattening_budget(epsilon: float, r: float, b: float | None = None, bump: Plateau | None = None) -> FlatteningBudget:
    """Solve for ``a2``, then ``a1``, then ``a`` (each scaled by a 0.9 safety factor)."""
    if not epsilon > 0:
        raise BudgetError("epsilon > 0")
    delta0 = r / 3.0
    b = 0.4 * r if b is None else b
    bump = build_plateau(delta0 / 2.0, delta0) if bump is None else bump
    s = np.linspace(-delta0, delta0, 200_001)
    _, d1, d2 = bump.derivatives(s, 2)
    m1 = float(np.max(np.abs(d1)))
    m2 = float(np.max(np.abs(d2)))

    a2 = SAFETY * epsilon / 3.0
    b1 = {
        "a2*b/2": a2 * b / 2.0,
        "eps/2": epsilon / 2.0,
        "eps/(2 M1)": epsilon / (2.0 * m1),
        "sqrt(eps/(2 M1))": np.sqrt(epsilon / (2.0 * m1)),
    }
    a1 = SAFETY * min(b1.values())
    b0 = {
        "eps/2": epsilon / 2.0,
        "a1*b/2": a1 * b / 2.0,
        "eps/(4 a1 M1)": epsilon / (4.0 * a1 * m1),
        "eps/(2 M1)": epsilon / (2.0 * m1),
        "eps/(4 a1 M2)": epsilon / (4.0 * a1 * m2),
        "eps/(4 (M2 a1^2 + M1 a2))": epsilon / (4.0 * (m2 * a1 * a1 + m1 * a2)),
        "eps/(4 M2)": epsilon / (4.0 * m2),
        "delta0/2": delta0 / 2.0,
    }
    a = SAFETY * min(b0.values())
    bullets = {"a2": {"eps/3": epsilon / 3.0}, "a1": {k: float(v) for k, v in b1.items()}, "a": {k: float(v) for k, v in b0.items()}}
    return FlatteningBudget(epsilon, b, delta0, m1, m2, float(a), float(a1), float(a2), bullets)


class FlatteningMap(TorusMap):
    """``F(X, Y) = (X, Y - e(X) g(Y - fbar(X)))`` with ``fbar = 1/2 + e``.

    ``e`` is the offset of ``gamma1`` from 1/2, tapered to zero by a plateau
    over the outer half of the gamma1 window; ``g`` is a plateau of width
    ``delta0 = r/3``. On the inner half ``F`` sends ``(t, gamma1(t))`` to
    ``(t, 1/2)``; away from the window and from ``|Y - 1/2| < delta0`` it is
    the identity.
    """

    def __init__(self, gamma: Gamma1, params: MapParams, budget: FlatteningBudget, name="F"):
        self.gamma = gamma
        self.params = params
        self.budget = budget
        self.name = name
        W = gamma.half_width
        self.taper = build_plateau(W / 2.0, W)
        self.bump = build_plateau(budget.delta0 / 2.0, budget.delta0)
        self.support_note = f"|X - 1/2| < {W}, |Y - 1/2| < {budget.delta0 + 2 * budget.a}"

    @property
    def inner_half_width(self) -> float:
        return self.taper.inner

    def offset(self, X, order: int = 0):
        """``e(X)`` and derivatives, computed on the window rows only."""
        X = np.asarray(X, dtype=float)
        d = wrap_diff(X - 0.5)
        out = [np.zeros_like(d) for _ in range(order + 1)]
        m = np.abs(d) < self.taper.outer
        if np.any(m):
            t = 0.5 + d[m]
            o = self.gamma.offset(t, order) if order else [self.gamma.offset(t)]
            p = self.taper.derivatives(d[m], order)
            out[0][m] = o[0] * p[0]
            if order >= 1:
                out[1][m] = o[1] * p[0] + o[0] * p[1]
            if order >= 2:
                out[2][m] = o[2] * p[0] + 2 * o[1] * p[1] + o[0] * p[2]
        return out if order else out[0]

    def lift(self, X, Y):
        X, Y = _xy(X, Y)
        L = np.column_stack([X, Y.copy()])
        m = np.abs(wrap_diff(X - 0.5)) < self.taper.outer
        if np.any(m):
            e = self.offset(X[m])
            g = self.bump(wrap_diff(Y[m] - 0.5 - e))
            L[m, 1] -= e * g
        return L

    def jet(self, X, Y):
        X, Y = _xy(X, Y)
        n = len(X)
        L = np.column_stack([X, Y.copy()])
        J = np.zeros((n, 2, 2))
        J[:, 0, 0] = 1.0
        J[:, 1, 1] = 1.0
        H = np.zeros((n, 2, 2, 2))
        m = np.abs(wrap_diff(X - 0.5)) < self.taper.outer
        if np.any(m):
            e, e1, e2 = self.offset(X[m], 2)
            g, g1, g2 = self.bump.derivatives(wrap_diff(Y[m] - 0.5 - e), 2)
            gX = -g1 * e1
            gY = g1
            gXX = g2 * e1 * e1 - g1 * e2
            gXY = -g2 * e1
            gYY = g2
            L[m, 1] -= e * g
            J[m, 1, 0] = -(e1 * g + e * gX)
            J[m, 1, 1] = 1.0 - e * gY
            H[m, 1, 0, 0] = -(e2 * g + 2 * e1 * gX + e * gXX)
            H[m, 1, 0, 1] = H[m, 1, 1, 0] = -(e1 * gY + e * gXY)
            H[m, 1, 1, 1] = -e * gYY
        return L, J, H

    def check_budget(self, n: int = 4001) -> dict:
        W = self.taper.outer
        X = 0.5 + np.linspace(-W, W, n)
        e, e1, e2 = self.offset(X, 2)
        got = {
            "sup|e|": float(np.max(np.abs(e))),
            "sup|e'|": float(np.max(np.abs(e1))),
            "sup|e''|": float(np.max(np.abs(e2))),
        }
        limits = {"sup|e|": 2 * self.budget.a, "sup|e'|": self.budget.a1, "sup|e''|": self.budget.a2}
        names = {"sup|e|": "sup|gamma - 1/2| <= 2a", "sup|e'|": "sup|gamma'| <= a'", "sup|e''|": "sup|gamma''| <= a''"}
        for k, v in got.items():
            if v > limits[k]:
                raise BudgetError(names[k], f"measured {v:.3e} > {limits[k]:.3e}")
        return {"measured": got, "limits": limits}


def build_F(gamma_ext: Gamma1, params: MapParams, budget: FlatteningBudget | None = None) -> FlatteningMap:
    if budget is None:
        budget = flattening_budget(params.epsilon, params.r, params.b)
    W = gamma_ext.half_width
    if not W < params.b:
        raise BudgetError("gamma window inside (1/2 - b, 1/2 + b)", f"half width {W} >= b={params.b}")
    F = FlatteningMap(gamma_ext, params, budget)
    F.check_budget()
    return F


# ---------------------------------------------------------------- composition


class Composite(TorusMap):
    """``outer o inner`` with chain-rule Jacobian and second derivatives."""

    def __init__(self, outer: TorusMap, inner: TorusMap, name=None):
        self.outer = outer
        self.inner = inner
        self.name = name or f"{outer.name}o{inner.name}"
        self.params = inner.params or outer.params
        self.support_note = f"{inner.name}: {inner.support_note}; {outer.name}: {outer.support_note}"

    def lift(self, x, y):
        Li = self.inner.lift(x, y)
        return self.outer.lift(Li[:, 0], Li[:, 1])

    def jet(self, x, y):
        Li, Ji, Hi = self.inner.jet(x, y)
        Lo, Jo, Ho = self.outer.jet(Li[:, 0], Li[:, 1])
        J = np.einsum("nil,nlj->nij", Jo, Ji)
        H = np.einsum("nil,nljk->nijk", Jo, Hi) + np.einsum("nilm,nlj,nmk->nijk", Ho, Ji, Ji)
        return Lo, J, H

    def kernel_spec(self):
        inner = self.inner.kernel_spec()
        if inner is None or inner.get("kind") != "family" or not isinstance(self.outer, FlatteningMap):
            return None
        return inner | {"flatten": self.outer}


# ---------------------------------------------------------------- perturbations


class PerturbedMap(TorusMap):
    """``base + P`` with ``P`` a real trigonometric polynomial in each component."""

    def __init__(self, base: TorusMap, modes, cos_coef, sin_coef, name=None):
        self.base = base
        self.modes = np.asarray(modes, dtype=float).reshape(-1, 2)
        self.cos_coef = np.asarray(cos_coef, dtype=float).reshape(2, -1)
        self.sin_coef = np.asarray(sin_coef, dtype=float).reshape(2, -1)
        self.name = name or f"{base.name}+P"
        self.params = base.params
        self.support_note = "everywhere (trigonometric perturbation)"

    def _trig(self, x, y):
        phase = 2 * np.pi * (np.outer(x, self.modes[:, 0]) + np.outer(y, self.modes[:, 1]))
        return np.cos(phase), np.sin(phase)

    def perturbation_jet(self, x, y):
        x, y = _xy(x, y)
        C, S = self._trig(x, y)
        a, b = self.cos_coef, self.sin_coef
        kx = 2 * np.pi * self.modes[:, 0]
        ky = 2 * np.pi * self.modes[:, 1]
        val = C @ a.T + S @ b.T
        # d/dx of a cos + b sin = kx (b cos - a sin)
        dx = (C * kx) @ b.T - (S * kx) @ a.T
        dy = (C * ky) @ b.T - (S * ky) @ a.T
        dxx = -((C * kx * kx) @ a.T + (S * kx * kx) @ b.T)
        dxy = -((C * kx * ky) @ a.T + (S * kx * ky) @ b.T)
        dyy = -((C * ky * ky) @ a.T + (S * ky * ky) @ b.T)
        J = np.stack([dx, dy], axis=-1)
        H = np.stack([np.stack([dxx, dxy], -1), np.stack([dxy, dyy], -1)], axis=-1)
        return val, J, H

    def lift(self, x, y):
        x, y = _xy(x, y)
        C, S = self._trig(x, y)
        return self.base.lift(x, y) + C @ self.cos_coef.T + S @ self.sin_coef.T

    def jet(self, x, y):
        L, J, H = self.base.jet(x, y)
        v, dJ, dH = self.perturbation_jet(x, y)
        return L + v, J + dJ, H + dH

    def c2_bound(self) -> float:
        m = np.max(np.abs(self.modes), axis=1)
        w = np.maximum.reduce([np.ones_like(m), 2 * np.pi * m, (2 * np.pi * m) ** 2])
        per = (np.abs(self.cos_coef) + np.abs(self.sin_coef)) @ w
        return float(per.max())

    def kernel_spec(self):
        base = self.base.kernel_spec()
        if base is None or "pert" in base:
            return None
        return base | {"pert": self}


def perturb_map(m: TorusMap, amplitude: float, seed: int, degree: int = 3) -> TorusMap:
    """Add a seeded trigonometric polynomial whose C2 size is at most ``amplitude``.

    Coefficients are normalised so that ``sum (|a| + |b|) W`` equals the
    amplitude in each component, with ``W = max(1, 2 pi m, (2 pi m)^2)`` and
    ``m`` the mode degree; this bounds value, first and second partials.
    """
    if amplitude < 0:
        raise ValueError("amplitude must be nonnegative")
    modes = [(j, k) for j in range(degree + 1) for k in range(-degree, degree + 1) if j > 0 or k >= 0]
    modes = np.array(modes, dtype=float)
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((2, len(modes)))
    b = rng.standard_normal((2, len(modes)))
    b[:, 0] = 0.0  # the constant mode has no sine part
    deg = np.max(np.abs(modes), axis=1)
    w = np.maximum.reduce([np.ones_like(deg), 2 * np.pi * deg, (2 * np.pi * deg) ** 2])
    norm = (np.abs(a) + np.abs(b)) @ w
    scale = np.where(norm > 0, amplitude / norm, 0.0)[:, None]
    return PerturbedMap(m, modes, a * scale, b * scale, name=f"{m.name}+P[{seed}]")


# ---------------------------------------------------------------- distances


@dataclass
class CkDistanceReport:
    grid: dict
    c0: float
    c1: float
    c2: float
    parts: dict
    argmax: dict

    def to_dict(self):
        return {"grid": self.grid, "c0": self.c0, "c1": self.c1, "c2": self.c2, "parts": self.parts, "argmax": self.argmax}


def _grid_points(grid):
    if isinstance(grid, GridSpec):
        return grid.points(), grid.describe()
    x, y = grid
    return (np.asarray(x, float).ravel(), np.asarray(y, float).ravel()), {"points": int(np.size(x))}


def ck_distance(m1: TorusMap, m2: TorusMap, grid, chunk: int = 1 << 16) -> CkDistanceReport:
    """Sup over the grid of value, Jacobian and second-derivative differences.

    ``c1`` and ``c2`` are cumulative: ``c1 = max(c0, sup |dJ|)`` and
    ``c2 = max(c1, sup |dH|)``, entries compared in max-norm.
    """
    (x, y), desc = _grid_points(grid)
    if len(x) == 0:
        raise ValueError("grid must be nonempty")
    best = {"value": (-1.0, None), "jacobian": (-1.0, None), "second": (-1.0, None)}
    for s in range(0, len(x), chunk):
        xs, ys = x[s : s + chunk], y[s : s + chunk]
        L1, J1, H1 = m1.jet(xs, ys)
        L2, J2, H2 = m2.jet(xs, ys)
        dv = np.max(np.abs(wrap_diff(L1 - L2)), axis=1)
        dj = np.max(np.abs(J1 - J2), axis=(1, 2))
        dh = np.max(np.abs(H1 - H2), axis=(1, 2, 3))
        for key, arr in (("value", dv), ("jacobian", dj), ("second", dh)):
            i = int(np.argmax(arr))
            if arr[i] > best[key][0]:
                best[key] = (float(arr[i]), [float(xs[i]), float(ys[i])])
    c0 = best["value"][0]
    c1 = max(c0, best["jacobian"][0])
    c2 = max(c1, best["second"][0])
    return CkDistanceReport(
        grid=desc,
        c0=c0,
        c1=c1,
        c2=c2,
        parts={k: v[0] for k, v in best.items()},
        argmax={k: v[1] for k, v in best.items()},
    )


# ---------------------------------------------------------------- homotopy


def action_matrix(m: TorusMap, n: int = 20_001, base=(1.0 / 16.0, 0.25)) -> np.ndarray:
    """Integer matrix of the induced action on the two generator loops.

    Each loop through ``base`` is sampled, mapped, reduced mod 1 and lifted
    again greedily; the lifted endpoint displacement is a column of the matrix.
    """
    t = np.linspace(0.0, 1.0, n)
    cols = []
    for direction in ((1.0, 0.0), (0.0, 1.0)):
        px = base[0] + direction[0] * t
        py = base[1] + direction[1] * t
        img = m.evaluate(px, py)
        lifted = lift_path(img)
        cols.append(lifted[-1] - lifted[0])
    M = np.column_stack(cols)
    R = np.round(M)
    if np.max(np.abs(M - R)) > 1e-9:
        raise ValueError("loop images do not close up; sampling too coarse")
    return R.astype(int)


# ---------------------------------------------------------------- the construction


@dataclass
class Construction:
    """All objects derived from one parameter set."""

    params: MapParams
    f: FoldMap
    graph: CriticalGraph
    gamma: Gamma1
    budget: FlatteningBudget
    F: FlatteningMap
    h: Composite
    fold_window: object

    @property
    def rho(self) -> float:
        return self.fold_window.rho


@lru_cache(maxsize=16)
def construction(params: MapParams) -> Construction:
    params.validate()
    f = build_f(params)
    budget = flattening_budget(params.epsilon, params.r, params.b)
    graph = trace_graph(params)
    gam = gamma1(graph, budget)
    F = build_F(gam, params, budget)
    h = Composite(F, f, name="h")
    ext = sample_critical_set(params)
    window = fold_image_window(h, gam.graph, ext)
    return Construction(params, f, gam.graph, gam, budget, F, h, window)


def build_h(params: MapParams) -> Composite:
    return construction(params).h


def build_destroyer(params: MapParams, eta: float | None = None) -> Composite:
    """``g = F o f~``: ``h`` with the neighbourhood of the fold collapsed onto its critical image."""
    eta = params.eta if eta is None else float(eta)
    con = construction(params)
    half = (con.graph.window[1] - con.graph.window[0]) / 2.0
    if not (half + params.theta < params.r and eta < params.r - params.delta):
        raise ParamError("collapse strip inside B((1/16,1/4), r)", f"half={half}, eta={eta}")
    if not eta < con.rho:
        raise ParamError("eta < rho", f"eta={eta}, rho={con.rho}")
    inner = CollapsedFoldMap(params, con.graph, eta)
    g = Composite(con.F, inner, name="g")
    g.eta = eta
    g.collapse = inner
    return g


def trap_strip(g: Composite):
    """Open strip ``{|x - 1/16| < w, |y - y(x)| < eta/2}`` collapsed by ``g``.

    ``w`` is half the inner x-plateau so the strip sits well inside the region
    where the collapse is complete.
    """
    inner: CollapsedFoldMap = g.collapse
    return {
        "center_x": inner.center,
        "half_width_x": inner.inner_half_width / 2.0,
        "half_width_y": inner.eta / 2.0,
        "graph": inner.graph,
    }


def strip_gap_constant(g: Composite, n: int = 257) -> float:
    """min of ``|psi(x) phi''(y)|`` over the collapse strip (trap strip samples)."""
    s = trap_strip(g)
    params = g.params
    xs = s["center_x"] + np.linspace(-1, 1, n) * s["half_width_x"]
    yc = s["graph"].y(xs)
    ts = np.linspace(-1, 1, n) * s["half_width_y"]
    X = np.repeat(xs, n)
    Y = (yc[:, None] + ts[None, :]).ravel()
    return float(np.min(np.abs(params.psi(X) * params.phi.d2(Y))))


def min_singular_outside(m: TorusMap, grid: GridSpec, center=(1.0 / 16.0, 0.25), radius=None):
    from .torus import mat_singular_values, torus_dist

    x, y = grid.points()
    radius = 2 * m.params.r if radius is None else radius
    keep = torus_dist(np.column_stack([x, y]), center) >= radius
    J = m.jacobian(x[keep], y[keep])
    s = mat_singular_values(J)[:, 1]
    i = int(np.argmin(s))
    return float(s[i]), [float(x[keep][i]), float(y[keep][i])]


def expanding_certificate(m: TorusMap, grid: GridSpec) -> Certificate:
    smin, where = min_singular_outside(m, grid)
    return Certificate(
        "expanding_outside_2r",
        margin=smin - 1.0,
        grid=grid.describe(),
        tolerance=1.0,
        witness=where,
        details={"min_singular_value": smin},
    )
