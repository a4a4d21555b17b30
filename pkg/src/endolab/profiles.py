"""Compactly supported one-dimensional profiles with analytic derivatives.

Three families are provided:

* :class:`Psi` -- a flat-topped bump ``4 exp(-u^4 / (1 - u^2))`` centred at 1/16;
* :class:`Phi` -- a polynomial times ``(1 - s^2)^5`` whose coefficients are the
  minimum-bending solution of four linear anchor conditions;
* :class:`Plateau` -- an even C-infinity cutoff equal to 1 on ``[-inner, inner]``.

Every profile evaluates value and derivatives on arrays and returns exact
zeros outside its declared support.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy.special import expit

from .certificate import Certificate


class ProfileError(ValueError):
    """Raised when a profile cannot be built from the requested parameters."""


def _as_array(x):
    arr = np.asarray(x, dtype=float)
    return arr, arr.ndim == 0


class SmoothProfile:
    """Base class: subclasses implement ``_derivs(x, order)`` on 1-D arrays.

    ``_derivs`` is only called on arguments strictly inside the open support;
    the base class fills zeros elsewhere.
    """

    kind = "profile"
    smoothness_order = 2
    max_order = 2

    def __init__(self, support):
        lo, hi = float(support[0]), float(support[1])
        if not lo < hi:
            raise ProfileError("support must be a nonempty interval")
        self.support = (lo, hi)

    # subclasses override
    def _derivs(self, x, order):
        raise NotImplementedError

    def parameters(self) -> dict:
        return {}

    def anchors(self) -> list:
        return []

    def derivatives(self, x, order: int = 2):
        """Return ``[value, d1, ..., d_order]`` evaluated at ``x``."""
        if order > self.max_order:
            raise ValueError(f"{self.kind} provides derivatives up to order {self.max_order}")
        arr, scalar = _as_array(x)
        flat = arr.reshape(-1)
        out = np.zeros((order + 1, flat.size))
        lo, hi = self.support
        inside = (flat > lo) & (flat < hi)
        if np.any(inside):
            vals = self._derivs(flat[inside], order)
            for k in range(order + 1):
                out[k, inside] = vals[k]
        if scalar:
            return [float(v[0]) for v in out]
        return [v.reshape(arr.shape) for v in out]

    def __call__(self, x):
        return self.derivatives(x, 0)[0]

    def d1(self, x):
        return self.derivatives(x, 1)[1]

    def d2(self, x):
        return self.derivatives(x, 2)[2]

    def d3(self, x):
        return self.derivatives(x, 3)[3]

    @property
    def scale(self) -> float:
        """Natural length scale used to normalise finite-difference checks."""
        lo, hi = self.support
        return 0.5 * (hi - lo)

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "parameters": self.parameters(),
            "anchors": [a.to_json() for a in self.anchors()],
            "support": list(self.support),
        }

    def __repr__(self):
        params = ", ".join(f"{k}={v!r}" for k, v in self.parameters().items())
        return f"{type(self).__name__}({params})"


# ---------------------------------------------------------------- psi


class Psi(SmoothProfile):
    """``peak * exp(-u^4 / (1 - u^2))`` with ``u = (x - center) / theta``.

    The quartic numerator makes the top flat to second order, so the centre is
    the unique critical point and the second derivative vanishes there.
    """

    kind = "psi"
    smoothness_order = 3
    max_order = 3

    def __init__(self, theta: float, center: float = 1.0 / 16.0, peak: float = 4.0):
        if not theta > 0:
            raise ProfileError("theta must be positive")
        self.theta = float(theta)
        self.center = float(center)
        self.peak = float(peak)
        super().__init__((center - theta, center + theta))

    def parameters(self):
        return {"theta": self.theta, "center": self.center, "peak": self.peak}

    def anchors(self):
        c, t = self.center, self.theta
        return [
            Anchor(c, value=self.peak, d1=0.0, d2=0.0),
            Anchor(c - t, value=0.0),
            Anchor(c + t, value=0.0),
        ]

    def _derivs(self, x, order):
        u = (x - self.center) / self.theta
        u2 = u * u
        q = 1.0 - u2
        e = self.peak * np.exp(-(u2 * u2) / q)
        out = [e]
        if order >= 1:
            s1 = (4 * u2 * u - 2 * u2 * u2 * u) / (q * q)
            out.append(-e * s1 / self.theta)
        if order >= 2:
            s2 = (12 * u2 - 6 * u2 * u2 + 2 * u2 * u2 * u2) / (q * q * q)
            out.append(e * (s1 * s1 - s2) / self.theta**2)
        if order >= 3:
            s3 = 24 * u * (1 + u2) / (q * q * q * q)
            out.append(e * (-s1**3 + 3 * s1 * s2 - s3) / self.theta**3)
        return out

    def level_points(self, level: float = 2.0):
        """The two solutions of ``psi(x) = level`` (one on each side of the centre)."""
        if not 0 < level < self.peak:
            raise ProfileError(f"psi = {level} has no two-sided solution")
        # psi(center + theta*u) = level  <=>  u^4 = L (1 - u^2), L = log(peak/level)
        L = np.log(self.peak / level)
        u2 = 0.5 * (-L + np.sqrt(L * L + 4 * L))
        u = np.sqrt(u2)
        return self.center - self.theta * u, self.center + self.theta * u

    def max_slope(self) -> float:
        """sup |psi'|, located by a bounded scalar search on the decreasing side."""
        from scipy.optimize import minimize_scalar

        res = minimize_scalar(
            lambda u: -abs(float(self.d1(self.center + self.theta * u))),
            bounds=(0.0, 1.0),
            method="bounded",
            options={"xatol": 1e-12},
        )
        return -float(res.fun)


def build_psi(theta: float, peak: float = 4.0) -> Psi:
    return Psi(theta, peak=peak)


# ---------------------------------------------------------------- phi

_PHI_BUMP_POWER = 5
_PHI_POLY_DEGREE = 6
_ANCHOR_TOL = 1e-10


class Phi(SmoothProfile):
    """Anchored profile ``(1 - s^2)^5 p(s)`` on ``[1/4 - delta/4, 1/4 + 3 delta/4]``.

    Here ``s = (y - m) / w`` with ``m = 1/4 + delta/4`` and ``w = delta/2``, so
    ``y = 1/4`` sits at ``s = -1/2`` and ``y = 1/4 + delta/8`` at ``s = -1/4``.
    The sextic ``p`` minimises the bending energy of the product subject to

        phi(1/4) = 0,  phi'(1/4) = 1/2,  phi'(1/4 + delta/8) = 1,
        phi''(1/4 + delta/8) = 0.
    """

    kind = "phi"
    smoothness_order = _PHI_BUMP_POWER - 1
    max_order = 3

    def __init__(self, delta: float, base: float = 0.25):
        if not delta > 0:
            raise ProfileError("delta must be positive")
        self.delta = float(delta)
        self.base = float(base)
        self.mid = base + delta / 4.0
        self.half_width = delta / 2.0
        self.y_peak = base + delta / 8.0
        self.coeffs = self._solve()
        self._dcoeffs = [self.coeffs]
        for _ in range(self.max_order):
            self._dcoeffs.append(npoly.polyder(self._dcoeffs[-1]))
        super().__init__((base - delta / 4.0, base + 3.0 * delta / 4.0))
        self._check_anchors()

    def parameters(self):
        return {"delta": self.delta, "base": self.base}

    def anchors(self):
        return [
            Anchor(self.base, value=0.0, d1=0.5),
            Anchor(self.y_peak, d1=1.0, d2=0.0),
        ]

    def _solve(self):
        w = self.half_width
        bump = npoly.polypow([1.0, 0.0, -1.0], _PHI_BUMP_POWER)
        basis = []
        for j in range(_PHI_POLY_DEGREE + 1):
            mono = np.zeros(j + 1)
            mono[j] = 1.0
            basis.append(npoly.polymul(bump, mono))

        def at(poly, s, der):
            return npoly.polyval(s, npoly.polyder(poly, der) if der else poly)

        # anchors expressed in s: d/dy = (1/w) d/ds
        C = np.array(
            [
                [at(b, -0.5, 0) for b in basis],
                [at(b, -0.5, 1) for b in basis],
                [at(b, -0.25, 1) for b in basis],
                [at(b, -0.25, 2) for b in basis],
            ]
        )
        rhs = np.array([0.0, 0.5 * w, 1.0 * w, 0.0])

        # exact Gram matrix of the second derivatives on [-1, 1]
        second = [npoly.polyder(b, 2) for b in basis]
        n = len(basis)
        H = np.empty((n, n))
        for i in range(n):
            for j in range(i, n):
                anti = npoly.polyint(npoly.polymul(second[i], second[j]))
                H[i, j] = H[j, i] = npoly.polyval(1.0, anti) - npoly.polyval(-1.0, anti)
        K = np.block([[H, C.T], [C, np.zeros((4, 4))]])
        try:
            sol = np.linalg.solve(K, np.concatenate([np.zeros(n), rhs]))
        except np.linalg.LinAlgError as exc:
            raise ProfileError(f"phi anchor system is singular: {exc}") from exc
        total = np.zeros(2 * _PHI_BUMP_POWER + _PHI_POLY_DEGREE + 1)
        for c, b in zip(sol[:n], basis):
            total[: len(b)] += c * b
        return total

    def _check_anchors(self):
        for anchor in self.anchors():
            res = anchor.residual(self)
            if res > _ANCHOR_TOL:
                raise ProfileError(f"phi anchor at {anchor.arg} missed by {res:.3e}")

    def _derivs(self, y, order):
        s = (y - self.mid) / self.half_width
        return [
            npoly.polyval(s, self._dcoeffs[k]) / self.half_width**k for k in range(order + 1)
        ]


def build_phi(delta: float) -> Phi:
    return Phi(delta)


# ---------------------------------------------------------------- plateau


def _smoothstep(t, order):
    """C-infinity step ``S(t) = 1 / (1 + exp(1/t - 1/(1-t)))`` for t in (0, 1)."""
    w = 1.0 / t - 1.0 / (1.0 - t)
    sig = expit(-w)
    out = [sig]
    if order >= 1:
        body = sig * expit(w)
        w1 = 1.0 / t**2 + 1.0 / (1.0 - t) ** 2
        out.append(body * w1)
    if order >= 2:
        w2 = -2.0 / t**3 + 2.0 / (1.0 - t) ** 3
        out.append(body * ((1.0 - 2.0 * sig) * w1 * w1 + w2))
    return out


class Plateau(SmoothProfile):
    """Even cutoff: 1 on ``[-inner, inner]``, 0 outside ``(-outer, outer)``."""

    kind = "plateau"
    smoothness_order = 2

    def __init__(self, inner: float, outer: float):
        if not 0 < inner < outer:
            raise ProfileError("plateau needs 0 < inner < outer")
        self.inner = float(inner)
        self.outer = float(outer)
        super().__init__((-outer, outer))

    def parameters(self):
        return {"inner": self.inner, "outer": self.outer}

    def anchors(self):
        return [Anchor(0.0, value=1.0, d1=0.0, d2=0.0), Anchor(self.inner, value=1.0)]

    @property
    def scale(self) -> float:
        return self.outer - self.inner

    def slope_bound(self) -> float:
        return 3.0 / (self.outer - self.inner)

    def _derivs(self, x, order):
        L = self.outer - self.inner
        ax = np.abs(x)
        out = [np.ones_like(x)] + [np.zeros_like(x) for _ in range(order)]
        ramp = ax > self.inner
        if np.any(ramp):
            t = (self.outer - ax[ramp]) / L
            vals = _smoothstep(t, order)
            sgn = np.sign(x[ramp])
            out[0][ramp] = vals[0]
            if order >= 1:
                out[1][ramp] = -sgn * vals[1] / L
            if order >= 2:
                out[2][ramp] = vals[2] / L**2
        return out


def build_plateau(inner: float, outer: float) -> Plateau:
    return Plateau(inner, outer)


# ---------------------------------------------------------------- constraints


@dataclass(frozen=True)
class Anchor:
    arg: float
    value: float | None = None
    d1: float | None = None
    d2: float | None = None

    def targets(self):
        return [(k, v) for k, v in enumerate((self.value, self.d1, self.d2)) if v is not None]

    def residual(self, p: SmoothProfile) -> float:
        """Worst anchor miss, with the k-th derivative measured in units of ``p.scale**k``."""
        got = p.derivatives(self.arg, 2)
        L = p.scale
        return max((abs(got[k] - v) * L**k for k, v in self.targets()), default=0.0)

    def to_json(self):
        return {"arg": self.arg, "value": self.value, "d1": self.d1, "d2": self.d2}


@dataclass(frozen=True)
class ProfileConstraints:
    anchors: tuple = ()
    support: tuple | None = None
    sup_bound: float | None = None
    fd_samples: int = 1000
    fd_step: float = 1e-5
    fd_tol: tuple = (1e-6, 1e-4)
    seed: int = 0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.support is not None:
            lo, hi = self.support
            for a in self.anchors:
                if not lo <= a.arg <= hi:
                    raise ProfileError(f"anchor at {a.arg} lies outside support bounds {self.support}")


def constraints_for(p: SmoothProfile, **kw) -> ProfileConstraints:
    """The constraint list a profile was built to satisfy."""
    bound = None
    if isinstance(p, Phi):
        bound = p.delta
    elif isinstance(p, Psi):
        bound = p.peak
    elif isinstance(p, Plateau):
        bound = 1.0
    return ProfileConstraints(anchors=tuple(p.anchors()), support=p.support, sup_bound=bound, **kw)


def fd_errors(p: SmoothProfile, xs, step: float):
    """Central-difference errors of d1 and d2 in coordinates normalised by ``p.scale``.

    With ``x = c + L u`` the normalised profile ``u -> p(c + L u)`` has
    derivatives ``L^k p^(k)``; the step ``step`` is taken in ``u``.
    """
    L = p.scale
    h = step * L
    v0, d1, d2 = p.derivatives(xs, 2)
    vp = p(xs + h)
    vm = p(xs - h)
    fd1 = (vp - vm) / (2 * step)
    fd2 = (vp - 2 * v0 + vm) / step**2
    return np.abs(L * d1 - fd1), np.abs(L * L * d2 - fd2)


def verify_profile(p: SmoothProfile, c: ProfileConstraints) -> Certificate:
    """Check anchors, support, sup bound and derivative consistency of ``p``."""
    failures = []
    anchor_res = [a.residual(p) for a in c.anchors]
    worst_anchor = max(anchor_res, default=0.0)
    if worst_anchor > _ANCHOR_TOL:
        failures.append("anchor")

    lo, hi = p.support
    if c.support is not None and (lo < c.support[0] or hi > c.support[1]):
        failures.append("support")

    rng = np.random.default_rng(c.seed)
    width = hi - lo
    outside = np.concatenate(
        [lo - rng.uniform(0, width, 64), hi + rng.uniform(0, width, 64), [lo, hi]]
    )
    leak = max(float(np.max(np.abs(d))) for d in p.derivatives(outside, 2))
    if leak != 0.0:
        failures.append("support annihilation")

    dense = np.linspace(lo, hi, 10_001)
    sup = float(np.max(np.abs(p(dense))))
    if c.sup_bound is not None and sup > c.sup_bound:
        failures.append("sup bound")

    margin_step = c.fd_step * p.scale
    xs = rng.uniform(lo + margin_step, hi - margin_step, c.fd_samples)
    e1, e2 = fd_errors(p, xs, c.fd_step)
    fd1, fd2 = float(e1.max()), float(e2.max())
    if fd1 > c.fd_tol[0]:
        failures.append("fd d1")
    if fd2 > c.fd_tol[1]:
        failures.append("fd d2")

    margins = [
        _ANCHOR_TOL - worst_anchor,
        c.fd_tol[0] - fd1,
        c.fd_tol[1] - fd2,
    ]
    margin = min(margins)
    if failures and margin > 0:
        margin = -1.0
    return Certificate(
        lemma=f"profile:{p.kind}",
        margin=margin,
        grid={"fd_samples": c.fd_samples, "fd_step": c.fd_step, "scale": p.scale},
        tolerance=_ANCHOR_TOL,
        details={
            "failures": failures,
            "anchor_residuals": anchor_res,
            "sup": sup,
            "sup_bound": c.sup_bound,
            "fd_d1_error": fd1,
            "fd_d2_error": fd2,
        },
    )


# ---------------------------------------------------------------- output


def profile_table(p: SmoothProfile, n: int = 2001, pad: float = 0.1):
    lo, hi = p.support
    extra = pad * (hi - lo)
    xs = np.linspace(lo - extra, hi + extra, n)
    v, d1, d2 = p.derivatives(xs, 2)
    return xs, v, d1, d2


def dump_csv(p: SmoothProfile, path, n: int = 2001):
    xs, v, d1, d2 = profile_table(p, n)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "value", "d1", "d2"])
        for row in zip(xs, v, d1, d2):
            w.writerow([repr(float(t)) for t in row])


def dump_json(p: SmoothProfile, path):
    with open(path, "w") as fh:
        json.dump(p.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")
