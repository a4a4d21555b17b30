"""Hot loops for orbit iteration: numba-compiled scalar kernels with a numpy fallback.

The compiled path covers every map of the construction (``A``, ``f``, ``h``,
the destroyer and trigonometric perturbations of these) by packing the
map into flat arrays. Set ``ENDOLAB_DISABLE_NUMBA=1`` (or call
``set_backend("numpy")``) to force the vectorised numpy path, which works for
any :class:`~endolab.maps.TorusMap`.
"""

from __future__ import annotations

import os

import numpy as np

try:  # numba is a hard dependency, but keep the fallback usable without it
    import numba
    from numba import njit, prange

    HAVE_NUMBA = True
    import warnings

    warnings.filterwarnings("ignore", message=".*TBB threading layer.*")
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

_backend = "numpy" if (os.environ.get("ENDOLAB_DISABLE_NUMBA", "") not in ("", "0") or not HAVE_NUMBA) else "numba"


def get_backend() -> str:
    return _backend


def set_backend(name: str) -> None:
    global _backend
    if name not in ("numba", "numpy"):
        raise ValueError("backend must be 'numba' or 'numpy'")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba is not installed")
    _backend = name


def set_threads(n: int | None) -> None:
    if n and HAVE_NUMBA:
        numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))


# ---------------------------------------------------------------- packing

# integer slots
I_KIND, I_COLLAPSE, I_FLATTEN, I_NPERT, I_NGRAPH = range(5)
# float slots
(
    F_A00, F_A01, F_A10, F_A11,
    F_THETA, F_CENTER, F_PEAK,
    F_PHI_MID, F_PHI_HW, F_PHI_LO, F_PHI_HI,
    F_G_X0, F_G_HX,
    F_XCUT_IN, F_XCUT_OUT, F_CHI_IN, F_CHI_OUT,
    F_TAPER_IN, F_TAPER_OUT, F_BUMP_IN, F_BUMP_OUT,
) = range(21)
N_FLOAT = 21


def pack(m):
    """Flatten a map into the arrays consumed by the compiled kernels, or ``None``."""
    spec = m.kernel_spec()
    if spec is None:
        return None
    ip = np.zeros(5, dtype=np.int64)
    fp = np.zeros(N_FLOAT)
    phic = np.zeros((4, 1))
    gys = np.zeros(2)
    gdys = np.zeros(2)
    modes = np.zeros((0, 2))
    pcos = np.zeros((2, 0))
    psin = np.zeros((2, 0))
    if spec["kind"] == "linear":
        ip[I_KIND] = 0
        fp[F_A00:F_A11 + 1] = np.asarray(spec["A"], dtype=float).ravel()
    else:
        ip[I_KIND] = 1
        params = spec["params"]
        psi, phi = params.psi, params.phi
        fp[F_THETA], fp[F_CENTER], fp[F_PEAK] = psi.theta, psi.center, psi.peak
        fp[F_PHI_MID], fp[F_PHI_HW] = phi.mid, phi.half_width
        fp[F_PHI_LO], fp[F_PHI_HI] = phi.support
        width = max(len(c) for c in phi._dcoeffs)
        phic = np.zeros((4, width))
        for k in range(4):
            # highest power first for Horner
            c = phi._dcoeffs[k][::-1]
            phic[k, width - len(c):] = c
        graph = None
        if "collapse" in spec:
            col = spec["collapse"]
            ip[I_COLLAPSE] = 1
            graph = col.graph
            fp[F_XCUT_IN], fp[F_XCUT_OUT] = col.x_cut.inner, col.x_cut.outer
            fp[F_CHI_IN], fp[F_CHI_OUT] = col.chi.inner, col.chi.outer
        if "flatten" in spec:
            F = spec["flatten"]
            ip[I_FLATTEN] = 1
            if graph is not None and graph is not F.gamma.graph:
                return None
            graph = F.gamma.graph
            fp[F_TAPER_IN], fp[F_TAPER_OUT] = F.taper.inner, F.taper.outer
            fp[F_BUMP_IN], fp[F_BUMP_OUT] = F.bump.inner, F.bump.outer
        if graph is not None:
            gys = np.ascontiguousarray(graph.ys)
            gdys = np.ascontiguousarray(graph.dys)
            fp[F_G_X0], fp[F_G_HX] = graph.xs[0], graph.hx
            ip[I_NGRAPH] = len(gys)
    if "pert" in spec:
        P = spec["pert"]
        ip[I_NPERT] = len(P.modes)
        modes, pcos, psin = P.modes, P.cos_coef, P.sin_coef
    arrays = (ip, fp, np.ascontiguousarray(phic), gys, gdys,
              np.ascontiguousarray(modes, dtype=float), np.ascontiguousarray(pcos), np.ascontiguousarray(psin))
    return arrays


# ---------------------------------------------------------------- compiled kernels

if HAVE_NUMBA:

    @njit(cache=True, inline="always")
    def _wrap_diff(d):
        return d - np.floor(d + 0.5)

    @njit(cache=True, inline="always")
    def _psi(x, fp):
        u = (x - fp[F_CENTER]) / fp[F_THETA]
        if u <= -1.0 or u >= 1.0:
            return 0.0
        u2 = u * u
        return fp[F_PEAK] * np.exp(-(u2 * u2) / (1.0 - u2))

    @njit(cache=True, inline="always")
    def _phi(y, k, fp, phic):
        if y <= fp[F_PHI_LO] or y >= fp[F_PHI_HI]:
            return 0.0
        s = (y - fp[F_PHI_MID]) / fp[F_PHI_HW]
        acc = 0.0
        for j in range(phic.shape[1]):
            acc = acc * s + phic[k, j]
        return acc / fp[F_PHI_HW] ** k

    @njit(cache=True, inline="always")
    def _plateau(x, inner, outer):
        ax = abs(x)
        if ax <= inner:
            return 1.0
        if ax >= outer:
            return 0.0
        t = (outer - ax) / (outer - inner)
        w = 1.0 / t - 1.0 / (1.0 - t)
        if w > 700.0:
            return 0.0
        return 1.0 / (1.0 + np.exp(w))

    @njit(cache=True)
    def _graph_y(x, fp, phic, gys, gdys):
        n = gys.shape[0]
        h = fp[F_G_HX]
        k = int((x - fp[F_G_X0]) / h)
        if k < 0:
            k = 0
        if k > n - 2:
            k = n - 2
        t = (x - (fp[F_G_X0] + k * h)) / h
        t2 = t * t
        t3 = t2 * t
        y = ((2 * t3 - 3 * t2 + 1) * gys[k] + (t3 - 2 * t2 + t) * h * gdys[k]
             + (-2 * t3 + 3 * t2) * gys[k + 1] + (t3 - t2) * h * gdys[k + 1])
        ps = _psi(x, fp)
        for _ in range(6):
            G = 2.0 - ps * _phi(y, 1, fp, phic)
            step = G / (-ps * _phi(y, 2, fp, phic))
            y -= step
            if abs(step) <= 1e-16:
                break
        return y

    @njit(cache=True)
    def _graph_c_offset(x, fp, phic, gys, gdys):
        y = _graph_y(x, fp, phic, gys, gdys)
        return 2.0 * (y - 0.25) - _psi(x, fp) * _phi(y, 0, fp, phic)

    @njit(cache=True)
    def _lift(x, y, ip, fp, phic, gys, gdys, modes, pcos, psin):
        if ip[I_KIND] == 0:
            X = fp[F_A00] * x + fp[F_A01] * y
            Y = fp[F_A10] * x + fp[F_A11] * y
        else:
            xm = x - np.floor(x)
            ym = y - np.floor(y)
            X = 8.0 * x
            bump = _psi(xm, fp) * _phi(ym, 0, fp, phic)
            Y = 2.0 * y - bump
            if ip[I_COLLAPSE] == 1:
                c = fp[F_CENTER]
                d = _wrap_diff(x - c)
                if abs(d) < fp[F_XCUT_OUT]:
                    xc = c + d
                    B = _plateau(d, fp[F_XCUT_IN], fp[F_XCUT_OUT])
                    yx = _graph_y(xc, fp, phic, gys, gdys)
                    chi = _plateau(_wrap_diff(ym - yx), fp[F_CHI_IN], fp[F_CHI_OUT])
                    P = B * chi
                    if P != 0.0:
                        D = 2.0 * (ym - 0.25) - _psi(xc, fp) * _phi(ym, 0, fp, phic) - _graph_c_offset(xc, fp, phic, gys, gdys)
                        Y -= P * D
            if ip[I_FLATTEN] == 1:
                dX = _wrap_diff(X - 0.5)
                if abs(dX) < fp[F_TAPER_OUT]:
                    t = 0.5 + dX
                    e = _graph_c_offset(t / 8.0, fp, phic, gys, gdys) * _plateau(dX, fp[F_TAPER_IN], fp[F_TAPER_OUT])
                    g = _plateau(_wrap_diff(Y - 0.5 - e), fp[F_BUMP_IN], fp[F_BUMP_OUT])
                    Y -= e * g
        for j in range(ip[I_NPERT]):
            ph = 2.0 * np.pi * (modes[j, 0] * x + modes[j, 1] * y)
            cj = np.cos(ph)
            sj = np.sin(ph)
            X += pcos[0, j] * cj + psin[0, j] * sj
            Y += pcos[1, j] * cj + psin[1, j] * sj
        return X, Y

    @njit(cache=True, parallel=True)
    def _lift_many(xs, ys, ip, fp, phic, gys, gdys, modes, pcos, psin):
        n = xs.shape[0]
        out = np.empty((n, 2))
        for i in prange(n):
            X, Y = _lift(xs[i], ys[i], ip, fp, phic, gys, gdys, modes, pcos, psin)
            out[i, 0] = X
            out[i, 1] = Y
        return out

    @njit(cache=True, parallel=True)
    def _iterate(xs, ys, n_iter, ip, fp, phic, gys, gdys, modes, pcos, psin):
        n = xs.shape[0]
        ox = np.empty(n)
        oy = np.empty(n)
        for i in prange(n):
            x = xs[i]
            y = ys[i]
            for _ in range(n_iter):
                X, Y = _lift(x, y, ip, fp, phic, gys, gdys, modes, pcos, psin)
                x = X - np.floor(X)
                y = Y - np.floor(Y)
                if x >= 1.0:
                    x = 0.0
                if y >= 1.0:
                    y = 0.0
            ox[i] = x
            oy[i] = y
        return ox, oy

    @njit(cache=True, parallel=True)
    def _iterate_bin(xs, ys, n_iter, bins, ip, fp, phic, gys, gdys, modes, pcos, psin):
        n = xs.shape[0]
        hits = np.zeros((n_iter + 1, bins, bins), dtype=np.uint8)
        for i in prange(n):
            x = xs[i]
            y = ys[i]
            hits[0, min(int(x * bins), bins - 1), min(int(y * bins), bins - 1)] = 1
            for k in range(1, n_iter + 1):
                X, Y = _lift(x, y, ip, fp, phic, gys, gdys, modes, pcos, psin)
                x = X - np.floor(X)
                y = Y - np.floor(Y)
                if x >= 1.0:
                    x = 0.0
                if y >= 1.0:
                    y = 0.0
                hits[k, min(int(x * bins), bins - 1), min(int(y * bins), bins - 1)] = 1
        return hits


# ---------------------------------------------------------------- dispatch


def _use_numba(m):
    if _backend != "numba":
        return None
    return pack(m)


def _wrap_arrays(L):
    x = np.mod(L[:, 0], 1.0)
    y = np.mod(L[:, 1], 1.0)
    x[x >= 1.0] = 0.0
    y[y >= 1.0] = 0.0
    return x, y


def lift_points(m, xs, ys):
    """Lifted images of many points via the active backend."""
    xs = np.ascontiguousarray(xs, dtype=float).ravel()
    ys = np.ascontiguousarray(ys, dtype=float).ravel()
    packed = _use_numba(m)
    if packed is None:
        return m.lift(xs, ys)
    return _lift_many(xs, ys, *packed)


def iterate_points(m, xs, ys, n_iter: int, chunk: int = 1 << 18):
    """Torus coordinates after ``n_iter`` applications of ``m``."""
    xs = np.ascontiguousarray(xs, dtype=float).ravel()
    ys = np.ascontiguousarray(ys, dtype=float).ravel()
    packed = _use_numba(m)
    if packed is not None:
        return _iterate(xs, ys, int(n_iter), *packed)
    ox, oy = xs.copy(), ys.copy()
    for s in range(0, len(xs), chunk):
        x, y = ox[s : s + chunk], oy[s : s + chunk]
        for _ in range(n_iter):
            x, y = _wrap_arrays(m.lift(x, y))
        ox[s : s + chunk], oy[s : s + chunk] = x, y
    return ox, oy


def iterate_bin(m, xs, ys, n_iter: int, bins: int, chunk: int = 1 << 18):
    """Occupancy masks ``(n_iter + 1, bins, bins)`` of the images of the points at each iterate."""
    xs = np.ascontiguousarray(xs, dtype=float).ravel()
    ys = np.ascontiguousarray(ys, dtype=float).ravel()
    packed = _use_numba(m)
    if packed is not None:
        return _iterate_bin(xs, ys, int(n_iter), int(bins), *packed).astype(bool)
    hits = np.zeros((n_iter + 1, bins, bins), dtype=bool)
    for s in range(0, len(xs), chunk):
        x, y = xs[s : s + chunk], ys[s : s + chunk]
        for k in range(n_iter + 1):
            if k:
                x, y = _wrap_arrays(m.lift(x, y))
            ix = np.minimum((x * bins).astype(np.int64), bins - 1)
            iy = np.minimum((y * bins).astype(np.int64), bins - 1)
            hits[k, ix, iy] = True
    return hits
