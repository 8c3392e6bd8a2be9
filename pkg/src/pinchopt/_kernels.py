"""Numeric inner loops, compiled with numba when available.

Every kernel exists twice: a loop-style version that numba compiles with
``@njit`` and a vectorized pure-numpy version. Set ``PINCHOPT_DISABLE_NUMBA=1``
before import to force the numpy path (also used when numba is missing).
Both paths are importable explicitly through :data:`NUMBA_KERNELS` and
:data:`NUMPY_KERNELS` so they can be cross-checked and benchmarked.
"""

import math
import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

_DISABLED = os.environ.get("PINCHOPT_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")

INV_E = math.exp(-1.0)


# ---------------------------------------------------------------------------
# loop-style kernels (numba targets; also valid, slow, plain Python)
# ---------------------------------------------------------------------------


def _coherent_sums_loop(dev_x, dev_y, ant_x, height, feed_x, k0, kg):
    m_dev = dev_x.shape[0]
    n_ant = ant_x.shape[0]
    out = np.empty(m_dev, dtype=np.complex128)
    h2 = height * height
    for m in range(m_dev):
        acc_re = 0.0
        acc_im = 0.0
        base = dev_y[m] * dev_y[m] + h2
        for n in range(n_ant):
            dx = dev_x[m] - ant_x[n]
            r = math.sqrt(dx * dx + base)
            phase = k0 * r - kg * abs(ant_x[n] - feed_x)
            acc_re += math.cos(phase) / r
            acc_im += math.sin(phase) / r
        out[m] = complex(acc_re, acc_im)
    return out


def _inverse_distance_sums_loop(dev_x, dev_y, ant_x, height, power):
    m_dev = dev_x.shape[0]
    n_ant = ant_x.shape[0]
    out = np.empty(m_dev)
    h2 = height * height
    for m in range(m_dev):
        acc = 0.0
        base = dev_y[m] * dev_y[m] + h2
        for n in range(n_ant):
            dx = dev_x[m] - ant_x[n]
            acc += (dx * dx + base) ** (-0.5 * power)
        out[m] = acc
    return out


def _lambertw_m1_loop(x, tol, max_iter):
    out = np.empty(x.shape[0])
    for i in range(x.shape[0]):
        xi = x[i]
        # branch-point series in p = -sqrt(2(e x + 1))
        arg = 2.0 * (math.e * xi + 1.0)
        if arg < 0.0:
            arg = 0.0
        p = -math.sqrt(arg)
        if p > -0.25:
            w = -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
            if p > -1e-6:
                out[i] = w
                continue
        else:
            lx = math.log(-xi)
            w = lx - math.log(-lx)
        for _ in range(max_iter):
            ew = math.exp(w)
            f = w * ew - xi
            wp1 = w + 1.0
            dw = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1))
            w -= dw
            if abs(dw) <= tol * abs(w):
                break
        out[i] = w
    return out


def _maxmin_levels_loop(gamma, q_tol, r_tol):
    # outer bisection on the common rate R, inner bisection on each share q_m(R)
    m_dev = gamma.shape[0]
    r_lo = 0.0
    r_hi = math.inf
    for m in range(m_dev):
        cap = math.log2(1.0 + gamma[m])
        if cap < r_hi:
            r_hi = cap
    q = np.empty(m_dev)
    final = False
    while True:
        if r_hi - r_lo <= r_tol:
            final = True
        rate = r_lo if final else 0.5 * (r_lo + r_hi)
        total = 0.0
        for m in range(m_dev):
            lo = 0.0
            hi = 1.0
            while hi - lo > q_tol:
                mid = 0.5 * (lo + hi)
                if mid * math.log2(1.0 + gamma[m] / mid) >= rate:
                    hi = mid
                else:
                    lo = mid
            q[m] = hi
            total += hi
        if final:
            return r_lo, q
        if total <= 1.0:
            r_lo = rate
        else:
            r_hi = rate


def _isotonic_project_loop(y):
    # pool-adjacent-violators, unit weights
    n = y.shape[0]
    vals = np.empty(n)
    sizes = np.empty(n, dtype=np.int64)
    top = 0
    for i in range(n):
        vals[top] = y[i]
        sizes[top] = 1
        top += 1
        while top > 1 and vals[top - 2] > vals[top - 1]:
            s = sizes[top - 2] + sizes[top - 1]
            vals[top - 2] = (vals[top - 2] * sizes[top - 2] + vals[top - 1] * sizes[top - 1]) / s
            sizes[top - 2] = s
            top -= 1
    out = np.empty(n)
    k = 0
    for b in range(top):
        for _ in range(sizes[b]):
            out[k] = vals[b]
            k += 1
    return out


# ---------------------------------------------------------------------------
# vectorized numpy kernels
# ---------------------------------------------------------------------------


def _coherent_sums_np(dev_x, dev_y, ant_x, height, feed_x, k0, kg):
    r = np.sqrt((dev_x[:, None] - ant_x[None, :]) ** 2 + (dev_y**2 + height**2)[:, None])
    phase = k0 * r - kg * np.abs(ant_x - feed_x)[None, :]
    return np.sum(np.exp(1j * phase) / r, axis=1)


def _inverse_distance_sums_np(dev_x, dev_y, ant_x, height, power):
    r2 = (dev_x[:, None] - ant_x[None, :]) ** 2 + (dev_y**2 + height**2)[:, None]
    return np.sum(r2 ** (-0.5 * power), axis=1)


def _lambertw_m1_np(x, tol, max_iter):
    x = np.asarray(x, dtype=float)
    p = -np.sqrt(np.maximum(2.0 * (np.e * x + 1.0), 0.0))
    near = p > -0.25
    with np.errstate(divide="ignore", invalid="ignore"):
        lx = np.log(-x)
        w = np.where(near, -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p**3, lx - np.log(-lx))
    active = ~(p > -1e-6)
    for _ in range(max_iter):
        if not active.any():
            break
        wa = w[active]
        ew = np.exp(wa)
        f = wa * ew - x[active]
        wp1 = wa + 1.0
        dw = f / (ew * wp1 - (wa + 2.0) * f / (2.0 * wp1))
        w[active] = wa - dw
        done = np.abs(dw) <= tol * np.abs(wa - dw)
        idx = np.flatnonzero(active)
        active[idx[done]] = False
    return w


def _shares_for_rate_np(gamma, rate, q_tol):
    lo = np.zeros_like(gamma)
    hi = np.ones_like(gamma)
    while np.max(hi - lo) > q_tol:
        mid = 0.5 * (lo + hi)
        ok = mid * np.log2(1.0 + gamma / mid) >= rate
        hi = np.where(ok, mid, hi)
        lo = np.where(ok, lo, mid)
    return hi


def _maxmin_levels_np(gamma, q_tol, r_tol):
    r_lo = 0.0
    r_hi = float(np.min(np.log2(1.0 + gamma)))
    while r_hi - r_lo > r_tol:
        mid = 0.5 * (r_lo + r_hi)
        if _shares_for_rate_np(gamma, mid, q_tol).sum() <= 1.0:
            r_lo = mid
        else:
            r_hi = mid
    return r_lo, _shares_for_rate_np(gamma, r_lo, q_tol)


def _isotonic_project_np(y):
    return _isotonic_project_loop(np.asarray(y, dtype=float))


NUMPY_KERNELS = {
    "coherent_sums": _coherent_sums_np,
    "inverse_distance_sums": _inverse_distance_sums_np,
    "lambertw_m1": _lambertw_m1_np,
    "maxmin_levels": _maxmin_levels_np,
    "isotonic_project": _isotonic_project_np,
}

if numba is not None:
    NUMBA_KERNELS = {
        "coherent_sums": numba.njit(cache=True)(_coherent_sums_loop),
        "inverse_distance_sums": numba.njit(cache=True)(_inverse_distance_sums_loop),
        "lambertw_m1": numba.njit(cache=True)(_lambertw_m1_loop),
        "maxmin_levels": numba.njit(cache=True)(_maxmin_levels_loop),
        "isotonic_project": numba.njit(cache=True)(_isotonic_project_loop),
    }
else:  # pragma: no cover
    NUMBA_KERNELS = None

USING_NUMBA = NUMBA_KERNELS is not None and not _DISABLED
BACKEND = "numba" if USING_NUMBA else "numpy"
_ACTIVE = NUMBA_KERNELS if USING_NUMBA else NUMPY_KERNELS

coherent_sums = _ACTIVE["coherent_sums"]
inverse_distance_sums = _ACTIVE["inverse_distance_sums"]
lambertw_m1 = _ACTIVE["lambertw_m1"]
maxmin_levels = _ACTIVE["maxmin_levels"]
isotonic_project = _ACTIVE["isotonic_project"]
