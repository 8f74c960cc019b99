"""Hot numeric kernels with a numba fast path and a pure-numpy fallback.

Backend selection: the environment variable ``MONOSIM_KERNELS`` picks the
path at import time (``numba``, ``numpy``, or ``auto``; default ``auto``
uses numba when importable).  ``set_backend`` switches at runtime; the
``bench`` CLI subcommand times both paths against each other.
"""

from __future__ import annotations

import os

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(f):
            return f

        if args and callable(args[0]):
            return args[0]
        return wrap


# ---------------------------------------------------------------------------
# band statistics: per-band sums of y * x and y * (w.x)


def _band_accumulate_core(X, y, z, jdx, A, bw, counts, touched):
    n, d = X.shape
    n_touched = 0
    for i in range(n):
        j = jdx[i]
        if j < 0:
            continue
        if counts[j] == 0:
            touched[n_touched] = j
            n_touched += 1
        counts[j] += 1
        yi = y[i]
        bw[j] += yi * z[i]
        for k in range(d):
            A[j, k] += yi * X[i, k]
    return n_touched


_band_accumulate_nb = njit(cache=True)(_band_accumulate_core)


def band_accumulate_numba(X, y, z, jdx, n_bands):
    A = np.zeros((n_bands, X.shape[1]))
    bw = np.zeros(n_bands)
    counts = np.zeros(n_bands, dtype=np.int64)
    touched = np.empty(n_bands, dtype=np.int64)
    _band_accumulate_nb(X, y, z, jdx, A, bw, counts, touched)
    return A, bw, counts


def band_accumulate_into(X, y, z, jdx, A, bw, counts, touched):
    """Accumulate into caller-owned buffers (assumed zeroed); returns the
    number of touched bands, written to the front of ``touched``."""
    if HAVE_NUMBA:
        return _band_accumulate_nb(X, y, z, jdx, A, bw, counts, touched)
    return _band_accumulate_core(X, y, z, jdx, A, bw, counts, touched)


def band_accumulate_numpy(X, y, z, jdx, n_bands):
    valid = jdx >= 0
    jv = jdx[valid]
    yv = y[valid]
    Xv = X[valid]
    counts = np.bincount(jv, minlength=n_bands)
    bw = np.bincount(jv, weights=yv * z[valid], minlength=n_bands)
    A = np.empty((n_bands, X.shape[1]))
    for k in range(X.shape[1]):
        A[:, k] = np.bincount(jv, weights=yv * Xv[:, k], minlength=n_bands)
    return A, bw, counts.astype(np.int64)


def _spectral_matrix_core(
    X, y, z, m_prime, delta, A, bw, counts, touched, n_prev, w, probs, out
):
    """One spectral iteration's statistics pass: zero the previously touched
    bands, re-accumulate, and form sum_j g_j g_j^T / p_j in a single sweep."""
    n, d = X.shape
    n_bands = probs.shape[0]
    for t in range(n_prev):
        j = touched[t]
        counts[j] = 0
        bw[j] = 0.0
        for k in range(d):
            A[j, k] = 0.0
    n_t = 0
    for i in range(n):
        zi = z[i]
        if zi < -m_prime or zi >= m_prime:
            continue
        j = int(np.floor((zi + m_prime) / delta))
        if j < 0 or j >= n_bands:
            continue
        if counts[j] == 0:
            touched[n_t] = j
            n_t += 1
        counts[j] += 1
        yi = y[i]
        bw[j] += yi * zi
        for k in range(d):
            A[j, k] += yi * X[i, k]
    out[:] = 0.0
    g = np.empty(d)
    inv_n2 = 1.0 / (float(n) * float(n))
    for t in range(n_t):
        j = touched[t]
        for k in range(d):
            g[k] = A[j, k] - bw[j] * w[k]
        scale = inv_n2 / probs[j]
        for a in range(d):
            ga = g[a] * scale
            for b in range(d):
                out[a, b] += ga * g[b]
    return n_t


_spectral_matrix_nb = njit(cache=True)(_spectral_matrix_core)


def spectral_matrix_pass(X, y, z, m_prime, delta, A, bw, counts, touched, n_prev, w, probs, out):
    if HAVE_NUMBA:
        return _spectral_matrix_nb(
            X, y, z, m_prime, delta, A, bw, counts, touched, n_prev, w, probs, out
        )
    return _spectral_matrix_core(
        X, y, z, m_prime, delta, A, bw, counts, touched, n_prev, w, probs, out
    )


def _assemble_core(G, probs, out):
    m, d = G.shape
    out[:] = 0.0
    for j in range(m):
        inv = 1.0 / probs[j]
        for a in range(d):
            ga = G[j, a] * inv
            for b in range(d):
                out[a, b] += ga * G[j, b]
    return out


_assemble_nb = njit(cache=True)(_assemble_core)


def assemble_matrix_numba(G, probs):
    """Sum of outer products g_j g_j^T / p_j over the rows of G."""
    out = np.empty((G.shape[1], G.shape[1]))
    _assemble_nb(G, probs, out)
    return out


def assemble_matrix_numpy(G, probs):
    Gs = G / np.sqrt(probs)[:, None]
    return Gs.T @ Gs


# ---------------------------------------------------------------------------
# halfspace refinement: projected subgradient passes on the sigmoid surrogate


def _refine_core(X, yb, w, b, passes, lr0, tau, batch):
    n, d = X.shape
    g = np.empty(d)
    for p in range(passes):
        lr = lr0 / np.sqrt(p + 1.0)
        start = 0
        while start < n:
            stop = min(start + batch, n)
            m = stop - start
            for k in range(d):
                g[k] = 0.0
            for i in range(start, stop):
                u = -b
                for k in range(d):
                    u += w[k] * X[i, k]
                u /= tau
                if u > 50.0:
                    u = 50.0
                elif u < -50.0:
                    u = -50.0
                s = 1.0 / (1.0 + np.exp(-u))
                coef = s * (1.0 - s) / tau
                if s < yb[i]:
                    coef = -coef
                for k in range(d):
                    g[k] += coef * X[i, k]
            nrm2 = 0.0
            for k in range(d):
                w[k] -= lr * g[k] / m
                nrm2 += w[k] * w[k]
            nrm = np.sqrt(nrm2)
            if nrm > 0.0:
                for k in range(d):
                    w[k] /= nrm
            start = stop
    return w


_refine_nb = njit(cache=True)(_refine_core)


def halfspace_refine_numba(X, yb, w0, b, passes, lr0, tau, batch):
    return _refine_nb(X, yb, w0.copy(), b, passes, lr0, tau, batch)


def halfspace_refine_numpy(X, yb, w0, b, passes, lr0, tau, batch):
    n = X.shape[0]
    w = w0.copy()
    for p in range(passes):
        lr = lr0 / np.sqrt(p + 1.0)
        for start in range(0, n, batch):
            Xb = X[start : start + batch]
            yi = yb[start : start + batch]
            u = np.clip((Xb @ w - b) / tau, -50.0, 50.0)
            s = 1.0 / (1.0 + np.exp(-u))
            coef = np.where(s >= yi, 1.0, -1.0) * s * (1.0 - s) / tau
            g = coef @ Xb / Xb.shape[0]
            w = w - lr * g
            nrm = np.linalg.norm(w)
            if nrm > 0.0:
                w = w / nrm
    return w


# ---------------------------------------------------------------------------
# power iteration on the orthogonal complement of a set of unit vectors


def _power_core(m, v, ortho, tol, scale, max_iters):
    """Returns (rayleigh, n_iters, status); status 0 converged, 1 max_iters,
    2 collapsed to zero.  v is updated in place."""
    d = v.shape[0]
    rayleigh = v @ (m @ v)
    nxt = rayleigh
    for it in range(max_iters):
        u = m @ v
        for j in range(ortho.shape[0]):
            dot = 0.0
            for k in range(d):
                dot += ortho[j, k] * u[k]
            for k in range(d):
                u[k] -= dot * ortho[j, k]
        nrm2 = 0.0
        for k in range(d):
            nrm2 += u[k] * u[k]
        nrm = np.sqrt(nrm2)
        if nrm < scale * 1e-300:
            return 0.0, it + 1, 2
        for k in range(d):
            v[k] = u[k] / nrm
        nxt = v @ (m @ v)
        if abs(nxt - rayleigh) <= tol * max(abs(nxt), scale * 1e-12):
            return nxt, it + 1, 0
        rayleigh = nxt
    return nxt, max_iters, 1


_power_nb = njit(cache=True)(_power_core)


def power_iterate(m, v, ortho, tol, scale, max_iters):
    if HAVE_NUMBA:
        return _power_nb(m, v, ortho, tol, scale, max_iters)
    return _power_core(m, v, ortho, tol, scale, max_iters)


# ---------------------------------------------------------------------------
# chain-constrained isotonic QP, forward derivative DP + backward clamp
#
# State: the derivative of the prefix value function is a nondecreasing
# piecewise-linear function phi(v) = a*v + beta + sum_j delta_j*(v - b_j)+.
# Knots are kept in two stacks around the current minimizer m (phi(m) = 0):
# L holds absolute positions <= m, R holds positions > m stored minus a lazy
# offset cum_r (every Lipschitz cut shifts all knots right of m by c).


def _iso_core(ys, cs, minima):
    n = ys.shape[0]
    cap = 2 * n + 4
    l_pos = np.empty(cap)
    l_del = np.empty(cap)
    l_ps = np.empty(cap + 1)  # prefix sums of delta
    l_pw = np.empty(cap + 1)  # prefix sums of delta * pos
    r_pos = np.empty(cap)  # index 0 = rightmost knot, stored minus cum_r
    r_del = np.empty(cap)
    r_ps = np.empty(cap + 1)  # prefix over the i+1 rightmost knots
    r_pw = np.empty(cap + 1)
    l_ps[0] = 0.0
    l_pw[0] = 0.0
    r_ps[0] = 0.0
    r_pw[0] = 0.0
    nl = 0
    nr = 0
    cum_r = 0.0

    a = 2.0
    beta = -2.0 * ys[0]
    m = ys[0]
    minima[0] = m

    for i in range(1, n):
        c = cs[i - 1]
        if c > 0.0:
            # cut at m: slope there is a plus every delta at positions <= m
            s_m = a + l_ps[nl]
            if s_m != 0.0:
                l_pos[nl] = m
                l_del[nl] = -s_m
                l_ps[nl + 1] = l_ps[nl] - s_m
                l_pw[nl + 1] = l_pw[nl] - s_m * m
                nl += 1
                r_pos[nr] = m - cum_r  # true position m + c after the shift
                r_del[nr] = s_m
                r_ps[nr + 1] = r_ps[nr] + s_m
                r_pw[nr + 1] = r_pw[nr] + s_m * (m - cum_r)
                nr += 1
            cum_r += c

        a += 2.0
        beta += -2.0 * ys[i]

        # locate the unique zero of phi: binary search over merged knots
        ts = l_ps[nl] + r_ps[nr]
        tw = l_pw[nl] + r_pw[nr] + cum_r * r_ps[nr]
        nk = nl + nr
        lo = 0
        hi = nk  # number of knots at positions <= zero crossing
        while lo < hi:
            mid = (lo + hi) // 2
            if mid < nl:
                pos = l_pos[mid]
                s_le = l_ps[mid + 1]
                w_le = l_pw[mid + 1]
            else:
                ridx = nk - 1 - mid
                pos = r_pos[ridx] + cum_r
                s_le = ts - r_ps[ridx]
                w_le = tw - (r_pw[ridx] + cum_r * r_ps[ridx])
            val = a * pos + beta + pos * s_le - w_le
            if val < 0.0:
                lo = mid + 1
            else:
                hi = mid
        if lo == 0:
            s_le = 0.0
            w_le = 0.0
        elif lo - 1 < nl:
            s_le = l_ps[lo]
            w_le = l_pw[lo]
        else:
            ridx = nk - lo
            s_le = ts - r_ps[ridx]
            w_le = tw - (r_pw[ridx] + cum_r * r_ps[ridx])
        # piece slope is a + s_le >= 2, solve a*m + beta + m*s_le - w_le = 0
        m = (w_le - beta) / (a + s_le)
        minima[i] = m

        # rebalance stacks so L <= m < R
        while nl > 0 and l_pos[nl - 1] > m:
            nl -= 1
            r_pos[nr] = l_pos[nl] - cum_r
            r_del[nr] = l_del[nl]
            r_ps[nr + 1] = r_ps[nr] + l_del[nl]
            r_pw[nr + 1] = r_pw[nr] + l_del[nl] * (l_pos[nl] - cum_r)
            nr += 1
        while nr > 0 and r_pos[nr - 1] + cum_r <= m:
            nr -= 1
            l_pos[nl] = r_pos[nr] + cum_r
            l_del[nl] = r_del[nr]
            l_ps[nl + 1] = l_ps[nl] + r_del[nr]
            l_pw[nl + 1] = l_pw[nl] + r_del[nr] * (r_pos[nr] + cum_r)
            nl += 1

    return minima


_iso_nb = njit(cache=True)(_iso_core)


def iso_backward(minima, cs):
    n = minima.shape[0]
    v = np.empty(n)
    v[n - 1] = minima[n - 1]
    for i in range(n - 2, -1, -1):
        hi = v[i + 1]
        lo = hi - cs[i]
        mi = minima[i]
        v[i] = lo if mi < lo else (hi if mi > hi else mi)
    return v


_iso_backward_nb = njit(cache=True)(iso_backward)


def iso_solve_numba(ys, cs):
    minima = np.empty(ys.shape[0])
    _iso_nb(ys, cs, minima)
    return _iso_backward_nb(minima, cs)


def iso_solve_numpy(ys, cs):
    minima = np.empty(ys.shape[0])
    _iso_core(ys, cs, minima)
    return iso_backward(minima, cs)


# ---------------------------------------------------------------------------
# backend dispatch

_NUMBA_IMPLS = {
    "band_accumulate": band_accumulate_numba,
    "assemble_matrix": assemble_matrix_numba,
    "halfspace_refine": halfspace_refine_numba,
    "iso_solve": iso_solve_numba,
}
_NUMPY_IMPLS = {
    "band_accumulate": band_accumulate_numpy,
    "assemble_matrix": assemble_matrix_numpy,
    "halfspace_refine": halfspace_refine_numpy,
    "iso_solve": iso_solve_numpy,
}

_ACTIVE = dict(_NUMPY_IMPLS)
BACKEND = "numpy"


def set_backend(name: str) -> str:
    """Select the kernel backend ('numba', 'numpy', or 'auto')."""
    global BACKEND
    if name == "auto":
        name = "numba" if HAVE_NUMBA else "numpy"
    if name == "numba":
        if not HAVE_NUMBA:
            raise RuntimeError("numba backend requested but numba is unavailable")
        _ACTIVE.update(_NUMBA_IMPLS)
    elif name == "numpy":
        _ACTIVE.update(_NUMPY_IMPLS)
    else:
        raise ValueError(f"unknown kernel backend {name!r}")
    BACKEND = name
    return BACKEND


def band_accumulate(X, y, z, jdx, n_bands):
    return _ACTIVE["band_accumulate"](X, y, z, jdx, n_bands)


def assemble_matrix(G, probs):
    return _ACTIVE["assemble_matrix"](G, probs)


def halfspace_refine(X, yb, w0, b, passes, lr0, tau, batch):
    return _ACTIVE["halfspace_refine"](X, yb, w0, b, passes, lr0, tau, batch)


def iso_solve(ys, cs):
    return _ACTIVE["iso_solve"](ys, cs)


set_backend(os.environ.get("MONOSIM_KERNELS", "auto"))
