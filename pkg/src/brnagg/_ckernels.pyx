# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled search kernels; same interface and arithmetic as ``_pykernels``."""
import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, NAN, fabs, isnan, pow

cnp.import_array()

SIMPLE = 0
BALANCE = 1


cdef inline double _loss(int kind, double lam_hat, double lam, double mu,
                         double a1, double b1, double a2, double b2) noexcept nogil:
    cdef double wm = pow(mu, lam)
    cdef double wn = pow(1.0 - mu, lam)
    cdef double e = 2.0 * lam_hat - 1.0
    cdef double total = 0.0
    cdef double p1, q1, p2, q2, d1, d2, j1, j0, ps, x1, x2, f, m, u, w, diff
    cdef int s1, s2
    for s1 in range(2):
        if s1 == 0:
            p1 = a1
            q1 = b1
        else:
            p1 = 1.0 - a1
            q1 = 1.0 - b1
        d1 = wm * p1 + wn * q1
        for s2 in range(2):
            if s2 == 0:
                p2 = a2
                q2 = b2
            else:
                p2 = 1.0 - a2
                q2 = 1.0 - b2
            j1 = mu * p1 * p2
            j0 = (1.0 - mu) * q1 * q2
            ps = j1 + j0
            if ps <= 0.0:
                continue
            d2 = wm * p2 + wn * q2
            if d1 <= 0.0 or d2 <= 0.0:
                return NAN
            x1 = wm * p1 / d1
            x2 = wm * p2 / d2
            if kind == 0:
                f = 0.5 * (x1 + x2)
            else:
                m = 0.5 * (x1 + x2)
                if m <= 0.0:
                    f = 0.0
                elif m >= 1.0:
                    f = 1.0
                else:
                    u = x1 * x2
                    w = (1.0 - x1) * (1.0 - x2)
                    if u + w <= 0.0:
                        return NAN
                    f = u / (u + pow(m / (1.0 - m), e) * w)
            diff = f - j1 / ps
            total += ps * diff * diff
    return total


def loss_at(int kind, double lam_hat, double lam, double mu,
            double a1, double b1, double a2, double b2):
    """Relative loss of one aggregator on one structure, NaN if undefined."""
    return _loss(kind, lam_hat, lam, mu, a1, b1, a2, b2)


def scan_block(int kind, double lam_hat, double lam, grid, Py_ssize_t lo,
               Py_ssize_t hi, Py_ssize_t top_k):
    """Scan ``grid**5`` for first-axis indices in ``[lo, hi)``.

    The loss is symmetric in the two experts, so only channel pairs with
    ``c1 <= c2`` (``c = alpha_index * n + beta_index``) are visited. Returns ``(values, flat_indices, n_skipped)`` for the ``top_k`` best
    points, ordered by value descending then flat index ascending.
    """
    cdef double[::1] g = np.ascontiguousarray(grid, dtype=np.float64)
    cdef Py_ssize_t n = g.shape[0]
    cdef Py_ssize_t n2 = n * n
    cdef Py_ssize_t k = top_k if top_k > 0 else 1
    best_v_arr = np.full(k, -INFINITY)
    best_i_arr = np.full(k, -1, dtype=np.int64)
    cdef double[::1] bv = best_v_arr
    cdef cnp.int64_t[::1] bi = best_i_arr
    # per channel c = (alpha index, beta index) and signal s: likelihoods and report
    cdef double[:, ::1] L1 = np.empty((n2, 2))
    cdef double[:, ::1] L0 = np.empty((n2, 2))
    cdef double[:, ::1] X = np.empty((n2, 2))
    cdef Py_ssize_t i0, i, j, c, c1, c2, pos, filled = 0
    cdef long long flat, skipped = 0
    cdef int s1, s2, bad
    cdef double mu, wm, wn, d, v, j1, j0, ps, x1, x2, f, m, u, w, diff
    cdef double e = 2.0 * lam_hat - 1.0
    with nogil:
        for i0 in range(lo, hi):
            mu = g[i0]
            wm = pow(mu, lam)
            wn = pow(1.0 - mu, lam)
            for i in range(n):
                for j in range(n):
                    c = i * n + j
                    L1[c, 0] = g[i]
                    L0[c, 0] = g[j]
                    L1[c, 1] = 1.0 - g[i]
                    L0[c, 1] = 1.0 - g[j]
                    for s1 in range(2):
                        d = wm * L1[c, s1] + wn * L0[c, s1]
                        X[c, s1] = wm * L1[c, s1] / d if d > 0.0 else NAN
            for c1 in range(n2):
                for c2 in range(c1, n2):
                    v = 0.0
                    bad = 0
                    for s1 in range(2):
                        for s2 in range(2):
                            j1 = mu * L1[c1, s1] * L1[c2, s2]
                            j0 = (1.0 - mu) * L0[c1, s1] * L0[c2, s2]
                            ps = j1 + j0
                            if ps <= 0.0:
                                continue
                            x1 = X[c1, s1]
                            x2 = X[c2, s2]
                            if isnan(x1) or isnan(x2):
                                bad = 1
                                break
                            if kind == 0:
                                f = 0.5 * (x1 + x2)
                            else:
                                m = 0.5 * (x1 + x2)
                                if m <= 0.0:
                                    f = 0.0
                                elif m >= 1.0:
                                    f = 1.0
                                else:
                                    u = x1 * x2
                                    w = (1.0 - x1) * (1.0 - x2)
                                    if u + w <= 0.0:
                                        bad = 1
                                        break
                                    f = u / (u + pow(m / (1.0 - m), e) * w)
                            diff = f - j1 / ps
                            v += ps * diff * diff
                        if bad:
                            break
                    if bad:
                        skipped += 1
                        continue
                    if filled == k and v <= bv[k - 1]:
                        # flat indices only grow, so a tie with the last kept
                        # entry never displaces it
                        continue
                    flat = (i0 * n2 + c1) * n2 + c2
                    if filled < k:
                        pos = filled
                        filled += 1
                    else:
                        pos = k - 1
                    while pos > 0 and bv[pos - 1] < v:
                        bv[pos] = bv[pos - 1]
                        bi[pos] = bi[pos - 1]
                        pos -= 1
                    bv[pos] = v
                    bi[pos] = flat
    if top_k <= 0:
        filled = 0
    return best_v_arr[:filled].copy(), best_i_arr[:filled].copy(), int(skipped)


cdef inline void _copy(double* dst, double* src) noexcept nogil:
    cdef int j
    for j in range(5):
        dst[j] = src[j]


cdef inline double _clamp(double v, double eps) noexcept nogil:
    if v < eps:
        return eps
    if v > 1.0 - eps:
        return 1.0 - eps
    return v


cdef inline double _objective(int kind, double lam_hat, double lam, double* x,
                              double eps) noexcept nogil:
    cdef double v = _loss(kind, lam_hat, lam, _clamp(x[0], eps), _clamp(x[1], eps),
                          _clamp(x[2], eps), _clamp(x[3], eps), _clamp(x[4], eps))
    if isnan(v):
        return INFINITY
    return -v


def nelder_mead(int kind, double lam_hat, double lam, x0, double step, int iters,
                double eps):
    """Maximise the relative loss from ``x0`` with a Nelder-Mead simplex.

    Points are clamped to ``[eps, 1 - eps]`` before evaluation. Returns
    ``(best_value, best_point)`` with the point already clamped.
    """
    cdef double s[6][5]
    cdef double fv[6]
    cdef double tmp[5]
    cdef double cen[5]
    cdef double xr[5]
    cdef double xe[5]
    cdef double xc[5]
    cdef double fr, fe, fc, ft, spread
    cdef int i, j, it, n = 5
    for j in range(n):
        s[0][j] = float(x0[j])
    with nogil:
        for i in range(1, n + 1):
            for j in range(n):
                s[i][j] = s[0][j]
            if s[i][i - 1] + step <= 1.0:
                s[i][i - 1] = s[i][i - 1] + step
            else:
                s[i][i - 1] = s[i][i - 1] - step
        for i in range(n + 1):
            fv[i] = _objective(kind, lam_hat, lam, s[i], eps)

        for it in range(iters):
            # stable insertion sort, same order as Python's sorted()
            for i in range(1, n + 1):
                ft = fv[i]
                for j in range(n):
                    tmp[j] = s[i][j]
                j = i - 1
                while j >= 0 and fv[j] > ft:
                    fv[j + 1] = fv[j]
                    _copy(s[j + 1], s[j])
                    j -= 1
                fv[j + 1] = ft
                _copy(s[j + 1], tmp)

            if fv[n] - fv[0] <= 1e-16:
                spread = 0.0
                for i in range(1, n + 1):
                    for j in range(n):
                        if fabs(s[i][j] - s[0][j]) > spread:
                            spread = fabs(s[i][j] - s[0][j])
                if spread <= 1e-12:
                    break

            for j in range(n):
                cen[j] = 0.0
                for i in range(n):
                    cen[j] += s[i][j]
                cen[j] = cen[j] / n
            for j in range(n):
                xr[j] = cen[j] + (cen[j] - s[n][j])
            fr = _objective(kind, lam_hat, lam, xr, eps)
            if fr < fv[0]:
                for j in range(n):
                    xe[j] = cen[j] + 2.0 * (cen[j] - s[n][j])
                fe = _objective(kind, lam_hat, lam, xe, eps)
                if fe < fr:
                    _copy(s[n], xe)
                    fv[n] = fe
                else:
                    _copy(s[n], xr)
                    fv[n] = fr
                continue
            if fr < fv[n - 1]:
                _copy(s[n], xr)
                fv[n] = fr
                continue
            if fr < fv[n]:
                for j in range(n):
                    xc[j] = cen[j] + 0.5 * (xr[j] - cen[j])
            else:
                for j in range(n):
                    xc[j] = cen[j] + 0.5 * (s[n][j] - cen[j])
            fc = _objective(kind, lam_hat, lam, xc, eps)
            if fc < (fr if fr < fv[n] else fv[n]):
                _copy(s[n], xc)
                fv[n] = fc
                continue
            for i in range(1, n + 1):
                for j in range(n):
                    s[i][j] = s[0][j] + 0.5 * (s[i][j] - s[0][j])
                fv[i] = _objective(kind, lam_hat, lam, s[i], eps)

    ib = 0
    for i in range(1, n + 1):
        if fv[i] < fv[ib]:
            ib = i
    point = [_clamp(s[ib][j], eps) for j in range(n)]
    return -fv[ib], point
