"""Pure-Python search kernels.

Mirrors ``_ckernels.pyx`` function for function. The grid scan is vectorised
with numpy; the local search runs the same Nelder-Mead loop on scalar floats.
"""
import math

import numpy as np

SIMPLE = 0
BALANCE = 1


def loss_at(kind, lam_hat, lam, mu, a1, b1, a2, b2):
    """Relative loss of one aggregator on one structure, NaN if undefined."""
    wm = mu**lam
    wn = (1.0 - mu) ** lam
    e = 2.0 * lam_hat - 1.0
    total = 0.0
    for p1, q1 in ((a1, b1), (1.0 - a1, 1.0 - b1)):
        d1 = wm * p1 + wn * q1
        for p2, q2 in ((a2, b2), (1.0 - a2, 1.0 - b2)):
            j1 = mu * p1 * p2
            j0 = (1.0 - mu) * q1 * q2
            ps = j1 + j0
            if ps <= 0.0:
                continue
            d2 = wm * p2 + wn * q2
            if d1 <= 0.0 or d2 <= 0.0:
                return math.nan
            x1 = wm * p1 / d1
            x2 = wm * p2 / d2
            if kind == SIMPLE:
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
                        return math.nan
                    f = u / (u + (m / (1.0 - m)) ** e * w)
            diff = f - j1 / ps
            total += ps * diff * diff
    return total


def _loss_block(kind, lam_hat, lam, mu, L1, L0):
    """Loss for one prior over all channel pairs; rows index expert 1's channel."""
    e = 2.0 * lam_hat - 1.0
    wm = mu**lam
    wn = (1.0 - mu) ** lam
    d = wm * L1 + wn * L0
    X = np.where(d > 0.0, wm * L1 / d, np.nan)
    total = np.zeros((L1.shape[0], L1.shape[0]))
    bad = np.zeros(total.shape, dtype=bool)
    for s1 in range(2):
        for s2 in range(2):
            j1 = mu * L1[:, s1, None] * L1[None, :, s2]
            j0 = (1.0 - mu) * L0[:, s1, None] * L0[None, :, s2]
            ps = j1 + j0
            live = ps > 0.0
            x1 = X[:, s1, None]
            x2 = X[None, :, s2]
            if kind == SIMPLE:
                f = 0.5 * (x1 + x2)
            else:
                m = 0.5 * (x1 + x2)
                u = x1 * x2
                w = (1.0 - x1) * (1.0 - x2)
                f = u / (u + (m / (1.0 - m)) ** e * w)
                f = np.where(m <= 0.0, 0.0, np.where(m >= 1.0, 1.0, f))
                bad |= live & (u + w <= 0.0) & (m > 0.0) & (m < 1.0)
            bad |= live & (np.isnan(x1) | np.isnan(x2))
            diff = f - j1 / ps
            total += np.where(live, ps * diff * diff, 0.0)
    return np.where(bad, np.nan, total)


def _channel_table(grid):
    al = np.repeat(grid, grid.shape[0])
    be = np.tile(grid, grid.shape[0])
    L1 = np.stack([al, 1.0 - al], axis=1)
    L0 = np.stack([be, 1.0 - be], axis=1)
    return L1, L0


def scan_block(kind, lam_hat, lam, grid, lo, hi, top_k):
    """Scan ``grid**5`` for first-axis indices in ``[lo, hi)``.

    The loss is symmetric in the two experts, so only channel pairs with
    ``c1 <= c2`` (``c = alpha_index * n + beta_index``) are visited. Returns ``(values, flat_indices, n_skipped)`` for the ``top_k`` best
    points, ordered by value descending then flat index ascending.
    """
    grid = np.asarray(grid, dtype=np.float64)
    n = grid.shape[0]
    L1, L0 = _channel_table(grid)
    upper = np.triu(np.ones((n * n, n * n), dtype=bool)).ravel()
    vals = []
    skipped = 0
    with np.errstate(all="ignore"):
        for i in range(lo, hi):
            block = _loss_block(kind, lam_hat, lam, grid[i], L1, L0).ravel()
            nan = np.isnan(block) & upper
            block[~upper] = -np.inf
            skipped += int(nan.sum())
            block[nan] = -np.inf
            vals.append(block)
    if not vals:
        return np.empty(0), np.empty(0, dtype=np.int64), 0
    vals = np.concatenate(vals)
    idx = np.arange(lo * n**4, hi * n**4, dtype=np.int64)
    finite = np.isfinite(vals)
    vals, idx = vals[finite], idx[finite]
    k = min(top_k, vals.shape[0])
    if k < vals.shape[0]:
        # partition on value, then keep every point tied with the k-th value so
        # the index tiebreak stays exact
        cut = np.partition(vals, vals.shape[0] - k)[vals.shape[0] - k]
        keep = vals >= cut
        vals, idx = vals[keep], idx[keep]
    order = np.lexsort((idx, -vals))[:k]
    return vals[order], idx[order], skipped


def _clamped_loss(kind, lam_hat, lam, x, eps):
    z = [min(max(v, eps), 1.0 - eps) for v in x]
    v = loss_at(kind, lam_hat, lam, z[0], z[1], z[2], z[3], z[4])
    if v != v:
        return math.inf
    return -v


def nelder_mead(kind, lam_hat, lam, x0, step, iters, eps):
    """Maximise the relative loss from ``x0`` with a Nelder-Mead simplex.

    Points are clamped to ``[eps, 1 - eps]`` before evaluation. Returns
    ``(best_value, best_point)`` with the point already clamped.
    """
    n = 5
    simplex = [list(map(float, x0))]
    for j in range(n):
        p = list(simplex[0])
        p[j] = p[j] + step if p[j] + step <= 1.0 else p[j] - step
        simplex.append(p)
    fvals = [_clamped_loss(kind, lam_hat, lam, p, eps) for p in simplex]

    for _ in range(iters):
        order = sorted(range(n + 1), key=lambda i: fvals[i])
        simplex = [simplex[i] for i in order]
        fvals = [fvals[i] for i in order]
        if fvals[n] - fvals[0] <= 1e-16 and max(
            abs(simplex[i][j] - simplex[0][j]) for i in range(1, n + 1) for j in range(n)
        ) <= 1e-12:
            break
        cen = []
        for j in range(n):
            acc = 0.0
            for i in range(n):
                acc += simplex[i][j]
            cen.append(acc / n)
        worst = simplex[n]
        xr = [cen[j] + (cen[j] - worst[j]) for j in range(n)]
        fr = _clamped_loss(kind, lam_hat, lam, xr, eps)
        if fr < fvals[0]:
            xe = [cen[j] + 2.0 * (cen[j] - worst[j]) for j in range(n)]
            fe = _clamped_loss(kind, lam_hat, lam, xe, eps)
            if fe < fr:
                simplex[n], fvals[n] = xe, fe
            else:
                simplex[n], fvals[n] = xr, fr
            continue
        if fr < fvals[n - 1]:
            simplex[n], fvals[n] = xr, fr
            continue
        if fr < fvals[n]:
            xc = [cen[j] + 0.5 * (xr[j] - cen[j]) for j in range(n)]
        else:
            xc = [cen[j] + 0.5 * (worst[j] - cen[j]) for j in range(n)]
        fc = _clamped_loss(kind, lam_hat, lam, xc, eps)
        if fc < min(fr, fvals[n]):
            simplex[n], fvals[n] = xc, fc
            continue
        best = simplex[0]
        for i in range(1, n + 1):
            simplex[i] = [best[j] + 0.5 * (simplex[i][j] - best[j]) for j in range(n)]
            fvals[i] = _clamped_loss(kind, lam_hat, lam, simplex[i], eps)

    ib = min(range(n + 1), key=lambda i: fvals[i])
    point = [min(max(v, eps), 1.0 - eps) for v in simplex[ib]]
    return -fvals[ib], point
