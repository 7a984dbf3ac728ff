"""Analytic regret lower bound and the single-trough shape test."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = ["lower_bound", "lb_objective", "TroughReport", "single_trough_check"]

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def lb_objective(gamma, lam):
    """Loss any aggregator must pay on the two-structure instance at ``gamma``.

    Equal to ``gamma * phi(y)`` with ``y = (gamma / (1 - gamma)) ** (2 lam - 1)``
    and ``phi(y) = (y - 1)**2 / (4 (1 + y))``. Accepts arrays.
    """
    gamma = np.asarray(gamma, dtype=np.float64)
    y = (gamma / (1.0 - gamma)) ** (2.0 * lam - 1.0)
    out = gamma * (y - 1.0) ** 2 / (4.0 * (1.0 + y))
    return out if out.ndim else float(out)


def _golden_max(f, lo, hi, tol=1e-13, max_iter=200):
    c = hi - _INVPHI * (hi - lo)
    d = lo + _INVPHI * (hi - lo)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if hi - lo <= tol:
            break
        if fc >= fd:
            hi, d, fd = d, c, fc
            c = hi - _INVPHI * (hi - lo)
            fc = f(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + _INVPHI * (hi - lo)
            fd = f(d)
    return (c, fc) if fc >= fd else (d, fd)


def lower_bound(lam: float, eps: float = 1e-6, scan_points: int = 2001) -> tuple[float, float]:
    """Return ``(lb(lam), argmax gamma)`` over ``gamma in [eps, 1/2 - eps]``.

    A dense scan brackets the maximiser, golden-section search polishes it.
    At ``lam = 0`` the supremum 1/4 sits at ``gamma -> 0`` and is approached
    as ``0.25 - O(eps)``.
    """
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam!r}")
    if not 0.0 < eps < 0.25:
        raise ValueError(f"eps must lie in (0, 0.25), got {eps!r}")
    grid = np.linspace(eps, 0.5 - eps, scan_points)
    vals = lb_objective(grid, lam)
    k = int(np.argmax(vals))
    best_g, best_v = float(grid[k]), float(vals[k])
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, scan_points - 1)]
    g, v = _golden_max(lambda x: lb_objective(x, lam), float(lo), float(hi))
    if v > best_v:
        best_g, best_v = g, v
    return best_v, best_g


@dataclass
class TroughReport:
    ok: bool
    trough_index: int | None
    violations: list[tuple[int, float]] = field(default_factory=list)

    def __bool__(self):
        return self.ok


def _violations(values, m, tol):
    out = []
    for i in range(len(values) - 1):
        step = values[i + 1] - values[i]
        if i < m and step > tol:
            out.append((i, step))
        elif i >= m and -step > tol:
            out.append((i, step))
    return out


def single_trough_check(values, tol: float = 0.0) -> TroughReport:
    """Is the sequence non-increasing up to some index and non-decreasing after?

    Steps against the expected direction are tolerated up to ``tol``. On
    success ``trough_index`` is the split point (the first minimum when it
    qualifies); on failure the report lists the violating steps ``(i,
    values[i+1] - values[i])`` for the split with the fewest violations.
    """
    values = [float(v) for v in getattr(values, "values", values)]
    if len(values) < 3:
        raise ValueError("need at least three points")
    first_min = int(np.argmin(values))
    order = [first_min] + [m for m in range(len(values)) if m != first_min]
    best = None
    for m in order:
        bad = _violations(values, m, tol)
        if not bad:
            return TroughReport(True, m, [])
        if best is None or len(bad) < len(best[1]):
            best = (m, bad)
    return TroughReport(False, None, best[1])
