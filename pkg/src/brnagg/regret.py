"""Relative loss and worst-case regret over two-signal structures.

The regret of an aggregator at consideration degree ``lam`` is the largest
relative loss it suffers against the omniscient aggregator over all
conditionally independent structures. Binary signals per expert suffice, so
the search runs over the 5-cube ``(mu, alpha1, beta1, alpha2, beta2)``: a
coarse grid scan picks the most promising cells, and a Nelder-Mead simplex
refines each of them.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from . import _backend
from .aggregators import AggregatorSpec, Kind, aggregate, format_spec
from .belief import (
    PROFILES,
    Signal,
    TwoSignalStructure,
    brn_posterior,
    omniscient_from_structure,
    profile_probability,
)
from .bounds import lower_bound

__all__ = [
    "TENTHS",
    "OptimizerConfig",
    "JointStructure",
    "SearchResult",
    "RegretCurve",
    "relative_loss",
    "relative_loss_general",
    "worst_case_regret",
    "regret_curve",
    "overall_regret_upper",
    "overall_from_curve",
]

TENTHS = tuple(round(0.1 * i, 1) for i in range(11))


def _default_threads():
    try:
        return max(1, int(os.environ.get("BRNAGG_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class OptimizerConfig:
    """Settings of the global search.

    ``threads`` only changes wall time; results do not depend on it.
    """

    grid_step: float = 0.05
    restarts: int = 32
    local_iters: int = 200
    boundary_eps: float = 1e-9
    seed: int = 0
    random_starts: int = 8
    lambda_grid: tuple[float, ...] = TENTHS
    threads: int = field(default_factory=_default_threads, compare=False)

    def __post_init__(self):
        if not 0.0 < self.grid_step <= 0.25:
            raise ValueError(f"grid_step must lie in (0, 0.25], got {self.grid_step!r}")
        if not 0.0 < self.boundary_eps <= 1e-3:
            raise ValueError(f"boundary_eps must lie in (0, 1e-3], got {self.boundary_eps!r}")
        if self.restarts < 0 or self.random_starts < 0 or self.local_iters < 0:
            raise ValueError("restarts, random_starts and local_iters must be non-negative")
        if self.threads < 1:
            raise ValueError("threads must be at least 1")
        object.__setattr__(self, "lambda_grid", tuple(float(x) for x in self.lambda_grid))

    def grid(self) -> np.ndarray:
        """Scan points ``k / n`` on ``[0, 1]``, endpoints pulled in to the clamp."""
        n = int(round(1.0 / self.grid_step))
        if abs(n * self.grid_step - 1.0) > 1e-9:
            n = int(np.ceil(1.0 / self.grid_step))
        pts = np.arange(n + 1) / n
        return np.clip(pts, self.boundary_eps, 1.0 - self.boundary_eps)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambda_grid"] = list(self.lambda_grid)
        del d["threads"]
        return d


class SearchResult(NamedTuple):
    regret: float
    witness: TwoSignalStructure
    skipped: int


@dataclass
class RegretCurve:
    spec: AggregatorSpec
    lambdas: list[float]
    values: list[float]
    witnesses: list[TwoSignalStructure]
    skipped: list[int]

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.lambdas, self.lambdas[1:])):
            raise ValueError("lambda grid must be strictly increasing")

    def __len__(self):
        return len(self.lambdas)


# ---------------------------------------------------------------------------
# relative loss on a single structure


def relative_loss(spec: AggregatorSpec, theta: TwoSignalStructure, lam: float) -> float:
    """Expected squared gap between ``spec`` and the omniscient posterior.

    Profiles with zero probability are skipped; an undefined aggregation on a
    positive-probability profile propagates :class:`UndefinedAggregation`.
    """
    total = 0.0
    for s in PROFILES:
        p = profile_probability(theta, s)
        if p == 0.0:
            continue
        x1 = brn_posterior(theta.mu, *theta.channel_1.likelihoods(s[0]), lam)
        x2 = brn_posterior(theta.mu, *theta.channel_2.likelihoods(s[1]), lam)
        diff = aggregate(spec, x1, x2) - omniscient_from_structure(theta, s)
        total += p * diff * diff
    return total


_SIG_INDEX = {Signal.R: 0, Signal.B: 1, "r": 0, "b": 1}


@dataclass(frozen=True)
class JointStructure:
    """Arbitrary joint law of ``(omega, s1, s2)``; ``prob[w, i, j]`` with 0 = r, 1 = b."""

    prob: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.prob, dtype=np.float64)
        if p.shape != (2, 2, 2):
            raise ValueError(f"joint table must have shape (2, 2, 2), got {p.shape}")
        if (p < 0).any() or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError("joint table must be non-negative and sum to 1")
        object.__setattr__(self, "prob", p)

    @classmethod
    def parity(cls) -> "JointStructure":
        """Uniform independent signals; ``omega = 1`` exactly when they differ."""
        p = np.zeros((2, 2, 2))
        p[0, 0, 0] = p[0, 1, 1] = 0.25
        p[1, 0, 1] = p[1, 1, 0] = 0.25
        return cls(p)

    def profile_probability(self, s) -> float:
        i, j = _SIG_INDEX[s[0]], _SIG_INDEX[s[1]]
        return float(self.prob[0, i, j] + self.prob[1, i, j])

    def posterior(self, s) -> float:
        i, j = _SIG_INDEX[s[0]], _SIG_INDEX[s[1]]
        return float(self.prob[1, i, j] / (self.prob[0, i, j] + self.prob[1, i, j]))


def relative_loss_general(g: float | Callable, joint: JointStructure) -> float:
    """Relative loss of forecast ``g`` on a general joint structure.

    ``g`` is either a constant forecast or a callable mapping a signal profile
    to a forecast. Computed from the definition, summing over ``omega`` too.
    """
    forecast = g if callable(g) else (lambda s: g)
    total = 0.0
    for s in PROFILES:
        i, j = _SIG_INDEX[s[0]], _SIG_INDEX[s[1]]
        if joint.prob[:, i, j].sum() == 0.0:
            continue
        gs = forecast(s)
        fs = joint.posterior(s)
        for w in (0, 1):
            total += joint.prob[w, i, j] * ((gs - w) ** 2 - (fs - w) ** 2)
    return float(total)


# ---------------------------------------------------------------------------
# global search


def _kernel_args(spec: AggregatorSpec):
    if spec.kind is Kind.SIMPLE_AVERAGE:
        return 0, 0.0
    return 1, float(spec.effective_lambda_hat)


def _decode(flat, grid):
    n = grid.shape[0]
    n2 = n * n
    i0, rem = divmod(int(flat), n2 * n2)
    c1, c2 = divmod(rem, n2)
    a1, b1 = divmod(c1, n)
    a2, b2 = divmod(c2, n)
    return [float(grid[i0]), float(grid[a1]), float(grid[b1]), float(grid[a2]), float(grid[b2])]


def _scan(kern, kind, lam_hat, lam, grid, top_k, pool):
    n = grid.shape[0]
    if pool is None:
        return kern.scan_block(kind, lam_hat, lam, grid, 0, n, top_k)
    cuts = np.linspace(0, n, min(n, 4 * pool._max_workers) + 1).astype(int)
    parts = list(
        pool.map(
            lambda lohi: kern.scan_block(kind, lam_hat, lam, grid, lohi[0], lohi[1], top_k),
            zip(cuts[:-1], cuts[1:]),
        )
    )
    vals = np.concatenate([p[0] for p in parts])
    idx = np.concatenate([p[1] for p in parts])
    order = np.lexsort((idx, -vals))[:top_k]
    return vals[order], idx[order], sum(p[2] for p in parts)


def worst_case_regret(
    spec: AggregatorSpec,
    lam: float,
    cfg: OptimizerConfig | None = None,
    *,
    backend: str | None = None,
) -> SearchResult:
    """Largest relative loss of ``spec`` found over two-signal structures.

    The returned value is attained by the returned witness, so it is a
    certified lower estimate of the true supremum.
    """
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam!r}")
    cfg = cfg or OptimizerConfig()
    kern = _backend.kernels if backend is None else _backend.load(backend)
    kind, lam_hat = _kernel_args(spec)
    grid = cfg.grid()
    eps = cfg.boundary_eps

    pool = ThreadPoolExecutor(cfg.threads) if cfg.threads > 1 else None
    try:
        vals, idx, skipped = _scan(kern, kind, lam_hat, lam, grid, max(cfg.restarts, 1), pool)
        starts = [_decode(i, grid) for i in idx[: cfg.restarts]]
        if cfg.random_starts:
            rng = np.random.default_rng(cfg.seed)
            starts += rng.uniform(eps, 1.0 - eps, size=(cfg.random_starts, 5)).tolist()
        step = 0.5 * cfg.grid_step
        refine = lambda x0: kern.nelder_mead(kind, lam_hat, lam, x0, step, cfg.local_iters, eps)
        results = list(pool.map(refine, starts)) if pool else [refine(x) for x in starts]
    finally:
        if pool is not None:
            pool.shutdown()

    candidates = [(float(v), list(x)) for v, x in results]
    if len(idx):
        candidates.append((float(vals[0]), _decode(idx[0], grid)))
    if not candidates:
        raise ArithmeticError(f"every candidate structure was undefined for {format_spec(spec)}")
    # highest value wins; ties go to the lexicographically smallest structure
    best_v, best_x = min(candidates, key=lambda c: (-c[0], c[1]))
    return SearchResult(best_v, TwoSignalStructure.from_tuple(best_x), int(skipped))


def regret_curve(
    spec: AggregatorSpec,
    cfg: OptimizerConfig | None = None,
    *,
    backend: str | None = None,
) -> RegretCurve:
    cfg = cfg or OptimizerConfig()
    if not cfg.lambda_grid:
        raise ValueError("lambda grid is empty")
    values, witnesses, skipped = [], [], []
    for lam in cfg.lambda_grid:
        r = worst_case_regret(spec, lam, cfg, backend=backend)
        values.append(r.regret)
        witnesses.append(r.witness)
        skipped.append(r.skipped)
    return RegretCurve(spec, list(cfg.lambda_grid), values, witnesses, skipped)


def overall_from_curve(curve: RegretCurve, eps: float = 1e-6):
    """Return ``(max gap to the lower bound, lambda at the max, per-point gaps)``."""
    gaps = [v - lower_bound(lam, eps)[0] for lam, v in zip(curve.lambdas, curve.values)]
    k = int(np.argmax(gaps))
    return gaps[k], curve.lambdas[k], gaps


def overall_regret_upper(
    spec: AggregatorSpec,
    cfg: OptimizerConfig | None = None,
    *,
    eps: float = 1e-6,
    backend: str | None = None,
) -> float:
    """Upper proxy for the overall regret: worst gap to the lower bound over the grid."""
    return overall_from_curve(regret_curve(spec, cfg, backend=backend), eps)[0]
