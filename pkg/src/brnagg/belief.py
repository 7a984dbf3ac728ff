"""Belief primitives for binary-state forecasting.

Experts observe a binary signal about a binary state ``omega``. A perfect
Bayesian reports ``Pr[omega = 1 | s]``; an expert with base rate neglect only
weights the prior ``mu`` to degree ``lam`` (``lam = 1`` is Bayesian, ``lam = 0``
ignores the prior entirely). The two are linked by a shift in log-odds::

    logit(brn) = logit(bayes) - (1 - lam) * logit(mu)

All functions are pure and operate on Python floats.
"""
from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass

from .errors import DomainError, UndefinedAggregation

__all__ = [
    "Signal",
    "SignalChannel",
    "TwoSignalStructure",
    "PROFILES",
    "logit",
    "inverse_logit",
    "bayes_posterior",
    "brn_posterior",
    "brn_from_bayes",
    "bayes_from_brn",
    "profile_probability",
    "omniscient_from_structure",
    "omniscient_from_predictions",
]


class Signal(str, enum.Enum):
    R = "r"
    B = "b"

    @classmethod
    def parse(cls, token: str) -> "Signal":
        try:
            return cls(token.strip().lower())
        except ValueError:
            raise ValueError(f"unknown signal token {token!r} (expected 'r' or 'b')") from None


PROFILES = tuple(itertools.product((Signal.R, Signal.B), repeat=2))


def _check_unit(name, value):
    if not 0.0 <= value <= 1.0 or math.isnan(value):
        raise DomainError(f"{name} must lie in [0, 1], got {value!r}")


def _check_open_unit(name, value):
    if not 0.0 < value < 1.0:
        raise DomainError(f"{name} must lie in (0, 1), got {value!r}")


@dataclass(frozen=True)
class SignalChannel:
    """One expert's binary signal: ``alpha = Pr[r | omega=1]``, ``beta = Pr[r | omega=0]``."""

    alpha: float
    beta: float

    def __post_init__(self):
        _check_unit("alpha", self.alpha)
        _check_unit("beta", self.beta)

    def likelihoods(self, signal: Signal) -> tuple[float, float]:
        """Return ``(Pr[signal | omega=1], Pr[signal | omega=0])``."""
        if signal is Signal.R:
            return self.alpha, self.beta
        return 1.0 - self.alpha, 1.0 - self.beta


@dataclass(frozen=True)
class TwoSignalStructure:
    """Conditionally independent two-expert structure ``(mu, alpha1, beta1, alpha2, beta2)``."""

    mu: float
    channel_1: SignalChannel
    channel_2: SignalChannel

    def __post_init__(self):
        _check_open_unit("mu", self.mu)

    @classmethod
    def from_tuple(cls, values) -> "TwoSignalStructure":
        mu, a1, b1, a2, b2 = (float(v) for v in values)
        return cls(mu, SignalChannel(a1, b1), SignalChannel(a2, b2))

    def as_tuple(self) -> tuple[float, float, float, float, float]:
        return (
            self.mu,
            self.channel_1.alpha,
            self.channel_1.beta,
            self.channel_2.alpha,
            self.channel_2.beta,
        )

    def channel(self, expert: int) -> SignalChannel:
        return self.channel_1 if expert == 1 else self.channel_2


def logit(p: float) -> float:
    if not 0.0 < p < 1.0:
        raise DomainError(f"logit is undefined at p={p!r}")
    return math.log(p / (1.0 - p))


def inverse_logit(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def bayes_posterior(mu: float, p1: float, p0: float) -> float:
    """Posterior of ``omega = 1`` after a signal with likelihoods ``p1``, ``p0``."""
    return brn_posterior(mu, p1, p0, 1.0)


def brn_posterior(mu: float, p1: float, p0: float, lam: float) -> float:
    """Posterior formed by weighting the prior to degree ``lam``.

    ``lam = 1`` takes the same arithmetic path as :func:`bayes_posterior`.
    """
    _check_open_unit("mu", mu)
    _check_unit("lam", lam)
    if lam == 1.0:
        w1, w0 = mu, 1.0 - mu
    elif lam == 0.0:
        w1 = w0 = 1.0
    else:
        w1, w0 = mu**lam, (1.0 - mu) ** lam
    num = w1 * p1
    den = num + w0 * p0
    if den == 0.0:
        raise DomainError(f"signal has zero probability (p1={p1!r}, p0={p0!r})")
    return num / den


def brn_from_bayes(q: float, mu: float, lam: float) -> float:
    """Map a Bayesian posterior ``q`` to the report of an expert with degree ``lam``."""
    _check_open_unit("q", q)
    _check_open_unit("mu", mu)
    k = 1.0 - lam
    a = (1.0 - mu) ** k * q
    return a / (a + mu**k * (1.0 - q))


def bayes_from_brn(x: float, mu: float, lam: float) -> float:
    """Inverse of :func:`brn_from_bayes`: recover the Bayesian posterior from a report."""
    _check_open_unit("x", x)
    _check_open_unit("mu", mu)
    k = 1.0 - lam
    a = mu**k * x
    return a / (a + (1.0 - mu) ** k * (1.0 - x))


def _joint_terms(theta: TwoSignalStructure, s) -> tuple[float, float]:
    s1, s2 = s
    p1_1, p1_0 = theta.channel_1.likelihoods(Signal(s1))
    p2_1, p2_0 = theta.channel_2.likelihoods(Signal(s2))
    return theta.mu * p1_1 * p2_1, (1.0 - theta.mu) * p1_0 * p2_0


def profile_probability(theta: TwoSignalStructure, s) -> float:
    """``Pr[S1 = s1, S2 = s2]`` under conditional independence."""
    j1, j0 = _joint_terms(theta, s)
    return j1 + j0


def omniscient_from_structure(theta: TwoSignalStructure, s) -> float:
    """Posterior ``Pr[omega = 1 | s1, s2]`` computed from the structure itself."""
    j1, j0 = _joint_terms(theta, s)
    if j1 + j0 == 0.0:
        raise DomainError(f"profile {tuple(s)} has zero probability")
    return j1 / (j1 + j0)


def omniscient_from_predictions(x1: float, x2: float, mu: float, lam: float) -> float:
    """Posterior on both signals recovered from the two experts' reports.

    Needs only the reports, the prior and the shared degree ``lam``; the
    signal channels never enter.
    """
    _check_unit("x1", x1)
    _check_unit("x2", x2)
    _check_open_unit("mu", mu)
    e = 2.0 * lam - 1.0
    a = (1.0 - mu) ** e * x1 * x2
    b = mu**e * (1.0 - x1) * (1.0 - x2)
    if a + b == 0.0:
        raise UndefinedAggregation(x1, x2, "both x1*x2 and (1-x1)*(1-x2) vanish")
    return a / (a + b)
