"""Two-expert aggregation rules and their text format.

``Balancing(lam_hat)`` applies the two-report Bayesian combination formula
with an assumed consideration degree ``lam_hat`` and the mean report standing
in for the unknown prior. ``lam_hat = 1`` is the classical average-prior rule.
"""
from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass

import numpy as np

from .errors import SpecParseError, SpecRangeError, UndefinedAggregation

__all__ = [
    "Kind",
    "AggregatorSpec",
    "SIMPLE_AVERAGE",
    "AVERAGE_PRIOR",
    "balancing",
    "aggregate",
    "aggregate_array",
    "parse_spec",
    "format_spec",
]


class Kind(enum.Enum):
    SIMPLE_AVERAGE = "simple-average"
    AVERAGE_PRIOR = "average-prior"
    BALANCING = "balance"


@dataclass(frozen=True)
class AggregatorSpec:
    kind: Kind
    lambda_hat: float | None = None

    def __post_init__(self):
        if self.kind is Kind.BALANCING:
            if self.lambda_hat is None:
                raise SpecRangeError("balancing aggregator needs lambda_hat")
            if not 0.0 <= self.lambda_hat <= 1.0:
                raise SpecRangeError(f"lambda_hat must lie in [0, 1], got {self.lambda_hat!r}")
        elif self.lambda_hat is not None:
            raise SpecRangeError(f"{self.kind.value} takes no lambda_hat")

    @property
    def effective_lambda_hat(self) -> float | None:
        """Degree used in the balancing formula; ``None`` for the simple average."""
        if self.kind is Kind.SIMPLE_AVERAGE:
            return None
        if self.kind is Kind.AVERAGE_PRIOR:
            return 1.0
        return self.lambda_hat

    def __str__(self):
        return format_spec(self)

    def __call__(self, x1, x2):
        return aggregate(self, x1, x2)


SIMPLE_AVERAGE = AggregatorSpec(Kind.SIMPLE_AVERAGE)
AVERAGE_PRIOR = AggregatorSpec(Kind.AVERAGE_PRIOR)


def balancing(lambda_hat: float) -> AggregatorSpec:
    return AggregatorSpec(Kind.BALANCING, float(lambda_hat))


def _pow(base: float, e: float) -> float:
    try:
        return base**e
    except OverflowError:
        # tiny base with a negative exponent
        return math.inf


def _balance(lam_hat: float, x1: float, x2: float) -> float:
    m = 0.5 * (x1 + x2)
    if m == 0.0:
        # both reports are 0; the formula tends to 0 along the diagonal
        return 0.0
    if m == 1.0:
        return 1.0
    e = 2.0 * lam_hat - 1.0
    a = _pow(1.0 - m, e) * (x1 * x2)
    b = _pow(m, e) * ((1.0 - x1) * (1.0 - x2))
    if a + b == 0.0:
        raise UndefinedAggregation(x1, x2, "one report is 0 and the other is 1")
    return a / (a + b)


def aggregate(spec: AggregatorSpec, x1: float, x2: float) -> float:
    for x in (x1, x2):
        if not 0.0 <= x <= 1.0:
            raise ValueError(f"predictions must lie in [0, 1], got {x!r}")
    if spec.kind is Kind.SIMPLE_AVERAGE:
        return 0.5 * (x1 + x2)
    return _balance(spec.effective_lambda_hat, x1, x2)


def aggregate_array(spec: AggregatorSpec, x1, x2) -> np.ndarray:
    """Broadcasting version of :func:`aggregate`; undefined pairs come back as NaN."""
    x1 = np.asarray(x1, dtype=np.float64)
    x2 = np.asarray(x2, dtype=np.float64)
    if spec.kind is Kind.SIMPLE_AVERAGE:
        return 0.5 * (x1 + x2)
    e = 2.0 * spec.effective_lambda_hat - 1.0
    m = 0.5 * (x1 + x2)
    with np.errstate(all="ignore"):
        a = (1.0 - m) ** e * (x1 * x2)
        b = m**e * ((1.0 - x1) * (1.0 - x2))
        out = a / (a + b)
    out = np.where(m == 0.0, 0.0, np.where(m == 1.0, 1.0, out))
    return out


_SPEC_RE = re.compile(r"balance:(?P<num>[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?)$")


def parse_spec(text: str) -> AggregatorSpec:
    """Parse ``simple-average``, ``average-prior`` or ``balance:<lambda_hat>``."""
    raw = text
    text = text.strip()
    if text == Kind.SIMPLE_AVERAGE.value:
        return SIMPLE_AVERAGE
    if text == Kind.AVERAGE_PRIOR.value:
        return AVERAGE_PRIOR
    if not text.startswith("balance"):
        raise SpecParseError(raw, 0, "expected 'simple-average', 'average-prior' or 'balance:<x>'")
    if not text.startswith("balance:"):
        raise SpecParseError(raw, len("balance"), "expected ':' after 'balance'")
    m = _SPEC_RE.match(text)
    if m is None:
        raise SpecParseError(raw, len("balance:"), "expected a decimal number")
    value = float(m.group("num"))
    if not 0.0 <= value <= 1.0:
        raise SpecRangeError(f"lambda_hat must lie in [0, 1], got {value!r}")
    return balancing(value)


def format_spec(spec: AggregatorSpec) -> str:
    if spec.kind is Kind.BALANCING:
        num = f"{spec.lambda_hat:.2f}"
        if float(num) != spec.lambda_hat:
            num = repr(spec.lambda_hat)
        return f"balance:{num}"
    return spec.kind.value
