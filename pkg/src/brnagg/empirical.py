"""Analysis of elicited predictions from the two-box belief-updating task.

A *case* fixes the red-ball share of the left and right box and the chance
``mu`` that the left box is drawn. Subjects report, for each ball colour, the
probability (integer percent) that the ball came from the left box. This
module classifies those reports, estimates each subject's consideration
degree, and scores aggregators on structures built by pairing two cases
that share ``mu``.
"""
from __future__ import annotations

import csv
import enum
import io
import math
import os
from collections import defaultdict
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Iterable, Mapping

import numpy as np

from .aggregators import AggregatorSpec, Kind, aggregate_array
from .belief import Signal, SignalChannel, TwoSignalStructure, brn_from_bayes, inverse_logit, logit
from .errors import (
    DatasetError,
    ExcludedCaseError,
    InsufficientDataError,
    MuMismatchError,
)

__all__ = [
    "HEADER",
    "Case",
    "PredictionRecord",
    "Label",
    "Classification",
    "Benchmarks",
    "LambdaEstimate",
    "Bucket",
    "EmpiricalLoss",
    "load_dataset",
    "write_dataset",
    "benchmarks",
    "classify",
    "classification_table",
    "ols_through_origin",
    "fit_lambda",
    "estimate_lambda",
    "estimate_lambdas",
    "combine_cases",
    "empirical_loss",
    "subsample_key",
    "substitute_bayes",
    "synth_generate",
    "case_pool",
    "evaluate",
]

HEADER = ("subject_id", "round", "p_left_red", "p_right_red", "mu", "signal", "prediction_pct")


def _exact(x) -> Fraction:
    return Fraction(repr(float(x)))


@dataclass(frozen=True, order=True)
class Case:
    """Single-expert structure: red shares ``p_le``, ``p_ri`` and left-box chance ``mu``."""

    mu: float
    p_le: float
    p_ri: float

    def __post_init__(self):
        for name in ("mu", "p_le", "p_ri"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {v!r}")

    def likelihoods(self, signal: Signal) -> tuple[float, float]:
        if signal is Signal.R:
            return self.p_le, self.p_ri
        return 1.0 - self.p_le, 1.0 - self.p_ri


@dataclass(frozen=True)
class PredictionRecord:
    subject_id: str
    round: int
    case: Case
    signal: Signal
    prediction: int

    def __post_init__(self):
        if not 0 <= self.prediction <= 100:
            raise ValueError(f"prediction must be an integer percent in [0, 100], got {self.prediction!r}")
        if self.round < 1:
            raise ValueError(f"round must be >= 1, got {self.round!r}")


class Label(str, enum.Enum):
    PERFECT_BAYES = "PerfectBayes"
    PERFECT_BRN = "PerfectBRN"
    INSIDE = "Inside"
    OUTSIDE = "Outside"


@dataclass(frozen=True)
class Classification:
    label: Label
    prior_report: bool


@dataclass(frozen=True)
class Benchmarks:
    bayes: float
    pbrn: float


@dataclass(frozen=True)
class LambdaEstimate:
    subject_id: str
    lambda_hat: float
    beta_hat: float
    n_rounds_used: int


class Bucket(str, enum.Enum):
    OUT4 = "4 outside"
    IN1OUT3 = "1 inside 3 outside"
    IN2OUT2 = "2 inside 2 outside"
    IN3OUT1 = "3 inside 1 outside"
    IN4 = "4 inside"
    PERFECT_BRN4 = "4 perfect BRN"
    PERFECT_BAYES4 = "4 perfect Bayes"


_COUNT_BUCKETS = (Bucket.OUT4, Bucket.IN1OUT3, Bucket.IN2OUT2, Bucket.IN3OUT1, Bucket.IN4)


@dataclass(frozen=True)
class EmpiricalLoss:
    loss: float
    pairs_used: int
    pairs_excluded: int


# ---------------------------------------------------------------------------
# ingestion


def load_dataset(source) -> list[PredictionRecord]:
    """Read prediction records from a path or a text stream.

    Every row is validated; the first bad row raises :class:`DatasetError`
    naming its line number.
    """
    if isinstance(source, (str, os.PathLike)):
        with open(source, newline="", encoding="utf-8") as fh:
            return load_dataset(fh)
    if isinstance(source, (bytes, bytearray)):
        source = io.StringIO(source.decode("utf-8"))
    reader = csv.DictReader(source)
    missing = [c for c in HEADER if c not in (reader.fieldnames or ())]
    if missing:
        raise DatasetError(1, f"missing columns {missing}; expected header {','.join(HEADER)}")
    records = []
    for row in reader:
        line = reader.line_num
        try:
            pct_text = row["prediction_pct"].strip()
            if not pct_text.lstrip("+-").isdigit():
                raise DatasetError(line, f"prediction_pct must be an integer, got {pct_text!r}")
            pct = int(pct_text)
            if not 0 <= pct <= 100:
                raise DatasetError(line, f"prediction_pct {pct} outside 0-100")
            try:
                signal = Signal.parse(row["signal"])
            except ValueError as exc:
                raise DatasetError(line, str(exc)) from None
            case = Case(float(row["mu"]), float(row["p_left_red"]), float(row["p_right_red"]))
            records.append(
                PredictionRecord(row["subject_id"].strip(), int(row["round"]), case, signal, pct)
            )
        except DatasetError:
            raise
        except (TypeError, ValueError, AttributeError) as exc:
            raise DatasetError(line, str(exc)) from None
    return records


def write_dataset(records: Iterable[PredictionRecord], fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(HEADER)
    for r in records:
        w.writerow(
            [r.subject_id, r.round, repr(r.case.p_le), repr(r.case.p_ri), repr(r.case.mu), r.signal.value, r.prediction]
        )


# ---------------------------------------------------------------------------
# benchmarks and classification


def _exact_benchmarks(case: Case, signal: Signal) -> tuple[Fraction, Fraction]:
    mu = _exact(case.mu)
    p1, p0 = (_exact(v) for v in case.likelihoods(signal))
    bayes = mu * p1 / (mu * p1 + (1 - mu) * p0)
    pbrn = p1 / (p1 + p0)
    return bayes, pbrn


def benchmarks(case: Case, signal: Signal) -> Benchmarks:
    """Perfect-Bayes and perfect-neglect reports for ``case`` after ``signal``."""
    bayes, pbrn = _exact_benchmarks(case, Signal(signal))
    return Benchmarks(float(bayes), float(pbrn))


def _near(pct: int, target: Fraction) -> bool:
    # two-decimal rounding both down and up
    hundred = target * 100
    return pct in (math.floor(hundred), math.ceil(hundred))


def _label(case: Case, signal: Signal, pct: int) -> Label:
    bayes, pbrn = _exact_benchmarks(case, signal)
    if _near(pct, bayes):
        return Label.PERFECT_BAYES
    if _near(pct, pbrn):
        return Label.PERFECT_BRN
    x = Fraction(pct, 100)
    if min(bayes, pbrn) < x < max(bayes, pbrn):
        return Label.INSIDE
    return Label.OUTSIDE


def classify(record: PredictionRecord) -> Classification:
    """Label a report relative to the perfect-Bayes and perfect-neglect answers."""
    if _exact(record.case.mu) == Fraction(1, 2):
        raise ExcludedCaseError("cases with mu = 0.5 are excluded from classification")
    label = _label(record.case, record.signal, record.prediction)
    prior = Fraction(record.prediction) == _exact(record.case.mu) * 100
    return Classification(label, prior)


def classification_table(records: Iterable[PredictionRecord]) -> list[dict]:
    """Label proportions per ``(round, signal)``, per signal and overall.

    Rows with ``mu = 0.5`` are skipped. ``PriorReport`` is an extra row per
    group counting reports equal to the prior; it overlaps the four labels.
    """
    groups: dict[tuple, dict] = defaultdict(lambda: defaultdict(int))
    for r in records:
        if _exact(r.case.mu) == Fraction(1, 2):
            continue
        c = classify(r)
        for key in ((str(r.round), r.signal.value), ("all", r.signal.value), ("all", "all")):
            g = groups[key]
            g["_n"] += 1
            g[c.label.value] += 1
            g["PriorReport"] += c.prior_report

    def sort_key(k):
        rnd, sig = k
        return (rnd == "all", int(rnd) if rnd != "all" else 0, sig == "all", sig)

    rows = []
    for key in sorted(groups, key=sort_key):
        g = groups[key]
        n = g["_n"]
        for lab in [l.value for l in Label] + ["PriorReport"]:
            rows.append(
                {
                    "round": key[0],
                    "signal": key[1],
                    "label": lab,
                    "count": g[lab],
                    "n": n,
                    "proportion": g[lab] / n,
                }
            )
    return rows


# ---------------------------------------------------------------------------
# consideration-degree estimation


def ols_through_origin(z, d) -> float:
    """Least-squares slope of ``d`` on ``z`` without intercept."""
    z = np.asarray(z, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    szz = float(z @ z)
    if szz == 0.0:
        raise InsufficientDataError("regressor is identically zero")
    return float(z @ d) / szz


def fit_lambda(mu, bayes, x, subject_id="") -> LambdaEstimate:
    """Fit ``logit(bayes) - logit(x) = beta * logit(mu)``; ``lambda_hat = 1 - beta``.

    Inputs are parallel sequences of probabilities strictly inside (0, 1).
    """
    z = [logit(m) for m in mu]
    d = [logit(b) - logit(v) for b, v in zip(bayes, x)]
    if len(z) < 2:
        raise InsufficientDataError(f"subject {subject_id!r}: need at least 2 usable rounds, got {len(z)}")
    beta = ols_through_origin(z, d)
    return LambdaEstimate(subject_id, 1.0 - beta, beta, len(z))


def estimate_lambda(records: Iterable[PredictionRecord], clamp: float | None = None) -> LambdaEstimate:
    """Estimate one subject's consideration degree from their reports.

    Rounds with ``mu = 0.5`` carry no information and are dropped. Reports of
    0% or 100% have no log-odds; they are dropped, or pulled to
    ``[clamp, 1 - clamp]`` when ``clamp`` is given.
    """
    records = list(records)
    ids = {r.subject_id for r in records}
    if len(ids) > 1:
        raise ValueError(f"records from several subjects: {sorted(ids)}")
    sid = ids.pop() if ids else ""
    mu, bayes, x = [], [], []
    for r in records:
        if _exact(r.case.mu) == Fraction(1, 2):
            continue
        v = r.prediction / 100
        if v in (0.0, 1.0):
            if clamp is None:
                continue
            v = min(max(v, clamp), 1.0 - clamp)
        mu.append(r.case.mu)
        bayes.append(benchmarks(r.case, r.signal).bayes)
        x.append(v)
    if not records or not x:
        raise InsufficientDataError(f"subject {sid!r}: every round was filtered out")
    return fit_lambda(mu, bayes, x, sid)


def estimate_lambdas(records: Iterable[PredictionRecord], clamp: float | None = None):
    """Per-subject estimates, sorted by subject id.

    Returns ``(estimates, failures)`` where ``failures`` maps subject id to the
    reason no estimate could be made.
    """
    by_subject = defaultdict(list)
    for r in records:
        by_subject[r.subject_id].append(r)
    out, failures = [], {}
    for sid in sorted(by_subject):
        try:
            out.append(estimate_lambda(by_subject[sid], clamp))
        except InsufficientDataError as exc:
            failures[sid] = str(exc)
    return out, failures


# ---------------------------------------------------------------------------
# aggregation on paired cases


def combine_cases(z1: Case, z2: Case) -> TwoSignalStructure:
    """Two-expert structure where expert ``i`` sees a ball drawn under case ``zi``."""
    if _exact(z1.mu) != _exact(z2.mu):
        raise MuMismatchError(f"cannot combine cases with mu {z1.mu!r} and {z2.mu!r}")
    return TwoSignalStructure(
        z1.mu, SignalChannel(z1.p_le, z1.p_ri), SignalChannel(z2.p_le, z2.p_ri)
    )


def _structure_terms(z1: Case, z2: Case):
    """Per-profile ``(Pr[s], f*(s))`` in (r,r), (r,b), (b,r), (b,b) order."""
    mu = z1.mu
    out = []
    for s1 in (Signal.R, Signal.B):
        p1, q1 = z1.likelihoods(s1)
        for s2 in (Signal.R, Signal.B):
            p2, q2 = z2.likelihoods(s2)
            j1 = mu * p1 * p2
            j0 = (1.0 - mu) * q1 * q2
            out.append((j1 + j0, j1 / (j1 + j0)))
    return out


def _pair_losses(spec, terms, X1, X2):
    """Loss matrix over subject pairs; ``X`` rows are subjects, columns (r, b)."""
    total = np.zeros((X1.shape[0], X2.shape[0]))
    k = 0
    for s1 in range(2):
        for s2 in range(2):
            ps, fs = terms[k]
            k += 1
            f = aggregate_array(spec, X1[:, s1, None], X2[None, :, s2])
            total += ps * (f - fs) ** 2
    return total


def _pred_matrix(preds: Mapping[str, tuple[float, float]]):
    ids = sorted(preds)
    X = np.array([[float(preds[i][0]), float(preds[i][1])] for i in ids], dtype=np.float64).reshape(-1, 2)
    return ids, X


def empirical_loss(
    spec: AggregatorSpec,
    z1: Case,
    z2: Case,
    preds1: Mapping[str, tuple[float, float]],
    preds2: Mapping[str, tuple[float, float]],
) -> EmpiricalLoss:
    """Average relative loss over ordered pairs of distinct subjects.

    ``preds`` map subject id to that subject's ``(x(r), x(b))`` as
    probabilities. Pairs on which the aggregator is undefined are excluded
    and counted.
    """
    if _exact(z1.mu) != _exact(z2.mu):
        raise MuMismatchError(f"cannot combine cases with mu {z1.mu!r} and {z2.mu!r}")
    ids1, X1 = _pred_matrix(preds1)
    ids2, X2 = _pred_matrix(preds2)
    distinct = np.array([[a != b for b in ids2] for a in ids1], dtype=bool).reshape(len(ids1), len(ids2))
    n_pairs = int(distinct.sum())
    if n_pairs == 0:
        raise InsufficientDataError("no pair of distinct subjects to aggregate")
    L = _pair_losses(spec, _structure_terms(z1, z2), X1, X2)
    ok = distinct & ~np.isnan(L)
    used = int(ok.sum())
    loss = float(L[ok].mean()) if used else math.nan
    return EmpiricalLoss(loss, used, n_pairs - used)


def _pct(x: float) -> int:
    p = round(x * 100)
    if abs(x * 100 - p) > 1e-9:
        raise ValueError(f"report {x!r} is not on the integer-percent grid")
    return int(p)


def subsample_key(preds1, preds2, z1: Case, z2: Case) -> Bucket:
    """Bucket a subject pair by how many of its four reports fall in the BRN-Bayes range.

    Perfect-Bayes and perfect-BRN reports count as inside (they are the range
    endpoints). Four perfect-BRN or four perfect-Bayes reports get their own
    buckets ahead of the count-based ones.
    """
    labels = []
    for z, (xr, xb) in ((z1, preds1), (z2, preds2)):
        if _exact(z.mu) == Fraction(1, 2):
            raise ExcludedCaseError("cases with mu = 0.5 have no BRN-Bayes range")
        labels.append(_label(z, Signal.R, _pct(xr)))
        labels.append(_label(z, Signal.B, _pct(xb)))
    if all(l is Label.PERFECT_BRN for l in labels):
        return Bucket.PERFECT_BRN4
    if all(l is Label.PERFECT_BAYES for l in labels):
        return Bucket.PERFECT_BAYES4
    inside = sum(l is not Label.OUTSIDE for l in labels)
    return _COUNT_BUCKETS[inside]


def _round_half_up(q: Fraction) -> int:
    return math.floor(q + Fraction(1, 2))


def substitute_bayes(records: Iterable[PredictionRecord]) -> list[PredictionRecord]:
    """Replace each report with the Bayesian posterior rounded to the nearest percent."""
    out = []
    for r in records:
        bayes, _ = _exact_benchmarks(r.case, r.signal)
        out.append(replace(r, prediction=_round_half_up(bayes * 100)))
    return out


# ---------------------------------------------------------------------------
# synthetic subjects


def _two_decimal(q: Fraction) -> set[int]:
    return {math.floor(q * 100), math.ceil(q * 100)}


def case_pool() -> list[Case]:
    """Tenths-grid cases whose two benchmarks never share a two-decimal rounding.

    On the excluded cases a perfect-neglect report could also count as
    perfect Bayes, so a synthetic subject's type could not be recovered.
    ``mu = 0.5`` cases, where the benchmarks coincide, are kept.
    """
    pool = []
    tenths = [i / 10 for i in range(1, 10)]
    for mu in tenths:
        for p_le in tenths:
            for p_ri in tenths:
                case = Case(mu, p_le, p_ri)
                if mu != 0.5 and any(
                    _two_decimal(b) & _two_decimal(q)
                    for b, q in (_exact_benchmarks(case, s) for s in Signal)
                ):
                    continue
                pool.append(case)
    return pool


def synth_generate(
    n_subjects: int,
    lam: float,
    cases_per_subject: int = 30,
    noise_sd: float = 0.0,
    seed: int = 0,
) -> list[PredictionRecord]:
    """Simulate subjects who neglect the base rate to degree ``lam``.

    Each subject answers ``cases_per_subject`` distinct cases under both
    signals in shuffled round order. Reports are the degree-``lam`` posterior
    plus Gaussian noise on the log-odds scale, rounded to a percent and kept
    within 1-99.
    """
    rng = np.random.default_rng(seed)
    pool = case_pool()
    if cases_per_subject > len(pool):
        raise ValueError(f"at most {len(pool)} distinct cases per subject")
    width = max(3, len(str(n_subjects)))
    records = []
    for i in range(n_subjects):
        sid = f"s{i + 1:0{width}d}"
        picks = rng.choice(len(pool), size=cases_per_subject, replace=False)
        tasks = [(pool[int(j)], s) for j in picks for s in (Signal.R, Signal.B)]
        order = rng.permutation(len(tasks))
        for rnd, t in enumerate(order, start=1):
            case, signal = tasks[int(t)]
            bayes = benchmarks(case, signal).bayes
            z = logit(brn_from_bayes(bayes, case.mu, lam))
            if noise_sd > 0:
                z += rng.normal(0.0, noise_sd)
            pct = min(max(round(100 * inverse_logit(z)), 1), 99)
            records.append(PredictionRecord(sid, rnd, case, signal, int(pct)))
    return records


# ---------------------------------------------------------------------------
# full evaluation


def _case_predictions(records):
    """Map case -> subject -> (x(r), x(b)); subjects missing a signal are dropped."""
    raw = defaultdict(lambda: defaultdict(dict))
    for r in records:
        raw[r.case][r.subject_id][r.signal] = r.prediction / 100
    out = {}
    for case, subj in raw.items():
        full = {sid: (v[Signal.R], v[Signal.B]) for sid, v in subj.items() if len(v) == 2}
        if full:
            out[case] = full
    return out


def _response_tags(case: Case, pred) -> tuple[int, bool, bool]:
    """``(reports in the closed range, both perfect BRN, both perfect Bayes)``."""
    labels = [_label(case, s, _pct(x)) for s, x in zip((Signal.R, Signal.B), pred)]
    inside = sum(l is not Label.OUTSIDE for l in labels)
    return (
        inside,
        all(l is Label.PERFECT_BRN for l in labels),
        all(l is Label.PERFECT_BAYES for l in labels),
    )


_BUCKETS = tuple(Bucket)
_BRN4 = _BUCKETS.index(Bucket.PERFECT_BRN4)
_BAYES4 = _BUCKETS.index(Bucket.PERFECT_BAYES4)


def evaluate(
    records: Iterable[PredictionRecord],
    specs: list[AggregatorSpec],
    *,
    bayesian: bool = False,
    subsample: bool = False,
    common_exclusion: bool = True,
    per_structure: bool = True,
):
    """Score aggregators on every pair of cases that share ``mu``.

    Each unordered case pair (a case may pair with itself) is one structure;
    its loss is the mean over ordered pairs of distinct subjects, exactly as
    in :func:`empirical_loss`. With ``common_exclusion`` a subject pair that
    is undefined under any of ``specs`` is dropped for all of them, so every
    aggregator is averaged over the same pairs.

    Returns ``(table, summary, buckets)``: per-structure rows (empty unless
    ``per_structure``), per-aggregator summary rows, and per-aggregator,
    per-bucket rows when ``subsample`` is set. A bucket's loss on a structure
    is the mean over the subject pairs falling in it; the reported value is
    the mean of that over structures where the bucket is non-empty.
    """
    records = list(records)
    if not specs:
        raise ValueError("no aggregators to evaluate")
    if bayesian:
        records = substitute_bayes(records)
    by_case = _case_predictions(records)
    by_mu = defaultdict(list)
    for case in sorted(by_case):
        by_mu[case.mu].append(case)
    subject_code = {sid: k for k, sid in enumerate(sorted({r.subject_id for r in records}))}

    n_specs = len(specs)
    names = [str(s) for s in specs]
    table = []
    loss_sum = np.zeros(n_specs)
    loss_max = np.full(n_specs, -np.inf)
    n_struct = np.zeros(n_specs, dtype=np.int64)
    used_tot = np.zeros(n_specs, dtype=np.int64)
    excl_tot = np.zeros(n_specs, dtype=np.int64)
    b_sum = np.zeros((n_specs, len(_BUCKETS)))
    b_cnt = np.zeros((n_specs, len(_BUCKETS)), dtype=np.int64)

    for mu in sorted(by_mu):
        cases = by_mu[mu]
        nc = len(cases)
        ids = [sorted(by_case[c]) for c in cases]
        sizes = np.array([len(v) for v in ids])
        offsets = np.concatenate(([0], np.cumsum(sizes)))
        X = np.array([by_case[c][sid] for c, v in zip(cases, ids) for sid in v], dtype=np.float64)
        subj = np.array([subject_code[sid] for v in ids for sid in v])
        case_of = np.repeat(np.arange(nc), sizes)
        # lik[c, s, w]: chance of signal s under case c given omega = 1 - w
        lik = np.array([[c.likelihoods(s) for s in Signal] for c in cases], dtype=np.float64)
        tagged = subsample and _exact(mu) != Fraction(1, 2)
        if tagged:
            tags = [_response_tags(c, by_case[c][sid]) for c, v in zip(cases, ids) for sid in v]
            n_in = np.array([t[0] for t in tags])
            is_brn = np.array([t[1] for t in tags])
            is_bay = np.array([t[2] for t in tags])

        for a in range(nc):
            rows = slice(offsets[a], offsets[a + 1])
            cols = slice(offsets[a], offsets[nc])
            seg = offsets[a:nc] - offsets[a]
            Xa, Xc = X[rows], X[cols]
            lc = lik[case_of[cols]]
            distinct = subj[rows, None] != subj[None, cols]
            terms = []
            for s1 in range(2):
                for s2 in range(2):
                    j1 = mu * lik[a, s1, 0] * lc[:, s2, 0]
                    j0 = (1.0 - mu) * lik[a, s1, 1] * lc[:, s2, 1]
                    terms.append((s1, s2, j1 + j0, j1 / (j1 + j0)))
            losses = []
            for spec in specs:
                L = np.zeros(distinct.shape)
                for s1, s2, ps, fs in terms:
                    f = aggregate_array(spec, Xa[:, s1, None], Xc[None, :, s2])
                    L += ps * (f - fs) ** 2
                losses.append(L)
            undefined = [np.isnan(L) for L in losses]
            if common_exclusion:
                union = np.logical_or.reduce(undefined)
                masks = [distinct & ~union] * n_specs
            else:
                masks = [distinct & ~u for u in undefined]
            n_pairs = np.add.reduceat(distinct.sum(axis=0), seg)
            live = n_pairs > 0
            if tagged:
                code = n_in[rows, None] + n_in[None, cols]
                code = np.where(is_brn[rows, None] & is_brn[None, cols], _BRN4, code)
                code = np.where(is_bay[rows, None] & is_bay[None, cols], _BAYES4, code)

            for k, (L, ok) in enumerate(zip(losses, masks)):
                Lz = np.where(ok, L, 0.0)
                used = np.add.reduceat(ok.sum(axis=0), seg)
                total = np.add.reduceat(Lz.sum(axis=0), seg)
                with np.errstate(invalid="ignore", divide="ignore"):
                    mean = np.where(used > 0, total / np.maximum(used, 1), np.nan)
                scored = live & (used > 0)
                loss_sum[k] += mean[scored].sum()
                if scored.any():
                    loss_max[k] = max(loss_max[k], mean[scored].max())
                n_struct[k] += int(scored.sum())
                used_tot[k] += int(used[live].sum())
                excl_tot[k] += int((n_pairs - used)[live].sum())
                if tagged:
                    for bk in range(len(_BUCKETS)):
                        sel = ok & (code == bk)
                        cnt = np.add.reduceat(sel.sum(axis=0), seg)
                        if not cnt.any():
                            continue
                        tot = np.add.reduceat(np.where(sel, L, 0.0).sum(axis=0), seg)
                        hit = cnt > 0
                        b_sum[k, bk] += (tot[hit] / cnt[hit]).sum()
                        b_cnt[k, bk] += int(hit.sum())
                if per_structure:
                    k_name = names[k]
                    for j in np.flatnonzero(live):
                        z1, z2 = cases[a], cases[a + j]
                        table.append(
                            {
                                "aggregator": k_name,
                                "mu": z1.mu,
                                "p_le_1": z1.p_le,
                                "p_ri_1": z1.p_ri,
                                "p_le_2": z2.p_le,
                                "p_ri_2": z2.p_ri,
                                "loss": float(mean[j]),
                                "pairs_used": int(used[j]),
                                "pairs_excluded": int(n_pairs[j] - used[j]),
                            }
                        )

    if per_structure:
        # case-pair order first, aggregator order within a case pair
        rank = {n: i for i, n in enumerate(names)}
        table.sort(key=lambda t: (t["mu"], t["p_le_1"], t["p_ri_1"], t["p_le_2"], t["p_ri_2"], rank[t["aggregator"]]))
    summary = [
        {
            "aggregator": names[k],
            "avg_loss": float(loss_sum[k] / n_struct[k]) if n_struct[k] else math.nan,
            "max_loss": float(loss_max[k]) if n_struct[k] else math.nan,
            "structures": int(n_struct[k]),
            "pairs_used": int(used_tot[k]),
            "pairs_excluded": int(excl_tot[k]),
        }
        for k in range(n_specs)
    ]
    buckets = []
    if subsample:
        for k in range(n_specs):
            for bk, bucket in enumerate(_BUCKETS):
                c = int(b_cnt[k, bk])
                buckets.append(
                    {
                        "aggregator": names[k],
                        "bucket": bucket.value,
                        "avg_loss": float(b_sum[k, bk] / c) if c else math.nan,
                        "structures": c,
                    }
                )
    return table, summary, buckets
