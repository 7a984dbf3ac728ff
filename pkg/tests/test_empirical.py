import io
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from brnagg.aggregators import AVERAGE_PRIOR, SIMPLE_AVERAGE, aggregate, balancing
from brnagg.belief import Signal, bayes_posterior, brn_from_bayes
from brnagg.empirical import (
    Bucket,
    Case,
    Label,
    PredictionRecord,
    benchmarks,
    case_pool,
    classification_table,
    classify,
    combine_cases,
    empirical_loss,
    estimate_lambda,
    estimate_lambdas,
    evaluate,
    fit_lambda,
    load_dataset,
    ols_through_origin,
    subsample_key,
    substitute_bayes,
    synth_generate,
    write_dataset,
)
from brnagg.errors import (
    DatasetError,
    ExcludedCaseError,
    InsufficientDataError,
    MuMismatchError,
)
from brnagg.regret import relative_loss

SAMPLE = Case(mu=0.2, p_le=0.4, p_ri=0.3)
HEADER = "subject_id,round,p_left_red,p_right_red,mu,signal,prediction_pct\n"


def rec(pred, case=SAMPLE, signal=Signal.R, sid="a", rnd=1):
    return PredictionRecord(sid, rnd, case, signal, pred)


class TestLoad:
    def test_valid_rows(self):
        text = HEADER + "a,1,0.4,0.3,0.2,r,25\na,2,0.4,0.3,0.2,b,40\nb,1,0.6,0.5,0.5,R,50\n"
        records = load_dataset(io.StringIO(text))
        assert len(records) == 3
        assert records[0] == rec(25)
        assert records[2].signal is Signal.R
        assert records[2].case.mu == 0.5

    def test_prediction_out_of_range_names_line(self):
        text = HEADER + "a,1,0.4,0.3,0.2,r,25\na,2,0.4,0.3,0.2,r,101\n"
        with pytest.raises(DatasetError) as info:
            load_dataset(io.StringIO(text))
        assert info.value.line == 3
        assert "101" in str(info.value)

    @pytest.mark.parametrize(
        "row",
        ["a,1,0.4,0.3,0.2,g,25", "a,1,0.4,0.3,0.2,r,2.5", "a,1,0.4,0.3,1.2,r,25", "a,x,0.4,0.3,0.2,r,25"],
    )
    def test_bad_rows(self, row):
        with pytest.raises(DatasetError) as info:
            load_dataset(io.StringIO(HEADER + row + "\n"))
        assert info.value.line == 2

    def test_missing_column(self):
        with pytest.raises(DatasetError):
            load_dataset(io.StringIO("subject_id,round\na,1\n"))

    def test_round_trip_and_path(self, tmp_path):
        records = synth_generate(3, 0.4, cases_per_subject=5, noise_sd=0.3, seed=2)
        buf = io.StringIO()
        write_dataset(records, buf)
        path = tmp_path / "d.csv"
        path.write_text(buf.getvalue())
        assert load_dataset(path) == records
        assert load_dataset(buf.getvalue().encode()) == records

    def test_record_validation(self):
        with pytest.raises(ValueError):
            rec(101)
        with pytest.raises(ValueError):
            Case(mu=0.0, p_le=0.4, p_ri=0.3)


class TestBenchmarks:
    def test_sample_case(self):
        b = benchmarks(SAMPLE, Signal.R)
        assert b.bayes == pytest.approx(0.25, abs=1e-15)
        assert b.pbrn == pytest.approx(4 / 7, abs=1e-15)

    def test_even_prior_makes_them_equal(self):
        case = Case(mu=0.5, p_le=0.4, p_ri=0.3)
        for s in Signal:
            b = benchmarks(case, s)
            assert b.bayes == b.pbrn

    def test_blue_uses_complements(self):
        for case in case_pool()[::37]:
            assert benchmarks(case, Signal.B).bayes == pytest.approx(
                bayes_posterior(case.mu, 1 - case.p_le, 1 - case.p_ri), abs=1e-15
            )


class TestClassify:
    @pytest.mark.parametrize(
        "pred, label, prior",
        [(25, Label.PERFECT_BAYES, False), (57, Label.PERFECT_BRN, False), (58, Label.PERFECT_BRN, False),
         (40, Label.INSIDE, False), (20, Label.OUTSIDE, True), (24, Label.OUTSIDE, False),
         (26, Label.INSIDE, False), (59, Label.OUTSIDE, False)],
    )
    def test_sample_case(self, pred, label, prior):
        c = classify(rec(pred))
        assert c.label is label
        assert c.prior_report is prior

    def test_even_prior_excluded(self):
        with pytest.raises(ExcludedCaseError):
            classify(rec(50, case=Case(0.5, 0.4, 0.3)))

    def test_two_decimal_rounding_both_ways(self):
        # 0.2*0.1/(0.2*0.1+0.8*0.3) = 1/13 = 0.0769...
        case = Case(mu=0.2, p_le=0.1, p_ri=0.3)
        assert classify(rec(7, case)).label is Label.PERFECT_BAYES
        assert classify(rec(8, case)).label is Label.PERFECT_BAYES
        assert classify(rec(9, case)).label is not Label.PERFECT_BAYES

    def test_every_report_gets_one_label(self):
        case = Case(mu=0.7, p_le=0.2, p_ri=0.6)
        for s in Signal:
            labels = [classify(rec(p, case, s)).label for p in range(101)]
            assert set(labels) <= set(Label)
            assert labels.count(Label.PERFECT_BAYES) in (1, 2)
            assert labels.count(Label.PERFECT_BRN) in (1, 2)

    def test_table_partitions(self):
        records = synth_generate(20, 0.5, noise_sd=0.6, seed=3)
        rows = classification_table(records)
        groups = {}
        for r in rows:
            if r["label"] != "PriorReport":
                groups.setdefault((r["round"], r["signal"]), []).append(r)
        for key, grp in groups.items():
            assert sum(r["count"] for r in grp) == grp[0]["n"]
            assert sum(r["proportion"] for r in grp) == pytest.approx(1.0)
        overall = [r for r in rows if r["round"] == "all" and r["signal"] == "all"]
        n_classified = sum(1 for r in records if r.case.mu != 0.5)
        assert overall[0]["n"] == n_classified


def tenths_cases_with_percent_bayes():
    out = []
    for case in case_pool():
        if case.mu == 0.5:
            continue
        b = Fraction(repr(case.mu)) * Fraction(repr(case.p_le))
        b /= b + (1 - Fraction(repr(case.mu))) * Fraction(repr(case.p_ri))
        if (b * 100).denominator == 1:
            out.append((case, int(b * 100)))
    return out


class TestEstimateLambda:
    def test_exact_bayes_gives_one(self):
        pairs = tenths_cases_with_percent_bayes()[:6]
        records = [rec(p, c, rnd=i + 1) for i, (c, p) in enumerate(pairs)]
        est = estimate_lambda(records)
        assert est.lambda_hat == pytest.approx(1.0, abs=1e-12)
        assert est.n_rounds_used == len(pairs)

    @pytest.mark.parametrize("lam", [-0.5, 0.0, 0.6, 1.0, 1.5])
    def test_unrounded_reports_recover_degree(self, lam):
        rng = np.random.default_rng(8)
        cases = [case_pool()[i] for i in rng.choice(729, size=30, replace=False)]
        cases = [c for c in cases if c.mu != 0.5]
        mu = [c.mu for c in cases]
        bayes = [benchmarks(c, Signal.R).bayes for c in cases]
        x = [brn_from_bayes(b, m, lam) for b, m in zip(bayes, mu)]
        est = fit_lambda(mu, bayes, x)
        assert est.lambda_hat == pytest.approx(lam, abs=1e-9)
        assert est.lambda_hat == 1 - est.beta_hat

    def test_prior_reports_match_hand_ols(self):
        cases = [Case(0.2, 0.4, 0.3), Case(0.7, 0.6, 0.2), Case(0.4, 0.9, 0.5)]
        records = [rec(round(c.mu * 100), c, rnd=i + 1) for i, c in enumerate(cases)]
        z = [math.log(c.mu / (1 - c.mu)) for c in cases]
        d = []
        for c in cases:
            b = c.mu * c.p_le / (c.mu * c.p_le + (1 - c.mu) * c.p_ri)
            d.append(math.log(b / (1 - b)) - math.log(c.mu / (1 - c.mu)))
        beta = sum(zi * di for zi, di in zip(z, d)) / sum(zi * zi for zi in z)
        est = estimate_lambda(records)
        assert est.beta_hat == pytest.approx(beta, abs=1e-12)
        assert est.lambda_hat == pytest.approx(1 - beta, abs=1e-12)

    def test_filters(self):
        records = [
            rec(25, rnd=1),
            rec(0, Case(0.3, 0.2, 0.6), rnd=2),
            rec(50, Case(0.5, 0.4, 0.3), rnd=3),
            rec(50, Case(0.7, 0.5, 0.5), rnd=4),
        ]
        assert estimate_lambda(records).n_rounds_used == 2
        assert estimate_lambda(records, clamp=0.005).n_rounds_used == 3

    def test_insufficient(self):
        with pytest.raises(InsufficientDataError):
            estimate_lambda([rec(25)])
        with pytest.raises(InsufficientDataError):
            estimate_lambda([rec(0), rec(100, rnd=2)])

    def test_ols_zero_regressor(self):
        with pytest.raises(InsufficientDataError):
            ols_through_origin([0.0, 0.0], [1.0, 2.0])

    def test_grouped(self):
        records = synth_generate(4, 0.3, cases_per_subject=10, seed=1)
        records.append(rec(25, sid="lonely"))
        ests, failures = estimate_lambdas(records)
        assert [e.subject_id for e in ests] == sorted(e.subject_id for e in ests)
        assert list(failures) == ["lonely"]

    def test_mixed_subjects_rejected(self):
        with pytest.raises(ValueError):
            estimate_lambda([rec(25, sid="a"), rec(30, sid="b")])


class TestSynth:
    def test_full_consideration_is_perfect_bayes(self):
        records = synth_generate(5, 1.0, seed=4)
        assert all(classify(r).label is Label.PERFECT_BAYES for r in records if r.case.mu != 0.5)

    def test_full_neglect_is_perfect_brn(self):
        records = synth_generate(5, 0.0, seed=4)
        assert all(classify(r).label is Label.PERFECT_BRN for r in records if r.case.mu != 0.5)

    def test_rounding_bound_on_recovered_degree(self):
        ests, failures = estimate_lambdas(synth_generate(50, 0.6, seed=5))
        assert not failures
        assert max(abs(e.lambda_hat - 0.6) for e in ests) <= 0.05

    def test_deterministic(self):
        assert synth_generate(3, 0.4, noise_sd=0.5, seed=9) == synth_generate(3, 0.4, noise_sd=0.5, seed=9)
        assert synth_generate(3, 0.4, noise_sd=0.5, seed=9) != synth_generate(3, 0.4, noise_sd=0.5, seed=10)

    def test_shape(self):
        records = synth_generate(2, 0.5, cases_per_subject=7, noise_sd=3.0, seed=1)
        assert len(records) == 28
        assert all(1 <= r.prediction <= 99 for r in records)
        rounds = sorted(r.round for r in records if r.subject_id == records[0].subject_id)
        assert rounds == list(range(1, 15))

    def test_pool_has_no_label_collisions(self):
        for case in case_pool():
            if case.mu == 0.5:
                continue
            for s in Signal:
                b = benchmarks(case, s)
                near_b = {math.floor(100 * b.bayes), math.ceil(100 * b.bayes)}
                near_q = {math.floor(100 * b.pbrn), math.ceil(100 * b.pbrn)}
                assert not near_b & near_q

    def test_too_many_cases(self):
        with pytest.raises(ValueError):
            synth_generate(1, 0.5, cases_per_subject=1000)


class TestCombine:
    def test_same_case(self):
        theta = combine_cases(SAMPLE, SAMPLE)
        assert theta.as_tuple() == (0.2, 0.4, 0.3, 0.4, 0.3)

    def test_different_cases(self):
        theta = combine_cases(SAMPLE, Case(0.2, 0.6, 0.5))
        assert theta.as_tuple() == (0.2, 0.4, 0.3, 0.6, 0.5)

    def test_prior_mismatch(self):
        with pytest.raises(MuMismatchError):
            combine_cases(SAMPLE, Case(0.3, 0.4, 0.3))


UNINFORMATIVE = Case(0.3, 0.5, 0.5)


class TestEmpiricalLoss:
    def test_bayesian_subjects_on_uninformative_cases(self):
        for spec in (AVERAGE_PRIOR, SIMPLE_AVERAGE):
            res = empirical_loss(spec, UNINFORMATIVE, UNINFORMATIVE, {"a": (0.3, 0.3)}, {"b": (0.3, 0.3)})
            assert res.loss == pytest.approx(0.0, abs=1e-15)
            assert (res.pairs_used, res.pairs_excluded) == (1, 0)

    def test_opposite_certainties_excluded(self):
        p1 = {"a": (0.0, 0.2), "c": (0.3, 0.3)}
        p2 = {"b": (1.0, 0.4)}
        res = empirical_loss(AVERAGE_PRIOR, UNINFORMATIVE, UNINFORMATIVE, p1, p2)
        assert res.pairs_excluded == 1
        assert res.pairs_used == 1
        assert not math.isnan(res.loss)

    def test_same_subject_not_paired(self):
        res = empirical_loss(SIMPLE_AVERAGE, SAMPLE, SAMPLE, {"a": (0.3, 0.3), "b": (0.2, 0.4)}, {"a": (0.3, 0.3)})
        assert res.pairs_used == 1

    def test_no_pairs(self):
        with pytest.raises(InsufficientDataError):
            empirical_loss(SIMPLE_AVERAGE, SAMPLE, SAMPLE, {"a": (0.3, 0.3)}, {"a": (0.3, 0.3)})

    def test_prior_mismatch(self):
        with pytest.raises(MuMismatchError):
            empirical_loss(SIMPLE_AVERAGE, SAMPLE, UNINFORMATIVE, {"a": (0.3, 0.3)}, {"b": (0.3, 0.3)})

    def test_model_reports_reproduce_relative_loss(self):
        # two subjects reporting the degree-lam posterior: the loss is the structure's relative loss
        z1, z2 = Case(0.3, 0.7, 0.2), Case(0.3, 0.4, 0.6)
        lam = 0.4

        def reports(z):
            return tuple(brn_from_bayes(benchmarks(z, s).bayes, z.mu, lam) for s in Signal)

        res = empirical_loss(balancing(0.6), z1, z2, {"a": reports(z1)}, {"b": reports(z2)})
        direct = relative_loss(balancing(0.6), combine_cases(z1, z2), lam)
        assert res.loss == pytest.approx(direct, abs=1e-14)

    @settings(max_examples=60)
    @given(
        st.dictionaries(st.sampled_from("abcde"), st.tuples(st.integers(0, 100), st.integers(0, 100)), min_size=1),
        st.dictionaries(st.sampled_from("abcde"), st.tuples(st.integers(0, 100), st.integers(0, 100)), min_size=1),
        st.sampled_from([SIMPLE_AVERAGE, AVERAGE_PRIOR, balancing(0.3)]),
    )
    def test_symmetry_and_counting(self, raw1, raw2, spec):
        p1 = {k: (a / 100, b / 100) for k, (a, b) in raw1.items()}
        p2 = {k: (a / 100, b / 100) for k, (a, b) in raw2.items()}
        z1, z2 = Case(0.3, 0.7, 0.2), Case(0.3, 0.4, 0.6)
        overlap = len(set(p1) & set(p2))
        if len(p1) * len(p2) == overlap:
            return
        fwd = empirical_loss(spec, z1, z2, p1, p2)
        bwd = empirical_loss(spec, z2, z1, p2, p1)
        assert fwd.pairs_used + fwd.pairs_excluded == len(p1) * len(p2) - overlap
        assert (fwd.pairs_used, fwd.pairs_excluded) == (bwd.pairs_used, bwd.pairs_excluded)
        if fwd.pairs_used:
            assert fwd.loss == pytest.approx(bwd.loss, abs=1e-15)


class TestSubsample:
    def test_perfect_buckets(self):
        b = benchmarks(SAMPLE, Signal.R), benchmarks(SAMPLE, Signal.B)
        bayes = tuple(round(x.bayes, 2) for x in b)
        brn = tuple(math.floor(100 * x.pbrn) / 100 for x in b)
        assert subsample_key(bayes, bayes, SAMPLE, SAMPLE) is Bucket.PERFECT_BAYES4
        assert subsample_key(brn, brn, SAMPLE, SAMPLE) is Bucket.PERFECT_BRN4

    def test_count_buckets(self):
        # red range (0.25, 0.571), blue range (0.176, 0.462)
        assert subsample_key((0.40, 0.40), (0.20, 0.10), SAMPLE, SAMPLE) is Bucket.IN2OUT2
        assert subsample_key((0.20, 0.50), (0.20, 0.50), SAMPLE, SAMPLE) is Bucket.OUT4
        assert subsample_key((0.40, 0.50), (0.20, 0.50), SAMPLE, SAMPLE) is Bucket.IN1OUT3
        assert subsample_key((0.40, 0.50), (0.40, 0.20), SAMPLE, SAMPLE) is Bucket.IN3OUT1
        assert subsample_key((0.25, 0.30), (0.40, 0.18), SAMPLE, SAMPLE) is Bucket.IN4

    def test_even_prior_excluded(self):
        with pytest.raises(ExcludedCaseError):
            z = Case(0.5, 0.4, 0.3)
            subsample_key((0.4, 0.4), (0.4, 0.4), z, z)


class TestSubstitute:
    def test_examples(self):
        assert substitute_bayes([rec(3)])[0].prediction == 25
        assert substitute_bayes([rec(3, Case(0.5, 0.6, 0.6))])[0].prediction == 50

    def test_idempotent(self):
        records = synth_generate(4, 0.3, noise_sd=0.4, seed=6)
        once = substitute_bayes(records)
        assert substitute_bayes(once) == once

    def test_loss_close_to_exact_posteriors(self):
        z1, z2 = Case(0.3, 0.7, 0.2), Case(0.3, 0.4, 0.6)

        def exact(z):
            return tuple(benchmarks(z, s).bayes for s in Signal)

        def rounded(z, sid):
            recs = [rec(0, z, s, sid) for s in Signal]
            return tuple(r.prediction / 100 for r in substitute_bayes(recs))

        got = empirical_loss(AVERAGE_PRIOR, z1, z2, {"a": rounded(z1, "a")}, {"b": rounded(z2, "b")}).loss
        ref = empirical_loss(AVERAGE_PRIOR, z1, z2, {"a": exact(z1)}, {"b": exact(z2)}).loss
        # local Lipschitz constant of the aggregator around the exact inputs
        pts = [(x1, x2) for x1 in exact(z1) for x2 in exact(z2)]
        h = 1e-6
        lip = max(
            abs(aggregate(AVERAGE_PRIOR, x1 + dx + h, x2 + dy) - aggregate(AVERAGE_PRIOR, x1 + dx - h, x2 + dy)) / (2 * h)
            + abs(aggregate(AVERAGE_PRIOR, x1 + dx, x2 + dy + h) - aggregate(AVERAGE_PRIOR, x1 + dx, x2 + dy - h)) / (2 * h)
            for x1, x2 in pts
            for dx in np.linspace(-0.005, 0.005, 5)
            for dy in np.linspace(-0.005, 0.005, 5)
        )
        assert abs(got - ref) <= 2 * lip * 0.005


@pytest.fixture(scope="module")
def records():
    return synth_generate(12, 0.5, cases_per_subject=25, noise_sd=0.7, seed=11)


class TestEvaluate:
    def test_matches_pairwise_reference(self, records):
        specs = [SIMPLE_AVERAGE, balancing(0.4)]
        table, summary, _ = evaluate(records, specs, common_exclusion=False)
        preds = {}
        for r in records:
            preds.setdefault(r.case, {}).setdefault(r.subject_id, {})[r.signal] = r.prediction / 100
        preds = {c: {k: (v[Signal.R], v[Signal.B]) for k, v in d.items()} for c, d in preds.items()}
        for row in table[:: max(1, len(table) // 60)]:
            z1 = Case(row["mu"], row["p_le_1"], row["p_ri_1"])
            z2 = Case(row["mu"], row["p_le_2"], row["p_ri_2"])
            spec = specs[0] if row["aggregator"] == "simple-average" else specs[1]
            ref = empirical_loss(spec, z1, z2, preds[z1], preds[z2])
            assert row["loss"] == pytest.approx(ref.loss, abs=1e-13)
            assert (row["pairs_used"], row["pairs_excluded"]) == (ref.pairs_used, ref.pairs_excluded)
        for s in summary:
            rows = [t for t in table if t["aggregator"] == s["aggregator"]]
            assert s["structures"] == len(rows)
            assert s["avg_loss"] == pytest.approx(np.mean([t["loss"] for t in rows]), abs=1e-14)

    def test_structures_are_unordered_same_prior_pairs(self, records):
        table, _, _ = evaluate(records, [SIMPLE_AVERAGE])
        keys = [(t["mu"], t["p_le_1"], t["p_ri_1"], t["p_le_2"], t["p_ri_2"]) for t in table]
        assert len(keys) == len(set(keys))
        assert all((k[1], k[2]) <= (k[3], k[4]) for k in keys)
        assert keys == sorted(keys)

    def test_common_exclusion(self):
        z = Case(0.3, 0.7, 0.2)
        records = [
            rec(0, z, Signal.R, "a"), rec(50, z, Signal.B, "a", 2),
            rec(100, z, Signal.R, "b"), rec(50, z, Signal.B, "b", 2),
            rec(40, z, Signal.R, "c"), rec(60, z, Signal.B, "c", 2),
        ]
        _, common, _ = evaluate(records, [SIMPLE_AVERAGE, AVERAGE_PRIOR])
        _, separate, _ = evaluate(records, [SIMPLE_AVERAGE, AVERAGE_PRIOR], common_exclusion=False)
        assert [s["pairs_excluded"] for s in common] == [2, 2]
        assert [s["pairs_excluded"] for s in separate] == [0, 2]

    def test_bayesian_substitution_lowers_loss(self, records):
        _, noisy, _ = evaluate(records, [AVERAGE_PRIOR], per_structure=False)
        _, bayes, _ = evaluate(records, [AVERAGE_PRIOR], bayesian=True, per_structure=False)
        assert bayes[0]["avg_loss"] < noisy[0]["avg_loss"]

    def test_subsample_buckets(self, records):
        _, summary, buckets = evaluate(records, [SIMPLE_AVERAGE], subsample=True)
        assert [b["bucket"] for b in buckets] == [b.value for b in Bucket]
        assert sum(b["structures"] for b in buckets) >= 1
        for b in buckets:
            assert math.isnan(b["avg_loss"]) or b["avg_loss"] >= 0

    def test_needs_aggregators(self, records):
        with pytest.raises(ValueError):
            evaluate(records, [])
