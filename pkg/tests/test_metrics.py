import itertools
import random

import pytest

from conftest import random_labels
from oracles import brute_force_score, reference_decode
from xltime.corpus import IOLabel, TimexType
from xltime.errors import EvaluationMismatch
from xltime.metrics import MatchMode, ScoreReport, aggregate_runs, decode_spans, format_table, strict_match_score


def L(*labels):
    return [IOLabel.parse(l) for l in labels]


def as_tuples(spans):
    return [(s.start, s.end, s.type.value) for s in spans]


class TestDecode:
    def test_duration_span(self):
        assert as_tuples(decode_spans(L("B-DURATION", "I-DURATION", "I-DURATION", "I-DURATION"))) == [
            (0, 4, "DURATION")
        ]

    def test_all_outside(self):
        assert decode_spans(L("O", "O", "O")) == []
        assert decode_spans([]) == []

    def test_stray_inside_starts_span(self):
        assert as_tuples(decode_spans(L("O", "I-DATE", "I-DATE", "O", "I-TIME"))) == [(1, 3, "DATE"), (4, 5, "TIME")]

    def test_type_change_closes(self):
        assert as_tuples(decode_spans(L("B-DATE", "I-TIME", "B-TIME", "B-TIME"))) == [
            (0, 1, "DATE"), (1, 2, "TIME"), (2, 3, "TIME"), (3, 4, "TIME"),
        ]

    def test_exhaustive_against_reference(self):
        alphabet = ["O", "B-DATE", "I-DATE", "B-TIME", "I-TIME"]
        for n in range(6):
            for combo in itertools.product(alphabet, repeat=n):
                got = decode_spans(L(*combo))
                assert as_tuples(got) == reference_decode(list(combo)), combo
                # disjoint and ordered
                for a, b in zip(got, got[1:]):
                    assert a.end <= b.start


class TestStrictMatch:
    def test_type_mismatch_example(self):
        gold = {("d", 0): L("O", "O", "B-DATE")}
        pred = {("d", 0): L("O", "O", "B-DURATION")}
        untyped = strict_match_score(pred, gold, MatchMode.WITHOUT_TYPE)
        assert (untyped.tp, untyped.fp, untyped.fn) == (1, 0, 0)
        typed = strict_match_score(pred, gold, MatchMode.WITH_TYPE)
        assert (typed.tp, typed.fp, typed.fn) == (0, 1, 1)

    def test_identity_is_perfect(self, rng):
        gold = {("d", i): L(*random_labels(rng, 8)) for i in range(5)}
        gold[("d", 99)] = L("B-SET")
        for mode in MatchMode:
            r = strict_match_score(gold, gold, mode)
            assert (r.precision, r.recall, r.f1) == (1.0, 1.0, 1.0)

    def test_empty_prediction(self):
        gold = {("d", 0): L("B-DATE", "O", "B-TIME", "I-TIME"), ("d", 1): L("B-SET")}
        pred = {k: L(*["O"] * len(v)) for k, v in gold.items()}
        r = strict_match_score(pred, gold, MatchMode.WITHOUT_TYPE)
        assert (r.precision, r.recall, r.f1, r.fn, r.tp, r.fp) == (0.0, 0.0, 0.0, 3, 0, 0)

    def test_partial_overlap_gets_no_credit(self):
        gold = {("d", 0): L("B-DATE", "I-DATE", "I-DATE")}
        pred = {("d", 0): L("B-DATE", "I-DATE", "O")}
        r = strict_match_score(pred, gold, MatchMode.WITHOUT_TYPE)
        assert (r.tp, r.fp, r.fn) == (0, 1, 1)

    def test_key_mismatch(self):
        with pytest.raises(EvaluationMismatch, match="keys"):
            strict_match_score({("d", 0): L("O")}, {("d", 1): L("O")}, MatchMode.WITH_TYPE)

    def test_length_mismatch_names_sequence(self):
        with pytest.raises(EvaluationMismatch, match=r"\('doc', 3\)"):
            strict_match_score({("doc", 3): L("O")}, {("doc", 3): L("O", "O")}, MatchMode.WITH_TYPE)

    def test_random_corpora_match_oracle(self):
        rng = random.Random(99)
        for _ in range(300):
            gold, pred = {}, {}
            for i in range(rng.randint(1, 3)):
                n = rng.randint(1, 8)
                gold[("d", i)] = random_labels(rng, n)
                pred[("d", i)] = random_labels(rng, n)
            for mode in MatchMode:
                r = strict_match_score({k: L(*v) for k, v in pred.items()}, {k: L(*v) for k, v in gold.items()}, mode)
                expected = brute_force_score(pred, gold, mode is MatchMode.WITH_TYPE)
                assert (r.tp, r.fp, r.fn, r.precision, r.recall, r.f1) == expected

    def test_count_identities_and_mode_monotonicity(self):
        rng = random.Random(5)
        for _ in range(200):
            keys = [("d", i) for i in range(3)]
            gold = {k: L(*random_labels(rng, 6)) for k in keys}
            pred = {k: L(*random_labels(rng, 6)) for k in keys}
            n_gold = sum(len(decode_spans(v)) for v in gold.values())
            n_pred = sum(len(decode_spans(v)) for v in pred.values())
            typed = strict_match_score(pred, gold, MatchMode.WITH_TYPE)
            untyped = strict_match_score(pred, gold, MatchMode.WITHOUT_TYPE)
            for r in (typed, untyped):
                assert r.tp + r.fn == n_gold
                assert r.tp + r.fp == n_pred
            assert untyped.tp >= typed.tp
            reordered = dict(reversed(list(gold.items())))
            assert strict_match_score(pred, reordered, MatchMode.WITH_TYPE).f1 == typed.f1

    def test_per_type_breakdown(self):
        gold = {("d", 0): L("B-DATE", "O", "B-TIME")}
        pred = {("d", 0): L("B-DATE", "O", "B-SET")}
        r = strict_match_score(pred, gold, MatchMode.WITH_TYPE)
        assert r.per_type["DATE"]["tp"] == 1
        assert r.per_type["TIME"]["fn"] == 1
        assert r.per_type["SET"]["fp"] == 1
        assert strict_match_score(pred, gold, MatchMode.WITHOUT_TYPE).per_type == {}

    def test_report_json_rounding(self):
        r = ScoreReport.from_counts(1, 2, 0, MatchMode.WITHOUT_TYPE)
        d = r.to_dict()
        assert d["precision"] == 0.3333
        assert d["mode"] == "without_type"


class TestAggregate:
    def _report(self, f1, p=0.5, r=0.5, mode=MatchMode.WITHOUT_TYPE):
        return ScoreReport(1, 1, 1, p, r, f1, mode)

    def test_single(self):
        rep = self._report(0.42)
        assert aggregate_runs([rep]) is rep

    def test_two(self):
        assert aggregate_runs([self._report(0.8), self._report(0.6)]).f1 == pytest.approx(0.7, abs=1e-15)

    def test_mean_of_ratios(self):
        rng = random.Random(3)
        reports = [self._report(rng.random(), rng.random(), rng.random()) for _ in range(5)]
        mean = aggregate_runs(reports)
        assert abs(mean.f1 - sum(r.f1 for r in reports) / 5) < 1e-12
        assert abs(mean.precision - sum(r.precision for r in reports) / 5) < 1e-12
        assert abs(mean.recall - sum(r.recall for r in reports) / 5) < 1e-12

    def test_mixed_modes_rejected(self):
        with pytest.raises(EvaluationMismatch):
            aggregate_runs([self._report(0.1), self._report(0.2, mode=MatchMode.WITH_TYPE)])

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            aggregate_runs([])


def test_format_table():
    text = format_table({"XLTime": ScoreReport.from_counts(3, 1, 1, MatchMode.WITHOUT_TYPE)})
    header, row = text.splitlines()
    assert header.split() == ["F1", "Pr.", "Re."]
    assert row.split() == ["XLTime", "0.7500", "0.7500", "0.7500"]
