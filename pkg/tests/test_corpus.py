import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import FIXTURES, random_sequence
from oracles import span_count
from xltime.corpus import (
    OUTSIDE,
    Document,
    AnnotatedSpan,
    IOLabel,
    LabeledSequence,
    SplitSpec,
    TimexType,
    corpus_stats,
    parse_timeml,
    read_conll,
    split_target,
    to_iob2,
    tokenize,
    write_conll,
)
from xltime.errors import DataValidationError
from xltime.metrics import decode_spans


def labels_of(seqs):
    return [s.label_strings() for s in seqs]


class TestLabels:
    def test_round_trip_strings(self):
        for text in ["O", "B-DATE", "I-TIME", "B-DURATION", "I-SET"]:
            assert str(IOLabel.parse(text)) == text

    @pytest.mark.parametrize("bad", ["B-EVENT", "X-DATE", "B", "BDATE", "o", "I-"])
    def test_rejects_bad_labels(self, bad):
        with pytest.raises(DataValidationError):
            IOLabel.parse(bad)

    def test_outside_has_no_type(self):
        with pytest.raises(DataValidationError):
            IOLabel("O", TimexType.DATE)
        with pytest.raises(DataValidationError):
            IOLabel("B")

    def test_exactly_four_types(self):
        assert [t.value for t in TimexType] == ["DATE", "TIME", "DURATION", "SET"]

    def test_sequence_length_mismatch(self):
        with pytest.raises(DataValidationError):
            LabeledSequence(("a", "b"), (OUTSIDE,), "en")
        with pytest.raises(DataValidationError):
            LabeledSequence((), (), "en")


class TestParseTimeML:
    def test_last_year_is_a_date(self):
        doc = parse_timeml('<TEXT>Revenue fell <TIMEX3 tid="t1" type="DATE">last year</TIMEX3>.</TEXT>', "en")
        assert len(doc.spans) == 1
        span = doc.spans[0]
        assert span.type is TimexType.DATE
        assert doc.text[span.start:span.end] == "last year"
        assert doc.text == "Revenue fell last year."

    def test_no_timex(self):
        doc = parse_timeml("<TEXT>Nothing happened here.</TEXT>", "en")
        assert doc.spans == []
        assert doc.text == "Nothing happened here."

    def test_adjacent_elements_abut(self):
        xml = ('<TEXT>Due <TIMEX3 type="DATE">Monday</TIMEX3><TIMEX3 type="TIME"> at noon</TIMEX3> sharp.</TEXT>')
        doc = parse_timeml(xml, "en")
        first, second = doc.spans
        # string-search oracle for the offsets
        assert first.start == doc.text.find("Monday")
        assert first.end == first.start + len("Monday")
        assert second.start == doc.text.find(" at noon")
        assert first.end == second.start
        assert (first.type, second.type) == (TimexType.DATE, TimexType.TIME)

    def test_other_inline_tags_keep_text(self):
        xml = '<TEXT>He <EVENT eid="e1">left</EVENT> <TIMEX3 type="DATE">today</TIMEX3>.</TEXT>'
        doc = parse_timeml(xml, "en")
        assert doc.text == "He left today."
        assert doc.text[doc.spans[0].start:doc.spans[0].end] == "today"

    def test_dct_outside_text_is_ignored(self, sample_xml):
        doc = parse_timeml(sample_xml, "en")
        assert doc.doc_id == "sample"
        assert "02/13/1998" not in doc.text
        assert len(doc.spans) == 4

    def test_malformed_xml_reports_location(self):
        with pytest.raises(DataValidationError, match="line 1, column"):
            parse_timeml("<TEXT>oops <TIMEX3 type='DATE'>x</TEXT>", "en")

    def test_unknown_type_named(self):
        with pytest.raises(DataValidationError, match="EVENTUALLY"):
            parse_timeml('<TEXT><TIMEX3 type="EVENTUALLY">soon</TIMEX3></TEXT>', "en")

    def test_nested_timex_rejected(self):
        with pytest.raises(DataValidationError, match="nested"):
            parse_timeml('<TEXT><TIMEX3 type="DATE">a <TIMEX3 type="TIME">b</TIMEX3></TIMEX3></TEXT>', "en")

    def test_missing_type_rejected(self):
        with pytest.raises(DataValidationError, match="type"):
            parse_timeml('<TEXT><TIMEX3 tid="t1">today</TIMEX3></TEXT>', "en")


class TestTokenize:
    def test_punctuation_detached(self):
        assert [t for t, _, _ in tokenize("rose 4.3%, to $525.8 (net).")] == [
            "rose", "4.3", "%", ",", "to", "$", "525.8", "(", "net", ")", ".",
        ]

    def test_offsets_point_into_text(self):
        text = "  Hello,   world!  «oui» "
        for token, start, end in tokenize(text):
            assert text[start:end] == token


class TestToIOB2:
    def _doc(self, text, *spans):
        out = []
        for phrase, timex_type in spans:
            start = text.index(phrase)
            out.append(AnnotatedSpan(start, start + len(phrase), timex_type))
        return Document("d1", text, out, "en")

    def test_see_you_tomorrow(self):
        seqs = to_iob2(self._doc("see you tomorrow", ("tomorrow", TimexType.DATE)))
        assert labels_of(seqs) == [["O", "O", "B-DATE"]]

    def test_no_spans_all_outside(self):
        seqs = to_iob2(self._doc("nothing to see here"))
        assert labels_of(seqs) == [["O"] * 4]

    def test_multi_token_duration(self):
        seqs = to_iob2(self._doc("the last three months", ("the last three months", TimexType.DURATION)))
        assert labels_of(seqs) == [["B-DURATION", "I-DURATION", "I-DURATION", "I-DURATION"]]

    def test_sentence_split(self):
        doc = self._doc("It rained. We left on Monday. Done!", ("Monday", TimexType.DATE))
        seqs = to_iob2(doc)
        assert [s.tokens for s in seqs] == [
            ("It", "rained", "."), ("We", "left", "on", "Monday", "."), ("Done", "!"),
        ]
        assert [s.sent_index for s in seqs] == [0, 1, 2]

    def test_no_split_inside_span(self):
        doc = self._doc("Meet at 5 p.m. tomorrow please.", ("5 p.m. tomorrow", TimexType.TIME))
        seqs = to_iob2(doc)
        assert len(seqs) == 1
        spans = decode_spans(seqs[0].labels)
        assert len(spans) == 1 and spans[0].type is TimexType.TIME

    def test_straddling_token_included_with_warning(self):
        text = "from 1990s onwards"
        doc = Document("d1", text, [AnnotatedSpan(5, 9, TimexType.DATE)], "en")  # "1990" of "1990s"
        warnings = []
        seqs = to_iob2(doc, warnings)
        assert labels_of(seqs) == [["O", "B-DATE", "O"]]
        assert len(warnings) == 1

    def test_sample_fixture(self, sample_xml):
        seqs = to_iob2(parse_timeml(sample_xml, "en"))
        assert len(seqs) == 2
        found = [(" ".join(s.tokens[sp.start:sp.end]), sp.type.value) for s in seqs for sp in decode_spans(s.labels)]
        assert found == [
            ("the last three months", "DURATION"), ("last year", "DATE"), ("daily", "SET"), ("Friday evening", "TIME"),
        ]

    @settings(max_examples=200, deadline=None)
    @given(st.data())
    def test_spans_reconstructed(self, data):
        """Generated documents: decoded token spans map back to exactly the annotated character spans."""
        words = data.draw(st.lists(st.sampled_from(["alpha", "beta", "gamma", "the", "x1", "day"]), min_size=1, max_size=12))
        types = list(TimexType)
        spans, text_parts, offset, i = [], [], 0, 0
        while i < len(words):
            n = data.draw(st.integers(0, min(3, len(words) - i)))
            if n:
                phrase = " ".join(words[i:i + n])
                spans.append(AnnotatedSpan(offset, offset + len(phrase), data.draw(st.sampled_from(types))))
                text_parts.append(phrase)
                offset += len(phrase) + 1
                i += n
            else:
                text_parts.append(words[i])
                offset += len(words[i]) + 1
                i += 1
        text = " ".join(text_parts)
        doc = Document("g", text, spans, "en")
        seqs = to_iob2(doc)
        assert len(seqs) == 1
        seq = seqs[0]
        assert len(seq.tokens) == len(seq.labels)
        token_offsets = tokenize(text)
        recovered = [(token_offsets[s.start][1], token_offsets[s.end - 1][2], s.type) for s in decode_spans(seq.labels)]
        assert recovered == [(s.start, s.end, s.type) for s in spans]


class TestSplit:
    def _corpus(self, n_docs, sents=3):
        rng = random.Random(0)
        return [random_sequence(rng, doc_id=f"doc{d:03d}", sent_index=s) for d in range(n_docs) for s in range(sents)]

    def test_fr_document_counts(self):
        val, test = split_target(self._corpus(108, 1), SplitSpec(0.10, 0))
        assert len({s.doc_id for s in val}) == 11
        assert len({s.doc_id for s in test}) == 97

    def test_ten_docs(self):
        val, test = split_target(self._corpus(10), SplitSpec(0.10, 0))
        assert len({s.doc_id for s in val}) == 1
        assert len({s.doc_id for s in test}) == 9

    def test_deterministic(self):
        corpus = self._corpus(20)
        assert split_target(corpus, SplitSpec(0.1, 3)) == split_target(corpus, SplitSpec(0.1, 3))

    def test_single_document_rejected(self):
        with pytest.raises(DataValidationError):
            split_target(self._corpus(1), SplitSpec())

    def test_fraction_bounds(self):
        with pytest.raises(DataValidationError):
            SplitSpec(0.0)
        with pytest.raises(DataValidationError):
            SplitSpec(1.0)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(2, 40), st.floats(0.01, 0.99), st.integers(0, 1000), st.randoms())
    def test_partition_properties(self, n_docs, fraction, seed, shuffler):
        corpus = self._corpus(n_docs, 2)
        spec = SplitSpec(fraction, seed)
        val, test = split_target(corpus, spec)
        val_docs, test_docs = {s.doc_id for s in val}, {s.doc_id for s in test}
        assert not val_docs & test_docs
        assert val_docs | test_docs == {s.doc_id for s in corpus}
        assert len(val) + len(test) == len(corpus)
        shuffled = list(corpus)
        shuffler.shuffle(shuffled)
        assert split_target(shuffled, spec) == (val, test)


class TestConll:
    def test_round_trip(self, tmp_path, rng):
        seqs = [random_sequence(rng, language="fr", doc_id=f"d{d}", sent_index=s) for d in range(4) for s in range(3)]
        path = tmp_path / "x.conll"
        write_conll(path, seqs)
        assert read_conll(path, "fr") == seqs

    def test_bad_label_names_line(self, tmp_path):
        path = tmp_path / "bad.conll"
        path.write_text("see\tO\nyou\tO\n\nnext\tB-EVENT\n", encoding="utf-8")
        with pytest.raises(DataValidationError, match=r"bad.conll:4"):
            read_conll(path, "en")

    def test_plain_file_without_docstart(self, tmp_path):
        path = tmp_path / "plain.conll"
        path.write_text("see\tO\nyou\tO\ntomorrow\tB-DATE\n\n\nbye\tO\n", encoding="utf-8")
        seqs = read_conll(path, "en")
        assert [s.label_strings() for s in seqs] == [["O", "O", "B-DATE"], ["O"]]
        assert {s.doc_id for s in seqs} == {"plain"}

    def test_sample_fixture_spans(self):
        seqs = read_conll(FIXTURES / "sample.conll", "en")
        spans = [sp for s in seqs for sp in decode_spans(s.labels)]
        assert len(spans) == 4
        assert sorted(sp.type.value for sp in spans) == ["DATE", "DURATION", "SET", "TIME"]


class TestStats:
    def test_empty(self):
        assert corpus_stats([]) == {"docs": 0, "exprs": 0, "dates": 0, "times": 0, "durations": 0, "sets": 0}

    def test_sample_fixture(self, sample_xml):
        stats = corpus_stats(to_iob2(parse_timeml(sample_xml, "en")))
        assert stats == {"docs": 1, "exprs": 4, "dates": 1, "times": 1, "durations": 1, "sets": 1}

    def test_five_known_spans(self):
        seq = LabeledSequence.from_strings(
            list("abcdefghij"),
            ["B-DATE", "I-DATE", "O", "B-TIME", "B-SET", "O", "B-DURATION", "I-DURATION", "O", "B-DATE"],
        )
        stats = corpus_stats([seq])
        assert stats["exprs"] == 5
        assert (stats["dates"], stats["times"], stats["durations"], stats["sets"]) == (2, 1, 1, 1)

    def test_total_equals_b_count(self):
        rng = random.Random(7)
        for _ in range(300):
            seqs = [random_sequence(rng, sent_index=i) for i in range(rng.randint(0, 4))]
            stats = corpus_stats(seqs)
            assert stats["exprs"] == sum(l.startswith("B-") for s in seqs for l in s.label_strings())
            assert stats["exprs"] == sum(stats[k] for k in ("dates", "times", "durations", "sets"))
            # valid IOB2: B count equals the number of expressions
            assert stats["exprs"] == sum(span_count(s.label_strings()) for s in seqs)
