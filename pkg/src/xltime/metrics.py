"""Strict-match span scoring for IOB2 temporal expression output."""
from __future__ import annotations

import enum
import json
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

from .corpus import IOLabel, TimexType
from .errors import EvaluationMismatch


class MatchMode(str, enum.Enum):
    WITH_TYPE = "with_type"
    WITHOUT_TYPE = "without_type"


@dataclass(frozen=True, order=True)
class Span:
    key: tuple[str, int]
    start: int
    end: int
    type: TimexType


def decode_spans(labels: Sequence[IOLabel], key: tuple[str, int] = ("", 0)) -> list[Span]:
    """Decode IOB2 labels into spans.

    Total over malformed input: an ``I-X`` that does not continue an open
    ``X`` span starts a new one.
    """
    spans: list[Span] = []
    start = None
    current = None
    for i, label in enumerate(labels):
        if label.prefix == "I" and current is label.type:
            continue
        if current is not None:
            spans.append(Span(key, start, i, current))
            current = None
        if label.prefix != "O":
            start, current = i, label.type
    if current is not None:
        spans.append(Span(key, start, len(labels), current))
    return spans


def _ratios(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


@dataclass
class ScoreReport:
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float
    mode: MatchMode
    per_type: dict[str, dict[str, float]] = field(default_factory=dict)

    @classmethod
    def from_counts(cls, tp, fp, fn, mode, per_type=None) -> "ScoreReport":
        return cls(tp, fp, fn, *_ratios(tp, fp, fn), MatchMode(mode), per_type or {})

    def to_dict(self) -> dict:
        out = asdict(self)
        out["mode"] = self.mode.value
        for name in ("precision", "recall", "f1"):
            out[name] = round(out[name], 4)
        for row in out["per_type"].values():
            for name in ("precision", "recall", "f1"):
                row[name] = round(row[name], 4)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


LabelRows = Mapping[tuple[str, int], Sequence[IOLabel]]


def strict_match_score(pred: LabelRows, gold: LabelRows, mode: MatchMode | str) -> ScoreReport:
    """Score predictions by exact span boundaries (and type in WITH_TYPE mode).

    *pred* and *gold* map a sentence key ``(doc_id, sent_index)`` to its labels.
    """
    mode = MatchMode(mode)
    if set(pred) != set(gold):
        missing = sorted(set(gold) - set(pred))
        extra = sorted(set(pred) - set(gold))
        raise EvaluationMismatch(f"sequence keys differ: missing predictions {missing[:5]}, unexpected {extra[:5]}")

    tp = fp = fn = 0
    by_type: dict[TimexType, Counter] = {t: Counter() for t in TimexType}
    for key in sorted(gold):
        if len(pred[key]) != len(gold[key]):
            raise EvaluationMismatch(f"sequence {key}: {len(pred[key])} predicted labels vs {len(gold[key])} gold")
        gold_spans = decode_spans(gold[key], key)
        pred_spans = decode_spans(pred[key], key)
        # decoded spans are disjoint, so a boundary pair identifies at most one gold span
        gold_by_bounds = {(s.start, s.end): s for s in gold_spans}
        matched = set()
        for span in pred_spans:
            hit = gold_by_bounds.get((span.start, span.end))
            ok = hit is not None and (mode is MatchMode.WITHOUT_TYPE or hit.type is span.type)
            if ok:
                tp += 1
                matched.add((span.start, span.end))
                by_type[span.type]["tp"] += 1
            else:
                fp += 1
                by_type[span.type]["fp"] += 1
        for span in gold_spans:
            if (span.start, span.end) not in matched:
                fn += 1
                by_type[span.type]["fn"] += 1

    per_type = {}
    if mode is MatchMode.WITH_TYPE:
        for timex_type, c in by_type.items():
            p, r, f = _ratios(c["tp"], c["fp"], c["fn"])
            per_type[timex_type.value] = {
                "tp": c["tp"], "fp": c["fp"], "fn": c["fn"], "precision": p, "recall": r, "f1": f,
            }
    return ScoreReport.from_counts(tp, fp, fn, mode, per_type)


def score_sequences(pred_labels, gold_sequences, mode) -> ScoreReport:
    """Convenience wrapper taking parallel lists of predicted labels and gold sequences."""
    if len(pred_labels) != len(gold_sequences):
        raise EvaluationMismatch(f"{len(pred_labels)} predictions for {len(gold_sequences)} gold sequences")
    gold = {}
    pred = {}
    for labels, seq in zip(pred_labels, gold_sequences):
        if seq.key in gold:
            raise EvaluationMismatch(f"duplicate sequence key {seq.key}")
        gold[seq.key] = seq.labels
        pred[seq.key] = labels
    return strict_match_score(pred, gold, mode)


def aggregate_runs(reports: Sequence[ScoreReport]) -> ScoreReport:
    """Mean of precision, recall and F1 over runs; counts are summed."""
    if not reports:
        raise ValueError("aggregate_runs needs at least one report")
    modes = {r.mode for r in reports}
    if len(modes) != 1:
        raise EvaluationMismatch(f"cannot aggregate reports with mixed modes {sorted(m.value for m in modes)}")
    n = len(reports)
    if n == 1:
        return reports[0]
    mean = ScoreReport(
        tp=sum(r.tp for r in reports),
        fp=sum(r.fp for r in reports),
        fn=sum(r.fn for r in reports),
        precision=sum(r.precision for r in reports) / n,
        recall=sum(r.recall for r in reports) / n,
        f1=sum(r.f1 for r in reports) / n,
        mode=reports[0].mode,
    )
    return mean


def format_table(rows: Mapping[str, ScoreReport]) -> str:
    """Plain-text table with F1 | Pr. | Re. columns, one row per named report."""
    width = max([len(name) for name in rows] + [4])
    lines = [f"{'':<{width}}  {'F1':>6}  {'Pr.':>6}  {'Re.':>6}"]
    for name, r in rows.items():
        lines.append(f"{name:<{width}}  {r.f1:6.4f}  {r.precision:6.4f}  {r.recall:6.4f}")
    return "\n".join(lines)
