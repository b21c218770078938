"""TimeML / CoNLL corpus handling.

Reads TIMEX3-annotated documents, converts them to IOB2 token sequences,
reads and writes the two-column CoNLL format and splits a target-language
corpus into validation and test portions by document.
"""
from __future__ import annotations

import enum
import json
import logging
import math
import random
import re
import string
import xml.etree.ElementTree as ET
from collections import Counter, OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import DataValidationError

logger = logging.getLogger(__name__)

DOCSTART = "-DOCSTART-"
PUNCTUATION = frozenset(string.punctuation) | frozenset("«»“”‘’¿¡…–—")
SENTENCE_FINAL = frozenset(".!?")


class TimexType(str, enum.Enum):
    DATE = "DATE"
    TIME = "TIME"
    DURATION = "DURATION"
    SET = "SET"

    @classmethod
    def parse(cls, value: str) -> "TimexType":
        try:
            return cls(value.strip().upper())
        except ValueError:
            raise DataValidationError(f"unknown TIMEX3 type {value!r}") from None


@dataclass(frozen=True)
class IOLabel:
    prefix: str
    type: TimexType | None = None

    def __post_init__(self):
        if self.prefix not in ("B", "I", "O"):
            raise DataValidationError(f"invalid IOB2 prefix {self.prefix!r}")
        if (self.prefix == "O") != (self.type is None):
            raise DataValidationError("O labels carry no type; B/I labels require one")

    @classmethod
    def parse(cls, text: str) -> "IOLabel":
        if text == "O":
            return OUTSIDE
        prefix, sep, type_name = text.partition("-")
        if not sep or prefix not in ("B", "I"):
            raise DataValidationError(f"label {text!r} is not O, B-<TYPE> or I-<TYPE>")
        try:
            return cls(prefix, TimexType(type_name))
        except ValueError:
            raise DataValidationError(f"label {text!r} has unknown type {type_name!r}") from None

    def __str__(self) -> str:
        return "O" if self.type is None else f"{self.prefix}-{self.type.value}"


OUTSIDE = IOLabel("O")


@dataclass(frozen=True)
class LabeledSequence:
    tokens: tuple[str, ...]
    labels: tuple[IOLabel, ...]
    language: str
    doc_id: str = ""
    sent_index: int = 0

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        object.__setattr__(self, "labels", tuple(self.labels))
        if not self.tokens:
            raise DataValidationError("a labeled sequence needs at least one token")
        if len(self.tokens) != len(self.labels):
            raise DataValidationError(
                f"{self.doc_id}#{self.sent_index}: {len(self.tokens)} tokens but {len(self.labels)} labels"
            )

    @property
    def key(self) -> tuple[str, int]:
        return (self.doc_id, self.sent_index)

    @property
    def text(self) -> str:
        return " ".join(self.tokens)

    def label_strings(self) -> list[str]:
        return [str(label) for label in self.labels]

    @classmethod
    def from_strings(cls, tokens, labels, language="xx", doc_id="", sent_index=0) -> "LabeledSequence":
        return cls(tuple(tokens), tuple(IOLabel.parse(l) for l in labels), language, doc_id, sent_index)


@dataclass(frozen=True)
class AnnotatedSpan:
    start: int
    end: int
    type: TimexType


@dataclass
class Document:
    doc_id: str
    text: str
    spans: list[AnnotatedSpan] = field(default_factory=list)
    language: str = "xx"

    def validate(self) -> None:
        previous_end = 0
        for span in sorted(self.spans, key=lambda s: (s.start, s.end)):
            if not 0 <= span.start < span.end <= len(self.text):
                raise DataValidationError(f"{self.doc_id}: span {span} outside text bounds")
            if span.start < previous_end:
                raise DataValidationError(f"{self.doc_id}: overlapping spans at offset {span.start}")
            previous_end = span.end


@dataclass(frozen=True)
class SplitSpec:
    validation_fraction: float = 0.10
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.validation_fraction < 1.0:
            raise DataValidationError("validation_fraction must lie strictly between 0 and 1")


# --------------------------------------------------------------------------- TimeML


def parse_timeml(xml_text: str, language: str, doc_id: str | None = None) -> Document:
    """Parse one TimeML document into raw text plus TIMEX3 spans.

    When a ``TEXT`` element is present only its content is kept, so the
    document creation time block is not treated as running text.
    """
    try:
        root = ET.fromstring(xml_text)
    except ET.ParseError as exc:
        line, column = exc.position
        raise DataValidationError(f"malformed XML at line {line}, column {column}: {exc}") from None

    if doc_id is None:
        docid_elem = root.find(".//DOCID")
        doc_id = (docid_elem.text or "").strip() if docid_elem is not None else ""
    body = root if root.tag == "TEXT" else root.find(".//TEXT")
    if body is None:
        body = root

    pieces: list[str] = []
    spans: list[AnnotatedSpan] = []
    offset = 0

    def emit(text: str | None) -> None:
        nonlocal offset
        if text:
            pieces.append(text)
            offset += len(text)

    def walk(elem: ET.Element, inside_timex: bool) -> None:
        is_timex = elem.tag == "TIMEX3"
        if is_timex and inside_timex:
            raise DataValidationError(f"{doc_id}: nested TIMEX3 elements are not supported")
        start = offset
        emit(elem.text)
        for child in elem:
            walk(child, inside_timex or is_timex)
            emit(child.tail)
        if is_timex:
            if "type" not in elem.attrib:
                raise DataValidationError(f"{doc_id}: TIMEX3 element at offset {start} has no type attribute")
            timex_type = TimexType.parse(elem.attrib["type"])
            if offset > start:
                spans.append(AnnotatedSpan(start, offset, timex_type))
            else:
                logger.debug("%s: skipping empty TIMEX3 %s", doc_id, elem.attrib.get("tid", ""))

    # the body element's own tail belongs to the parent, so only walk its content
    emit(body.text)
    for child in body:
        walk(child, False)
        emit(child.tail)

    doc = Document(doc_id=doc_id, text="".join(pieces), spans=spans, language=language)
    doc.validate()
    return doc


def load_timeml_dir(directory: str | Path, language: str) -> list[Document]:
    directory = Path(directory)
    files = sorted(p for p in directory.iterdir() if p.suffix.lower() in (".tml", ".xml") and p.is_file())
    if not files:
        raise DataValidationError(f"no .tml or .xml files found in {directory}")
    return [parse_timeml(p.read_text(encoding="utf-8"), language, doc_id=p.stem) for p in files]


# --------------------------------------------------------------------------- tokenization


def tokenize(text: str) -> list[tuple[str, int, int]]:
    """Whitespace tokenization with leading/trailing punctuation detached.

    Returns ``(token, start, end)`` triples with character offsets into *text*.
    Each detached punctuation character becomes its own token.
    """
    tokens: list[tuple[str, int, int]] = []
    for match in re.finditer(r"\S+", text):
        word, start, end = match.group(), match.start(), match.end()
        lo, hi = 0, len(word)
        while lo < hi and word[lo] in PUNCTUATION:
            lo += 1
        while hi > lo and word[hi - 1] in PUNCTUATION:
            hi -= 1
        for i in range(lo):
            tokens.append((word[i], start + i, start + i + 1))
        if hi > lo:
            tokens.append((word[lo:hi], start + lo, start + hi))
        for i in range(hi, len(word)):
            tokens.append((word[i], start + i, start + i + 1))
    return tokens


def to_iob2(doc: Document, warnings: list[str] | None = None) -> list[LabeledSequence]:
    """Convert a document to IOB2 sentences.

    Tokens only partly covered by a span are labelled as inside it and a
    message is appended to *warnings* (and logged).
    """
    doc.validate()
    spans = sorted(doc.spans, key=lambda s: s.start)
    tokens = tokenize(doc.text)

    token_span: list[int | None] = []
    for _tok, start, end in tokens:
        hits = [k for k, s in enumerate(spans) if start < s.end and end > s.start]
        if not hits:
            token_span.append(None)
            continue
        k = hits[0]
        span = spans[k]
        if start < span.start or end > span.end or len(hits) > 1:
            message = (
                f"{doc.doc_id}: token {doc.text[start:end]!r} at {start}-{end} straddles "
                f"span {span.start}-{span.end}; labelled inside"
            )
            logger.warning(message)
            if warnings is not None:
                warnings.append(message)
        token_span.append(k)

    labels: list[IOLabel] = []
    for i, k in enumerate(token_span):
        if k is None:
            labels.append(OUTSIDE)
        elif i > 0 and token_span[i - 1] == k:
            labels.append(IOLabel("I", spans[k].type))
        else:
            labels.append(IOLabel("B", spans[k].type))

    sentences: list[LabeledSequence] = []
    current: list[int] = []
    for i, (tok, _start, end) in enumerate(tokens):
        current.append(i)
        at_boundary = (
            tok in SENTENCE_FINAL
            and (end == len(doc.text) or doc.text[end].isspace())
            and token_span[i] is None
            and (i + 1 == len(tokens) or token_span[i + 1] is None)
        )
        if at_boundary or i + 1 == len(tokens):
            sentences.append(
                LabeledSequence(
                    tuple(tokens[j][0] for j in current),
                    tuple(labels[j] for j in current),
                    doc.language,
                    doc.doc_id,
                    len(sentences),
                )
            )
            current = []
    return sentences


# --------------------------------------------------------------------------- splitting


def _group_by_document(sequences: Iterable[LabeledSequence]) -> "OrderedDict[str, list[LabeledSequence]]":
    docs: OrderedDict[str, list[LabeledSequence]] = OrderedDict()
    for seq in sequences:
        docs.setdefault(seq.doc_id, []).append(seq)
    return docs


def split_target(
    sequences: Sequence[LabeledSequence], spec: SplitSpec = SplitSpec()
) -> tuple[list[LabeledSequence], list[LabeledSequence]]:
    """Split by document into (validation, test).

    Validation receives ``ceil(fraction * n_docs)`` documents. The result
    depends only on the set of documents and the seed, not on input order.
    """
    docs = _group_by_document(sequences)
    if len(docs) < 2:
        raise DataValidationError(f"cannot split {len(docs)} document(s) by document; need at least 2")
    doc_ids = sorted(docs)
    rng = random.Random(spec.seed)
    rng.shuffle(doc_ids)
    n_val = min(math.ceil(spec.validation_fraction * len(doc_ids) - 1e-9), len(doc_ids) - 1)
    val_ids = set(doc_ids[:n_val])

    def collect(ids):
        out = []
        for doc_id in sorted(ids):
            out.extend(sorted(docs[doc_id], key=lambda s: s.sent_index))
        return out

    return collect(val_ids), collect(set(doc_ids) - val_ids)


# --------------------------------------------------------------------------- CoNLL


def write_conll(path: str | Path, sequences: Iterable[LabeledSequence]) -> None:
    """Write ``token<TAB>label`` lines; a ``-DOCSTART-`` line opens each document."""
    lines: list[str] = []
    current_doc = None
    for seq in sequences:
        if seq.doc_id != current_doc:
            lines.append(f"{DOCSTART}\t{seq.doc_id}")
            lines.append("")
            current_doc = seq.doc_id
        for token, label in zip(seq.tokens, seq.labels):
            if not token or any(c.isspace() for c in token):
                raise DataValidationError(f"token {token!r} cannot be written in CoNLL format")
            lines.append(f"{token}\t{label}")
        lines.append("")
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def read_conll(path: str | Path, language: str) -> list[LabeledSequence]:
    """Read a two-column CoNLL file. Files without ``-DOCSTART-`` lines form one document named after the file."""
    path = Path(path)
    sequences: list[LabeledSequence] = []
    doc_id = path.stem
    sent_index = 0
    tokens: list[str] = []
    labels: list[IOLabel] = []

    def flush():
        nonlocal tokens, labels, sent_index
        if tokens:
            sequences.append(LabeledSequence(tuple(tokens), tuple(labels), language, doc_id, sent_index))
            sent_index += 1
        tokens, labels = [], []

    with path.open(encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line.strip():
                flush()
                continue
            if line.startswith(DOCSTART):
                flush()
                doc_id = line[len(DOCSTART):].strip() or f"{path.stem}-{lineno}"
                sent_index = 0
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise DataValidationError(f"{path}:{lineno}: expected 'token<TAB>label', got {line!r}")
            try:
                label = IOLabel.parse(parts[1])
            except DataValidationError as exc:
                raise DataValidationError(f"{path}:{lineno}: {exc}") from None
            tokens.append(parts[0])
            labels.append(label)
    flush()
    return sequences


# --------------------------------------------------------------------------- statistics

STAT_COLUMNS = {
    TimexType.DATE: "dates",
    TimexType.TIME: "times",
    TimexType.DURATION: "durations",
    TimexType.SET: "sets",
}


def corpus_stats(sequences: Iterable[LabeledSequence]) -> dict[str, int]:
    """Expression counts per type (number of B- labels), mirroring the usual dataset tables."""
    counts: Counter[TimexType] = Counter()
    docs = set()
    for seq in sequences:
        docs.add(seq.doc_id)
        for label in seq.labels:
            if label.prefix == "B":
                counts[label.type] += 1
    stats = {"docs": len(docs), "exprs": sum(counts.values())}
    for timex_type, column in STAT_COLUMNS.items():
        stats[column] = counts[timex_type]
    return stats


def write_stats(path: str | Path, stats: dict) -> None:
    Path(path).write_text(json.dumps(stats, indent=2, sort_keys=True) + "\n", encoding="utf-8")
