"""Construction of the primary (token labelling) and secondary (sentence classification) tasks."""
from __future__ import annotations

import enum
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .corpus import LabeledSequence, read_conll, write_conll
from .errors import DataValidationError
from .translation import TranslationCache, TranslationClient, TranslationError, translate_many

logger = logging.getLogger(__name__)

MAX_SKIP_FRACTION = 0.20


class TaskType(str, enum.Enum):
    PRIMARY = "primary"
    SECONDARY = "secondary"


@dataclass(frozen=True)
class TaskKind:
    type: TaskType
    source_language: str
    target_language: str

    def __post_init__(self):
        if self.type is TaskType.SECONDARY and self.source_language == self.target_language:
            raise DataValidationError("a secondary task must translate into a different language")

    @property
    def name(self) -> str:
        return f"{self.type.value}-{self.source_language}2{self.target_language}"


@dataclass(frozen=True)
class BinarySample:
    text: str
    label: int
    origin: tuple[str, int, str]

    def __post_init__(self):
        if self.label not in (0, 1):
            raise DataValidationError(f"binary label must be 0 or 1, got {self.label!r}")
        if not self.text.strip():
            raise DataValidationError(f"empty text for sample from {self.origin}")

    @property
    def tokens(self) -> list[str]:
        return self.text.split()


@dataclass
class TaskDataset:
    kind: TaskKind
    items: list

    def __post_init__(self):
        if not self.items:
            raise DataValidationError(f"task {self.kind.name} has no items")
        expected = LabeledSequence if self.kind.type is TaskType.PRIMARY else BinarySample
        for item in self.items:
            if not isinstance(item, expected):
                raise DataValidationError(f"task {self.kind.name} holds a {type(item).__name__}")

    def __len__(self) -> int:
        return len(self.items)


def derive_sentence_label(seq: LabeledSequence) -> int:
    """1 if the sentence contains any temporal expression token, else 0."""
    return int(any(label.prefix != "O" for label in seq.labels))


def _single_language(sequences: Sequence[LabeledSequence]) -> str:
    if not sequences:
        raise DataValidationError("source data is empty")
    languages = {seq.language for seq in sequences}
    if len(languages) != 1:
        raise DataValidationError(f"one task per source language; got {sorted(languages)}")
    return languages.pop()


def build_primary_dataset(source_data: Sequence[LabeledSequence], target: str) -> TaskDataset:
    source = _single_language(source_data)
    if source == target:
        raise DataValidationError("target-language gold data may not be used for training")
    return TaskDataset(TaskKind(TaskType.PRIMARY, source, target), list(source_data))


def build_secondary_dataset(
    source_data: Sequence[LabeledSequence],
    target: str,
    client: TranslationClient | None,
    cache: TranslationCache,
    max_workers: int = 4,
    max_skip_fraction: float = MAX_SKIP_FRACTION,
) -> TaskDataset:
    """Translate each source sentence into *target* and label it by its source annotation.

    Only source-language sequences are accepted. Sentences whose translation
    fails are skipped; more than *max_skip_fraction* skipped aborts the build.
    ``client=None`` means offline: any cache miss raises OfflineCacheMiss.
    """
    source = _single_language(source_data)
    kind = TaskKind(TaskType.SECONDARY, source, target)
    texts = [seq.text for seq in source_data]
    translations = translate_many(texts, source, target, client, cache, max_workers=max_workers)

    items = []
    skipped = []
    for seq, text in zip(source_data, texts):
        result = translations[text]
        if isinstance(result, TranslationError) or not result.strip():
            skipped.append(seq.key)
            continue
        items.append(BinarySample(result, derive_sentence_label(seq), (seq.doc_id, seq.sent_index, source)))

    if len(skipped) > max_skip_fraction * len(source_data):
        raise DataValidationError(
            f"{kind.name}: {len(skipped)} of {len(source_data)} sentences could not be translated "
            f"(limit {max_skip_fraction:.0%}); first failures: {skipped[:5]}"
        )
    if skipped:
        logger.warning("%s: skipped %d untranslatable sentences", kind.name, len(skipped))
    return TaskDataset(kind, items)


# --------------------------------------------------------------------------- persistence


def save_task(dataset: TaskDataset, directory: str | Path) -> Path:
    """Write a task file named after the task: CoNLL for primary, JSON-lines for secondary."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    if dataset.kind.type is TaskType.PRIMARY:
        path = directory / f"{dataset.kind.name}.conll"
        write_conll(path, dataset.items)
    else:
        path = directory / f"{dataset.kind.name}.jsonl"
        with path.open("w", encoding="utf-8") as fh:
            for item in dataset.items:
                record = {"text": item.text, "label": item.label, "origin": list(item.origin)}
                fh.write(json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n")
    return path


def load_task(path: str | Path) -> TaskDataset:
    path = Path(path)
    kind_name, _, langs = path.stem.partition("-")
    source, _, target = langs.partition("2")
    kind = TaskKind(TaskType(kind_name), source, target)
    if kind.type is TaskType.PRIMARY:
        return TaskDataset(kind, read_conll(path, source))
    items = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if line.strip():
                try:
                    record = json.loads(line)
                    items.append(BinarySample(record["text"], int(record["label"]), tuple(record["origin"])))
                except (json.JSONDecodeError, KeyError) as exc:
                    raise DataValidationError(f"{path}:{lineno}: {exc}") from None
    return TaskDataset(kind, items)
