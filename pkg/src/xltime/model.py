"""Shared encoder backbones, the two task heads and their losses."""
from __future__ import annotations

import json
import logging
import math
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import torch
import torch.nn as nn
import torch.nn.functional as F

from .corpus import IOLabel, TimexType
from .errors import DataValidationError, EvaluationMismatch

logger = logging.getLogger(__name__)

IGNORE = -100
DEFAULT_MAX_LENGTH = 128


class LabelVocab:
    """Ordered IOB2 label inventory: ``O`` followed by ``B-``/``I-`` for each type."""

    def __init__(self, labels: Sequence[str]):
        self.labels = list(labels)
        if "O" not in self.labels:
            raise DataValidationError("label vocabulary must contain 'O'")
        if len(set(self.labels)) != len(self.labels):
            raise DataValidationError("duplicate labels in vocabulary")
        self._parsed = [IOLabel.parse(l) for l in self.labels]
        self.index = {label: i for i, label in enumerate(self.labels)}

    @classmethod
    def from_types(cls, types: Sequence[TimexType] = tuple(TimexType)) -> "LabelVocab":
        labels = ["O"]
        for t in types:
            labels += [f"B-{t.value}", f"I-{t.value}"]
        return cls(labels)

    def __len__(self) -> int:
        return len(self.labels)

    def __eq__(self, other) -> bool:
        return isinstance(other, LabelVocab) and self.labels == other.labels

    def encode(self, label: IOLabel) -> int:
        try:
            return self.index[str(label)]
        except KeyError:
            raise EvaluationMismatch(f"label {label} is not in the model vocabulary") from None

    def decode(self, index: int) -> IOLabel:
        return self._parsed[index]

    def to_json(self) -> str:
        return json.dumps(self.labels)

    @classmethod
    def from_json(cls, text: str) -> "LabelVocab":
        return cls(json.loads(text))


@dataclass
class EncoderOutput:
    token_vectors: torch.Tensor  # (batch, positions, d)
    pooled: torch.Tensor  # (batch, d)
    attention_mask: torch.Tensor  # (batch, positions)


# --------------------------------------------------------------------------- backbones


class Backbone(nn.Module):
    """Adapter contract: subword tokenization plus a contextual encoder.

    Subclasses set ``hidden_size``, ``pad_id``, ``unk_id`` and
    ``has_sequence_token`` and implement :meth:`subword_ids`,
    :meth:`forward` and :meth:`spec`.
    """

    hidden_size: int
    pad_id: int = 0
    unk_id: int = 1
    has_sequence_token: bool = False

    def subword_ids(self, word: str) -> list[int]:
        raise NotImplementedError

    def prefix_ids(self) -> list[int]:
        return []

    def suffix_ids(self) -> list[int]:
        return []

    def spec(self) -> dict:
        raise NotImplementedError


class ToySubwordTokenizer:
    """Small subword lexicon.

    With *pieces*, words are segmented by greedy longest match and any
    unmatched character maps to the unknown id. Without, a word is cut into
    fixed-width chunks hashed into the vocabulary.
    """

    def __init__(self, pieces: Sequence[str] | None = None, vocab_size: int = 64, chunk: int = 4):
        self.vocab_size = vocab_size
        self.chunk = chunk
        self.pieces = list(pieces) if pieces is not None else None
        if self.pieces is not None:
            if len(self.pieces) + 2 > vocab_size:
                raise ValueError(f"{len(self.pieces)} pieces do not fit a vocabulary of {vocab_size}")
            self._piece_ids = {p: i + 2 for i, p in enumerate(self.pieces)}
            self._longest = max(len(p) for p in self.pieces)

    def __call__(self, word: str) -> list[int]:
        if self.pieces is None:
            return [
                2 + zlib.crc32(word[i:i + self.chunk].encode("utf-8")) % (self.vocab_size - 2)
                for i in range(0, len(word), self.chunk)
            ]
        ids = []
        i = 0
        while i < len(word):
            for size in range(min(self._longest, len(word) - i), 0, -1):
                piece_id = self._piece_ids.get(word[i:i + size])
                if piece_id is not None:
                    ids.append(piece_id)
                    i += size
                    break
            else:
                if not ids or ids[-1] != 1:
                    ids.append(1)
                i += 1
        return ids


class ToyEncoder(Backbone):
    """Two feed-forward layers over a window of subword embeddings.

    Each position sees its left and right neighbour. No dedicated sequence
    token, so the pooled vector is the masked mean.
    """

    def __init__(self, dim: int = 8, hidden: int = 16, vocab_size: int = 64, window: int = 1,
                 pieces: Sequence[str] | None = None, chunk: int = 4):
        super().__init__()
        self.hidden_size = dim
        self.window = window
        self.tokenizer = ToySubwordTokenizer(pieces, vocab_size, chunk)
        self._spec = {"kind": "toy", "dim": dim, "hidden": hidden, "vocab_size": vocab_size,
                      "window": window, "pieces": self.tokenizer.pieces, "chunk": chunk}
        self.embedding = nn.Embedding(vocab_size, dim, padding_idx=0)
        self.layer1 = nn.Linear((2 * window + 1) * dim, hidden)
        self.layer2 = nn.Linear(hidden, dim)

    def subword_ids(self, word: str) -> list[int]:
        return self.tokenizer(word)

    def spec(self) -> dict:
        return dict(self._spec)

    def forward(self, input_ids: torch.Tensor, attention_mask: torch.Tensor) -> torch.Tensor:
        mask = attention_mask.unsqueeze(-1).to(self.embedding.weight.dtype)
        emb = self.embedding(input_ids) * mask
        padded = F.pad(emb, (0, 0, self.window, self.window))
        length = emb.shape[1]
        windows = [padded[:, k:k + length] for k in range(2 * self.window + 1)]
        h = torch.tanh(self.layer1(torch.cat(windows, dim=-1)))
        return torch.tanh(self.layer2(h)) * mask


class TransformersBackbone(Backbone):
    """Pretrained Hugging Face encoder (mBERT, XLM-R, ...)."""

    has_sequence_token = True

    def __init__(self, name_or_path: str):
        super().__init__()
        from transformers import AutoModel, AutoTokenizer

        self.name = name_or_path
        self.tokenizer = AutoTokenizer.from_pretrained(name_or_path)
        self.model = AutoModel.from_pretrained(name_or_path)
        self.hidden_size = self.model.config.hidden_size
        self.pad_id = self.tokenizer.pad_token_id
        self.unk_id = self.tokenizer.unk_token_id

    def subword_ids(self, word: str) -> list[int]:
        return self.tokenizer(word, add_special_tokens=False)["input_ids"]

    def prefix_ids(self) -> list[int]:
        cls_id = self.tokenizer.cls_token_id
        if cls_id is None:
            cls_id = self.tokenizer.bos_token_id
        return [] if cls_id is None else [cls_id]

    def suffix_ids(self) -> list[int]:
        sep_id = self.tokenizer.sep_token_id
        if sep_id is None:
            sep_id = self.tokenizer.eos_token_id
        return [] if sep_id is None else [sep_id]

    def spec(self) -> dict:
        return {"kind": "hf", "name": self.name}

    def forward(self, input_ids, attention_mask):
        return self.model(input_ids=input_ids, attention_mask=attention_mask).last_hidden_state


def build_backbone(spec: str | dict) -> Backbone:
    """``"toy"``, a toy spec dict, or a Hugging Face model id / local path."""
    if isinstance(spec, str):
        if spec == "toy":
            return ToyEncoder()
        return TransformersBackbone(spec)
    spec = dict(spec)
    kind = spec.pop("kind", "toy")
    if kind == "toy":
        return ToyEncoder(**spec)
    if kind == "hf":
        return TransformersBackbone(spec["name"])
    raise DataValidationError(f"unknown backbone kind {kind!r}")


# --------------------------------------------------------------------------- model


class XLTimeModel(nn.Module):
    """One backbone shared by a token-labelling head and a sentence-classification head."""

    def __init__(self, backbone: Backbone, vocab: LabelVocab, bias: bool = True, seed: int = 0,
                 max_length: int = DEFAULT_MAX_LENGTH):
        super().__init__()
        self.backbone = backbone
        self.vocab = vocab
        self.max_length = max_length
        self.bias = bias
        d = backbone.hidden_size
        self.primary_head = nn.Linear(d, len(vocab), bias=bias)
        self.secondary_head = nn.Linear(d, 2, bias=bias)
        gen = torch.Generator().manual_seed(seed)
        bound = 1.0 / math.sqrt(d)
        with torch.no_grad():
            for head in (self.primary_head, self.secondary_head):
                head.weight.copy_(torch.rand(head.weight.shape, generator=gen) * 2 * bound - bound)
                if head.bias is not None:
                    head.bias.zero_()

    @property
    def dim(self) -> int:
        return self.backbone.hidden_size

    def encode(self, input_ids: torch.Tensor, attention_mask: torch.Tensor) -> EncoderOutput:
        vectors = self.backbone(input_ids, attention_mask)
        if self.backbone.has_sequence_token:
            pooled = vectors[:, 0]
        else:
            mask = attention_mask.unsqueeze(-1).to(vectors.dtype)
            pooled = (vectors * mask).sum(1) / mask.sum(1).clamp(min=1.0)
        return EncoderOutput(vectors, pooled, attention_mask)

    def primary_logits(self, out: EncoderOutput) -> torch.Tensor:
        return self.primary_head(out.token_vectors)

    def secondary_logits(self, out: EncoderOutput) -> torch.Tensor:
        return self.secondary_head(out.pooled)

    def primary_loss(self, out: EncoderOutput, targets: torch.Tensor) -> torch.Tensor:
        return primary_loss(self.primary_logits(out), targets)

    def secondary_loss(self, out: EncoderOutput, labels: torch.Tensor) -> torch.Tensor:
        return secondary_loss(self.secondary_logits(out), labels)

    def config(self) -> dict:
        return {"backbone": self.backbone.spec(), "labels": self.vocab.labels, "bias": self.bias,
                "max_length": self.max_length}


def primary_loss(logits: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    """Mean token-level cross-entropy over positions whose target is not IGNORE."""
    if not (targets != IGNORE).any():
        raise DataValidationError("primary batch has no labelled positions")
    return F.cross_entropy(logits.reshape(-1, logits.shape[-1]), targets.reshape(-1), ignore_index=IGNORE)


def secondary_loss(logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """Mean two-class cross-entropy of sentence logits."""
    if labels.numel() == 0:
        raise DataValidationError("secondary batch is empty")
    return F.cross_entropy(logits, labels)


def predict_labels(logits: torch.Tensor) -> torch.Tensor:
    """Argmax over the last axis; ties resolve to the lowest index."""
    return logits.argmax(dim=-1)


# --------------------------------------------------------------------------- alignment / batching


@dataclass
class AlignedRow:
    input_ids: list[int]
    targets: list[int]
    first_positions: list[int]  # position of each kept token's first subword


@dataclass
class AlignedBatch:
    input_ids: torch.Tensor
    attention_mask: torch.Tensor
    targets: torch.Tensor | None
    lengths: list[int]
    first_positions: list[list[int]]


def align_labels_to_subwords(tokens: Sequence[str], labels: Sequence[IOLabel] | None, backbone: Backbone,
                             vocab: LabelVocab | None = None, max_length: int = DEFAULT_MAX_LENGTH) -> AlignedRow:
    """Subword-tokenize *tokens*; each token's first subword carries its label, everything else IGNORE.

    A token yielding no subwords is mapped to the unknown id. Sequences
    longer than *max_length* are truncated with a warning; trailing tokens
    that no longer fit get no position.
    """
    if not tokens:
        raise DataValidationError("cannot align an empty token sequence")
    prefix, suffix = backbone.prefix_ids(), backbone.suffix_ids()
    budget = max_length - len(prefix) - len(suffix)
    input_ids = list(prefix)
    targets = [IGNORE] * len(prefix)
    firsts = []
    for i, token in enumerate(tokens):
        pieces = backbone.subword_ids(token) or [backbone.unk_id]
        if len(input_ids) - len(prefix) + len(pieces) > budget:
            logger.warning("sequence of %d tokens truncated to %d subwords; %d tokens dropped",
                           len(tokens), max_length, len(tokens) - i)
            break
        firsts.append(len(input_ids))
        input_ids.extend(pieces)
        target = IGNORE if labels is None else vocab.encode(labels[i])
        targets.extend([target] + [IGNORE] * (len(pieces) - 1))
    input_ids.extend(suffix)
    targets.extend([IGNORE] * len(suffix))
    return AlignedRow(input_ids, targets, firsts)


def collate(rows: Sequence[AlignedRow], pad_id: int = 0, with_targets: bool = True) -> AlignedBatch:
    width = max(len(r.input_ids) for r in rows)
    ids = torch.full((len(rows), width), pad_id, dtype=torch.long)
    mask = torch.zeros((len(rows), width), dtype=torch.long)
    targets = torch.full((len(rows), width), IGNORE, dtype=torch.long) if with_targets else None
    for i, r in enumerate(rows):
        n = len(r.input_ids)
        ids[i, :n] = torch.tensor(r.input_ids)
        mask[i, :n] = 1
        if with_targets:
            targets[i, :n] = torch.tensor(r.targets)
    return AlignedBatch(ids, mask, targets, [len(r.input_ids) for r in rows], [r.first_positions for r in rows])


@torch.no_grad()
def predict_sequences(model: XLTimeModel, sequences, batch_size: int = 64) -> list[list[IOLabel]]:
    """Token-level IOB2 predictions for each sequence; truncated tokens are predicted O."""
    was_training = model.training
    model.eval()
    outside = IOLabel("O")
    results = []
    try:
        for start in range(0, len(sequences), batch_size):
            chunk = sequences[start:start + batch_size]
            rows = [align_labels_to_subwords(s.tokens, None, model.backbone, max_length=model.max_length)
                    for s in chunk]
            batch = collate(rows, model.backbone.pad_id, with_targets=False)
            logits = model.primary_logits(model.encode(batch.input_ids, batch.attention_mask))
            indices = predict_labels(logits)
            for i, seq in enumerate(chunk):
                labels = [model.vocab.decode(int(indices[i, p])) for p in batch.first_positions[i]]
                labels += [outside] * (len(seq.tokens) - len(labels))
                results.append(labels)
    finally:
        model.train(was_training)
    return results


# --------------------------------------------------------------------------- persistence


def save_model(model: XLTimeModel, directory: str | Path) -> list[str]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    torch.save(model.state_dict(), directory / "model.pt")
    (directory / "labels.json").write_text(model.vocab.to_json() + "\n", encoding="utf-8")
    (directory / "model_config.json").write_text(json.dumps(model.config(), indent=2, sort_keys=True) + "\n",
                                                  encoding="utf-8")
    return ["model.pt", "labels.json", "model_config.json"]


def load_model(directory: str | Path) -> XLTimeModel:
    directory = Path(directory)
    config = json.loads((directory / "model_config.json").read_text(encoding="utf-8"))
    vocab = LabelVocab.from_json((directory / "labels.json").read_text(encoding="utf-8"))
    model = XLTimeModel(build_backbone(config["backbone"]), vocab, bias=config["bias"],
                        max_length=config["max_length"])
    state = torch.load(directory / "model.pt", map_location="cpu", weights_only=True)
    if next(iter(state.values())).dtype == torch.float64:
        model.double()
    model.load_state_dict(state)
    model.eval()
    return model
