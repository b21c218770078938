"""Interleaved mini-batch multi-task training.

All tasks are cut into mini-batches once; every epoch the union of those
batches is shuffled and consumed in order, one optimizer step per batch,
with the loss chosen by the batch's task type.
"""
from __future__ import annotations

import copy
import hashlib
import json
import logging
import math
import random
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import torch

from .corpus import LabeledSequence, tokenize
from .errors import DataValidationError, TrainingError
from .metrics import MatchMode, ScoreReport, aggregate_runs, score_sequences
from .model import (
    LabelVocab,
    XLTimeModel,
    align_labels_to_subwords,
    build_backbone,
    collate,
    load_model,
    predict_sequences,
    save_model,
)
from .taskgen import TaskDataset, TaskKind, TaskType

logger = logging.getLogger(__name__)

VALIDATION_METRICS = ("without_type_f1", "with_type_f1")


@dataclass
class TrainConfig:
    learning_rate: float = 7e-6
    warmup_proportion: float = 0.1
    epochs: int = 50
    batch_size: int = 32
    seed: int = 0
    validation_metric: str = "without_type_f1"
    weight_decay: float = 0.01
    max_grad_norm: float | None = 1.0
    max_length: int = 128
    head_bias: bool = True
    dtype: str = "float32"
    eval_batch_size: int = 64

    def __post_init__(self):
        if not 0.0 < self.warmup_proportion < 1.0:
            raise DataValidationError("warmup_proportion must lie strictly between 0 and 1")
        if self.epochs < 1:
            raise DataValidationError("epochs must be at least 1")
        if self.batch_size < 1:
            raise DataValidationError("batch_size must be at least 1")
        if self.validation_metric not in VALIDATION_METRICS:
            raise DataValidationError(f"validation_metric must be one of {VALIDATION_METRICS}")
        if self.dtype not in ("float32", "float64"):
            raise DataValidationError("dtype must be float32 or float64")

    def digest(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:16]


# --------------------------------------------------------------------------- batch pool


@dataclass
class MiniBatch:
    batch_id: int
    task_index: int
    kind: TaskKind
    items: list


@dataclass
class BatchPool:
    batches: list[MiniBatch]
    seed: int
    epochs_drawn: int = 0
    _rng: random.Random = field(init=False, repr=False)
    _tensors: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        self._rng = random.Random(self.seed)

    def __len__(self) -> int:
        return len(self.batches)

    def shuffled(self) -> list[MiniBatch]:
        """A fresh random permutation of all batches (advances the pool's RNG)."""
        order = list(self.batches)
        self._rng.shuffle(order)
        self.epochs_drawn += 1
        return order

    def count(self, task_type: TaskType) -> int:
        return sum(1 for b in self.batches if b.kind.type is task_type)


def make_batch_pool(tasks: Sequence[TaskDataset], batch_size: int, seed: int = 0) -> BatchPool:
    """Cut every task into consecutive mini-batches of *batch_size* and pool them."""
    if batch_size < 1:
        raise DataValidationError("batch_size must be at least 1")
    if not tasks:
        raise DataValidationError("no tasks to train on")
    batches = []
    for t, task in enumerate(tasks):
        if len(task.items) == 0:
            raise DataValidationError(f"task {task.kind.name} is empty")
        for start in range(0, len(task.items), batch_size):
            batches.append(MiniBatch(len(batches), t, task.kind, task.items[start:start + batch_size]))
    return BatchPool(batches, seed)


def _batch_tensors(pool: BatchPool, batch: MiniBatch, model: XLTimeModel):
    cached = pool._tensors.get(batch.batch_id)
    if cached is not None:
        return cached
    if batch.kind.type is TaskType.PRIMARY:
        rows = [align_labels_to_subwords(s.tokens, s.labels, model.backbone, model.vocab, model.max_length)
                for s in batch.items]
        aligned = collate(rows, model.backbone.pad_id)
        cached = (aligned.input_ids, aligned.attention_mask, aligned.targets)
    else:
        rows = [align_labels_to_subwords([tok for tok, _, _ in tokenize(s.text)], None, model.backbone,
                                         max_length=model.max_length) for s in batch.items]
        aligned = collate(rows, model.backbone.pad_id, with_targets=False)
        cached = (aligned.input_ids, aligned.attention_mask, torch.tensor([s.label for s in batch.items]))
    pool._tensors[batch.batch_id] = cached
    return cached


def batch_loss(model: XLTimeModel, pool: BatchPool, batch: MiniBatch) -> torch.Tensor:
    input_ids, mask, targets = _batch_tensors(pool, batch, model)
    out = model.encode(input_ids, mask)
    if batch.kind.type is TaskType.PRIMARY:
        return model.primary_loss(out, targets)
    return model.secondary_loss(out, targets)


# --------------------------------------------------------------------------- epoch / training


@dataclass
class EpochStats:
    steps: int = 0
    order: list[int] = field(default_factory=list)
    losses: list[float] = field(default_factory=list)
    steps_by_type: dict[str, int] = field(default_factory=dict)

    @property
    def total_loss(self) -> float:
        return sum(self.losses)

    def mean_loss(self) -> float:
        return self.total_loss / max(1, self.steps)


def linear_warmup_schedule(optimizer, total_steps: int, warmup_proportion: float):
    warmup_steps = int(warmup_proportion * total_steps)

    def factor(step: int) -> float:
        if step < warmup_steps:
            return step / warmup_steps
        return max(0.0, (total_steps - step) / max(1, total_steps - warmup_steps))

    return torch.optim.lr_scheduler.LambdaLR(optimizer, factor)


def make_optimizer(model: XLTimeModel, config: TrainConfig):
    return torch.optim.AdamW(model.parameters(), lr=config.learning_rate, weight_decay=config.weight_decay)


def run_epoch(pool: BatchPool, model: XLTimeModel, optimizer, scheduler=None, max_grad_norm: float | None = 1.0,
              log=None, step_offset: int = 0) -> EpochStats:
    """Consume every batch of *pool* once in a fresh random order, one update per batch.

    Parameters that take no part in a batch's loss (the other task's head)
    keep ``grad=None`` and are skipped by the optimizer.
    """
    model.train()
    stats = EpochStats()
    for batch in pool.shuffled():
        optimizer.zero_grad(set_to_none=True)
        loss = batch_loss(model, pool, batch)
        if not torch.isfinite(loss):
            raise TrainingError(
                f"non-finite loss {loss.item()} on batch {batch.batch_id} ({batch.kind.name}); "
                f"loss history this epoch: {stats.losses[-10:]}"
            )
        loss.backward()
        if max_grad_norm is not None:
            torch.nn.utils.clip_grad_norm_([p for p in model.parameters() if p.grad is not None], max_grad_norm)
        lr = optimizer.param_groups[0]["lr"]
        optimizer.step()
        if scheduler is not None:
            scheduler.step()
        value = loss.item()
        stats.steps += 1
        stats.order.append(batch.batch_id)
        stats.losses.append(value)
        kind = batch.kind.type.value
        stats.steps_by_type[kind] = stats.steps_by_type.get(kind, 0) + 1
        if log is not None:
            log.write(json.dumps({"step": step_offset + stats.steps, "task_kind": batch.kind.name,
                                  "loss": value, "lr": lr}) + "\n")
    return stats


def evaluate_model(model: XLTimeModel, sequences: Sequence[LabeledSequence],
                   batch_size: int = 64) -> dict[MatchMode, ScoreReport]:
    predictions = predict_sequences(model, list(sequences), batch_size=batch_size)
    return {mode: score_sequences(predictions, list(sequences), mode) for mode in MatchMode}


def _metric(scores: dict[MatchMode, ScoreReport], name: str) -> float:
    mode = MatchMode.WITHOUT_TYPE if name == "without_type_f1" else MatchMode.WITH_TYPE
    return scores[mode].f1


@dataclass
class Checkpoint:
    model: XLTimeModel
    epoch: int
    validation_scores: list[float]
    seed: int
    config_digest: str
    config: TrainConfig
    steps: int = 0

    def save(self, directory: str | Path) -> Path:
        directory = Path(directory)
        files = save_model(self.model, directory)
        manifest = {
            "config_digest": self.config_digest,
            "seed": self.seed,
            "epoch": self.epoch,
            "validation_scores": self.validation_scores,
            "train_config": asdict(self.config),
            "steps": self.steps,
            "files": files,
        }
        (directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                                                 encoding="utf-8")
        return directory


def load_checkpoint(directory: str | Path) -> Checkpoint:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text(encoding="utf-8"))
    return Checkpoint(
        model=load_model(directory),
        epoch=manifest["epoch"],
        validation_scores=manifest["validation_scores"],
        seed=manifest["seed"],
        config_digest=manifest["config_digest"],
        config=TrainConfig(**manifest["train_config"]),
        steps=manifest.get("steps", 0),
    )


def build_model(config: TrainConfig, backbone, vocab: LabelVocab | None = None) -> XLTimeModel:
    torch.manual_seed(config.seed)
    backbone = build_backbone(backbone) if isinstance(backbone, (str, dict)) else backbone
    model = XLTimeModel(backbone, vocab or LabelVocab.from_types(), bias=config.head_bias, seed=config.seed,
                        max_length=config.max_length)
    if config.dtype == "float64":
        model.double()
    return model


def train(config: TrainConfig, tasks: Sequence[TaskDataset], validation_set: Sequence[LabeledSequence],
          backbone="toy", vocab: LabelVocab | None = None, log_path: str | Path | None = None) -> Checkpoint:
    """Train for ``config.epochs`` epochs; return the epoch with the best validation score.

    The validation sequences are only ever scored; gradients come from the
    batch pool, which is built from *tasks* alone.
    """
    if not validation_set:
        raise DataValidationError("validation set is empty")
    model = build_model(config, backbone, vocab)
    pool = make_batch_pool(tasks, config.batch_size, config.seed)
    optimizer = make_optimizer(model, config)
    total_steps = config.epochs * len(pool)
    scheduler = linear_warmup_schedule(optimizer, total_steps, config.warmup_proportion)

    best_state, best_epoch, best_score = None, 0, -math.inf
    history: list[float] = []
    log = open(log_path, "w", encoding="utf-8") if log_path is not None else None
    try:
        for epoch in range(1, config.epochs + 1):
            stats = run_epoch(pool, model, optimizer, scheduler, config.max_grad_norm, log=log,
                              step_offset=(epoch - 1) * len(pool))
            scores = evaluate_model(model, validation_set, config.eval_batch_size)
            score = _metric(scores, config.validation_metric)
            history.append(score)
            logger.info("epoch %d: mean loss %.4f, validation %s %.4f", epoch, stats.mean_loss(),
                        config.validation_metric, score)
            if score > best_score:
                best_score, best_epoch = score, epoch
                best_state = copy.deepcopy(model.state_dict())
    finally:
        if log is not None:
            log.close()

    model.load_state_dict(best_state)
    model.eval()
    return Checkpoint(model, best_epoch, history, config.seed, config.digest(), config, total_steps)


# --------------------------------------------------------------------------- repeated runs


@dataclass
class RunResult:
    seed: int
    reports: dict[MatchMode, ScoreReport]
    checkpoint: Checkpoint | None = None


@dataclass
class MultiRunResult:
    runs: list[RunResult]
    mean: dict[MatchMode, ScoreReport]
    failures: list[tuple[int, str]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "runs": [{"seed": r.seed, "reports": {m.value: rep.to_dict() for m, rep in r.reports.items()}}
                     for r in self.runs],
            "mean": {m.value: rep.to_dict() for m, rep in self.mean.items()},
            "failures": [{"seed": s, "error": e} for s, e in self.failures],
        }


def multi_seed_run(config: TrainConfig, tasks: Sequence[TaskDataset], validation: Sequence[LabeledSequence],
                   test: Sequence[LabeledSequence], n_runs: int = 5, backbone="toy",
                   vocab: LabelVocab | None = None, seeds: Sequence[int] | None = None,
                   output_dir: str | Path | None = None) -> MultiRunResult:
    """Train and test with seeds ``config.seed + k``; scores are averaged over successful runs."""
    if n_runs < 1:
        raise DataValidationError("n_runs must be at least 1")
    seeds = list(seeds) if seeds is not None else [config.seed + k for k in range(n_runs)]
    runs, failures = [], []
    for k, seed in enumerate(seeds):
        run_config = replace(config, seed=seed)
        log_path = None
        if output_dir is not None:
            (Path(output_dir) / "logs").mkdir(parents=True, exist_ok=True)
            log_path = Path(output_dir) / "logs" / f"train-run{k}.jsonl"
        try:
            ckpt = train(run_config, tasks, validation, backbone, vocab, log_path=log_path)
        except TrainingError as exc:
            logger.error("run %d (seed %d) failed: %s", k, seed, exc)
            failures.append((seed, str(exc)))
            continue
        if output_dir is not None:
            ckpt.save(Path(output_dir) / "checkpoints" / f"run{k}")
        runs.append(RunResult(seed, evaluate_model(ckpt.model, test, config.eval_batch_size), ckpt))
    if not runs:
        raise TrainingError(f"all {len(seeds)} runs failed: {failures}")
    mean = {mode: aggregate_runs([r.reports[mode] for r in runs]) for mode in MatchMode}
    return MultiRunResult(runs, mean, failures)
