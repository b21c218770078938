"""Declarative run configuration and the run manifest."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import yaml

from .corpus import LabeledSequence, load_timeml_dir, read_conll, to_iob2
from .errors import DataValidationError
from .trainer import TrainConfig


@dataclass
class TranslationConfig:
    provider: str = "fixture"  # fixture | google
    fixture: str | None = None
    cache: str | None = None
    max_workers: int = 4


@dataclass
class RunConfig:
    target_language: str
    source_languages: list[str]
    datasets: dict[str, str]
    output_dir: str
    backbone: str | dict = "toy"
    train: TrainConfig = field(default_factory=TrainConfig)
    translation: TranslationConfig = field(default_factory=TranslationConfig)
    n_runs: int = 5
    offline: bool = False
    validation_fraction: float = 0.10
    split_seed: int = 0

    def __post_init__(self):
        if not self.source_languages:
            raise DataValidationError("at least one source language is required")
        if self.target_language in self.source_languages:
            raise DataValidationError("the target language cannot also be a training source")
        for lang in [*self.source_languages, self.target_language]:
            if lang not in self.datasets:
                raise DataValidationError(f"no dataset path for language {lang!r}")
            if not Path(self.datasets[lang]).exists():
                raise DataValidationError(f"dataset for {lang!r} not found: {self.datasets[lang]}")
        if self.n_runs < 1:
            raise DataValidationError("n_runs must be at least 1")

    @property
    def run_dir(self) -> Path:
        return Path(self.output_dir)

    @property
    def tasks_dir(self) -> Path:
        return self.run_dir / "tasks"

    @property
    def cache_path(self) -> Path:
        return Path(self.translation.cache) if self.translation.cache else self.run_dir / "translation_cache.jsonl"

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict, base_dir: str | Path = ".") -> "RunConfig":
        data = dict(data)
        base = Path(base_dir)

        def resolve(p):
            return None if p is None else str((base / p).resolve()) if not Path(p).is_absolute() else p

        data["datasets"] = {lang: resolve(p) for lang, p in data.get("datasets", {}).items()}
        data["output_dir"] = resolve(data.get("output_dir", "run"))
        translation = dict(data.get("translation") or {})
        for key in ("fixture", "cache"):
            translation[key] = resolve(translation.get(key))
        data["translation"] = TranslationConfig(**translation)
        data["train"] = TrainConfig(**(data.get("train") or {}))
        if isinstance(data.get("backbone"), str) and data["backbone"] != "toy" and (base / data["backbone"]).exists():
            data["backbone"] = str((base / data["backbone"]).resolve())
        try:
            return cls(**data)
        except TypeError as exc:
            raise DataValidationError(f"bad run configuration: {exc}") from None


def load_run_config(path: str | Path) -> RunConfig:
    """Load a YAML/JSON run configuration, or the resolved configuration inside a manifest."""
    path = Path(path)
    if not path.exists():
        raise DataValidationError(f"config file not found: {path}")
    data = yaml.safe_load(path.read_text(encoding="utf-8"))
    if not isinstance(data, dict):
        raise DataValidationError(f"{path}: expected a mapping")
    if "resolved_config" in data:
        return RunConfig.from_dict(data["resolved_config"], path.parent)
    return RunConfig.from_dict(data, path.parent)


def load_language_data(path: str | Path, language: str) -> list[LabeledSequence]:
    """CoNLL file, or a directory of TimeML documents converted on the fly."""
    path = Path(path)
    if path.is_dir():
        sequences = []
        for doc in load_timeml_dir(path, language):
            sequences.extend(to_iob2(doc))
        return sequences
    return read_conll(path, language)


def file_digest(path: str | Path) -> str:
    path = Path(path)
    h = hashlib.sha256()
    if path.is_dir():
        for child in sorted(p for p in path.rglob("*") if p.is_file()):
            h.update(str(child.relative_to(path)).encode("utf-8"))
            h.update(child.read_bytes())
    elif path.exists():
        h.update(path.read_bytes())
    else:
        return ""
    return h.hexdigest()


def read_manifest(run_dir: str | Path) -> dict:
    path = Path(run_dir) / "manifest.json"
    if not path.exists():
        return {}
    return json.loads(path.read_text(encoding="utf-8"))


def update_manifest(run_dir: str | Path, **sections) -> dict:
    manifest = read_manifest(run_dir)
    manifest.update(sections)
    Path(run_dir).mkdir(parents=True, exist_ok=True)
    (Path(run_dir) / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                                                 encoding="utf-8")
    return manifest
