"""Command-line entry point: ``xltime {convert,build,train,evaluate,report}``.

Exit codes: 0 success, 2 usage, 3 data validation, 4 training failure,
5 evaluation mismatch.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import corpus
from .config import file_digest, load_language_data, load_run_config, read_manifest, update_manifest
from .errors import DataValidationError, EvaluationMismatch, OfflineCacheMiss, TrainingError
from .metrics import MatchMode, ScoreReport, aggregate_runs, format_table
from .taskgen import build_primary_dataset, build_secondary_dataset, load_task, save_task
from .trainer import evaluate_model, load_checkpoint, multi_seed_run
from .translation import FixtureTranslationClient, GoogleTranslateClient, TranslationCache

logger = logging.getLogger("xltime")

EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_TRAINING = 4
EXIT_EVALUATION = 5


class UsageError(Exception):
    pass


# --------------------------------------------------------------------------- commands


def cmd_convert(args) -> int:
    source = Path(args.input)
    output = Path(args.output or "converted")
    output.mkdir(parents=True, exist_ok=True)
    if args.format == "timeml":
        if not source.is_dir():
            raise DataValidationError(f"{source} is not a directory of TimeML files")
        sequences = []
        warnings: list[str] = []
        for doc in corpus.load_timeml_dir(source, args.language):
            sequences.extend(corpus.to_iob2(doc, warnings))
    else:
        files = sorted(source.glob("*.conll")) if source.is_dir() else [source]
        if not files or not files[0].exists():
            raise DataValidationError(f"no CoNLL input found at {source}")
        sequences = [seq for f in files for seq in corpus.read_conll(f, args.language)]
        warnings = []
    if not sequences:
        raise DataValidationError(f"{source} contains no sentences")
    conll_path = output / f"{args.language}.conll"
    corpus.write_conll(conll_path, sequences)
    stats = corpus.corpus_stats(sequences)
    stats["language"] = args.language
    stats["boundary_warnings"] = len(warnings)
    corpus.write_stats(output / f"{args.language}.stats.json", stats)
    print(json.dumps(stats, sort_keys=True))
    return 0


def _client(config, offline: bool):
    if offline:
        return None
    if config.translation.provider == "fixture":
        if not config.translation.fixture:
            raise DataValidationError("translation provider 'fixture' needs a fixture path")
        return FixtureTranslationClient(config.translation.fixture)
    if config.translation.provider == "google":
        return GoogleTranslateClient()
    raise DataValidationError(f"unknown translation provider {config.translation.provider!r}")


def cmd_build(args) -> int:
    config = _load_config(args)
    offline = args.offline or config.offline
    cache = TranslationCache(config.cache_path)
    client = _client(config, offline)
    written = []
    for lang in config.source_languages:
        source_data = load_language_data(config.datasets[lang], lang)
        primary = build_primary_dataset(source_data, config.target_language)
        secondary = build_secondary_dataset(source_data, config.target_language, client, cache,
                                            max_workers=config.translation.max_workers)
        for task in (primary, secondary):
            path = save_task(task, config.tasks_dir)
            written.append(path)
            print(f"{task.kind.name}: {len(task)} items -> {path}")
    update_manifest(
        config.run_dir,
        resolved_config=config.to_dict(),
        task_files={p.name: file_digest(p) for p in written},
        dataset_digests={lang: file_digest(config.datasets[lang]) for lang in config.source_languages},
        cache_digest=file_digest(config.cache_path),
    )
    return 0


def _task_files(config) -> list[Path]:
    names = [f"{kind}-{lang}2{config.target_language}.{ext}"
             for lang in config.source_languages for kind, ext in (("primary", "conll"), ("secondary", "jsonl"))]
    paths = [config.tasks_dir / n for n in names]
    missing = [str(p) for p in paths if not p.exists()]
    if missing:
        raise DataValidationError(f"task files missing (run 'build' first): {missing}")
    return paths


def cmd_train(args) -> int:
    config = _load_config(args)
    task_paths = _task_files(config)
    if Path(args.config).name == "manifest.json":
        # rerun from a manifest: task files must be exactly the recorded ones
        recorded = read_manifest(Path(args.config).parent).get("task_files", {})
        for path in task_paths:
            if recorded.get(path.name) not in (None, file_digest(path)):
                raise DataValidationError(f"{path} differs from the file recorded in the manifest")
    tasks = [load_task(p) for p in task_paths]
    target = load_language_data(config.datasets[config.target_language], config.target_language)
    validation, test = corpus.split_target(target, corpus.SplitSpec(config.validation_fraction, config.split_seed))

    result = multi_seed_run(config.train, tasks, validation, test, n_runs=config.n_runs,
                            backbone=config.backbone, output_dir=config.run_dir)
    reports_dir = config.run_dir / "reports"
    reports_dir.mkdir(parents=True, exist_ok=True)
    (reports_dir / "scores.json").write_text(json.dumps(result.to_dict(), indent=2, sort_keys=True) + "\n",
                                             encoding="utf-8")
    checkpoints = sorted(str(p) for p in (config.run_dir / "checkpoints").glob("run*"))
    update_manifest(
        config.run_dir,
        resolved_config=config.to_dict(),
        task_files={p.name: file_digest(p) for p in task_paths},
        dataset_digests={lang: file_digest(config.datasets[lang])
                         for lang in [*config.source_languages, config.target_language]},
        cache_digest=file_digest(config.cache_path),
        checkpoints=checkpoints,
        seeds=[r.seed for r in result.runs],
        scores=result.to_dict(),
    )
    print(format_table({f"seed {r.seed}": r.reports[MatchMode.WITHOUT_TYPE] for r in result.runs}
                       | {"mean": result.mean[MatchMode.WITHOUT_TYPE]}))
    if result.failures:
        print(f"{len(result.failures)} run(s) failed", file=sys.stderr)
    return 0


def cmd_evaluate(args) -> int:
    if not args.checkpoint:
        raise UsageError("at least one --checkpoint is required")
    test = corpus.read_conll(args.test, args.language)
    modes = list(MatchMode) if args.mode == "both" else [MatchMode(args.mode)]
    per_checkpoint = {}
    for path in args.checkpoint:
        ckpt = load_checkpoint(path)
        for seq in test:
            for label in seq.labels:
                ckpt.model.vocab.encode(label)
        per_checkpoint[path] = evaluate_model(ckpt.model, test)
    output = {
        "checkpoints": {p: {m.value: r[m].to_dict() for m in modes} for p, r in per_checkpoint.items()},
        "mean": {m.value: aggregate_runs([r[m] for r in per_checkpoint.values()]).to_dict() for m in modes},
    }
    if args.output:
        out = Path(args.output)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(json.dumps(output, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(json.dumps(output["mean"], indent=2, sort_keys=True))
    return 0


def cmd_report(args) -> int:
    run_dir = Path(args.output) if args.output else (Path(args.config).parent if args.config else Path("."))
    manifest = read_manifest(run_dir)
    if "scores" not in manifest:
        raise DataValidationError(f"no training scores recorded in {run_dir / 'manifest.json'}")
    scores = manifest["scores"]
    for mode in MatchMode:
        rows = {}
        for run in scores["runs"]:
            rows[f"seed {run['seed']}"] = _report_from_dict(run["reports"][mode.value])
        rows["mean"] = _report_from_dict(scores["mean"][mode.value])
        print(f"[{mode.value}]")
        print(format_table(rows))
    return 0


def _report_from_dict(d):
    return ScoreReport(d["tp"], d["fp"], d["fn"], d["precision"], d["recall"], d["f1"], MatchMode(d["mode"]))


def _load_config(args):
    if not args.config:
        raise UsageError("--config is required for this command")
    config = load_run_config(args.config)
    if args.output:
        config = replace(config, output_dir=str(Path(args.output).resolve()))
    if args.seed is not None:
        config = replace(config, train=replace(config.train, seed=args.seed))
    if args.offline:
        config = replace(config, offline=True)
    return config


# --------------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="run configuration (YAML/JSON) or a manifest.json")
    common.add_argument("--offline", action="store_true", default=argparse.SUPPRESS,
                        help="never call a translation service; every translation must be cached")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="override the training seed")
    common.add_argument("--output", default=argparse.SUPPRESS, help="output directory (or file for evaluate)")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    parser = argparse.ArgumentParser(prog="xltime", parents=[common],
                                     description="Cross-lingual temporal expression extraction with multi-task transfer.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", parents=[common], help="convert TimeML or CoNLL input to CoNLL plus statistics")
    p.add_argument("--input", required=True)
    p.add_argument("--format", required=True, choices=["timeml", "conll"])
    p.add_argument("--language", required=True)
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("build", parents=[common], help="build primary and secondary task files")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("train", parents=[common], help="train n_runs models and score them on the target test split")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", parents=[common], help="score checkpoints on a CoNLL test file")
    p.add_argument("--checkpoint", action="append", default=[])
    p.add_argument("--test", required=True)
    p.add_argument("--language", required=True)
    p.add_argument("--mode", choices=["with_type", "without_type", "both"], default="both")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", parents=[common], help="print per-run and mean scores of a run directory")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    for name, default in (("config", None), ("offline", False), ("seed", None), ("output", None), ("verbose", False)):
        if not hasattr(args, name):
            setattr(args, name, default)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"xltime: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except EvaluationMismatch as exc:
        print(f"xltime: evaluation mismatch: {exc}", file=sys.stderr)
        return EXIT_EVALUATION
    except (DataValidationError, OfflineCacheMiss) as exc:
        print(f"xltime: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TrainingError as exc:
        print(f"xltime: training failed: {exc}", file=sys.stderr)
        return EXIT_TRAINING


if __name__ == "__main__":
    sys.exit(main())
