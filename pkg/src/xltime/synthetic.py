"""Synthetic language pairs for desk-scale transfer experiments.

Two artificial languages share a handful of words (numerals, names) but
otherwise use disjoint vocabularies. Temporal expressions follow a fixed
grammar in each language, and a word-by-word dictionary gives the
"machine translation" from source to target, written out as a translation
fixture so the secondary task can be built offline.
"""
from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import IOLabel, LabeledSequence, TimexType, write_conll
from .translation import TranslationCache

_CONSONANTS = "bdfgklmnprstvz"
_VOWELS = "aeiou"


def _make_words(rng: random.Random, n: int, taken: set[str]) -> list[str]:
    words = []
    while len(words) < n:
        word = "".join(rng.choice(_CONSONANTS) + rng.choice(_VOWELS) for _ in range(2))
        if word not in taken:
            taken.add(word)
            words.append(word)
    return words


@dataclass
class SyntheticLanguage:
    code: str
    fillers: list[str]
    # single-word expressions by type
    timex_words: dict[TimexType, list[str]]
    # duration units, used as "<numeral> <unit>"
    units: list[str]


@dataclass
class SyntheticPair:
    source: SyntheticLanguage
    target: SyntheticLanguage
    shared_fillers: list[str]
    numerals: list[str]
    seed: int
    numeral_rate: float = 0.45
    dictionary: dict[str, str] = field(default_factory=dict)

    @property
    def pieces(self) -> list[str]:
        """Subword lexicon covering both languages, one piece per word."""
        words = set(self.shared_fillers) | set(self.numerals)
        for lang in (self.source, self.target):
            words |= set(lang.fillers) | set(lang.units)
            for group in lang.timex_words.values():
                words |= set(group)
        return sorted(words)

    def backbone_spec(self, dim: int = 8, hidden: int = 16) -> dict:
        return {"kind": "toy", "dim": dim, "hidden": hidden, "vocab_size": 64, "window": 1, "pieces": self.pieces}

    def sentences(self, language: SyntheticLanguage, n_docs: int, sents_per_doc: int, seed: int,
                  timex_rate: float = 0.5) -> list[LabeledSequence]:
        rng = random.Random(seed)
        out = []
        for d in range(n_docs):
            doc_id = f"{language.code}-{seed}-{d:03d}"
            for s in range(sents_per_doc):
                out.append(self._sentence(language, rng, timex_rate, doc_id, s))
        return out

    def _expression(self, language: SyntheticLanguage, rng: random.Random) -> tuple[list[str], TimexType]:
        roll = rng.random()
        if roll < self.numeral_rate * 0.55:
            return [rng.choice(self.numerals)], TimexType.DATE
        if roll < self.numeral_rate:
            return [rng.choice(self.numerals), rng.choice(language.units)], TimexType.DURATION
        timex_type = rng.choice([TimexType.DATE, TimexType.TIME, TimexType.SET])
        return [rng.choice(language.timex_words[timex_type])], timex_type

    def _sentence(self, language, rng, timex_rate, doc_id, sent_index) -> LabeledSequence:
        n_fill = rng.randint(3, 7)
        vocab = language.fillers + self.shared_fillers
        tokens = [rng.choice(vocab) for _ in range(n_fill)]
        labels = [IOLabel("O")] * n_fill
        if rng.random() < timex_rate:
            for _ in range(rng.choice([1, 1, 2])):
                words, timex_type = self._expression(language, rng)
                # insert only between existing words so expressions never touch
                slots = [i for i in range(len(tokens) + 1)
                         if (i == 0 or labels[i - 1].prefix == "O") and (i == len(tokens) or labels[i].prefix == "O")]
                at = rng.choice(slots)
                expr_labels = [IOLabel("B", timex_type)] + [IOLabel("I", timex_type)] * (len(words) - 1)
                tokens[at:at] = words
                labels[at:at] = expr_labels
        return LabeledSequence(tuple(tokens), tuple(labels), language.code, doc_id, sent_index)

    def translate_text(self, text: str) -> str:
        return " ".join(self.dictionary.get(tok, tok) for tok in text.split())

    def write_translation_fixture(self, sequences, path: str | Path) -> Path:
        """Write source->target translations of *sequences* in the cache/fixture layout."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        seen = set()
        with path.open("w", encoding="utf-8") as fh:
            for seq in sequences:
                if seq.text in seen:
                    continue
                seen.add(seq.text)
                record = {"src": seq.text, "src_lang": self.source.code, "tgt_lang": self.target.code,
                          "text": self.translate_text(seq.text), "provider": "synthetic", "ts": "1970-01-01T00:00:00+00:00"}
                fh.write(json.dumps(record, sort_keys=True) + "\n")
        return path

    def translation_cache(self, sequences) -> TranslationCache:
        cache = TranslationCache()
        for seq in sequences:
            cache.put(seq.text, self.source.code, self.target.code, self.translate_text(seq.text), "synthetic")
        return cache


def make_pair(seed: int = 0, source_code: str = "xs", target_code: str = "xt", n_fillers: int = 6,
              n_shared: int = 8, n_numerals: int = 5, n_timex: int = 2, n_units: int = 2,
              numeral_rate: float = 0.45) -> SyntheticPair:
    """Build a source/target language pair and the word-level dictionary between them."""
    rng = random.Random(seed)
    taken: set[str] = set()

    def language(code):
        return SyntheticLanguage(
            code=code,
            fillers=_make_words(rng, n_fillers, taken),
            timex_words={t: _make_words(rng, n_timex, taken) for t in (TimexType.DATE, TimexType.TIME, TimexType.SET)},
            units=_make_words(rng, n_units, taken),
        )

    source, target = language(source_code), language(target_code)
    shared = _make_words(rng, n_shared, taken)
    numerals = [str(n) for n in rng.sample(range(10, 100), n_numerals)]
    pair = SyntheticPair(source, target, shared, numerals, seed, numeral_rate)
    for a, b in zip(source.fillers, target.fillers):
        pair.dictionary[a] = b
    for a, b in zip(source.units, target.units):
        pair.dictionary[a] = b
    for t in source.timex_words:
        for a, b in zip(source.timex_words[t], target.timex_words[t]):
            pair.dictionary[a] = b
    return pair


def write_pair_corpus(pair: SyntheticPair, directory: str | Path, n_source_docs: int = 30,
                      n_target_docs: int = 30, sents_per_doc: int = 8) -> dict[str, Path]:
    """Write source and target CoNLL files plus the translation fixture."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    src = pair.sentences(pair.source, n_source_docs, sents_per_doc, seed=pair.seed * 1000 + 1)
    tgt = pair.sentences(pair.target, n_target_docs, sents_per_doc, seed=pair.seed * 1000 + 2)
    paths = {
        pair.source.code: directory / f"{pair.source.code}.conll",
        pair.target.code: directory / f"{pair.target.code}.conll",
        "translations": directory / "translations.jsonl",
    }
    write_conll(paths[pair.source.code], src)
    write_conll(paths[pair.target.code], tgt)
    pair.write_translation_fixture(src, paths["translations"])
    return paths


def write_demo_project(directory: str | Path, seed: int = 0) -> Path:
    """Write a synthetic pair plus a ``run.yaml`` that the CLI can use as is."""
    import yaml

    directory = Path(directory)
    pair = make_pair(seed)
    write_pair_corpus(pair, directory / "data")
    config = {
        "target_language": pair.target.code,
        "source_languages": [pair.source.code],
        "datasets": {pair.source.code: f"data/{pair.source.code}.conll",
                     pair.target.code: f"data/{pair.target.code}.conll"},
        "output_dir": "runs/demo",
        "backbone": pair.backbone_spec(),
        "train": {"learning_rate": 0.01, "epochs": 30, "batch_size": 16, "seed": 0},
        "translation": {"provider": "fixture", "fixture": "data/translations.jsonl"},
        "n_runs": 5,
    }
    path = directory / "run.yaml"
    path.write_text(yaml.safe_dump(config, sort_keys=False), encoding="utf-8")
    return path


if __name__ == "__main__":
    import argparse

    parser = argparse.ArgumentParser(description="write a synthetic language pair and a toy run config")
    parser.add_argument("directory")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    print(write_demo_project(args.directory, args.seed))
