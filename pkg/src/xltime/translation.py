"""Machine translation clients and the persistent JSON-lines translation cache."""
from __future__ import annotations

import json
import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Protocol

import requests

from .errors import DataValidationError, OfflineCacheMiss, TranslationError

logger = logging.getLogger(__name__)

API_KEY_ENV = "XLTIME_TRANSLATE_API_KEY"
GOOGLE_ENDPOINT = "https://translation.googleapis.com/language/translate/v2"

CacheKey = tuple[str, str, str]


@dataclass(frozen=True)
class TranslationCacheEntry:
    src: str
    src_lang: str
    tgt_lang: str
    text: str
    provider: str
    ts: str

    @property
    def key(self) -> CacheKey:
        return (self.src, self.src_lang, self.tgt_lang)


class TranslationCache:
    """Append-only translation store backed by a JSON-lines file.

    Lookups are exact matches on ``(source text, source lang, target lang)``.
    Writes are serialized by a lock; the first entry for a key wins.
    """

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self._entries: dict[CacheKey, TranslationCacheEntry] = {}
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            self._load()

    def _load(self) -> None:
        with self.path.open(encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    entry = TranslationCacheEntry(**json.loads(line))
                except (json.JSONDecodeError, TypeError) as exc:
                    raise DataValidationError(f"{self.path}:{lineno}: bad cache entry: {exc}") from None
                self._entries.setdefault(entry.key, entry)

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, key: CacheKey) -> bool:
        return key in self._entries

    def get(self, text: str, source: str, target: str) -> str | None:
        entry = self._entries.get((text, source, target))
        return None if entry is None else entry.text

    def put(self, text: str, source: str, target: str, translation: str, provider: str) -> TranslationCacheEntry:
        with self._lock:
            existing = self._entries.get((text, source, target))
            if existing is not None:
                return existing
            entry = TranslationCacheEntry(
                src=text,
                src_lang=source,
                tgt_lang=target,
                text=translation,
                provider=provider,
                ts=datetime.now(timezone.utc).isoformat(timespec="seconds"),
            )
            self._entries[entry.key] = entry
            if self.path is not None:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with self.path.open("a", encoding="utf-8") as fh:
                    fh.write(json.dumps(entry.__dict__, ensure_ascii=False) + "\n")
            return entry

    def entries(self) -> list[TranslationCacheEntry]:
        return list(self._entries.values())


class TranslationClient(Protocol):
    provider: str

    def translate(self, text: str, source: str, target: str) -> str: ...


class FixtureTranslationClient:
    """Serves translations from a fixture file (same JSON-lines layout as the cache)."""

    provider = "fixture"

    def __init__(self, path: str | Path):
        self._table = TranslationCache(path)
        self.calls = 0

    def translate(self, text: str, source: str, target: str) -> str:
        self.calls += 1
        result = self._table.get(text, source, target)
        if result is None:
            raise TranslationError(f"fixture has no translation for {source}->{target}: {text!r}")
        return result


class GoogleTranslateClient:
    """Client for the Google Cloud Translation v2 REST API.

    The API key is read from ``XLTIME_TRANSLATE_API_KEY`` unless given.
    """

    provider = "google-v2"

    def __init__(self, api_key: str | None = None, endpoint: str = GOOGLE_ENDPOINT,
                 retries: int = 3, backoff: float = 1.0, timeout: float = 30.0, session=None):
        self.api_key = api_key or os.environ.get(API_KEY_ENV)
        if not self.api_key:
            raise TranslationError(f"no API key: set {API_KEY_ENV}")
        self.endpoint = endpoint
        self.retries = retries
        self.backoff = backoff
        self.timeout = timeout
        self.session = session or requests.Session()

    def translate(self, text: str, source: str, target: str) -> str:
        payload = {"q": text, "source": source, "target": target, "format": "text"}
        last_error = None
        for attempt in range(self.retries + 1):
            try:
                response = self.session.post(
                    self.endpoint, params={"key": self.api_key}, data=payload, timeout=self.timeout
                )
                if response.status_code == 200:
                    return response.json()["data"]["translations"][0]["translatedText"]
                last_error = f"HTTP {response.status_code}: {response.text[:200]}"
                if response.status_code < 500 and response.status_code != 429:
                    break
            except (requests.RequestException, KeyError, IndexError, ValueError) as exc:
                last_error = repr(exc)
            if attempt < self.retries:
                time.sleep(self.backoff * 2 ** attempt)
        raise TranslationError(f"translation failed for {text!r}: {last_error}")


def translate(text: str, source: str, target: str, client: TranslationClient | None,
              cache: TranslationCache) -> str:
    """Translate through the cache; the client is only called on a miss."""
    cached = cache.get(text, source, target)
    if cached is not None:
        return cached
    if client is None:
        raise OfflineCacheMiss([(text, source, target)])
    result = client.translate(text, source, target)
    return cache.put(text, source, target, result, client.provider).text


def translate_many(texts: Iterable[str], source: str, target: str, client: TranslationClient | None,
                   cache: TranslationCache, max_workers: int = 4) -> dict[str, str | TranslationError]:
    """Translate unique texts concurrently; failures are returned, not raised.

    With ``client=None`` (offline) every miss is collected and reported at once.
    """
    unique = list(dict.fromkeys(texts))
    misses = [t for t in unique if cache.get(t, source, target) is None]
    if misses and client is None:
        raise OfflineCacheMiss([(t, source, target) for t in misses])

    results: dict[str, str | TranslationError] = {t: cache.get(t, source, target) for t in unique}

    def work(text):
        try:
            return text, translate(text, source, target, client, cache)
        except TranslationError as exc:
            logger.warning("skipping sentence: %s", exc)
            return text, exc

    if misses:
        with ThreadPoolExecutor(max_workers=max(1, max_workers)) as pool:
            for text, value in pool.map(work, misses):
                results[text] = value
    return results
