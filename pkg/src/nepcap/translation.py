"""English to Nepali caption translation with a persistent append-only cache."""

import hashlib
import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

from .errors import MissingTranslationError, TranslationFailedError

log = logging.getLogger(__name__)


def english_key(text):
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _clean(text):
    return " ".join(text.split())


class TranslationCache:
    """Maps English text to Nepali, keyed by the SHA-256 of the English.

    When ``path`` is given the cache is backed by a UTF-8 file of
    ``<hex-hash>\\t<nepali>`` lines; new entries are appended and flushed
    under a lock, so concurrent writers never interleave a record.  On load a
    later line for the same hash wins.
    """

    def __init__(self, path=None):
        self.path = path
        self._data = {}
        self._lock = threading.Lock()
        if path is not None and os.path.exists(path):
            with open(path, encoding="utf-8") as fp:
                for line in fp:
                    key, sep, value = line.rstrip("\n").partition("\t")
                    if sep and value:
                        self._data[key] = value

    def __len__(self):
        return len(self._data)

    def __contains__(self, english):
        return english_key(english) in self._data

    def get(self, english):
        return self._data.get(english_key(english))

    def put(self, english, nepali):
        nepali = _clean(nepali)
        key = english_key(english)
        with self._lock:
            if self._data.get(key) == nepali:
                return
            self._data[key] = nepali
            if self.path is not None:
                os.makedirs(os.path.dirname(os.path.abspath(self.path)), exist_ok=True)
                with open(self.path, "a", encoding="utf-8") as fp:
                    fp.write(f"{key}\t{nepali}\n")
                    fp.flush()

    def seed_from_records(self, records):
        """Load already-translated records (e.g. a pre-translated CSV)."""
        for r in records:
            if r.nepali and r.english not in self:
                self.put(r.english, r.nepali)


class RateLimiter:
    """Allows at most ``rate`` calls per second across threads."""

    def __init__(self, rate=None, clock=time.monotonic, sleep=time.sleep):
        self.interval = 1.0 / rate if rate else 0.0
        self._next = 0.0
        self._lock = threading.Lock()
        self._clock = clock
        self._sleep = sleep

    def wait(self):
        if not self.interval:
            return
        with self._lock:
            now = self._clock()
            start = max(now, self._next)
            self._next = start + self.interval
        if start > now:
            self._sleep(start - now)


def translate_corpus(
    records,
    translator=None,
    cache=None,
    *,
    max_attempts=3,
    backoff=0.5,
    max_workers=1,
    rate_limit=None,
    sleep=time.sleep,
):
    """Fill in the ``nepali`` field of every record.

    ``translator`` is any callable ``english -> nepali``; ``None`` means
    offline mode, where a cache miss raises ``MissingTranslationError``.
    Each distinct English string is requested once; a failing request is
    retried up to ``max_attempts`` times with exponential backoff before
    ``TranslationFailedError`` is raised.
    """
    if cache is None:
        cache = TranslationCache()
    first_video = {}
    for r in records:
        first_video.setdefault(r.english, r.video_id)
    misses = [e for e in first_video if cache.get(e) is None]

    if misses and translator is None:
        e = misses[0]
        raise MissingTranslationError(first_video[e], e)

    limiter = RateLimiter(rate_limit, sleep=sleep)

    def fetch(english):
        err = None
        for attempt in range(max_attempts):
            limiter.wait()
            try:
                out = _clean(translator(english) or "")
            except Exception as exc:  # client errors are retried
                err = exc
            else:
                if out:
                    cache.put(english, out)
                    return
                err = ValueError("empty translation")
            if attempt + 1 < max_attempts:
                sleep(backoff * 2**attempt)
        raise TranslationFailedError(first_video[english], err)

    if misses:
        log.info("translating %d uncached captions", len(misses))
        if max_workers <= 1:
            for e in misses:
                fetch(e)
        else:
            with ThreadPoolExecutor(max_workers=max_workers) as pool:
                for fut in [pool.submit(fetch, e) for e in misses]:
                    fut.result()

    return [replace(r, nepali=cache.get(r.english)) for r in records]


class GoogleTranslateClient:
    """Callable wrapper around the ``googletrans`` package (imported lazily)."""

    def __init__(self, src="en", dest="ne"):
        try:
            from googletrans import Translator
        except ImportError as exc:
            raise RuntimeError("install 'googletrans' to translate online") from exc
        self._translator = Translator()
        self.src = src
        self.dest = dest

    def __call__(self, text):
        return self._translator.translate(text, src=self.src, dest=self.dest).text
