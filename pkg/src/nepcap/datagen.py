"""Teacher-forcing batches: cached video features paired with shifted caption tokens."""

import queue
import threading
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .corpus import BOS_ID, encode_caption
from .errors import InvalidIdError, MissingFeatureError


def one_hot(ids, V, dtype=np.float32):
    """``(len(ids), V)`` array with a single 1.0 per row at column ``ids[t]``."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= V):
        raise InvalidIdError(f"token id outside [0, {V})")
    out = np.zeros(ids.shape + (V,), dtype=dtype)
    np.put_along_axis(out, ids[..., None], 1.0, axis=-1)
    return out


@dataclass
class Batch:
    """One training batch.

    Token sequences are carried as integer ids; ``decoder_input`` and
    ``decoder_target`` expose the equivalent one-hot arrays.  Input drops the
    last token of each stored sequence and target drops the first.
    """

    encoder_input: np.ndarray  # (B, 30, D)
    input_ids: np.ndarray  # (B, 10)
    target_ids: np.ndarray  # (B, 10)
    vocab_size: int
    video_ids: tuple = ()

    def __len__(self):
        return len(self.input_ids)

    @cached_property
    def decoder_input(self):
        return one_hot(self.input_ids, self.vocab_size)

    @cached_property
    def decoder_target(self):
        return one_hot(self.target_ids, self.vocab_size)


def make_pairs(records, features, vocab):
    """One ``(video_id, TokenSequence)`` per caption, sorted by video then caption order."""
    missing = {r.video_id for r in records if r.video_id not in features}
    if missing:
        raise MissingFeatureError(missing)
    per_video = {}
    for r in records:
        per_video.setdefault(r.video_id, []).append(r.nepali)
    return [
        (vid, encode_caption(text, vocab))
        for vid in sorted(per_video)
        for text in per_video[vid]
    ]


class BatchGenerator:
    """Re-iterable source of batches over a fixed list of pairs.

    Each call to :meth:`epoch` yields every pair exactly once.  Shuffling
    permutes pairs (not videos) with a generator seeded by ``(seed, epoch)``,
    so an epoch's order never depends on how earlier epochs were consumed.
    Features are fetched from ``features`` one batch at a time.
    """

    def __init__(self, pairs, features, vocab, batch_size, seed=0, shuffle=True, prefetch=0):
        if batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        self.pairs = list(pairs)
        self.features = features
        self.vocab_size = vocab.size if hasattr(vocab, "size") else int(vocab)
        self.batch_size = batch_size
        self.seed = seed
        self.shuffle = shuffle
        self.prefetch = min(prefetch, 2)
        self._epoch = 0

    def __len__(self):
        return -(-len(self.pairs) // self.batch_size)

    def order(self, epoch):
        if not self.shuffle:
            return np.arange(len(self.pairs))
        return np.random.default_rng([self.seed, epoch]).permutation(len(self.pairs))

    def _build(self, chunk):
        vids = tuple(self.pairs[i][0] for i in chunk)
        seqs = np.array([self.pairs[i][1].ids for i in chunk], dtype=np.int64)
        loaded = {}
        for v in vids:
            if v not in loaded:
                loaded[v] = np.asarray(self.features[v], dtype=np.float32)
        enc = np.stack([loaded[v] for v in vids])
        return Batch(enc, seqs[:, :-1], seqs[:, 1:], self.vocab_size, vids)

    def _chunks(self, epoch):
        order = self.order(epoch)
        for start in range(0, len(order), self.batch_size):
            yield order[start : start + self.batch_size]

    def epoch(self, epoch=None):
        if epoch is None:
            epoch = self._epoch
            self._epoch += 1
        chunks = self._chunks(epoch)
        if not self.prefetch:
            return (self._build(c) for c in chunks)
        return _prefetched((self._build(c) for c in chunks), self.prefetch)

    def __iter__(self):
        return self.epoch()


def batches(pairs, features, vocab, batch_size, seed=0, shuffle=True):
    """Batches for a single epoch (epoch index 0)."""
    return BatchGenerator(pairs, features, vocab, batch_size, seed=seed, shuffle=shuffle).epoch(0)


_DONE = object()


def _prefetched(it, depth):
    """Run ``it`` on a background thread, at most ``depth`` items ahead."""
    q = queue.Queue(maxsize=depth)
    stop = threading.Event()

    def produce():
        try:
            for item in it:
                while not stop.is_set():
                    try:
                        q.put(item, timeout=0.1)
                        break
                    except queue.Full:
                        continue
                if stop.is_set():
                    return
            q.put(_DONE)
        except BaseException as exc:  # surfaced to the consumer
            q.put(exc)

    t = threading.Thread(target=produce, daemon=True)
    t.start()
    try:
        while True:
            item = q.get()
            if item is _DONE:
                return
            if isinstance(item, BaseException):
                raise item
            yield item
    finally:
        stop.set()


def check_shift(batch):
    """True when every target step equals the next input step and inputs start with bos."""
    return bool(
        (batch.input_ids[:, 0] == BOS_ID).all()
        and (batch.target_ids[:, :-1] == batch.input_ids[:, 1:]).all()
    )
