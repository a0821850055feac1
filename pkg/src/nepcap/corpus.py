"""Parallel English/Nepali caption corpus: parsing, splitting, filtering, vocabulary."""

import csv
import hashlib
import io
import math
import re
from collections import Counter
from dataclasses import dataclass, replace

import numpy as np

from .errors import InsufficientDataError, InvalidIdError, MalformedLineError

SPLITS = ("train", "val", "test")
MAX_LEN = 10
CSV_FIELDS = ("video_id", "english", "nepali", "split")

PAD, BOS, EOS, UNK = "<pad>", "<bos>", "<eos>", "<unk>"
SPECIALS = (PAD, BOS, EOS, UNK)
PAD_ID, BOS_ID, EOS_ID, UNK_ID = 0, 1, 2, 3

_STRIP = re.compile(r"[।.,!?;:]")


@dataclass(frozen=True)
class CaptionRecord:
    video_id: str
    english: str
    nepali: str = ""
    split: str | None = None

    def __post_init__(self):
        if not self.video_id:
            raise ValueError("video_id must be non-empty")
        if self.split is not None and self.split not in SPLITS:
            raise ValueError(f"unknown split {self.split!r}")


def tokenize(text):
    """Strip the danda and ``.,!?;:``, then split on whitespace."""
    return _STRIP.sub(" ", text).split()


# -- annotations and CSV -----------------------------------------------------


def parse_annotations(raw_text):
    """Parse MSVD-style ``<video_id> <caption>`` lines into records."""
    records = []
    for line_no, line in enumerate(raw_text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        video_id, sep, caption = line.partition(" ")
        caption = caption.strip()
        if not sep or not caption:
            raise MalformedLineError(line_no, line)
        records.append(CaptionRecord(video_id, caption))
    return records


def write_corpus_csv(records, fp):
    writer = csv.writer(fp, lineterminator="\r\n")
    writer.writerow(CSV_FIELDS)
    for r in records:
        writer.writerow([r.video_id, r.english, r.nepali, r.split or ""])


def read_corpus_csv(fp):
    reader = csv.DictReader(fp)
    if tuple(reader.fieldnames or ()) != CSV_FIELDS:
        raise ValueError(f"corpus CSV header must be {','.join(CSV_FIELDS)}, got {reader.fieldnames}")
    return [
        CaptionRecord(row["video_id"], row["english"], row["nepali"], row["split"] or None)
        for row in reader
    ]


def save_corpus(records, path):
    with open(path, "w", encoding="utf-8", newline="") as fp:
        write_corpus_csv(records, fp)


def load_corpus(path):
    with open(path, encoding="utf-8", newline="") as fp:
        return read_corpus_csv(fp)


def corpus_to_string(records):
    buf = io.StringIO()
    write_corpus_csv(records, buf)
    return buf.getvalue()


# -- splitting and filtering -------------------------------------------------


def video_ids(records):
    """Distinct video ids in first-occurrence order."""
    return list(dict.fromkeys(r.video_id for r in records))


def split_by_video(records, ratios=(0.8, 0.1, 0.1), seed=0):
    """Assign every video (and so all its captions) to one split.

    Validation and test receive ``floor(ratio * n_videos)`` videos each and
    the remainder goes to train.  Videos are sorted before the seeded
    permutation so the result does not depend on record order.
    """
    if len(ratios) != 3 or any(r < 0 for r in ratios) or not math.isclose(sum(ratios), 1.0):
        raise ValueError(f"ratios must be three non-negative numbers summing to 1, got {ratios}")
    ids = sorted(video_ids(records))
    n = len(ids)
    if n < 3:
        raise InsufficientDataError(f"need at least 3 distinct videos to split, got {n}")
    n_val = math.floor(ratios[1] * n + 1e-9)
    n_test = math.floor(ratios[2] * n + 1e-9)
    order = np.random.default_rng(seed).permutation(n)
    assignment = {}
    for rank, idx in enumerate(order):
        if rank < n_val:
            assignment[ids[idx]] = "val"
        elif rank < n_val + n_test:
            assignment[ids[idx]] = "test"
        else:
            assignment[ids[idx]] = "train"
    return [replace(r, split=assignment[r.video_id]) for r in records]


def split_counts(records):
    """Number of distinct videos per split."""
    seen = {s: set() for s in SPLITS}
    for r in records:
        if r.split is not None:
            seen[r.split].add(r.video_id)
    return {s: len(v) for s, v in seen.items()}


def filter_rare(records, min_count=2):
    """Drop training captions that contain a token seen fewer than ``min_count`` times.

    Frequencies are counted over training captions only.  Dropping a caption
    lowers other tokens' counts, so the pass repeats until nothing changes;
    the result is therefore a fixpoint.  Validation and test records pass
    through untouched and keep their positions.
    """
    keep = [True] * len(records)
    while True:
        counts = Counter()
        for k, r in zip(keep, records):
            if k and r.split == "train":
                counts.update(tokenize(r.nepali))
        changed = False
        for i, r in enumerate(records):
            if keep[i] and r.split == "train" and any(counts[t] < min_count for t in tokenize(r.nepali)):
                keep[i] = False
                changed = True
        if not changed:
            return [r for k, r in zip(keep, records) if k]


# -- vocabulary ----------------------------------------------------------------


class Vocabulary:
    """Token/index map with ``<pad>``=0, ``<bos>``, ``<eos>``, ``<unk>`` reserved."""

    def __init__(self, tokens=()):
        self.index_to_token = list(SPECIALS)
        for tok in tokens:
            if tok in SPECIALS:
                continue
            self.index_to_token.append(tok)
        self.token_to_index = {t: i for i, t in enumerate(self.index_to_token)}
        if len(self.token_to_index) != len(self.index_to_token):
            raise ValueError("duplicate tokens in vocabulary")

    pad, bos, eos, unk = PAD_ID, BOS_ID, EOS_ID, UNK_ID

    @property
    def size(self):
        return len(self.index_to_token)

    def __len__(self):
        return self.size

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.index_to_token == other.index_to_token

    def __contains__(self, token):
        return token in self.token_to_index

    def fingerprint(self):
        """Hex SHA-256 of the index-ordered token list."""
        return hashlib.sha256("\n".join(self.index_to_token).encode("utf-8")).hexdigest()

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fp:
            fp.write("\n".join(self.index_to_token[len(SPECIALS):]))
            fp.write("\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fp:
            return cls(line.rstrip("\n") for line in fp if line.rstrip("\n"))


def build_vocab(records):
    """Vocabulary from training-split Nepali captions only.

    Tokens are ordered by descending frequency, ties broken by first
    occurrence.
    """
    counts = Counter()
    first_seen = {}
    for r in records:
        if r.split != "train":
            continue
        for tok in tokenize(r.nepali):
            counts[tok] += 1
            first_seen.setdefault(tok, len(first_seen))
    ordered = sorted(counts, key=lambda t: (-counts[t], first_seen[t]))
    return Vocabulary(ordered)


# -- encoding ------------------------------------------------------------------


@dataclass(frozen=True)
class TokenSequence:
    ids: tuple
    raw_length: int


def encode_caption(text, vocab, max_len=MAX_LEN):
    """``[bos, content..., eos, pad...]`` with ``max_len + 1`` ids in total."""
    if max_len < 2:
        raise ValueError("max_len must be at least 2")
    content = [vocab.token_to_index.get(t, UNK_ID) for t in tokenize(text)][: max_len - 1]
    ids = [BOS_ID, *content, EOS_ID]
    raw_length = len(ids)
    ids.extend([PAD_ID] * (max_len + 1 - raw_length))
    return TokenSequence(tuple(ids), raw_length)


def decode_ids(ids, vocab):
    words = []
    for i in ids:
        i = int(i)
        if not 0 <= i < vocab.size:
            raise InvalidIdError(f"token id {i} outside vocabulary of size {vocab.size}")
        if i in (PAD_ID, BOS_ID, EOS_ID):
            continue
        words.append(vocab.index_to_token[i])
    return " ".join(words)
