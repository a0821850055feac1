"""Corpus BLEU-1..4 and exact-match METEOR over multi-reference captions, on a 0-100 scale."""

import math
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .corpus import tokenize
from .errors import EmptyCorpusError, MissingFeatureError


def _check(corpus):
    if not corpus:
        raise EmptyCorpusError("cannot score an empty corpus")
    for cand, refs in corpus:
        if not refs:
            raise ValueError("every item needs at least one reference")


def _ngrams(tokens, n):
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu_stats(corpus, n_max=4):
    """Sufficient statistics: clipped matches and totals per order, candidate and reference lengths."""
    matches = [0] * n_max
    totals = [0] * n_max
    cand_len = ref_len = 0
    for cand, refs in corpus:
        cand = list(cand)
        cand_len += len(cand)
        ref_len += min((abs(len(r) - len(cand)), len(r)) for r in refs)[1]
        for n in range(1, n_max + 1):
            counts = _ngrams(cand, n)
            max_ref = Counter()
            for r in refs:
                for g, k in _ngrams(list(r), n).items():
                    if k > max_ref[g]:
                        max_ref[g] = k
            matches[n - 1] += sum(min(k, max_ref[g]) for g, k in counts.items())
            totals[n - 1] += sum(counts.values())
    return matches, totals, cand_len, ref_len


def bleu_from_stats(matches, totals, cand_len, ref_len):
    """BLEU-1..N on the 0-1 scale.

    A zero match count for an order is replaced by ``1 / (2 * total)``,
    where ``total`` is the candidate n-gram count of that order (taken as 1
    when the candidates have no n-grams of that order at all).
    """
    if cand_len == 0:
        return {n: 0.0 for n in range(1, len(matches) + 1)}
    bp = 1.0 if cand_len >= ref_len else math.exp(1.0 - ref_len / cand_len)
    scores = {}
    log_sum = 0.0
    for n, (m, t) in enumerate(zip(matches, totals), start=1):
        p = m / t if m > 0 else 1.0 / (2 * max(t, 1))
        log_sum += math.log(p)
        scores[n] = bp * math.exp(log_sum / n)
    return scores


def bleu(corpus, n_max=4, scale=100.0):
    """Corpus-level BLEU for orders 1..``n_max``; ``corpus`` is ``[(cand_tokens, [ref_tokens, ...]), ...]``."""
    _check(corpus)
    return {n: s * scale for n, s in bleu_from_stats(*bleu_stats(corpus, n_max)).items()}


# -- METEOR ----------------------------------------------------------------------


def align(candidate, reference):
    """Exact-match unigram alignment with the most matches and, among those, the fewest chunks.

    Returns ``(matches, chunks, pairs)`` with ``pairs`` the aligned
    ``(cand_pos, ref_pos)`` in candidate order.  Ties between equally good
    alignments go to the one using the leftmost reference positions.
    """
    cand = list(candidate)
    ref = list(reference)
    positions = {}
    for j, tok in enumerate(ref):
        positions.setdefault(tok, []).append(j)
    options = [positions.get(tok, []) for tok in cand]

    @lru_cache(maxsize=None)
    def best(i, prev, used):
        # score = (matches, continuations); continuations = adjacent pairs i-1->j-1, i->j
        if i == len(cand):
            return (0, 0), ()
        top, top_path = (-1, -1), ()
        for j in options[i]:
            if used >> j & 1:
                continue
            (m, cont), path = best(i + 1, j, used | (1 << j))
            score = (m + 1, cont + (1 if prev >= 0 and j == prev + 1 else 0))
            if score > top:
                top, top_path = score, (j,) + path
        skip, path = best(i + 1, -1, used)
        if skip > top:
            top, top_path = skip, (None,) + path
        return top, top_path

    (m, cont), path = best(0, -1, 0)
    pairs = [(i, j) for i, j in enumerate(path) if j is not None]
    return m, m - cont, pairs


def meteor_sentence(candidate, references, alpha=0.9, beta=3.0, gamma=0.5):
    """Best exact-match METEOR of ``candidate`` over ``references`` (0-1 scale).

    F is the recall-weighted harmonic mean ``P*R / (alpha*P + (1-alpha)*R)``,
    i.e. ``10PR / (R + 9P)`` at the default ``alpha``; the fragmentation
    penalty is ``gamma * (chunks / matches) ** beta``.
    """
    best = 0.0
    for ref in references:
        m, chunks, _ = align(candidate, ref)
        if m == 0:
            continue
        precision = m / len(candidate)
        recall = m / len(ref)
        f_mean = precision * recall / (alpha * precision + (1 - alpha) * recall)
        penalty = gamma * (chunks / m) ** beta
        best = max(best, f_mean * (1 - penalty))
    return best


def meteor(corpus, scale=100.0):
    """Mean per-item METEOR."""
    _check(corpus)
    return scale * sum(meteor_sentence(list(c), [list(r) for r in refs]) for c, refs in corpus) / len(corpus)


# -- reports -----------------------------------------------------------------------


@dataclass
class EvalReport:
    bleu: dict
    meteor: float
    label: str = ""
    extra: dict = field(default_factory=dict)
    candidates: dict = field(default_factory=dict, repr=False)

    def to_kv(self):
        out = {"label": self.label}
        out.update({f"bleu{n}": self.bleu[n] for n in sorted(self.bleu)})
        out["meteor"] = self.meteor
        out.update(self.extra)
        return out

    @classmethod
    def from_kv(cls, values):
        bleu_scores = {int(k[4:]): float(v) for k, v in values.items() if k.startswith("bleu") and k[4:].isdigit()}
        known = {"label", "meteor"} | {f"bleu{n}" for n in bleu_scores}
        extra = {k: v for k, v in values.items() if k not in known}
        return cls(bleu_scores, float(values["meteor"]), values.get("label", ""), extra)


def score_corpus(corpus, label=""):
    return EvalReport(bleu(corpus), meteor(corpus), label)


def score_texts(candidates, references, label=""):
    """``candidates``: id -> caption text; ``references``: id -> list of caption texts.

    Every candidate id must have references; ids are scored in sorted order.
    """
    missing = [vid for vid in candidates if not references.get(vid)]
    if missing:
        raise ValueError(f"no references for: {', '.join(sorted(missing))}")
    corpus = [(tokenize(candidates[vid]), [tokenize(r) for r in references[vid]]) for vid in sorted(candidates)]
    return score_corpus(corpus, label)


def evaluate_model(model, test_records, features, vocab, label="", max_steps=10):
    """Greedy-decode one caption per test video and score it against all its captions."""
    from .seq2seq.decode import greedy_decode_many

    if hasattr(model, "to_model"):
        model.check_vocab(vocab)
        model = model.to_model()
    refs = {}
    for r in test_records:
        refs.setdefault(r.video_id, []).append(r.nepali)
    if not refs:
        raise EmptyCorpusError("test split is empty")
    ids = sorted(refs)
    missing = [v for v in ids if v not in features]
    if missing:
        raise MissingFeatureError(missing)
    captions = greedy_decode_many(model, np.stack([features[v] for v in ids]), vocab, max_steps)
    report = score_texts(dict(zip(ids, captions)), refs, label)
    report.candidates = dict(zip(ids, captions))
    return report
