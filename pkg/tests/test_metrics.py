import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import brute_alignment, brute_bleu, brute_meteor, random_corpora, random_corpus

from nepcap.corpus import CaptionRecord, Vocabulary
from nepcap.errors import EmptyCorpusError, MissingFeatureError
from nepcap.metrics import (
    EvalReport,
    align,
    bleu,
    bleu_stats,
    evaluate_model,
    meteor,
    meteor_sentence,
    score_corpus,
    score_texts,
)
from nepcap.seq2seq import Checkpoint, ModelConfig, build_model

tok = st.sampled_from(list("abcd"))
sentence = st.lists(tok, min_size=0, max_size=8)
item = st.tuples(sentence, st.lists(st.lists(tok, min_size=1, max_size=8), min_size=1, max_size=3))
corpora = st.lists(item, min_size=1, max_size=5)


# -- BLEU ----------------------------------------------------------------------------------


def test_bleu_perfect():
    corpus = [("a b c d e".split(), ["a b c d e".split(), "x y".split()]), ("p q r s".split(), ["p q r s".split()])]
    assert bleu(corpus) == pytest.approx({1: 100, 2: 100, 3: 100, 4: 100})


def test_bleu_disjoint_small():
    # smoothed to 1/(2*3) on the 0-1 scale
    score = bleu([("x y z".split(), ["a b c".split()])], scale=1)
    assert score[1] == pytest.approx(1 / 6) and 0 < score[1] < 1


def test_bleu_worked_example():
    # "a b c" vs "a b c d": p_n = 1 for n<=3, BLEU-4 smoothed with 1/(2*1)
    score = bleu([("a b c".split(), ["a b c d".split()])], scale=1)
    bp = np.exp(1 - 4 / 3)
    assert score[1] == pytest.approx(bp, abs=1e-12)
    assert score[3] == pytest.approx(bp, abs=1e-12)
    assert score[4] == pytest.approx(bp * 0.5**0.25, abs=1e-12)
    assert score == pytest.approx(dict(enumerate(brute_bleu([("a b c".split(), ["a b c d".split()])]), 1)), abs=1e-9)


def test_bleu_clipping_and_closest_ref_length():
    matches, totals, c, r = bleu_stats([("the the the".split(), ["the cat".split(), "the the x y z".split()])])
    assert matches[0] == 2 and totals[0] == 3 and c == 3
    # candidate length 3: refs 2 and 5 -> 2 is closer
    assert r == 2
    _, _, _, r = bleu_stats([("a b c".split(), ["a b".split(), "a b c d".split()])])
    assert r == 2  # tie -> shorter


def test_bleu_empty_candidates():
    assert bleu([([], [["a"]])]) == {1: 0.0, 2: 0.0, 3: 0.0, 4: 0.0}


def test_bleu_errors():
    with pytest.raises(EmptyCorpusError):
        bleu([])
    with pytest.raises(ValueError):
        bleu([(["a"], [])])


@pytest.mark.parametrize("corpus", random_corpora(100, seed=1234))
def test_bleu_oracle(corpus):
    got = bleu(corpus, scale=1.0)
    want = brute_bleu(corpus)
    assert max(abs(got[n] - want[n - 1]) for n in range(1, 5)) <= 1e-9


@settings(max_examples=200, deadline=None)
@given(corpora)
def test_bleu_bounds_and_permutation(corpus):
    s = bleu(corpus)
    assert all(0 <= v <= 100 for v in s.values())
    shuffled = list(corpus)
    random.Random(0).shuffle(shuffled)
    assert bleu(shuffled) == pytest.approx(s, abs=1e-9)


@settings(max_examples=200, deadline=None)
@given(corpora, st.integers(0, 4), st.lists(tok, min_size=1, max_size=8))
def test_reference_monotonicity(corpus, which, extra):
    which %= len(corpus)
    grown = list(corpus)
    cand, refs = grown[which]
    grown[which] = (cand, refs + [extra])
    m0, _, _, r0 = bleu_stats(corpus)
    m1, _, _, r1 = bleu_stats(grown)
    assert all(b >= a for a, b in zip(m0, m1))
    if r0 == r1:
        before, after = bleu(corpus), bleu(grown)
        assert all(after[n] >= before[n] - 1e-9 for n in range(1, 5))


def test_reference_addition_can_lower_bleu_through_brevity():
    # the added reference moves the closest length from 2 to 5 (candidate length 4)
    cand = "a b c d".split()
    before = bleu([(cand, [["x", "y"]])])
    after = bleu([(cand, [["x", "y"], "p q r s t".split()])])
    assert after[1] < before[1]


def test_order_monotonicity_counterexample():
    # clipped unigram precision 2/3, bigram precision 2/2: BLEU-2 exceeds BLEU-1
    s = bleu([("d c d".split(), ["c d c".split()])], scale=1)
    assert s[1] == pytest.approx(2 / 3)
    assert s[2] == pytest.approx((2 / 3) ** 0.5)
    assert s[2] > s[1]


# -- METEOR ------------------------------------------------------------------------------------


def test_meteor_exact_ten_tokens():
    c = [f"w{i}" for i in range(10)]
    assert meteor([(c, [c])]) == pytest.approx(99.95, abs=1e-12)


def test_meteor_swapped_pair():
    assert meteor([("b a".split(), ["a b".split()])]) == pytest.approx(50.0, abs=1e-12)


def test_meteor_zero_matches():
    assert meteor([("x y".split(), ["a b".split()])]) == 0.0
    assert meteor([([], ["a b".split()])]) == 0.0


def test_meteor_best_reference_and_mean():
    corpus = [("a b".split(), ["x".split(), "a b".split()]), ("q".split(), ["z".split()])]
    assert meteor(corpus) == pytest.approx((1 - 0.5 * 0.5**3) * 100 / 2)


def test_align_prefers_fewest_chunks():
    # greedy leftmost matching of "a" would give 2 chunks; the optimum is 1
    m, chunks, pairs = align("a b".split(), "a x a b".split())
    assert (m, chunks) == (2, 1) and pairs == [(0, 2), (1, 3)]


def test_align_leftmost_tie():
    m, chunks, pairs = align(["a"], "a a".split())
    assert (m, chunks, pairs) == (1, 1, [(0, 0)])


@settings(max_examples=300, deadline=None)
@given(sentence, st.lists(tok, min_size=1, max_size=8))
def test_align_oracle(cand, ref):
    m, chunks, pairs = align(cand, ref)
    assert (m, chunks) == brute_alignment(cand, ref)
    assert len(pairs) == m and all(cand[i] == ref[j] for i, j in pairs)


@pytest.mark.parametrize("corpus", random_corpora(50, seed=99))
def test_meteor_oracle(corpus):
    assert meteor(corpus, scale=1.0) == pytest.approx(brute_meteor(corpus), abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(corpora)
def test_meteor_bounds(corpus):
    assert 0 <= meteor(corpus) <= 100


def test_meteor_sentence_direct():
    assert meteor_sentence(["a"], [["a"]]) == pytest.approx(0.5)


# -- reports and model evaluation ---------------------------------------------------------------


def test_score_texts_and_report_kv():
    rep = score_texts({"v1": "क ख ग", "v2": "घ"}, {"v1": ["क ख ग"], "v2": ["घ", "ङ"]}, label="x")
    assert rep.bleu[1] == pytest.approx(100) and rep.meteor > 0
    kv = rep.to_kv()
    assert kv["label"] == "x" and set(kv) >= {"bleu1", "bleu2", "bleu3", "bleu4", "meteor"}
    back = EvalReport.from_kv({k: str(v) for k, v in kv.items()})
    assert back.bleu == rep.bleu and back.meteor == rep.meteor and back.label == "x"
    with pytest.raises(ValueError):
        score_texts({"v3": "क"}, {"v1": ["क"]})


def test_score_corpus_matches_parts():
    corpus = random_corpus(random.Random(5), min_len=1)
    rep = score_corpus(corpus)
    assert rep.bleu == bleu(corpus) and rep.meteor == meteor(corpus)


VOCAB = Vocabulary(["क", "ख", "ग"])


def _constant_model():
    m = build_model(ModelConfig("precomputed", "lstm", 4, VOCAB.size, encoder_dim=3))
    m.params["head.W"][:] = 0
    m.params["head.b"][:] = 0
    m.params["head.b"][4] = 5  # always emit "क" until the length cap
    return m


def test_evaluate_model():
    feats = {"a": np.zeros((30, 3)), "b": np.ones((30, 3))}
    recs = [CaptionRecord("a", "", "क क क क क क क क क", "test"), CaptionRecord("b", "", "ख", "test")]
    rep = evaluate_model(_constant_model(), recs, feats, VOCAB, label="t")
    assert rep.candidates == {"a": " ".join(["क"] * 9), "b": " ".join(["क"] * 9)}
    assert rep.label == "t" and 0 < rep.bleu[1] < 100


def test_evaluate_model_checkpoint_and_errors():
    ck = Checkpoint.from_model(_constant_model(), VOCAB.fingerprint())
    feats = {"a": np.zeros((30, 3))}
    recs = [CaptionRecord("a", "", " ".join(["क"] * 9), "test")]
    assert evaluate_model(ck, recs, feats, VOCAB).bleu[1] == pytest.approx(100)
    with pytest.raises(EmptyCorpusError):
        evaluate_model(ck, [], feats, VOCAB)
    with pytest.raises(MissingFeatureError):
        evaluate_model(ck, [CaptionRecord("zz", "", "क", "test")], feats, VOCAB)
