from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nepcap.corpus import (
    BOS_ID,
    EOS_ID,
    PAD_ID,
    UNK_ID,
    CaptionRecord,
    Vocabulary,
    build_vocab,
    corpus_to_string,
    decode_ids,
    encode_caption,
    filter_rare,
    load_corpus,
    parse_annotations,
    save_corpus,
    split_by_video,
    split_counts,
    tokenize,
)
from nepcap.errors import InsufficientDataError, InvalidIdError, MalformedLineError


def _records(n_videos, per_video=2):
    return [CaptionRecord(f"v{i:04d}", f"cap {j}", f"शब्द{j}", None) for i in range(n_videos) for j in range(per_video)]


# -- parse_annotations ---------------------------------------------------------


def test_parse_single_line():
    assert parse_annotations("vidA a man runs") == [CaptionRecord("vidA", "a man runs")]


def test_parse_empty():
    assert parse_annotations("") == []
    assert parse_annotations("\n  \n") == []


def test_parse_missing_caption_names_line():
    with pytest.raises(MalformedLineError) as exc:
        parse_annotations("vidA ok caption\nvidB")
    assert exc.value.line_no == 2


def test_parse_preserves_order_and_spaces():
    text = "b x  y\na z\nb w"
    recs = parse_annotations(text)
    assert [(r.video_id, r.english) for r in recs] == [("b", "x  y"), ("a", "z"), ("b", "w")]
    assert all(r.nepali == "" and r.split is None for r in recs)


def test_record_validation():
    with pytest.raises(ValueError):
        CaptionRecord("", "x")
    with pytest.raises(ValueError):
        CaptionRecord("a", "x", split="dev")


# -- CSV -------------------------------------------------------------------------


def test_csv_round_trip(tmp_path):
    recs = [
        CaptionRecord("v1", 'a "quoted", caption', "एक मान्छे दौडिन्छ", "train"),
        CaptionRecord("v2", "line\nbreak", "", None),
    ]
    path = tmp_path / "c.csv"
    save_corpus(recs, path)
    assert load_corpus(path) == recs
    assert corpus_to_string(recs).startswith("video_id,english,nepali,split\r\n")


def test_csv_bad_header(tmp_path):
    path = tmp_path / "c.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        load_corpus(path)


# -- split ------------------------------------------------------------------------


@pytest.mark.parametrize("n,expected", [(1970, (1576, 197, 197)), (10, (8, 1, 1)), (3, (3, 0, 0)), (20, (16, 2, 2))])
def test_split_counts(n, expected):
    counts = split_counts(split_by_video(_records(n, 1), seed=3))
    assert (counts["train"], counts["val"], counts["test"]) == expected


def test_split_deterministic_and_record_order_free():
    recs = _records(50)
    a = split_by_video(recs, seed=7)
    b = split_by_video(list(reversed(recs)), seed=7)
    assert {(r.video_id, r.split) for r in a} == {(r.video_id, r.split) for r in b}
    assert a == split_by_video(recs, seed=7)
    assert a != split_by_video(recs, seed=8)


@settings(max_examples=50, deadline=None)
@given(st.integers(3, 200), st.integers(1, 4), st.integers(0, 10_000))
def test_split_video_consistency(n, per, seed):
    out = split_by_video(_records(n, per), seed=seed)
    by_video = {}
    for r in out:
        by_video.setdefault(r.video_id, set()).add(r.split)
    assert all(len(s) == 1 for s in by_video.values())
    c = split_counts(out)
    assert c["val"] == (n * 10) // 100 and c["test"] == (n * 10) // 100
    assert sum(c.values()) == n


def test_split_too_few_videos():
    with pytest.raises(InsufficientDataError):
        split_by_video(_records(2, 5))


def test_split_bad_ratios():
    with pytest.raises(ValueError):
        split_by_video(_records(5), ratios=(0.5, 0.5, 0.5))


# -- filter_rare ---------------------------------------------------------------------


def test_filter_drops_captions_with_rare_tokens():
    recs = [
        CaptionRecord("a", "", "क ख", "train"),
        CaptionRecord("a", "", "क ख", "train"),
        CaptionRecord("b", "", "क ग", "train"),
        CaptionRecord("c", "", "ग घ", "val"),
    ]
    out = filter_rare(recs)
    assert out == [recs[0], recs[1], recs[3]]


def test_filter_cascades_to_fixpoint():
    recs = [CaptionRecord("v", "", t, "train") for t in ("a b", "b c", "c d")]
    assert filter_rare(recs) == []


words = st.sampled_from(list("abcdef"))
captions = st.lists(words, min_size=1, max_size=5).map(" ".join)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(captions, st.sampled_from(["train", "train", "val", "test"])), max_size=25))
def test_filter_properties(rows):
    recs = [CaptionRecord(f"v{i}", "", text, split) for i, (text, split) in enumerate(rows)]
    out = filter_rare(recs)
    assert filter_rare(out) == out
    assert [r for r in out if r.split != "train"] == [r for r in recs if r.split != "train"]
    counts = Counter(t for r in out if r.split == "train" for t in tokenize(r.nepali))
    assert all(c >= 2 for c in counts.values())


# -- vocabulary ---------------------------------------------------------------------


def test_vocab_specials_and_order():
    recs = [
        CaptionRecord("a", "", "ख क ख", "train"),
        CaptionRecord("b", "", "ग क", "train"),
        CaptionRecord("c", "", "घ घ घ घ", "val"),
    ]
    v = build_vocab(recs)
    assert v.index_to_token == ["<pad>", "<bos>", "<eos>", "<unk>", "ख", "क", "ग"]
    assert (v.pad, v.bos, v.eos, v.unk) == (PAD_ID, BOS_ID, EOS_ID, UNK_ID) == (0, 1, 2, 3)
    assert all(v.token_to_index[t] == i for i, t in enumerate(v.index_to_token))


def test_vocab_ignores_non_train_novel_words():
    recs = [CaptionRecord("a", "", "क ख", "train"), CaptionRecord("b", "", "क", "val")]
    before = build_vocab(recs)
    after = build_vocab(recs + [CaptionRecord("b", "", "नयाँ शब्द", "val")])
    assert before == after and before.fingerprint() == after.fingerprint()


def test_vocab_save_load(tmp_path):
    v = Vocabulary(["क", "ख", "ग"])
    v.save(tmp_path / "v.txt")
    w = Vocabulary.load(tmp_path / "v.txt")
    assert v == w and v.fingerprint() == w.fingerprint()


def test_vocab_rejects_duplicates():
    with pytest.raises(ValueError):
        Vocabulary(["a", "a"])


# -- encoding -------------------------------------------------------------------------


def test_tokenize_strips_danda():
    assert tokenize("एक मान्छे दौडिन्छ।") == ["एक", "मान्छे", "दौडिन्छ"]
    assert tokenize("a, b. c!") == ["a", "b", "c"]


def test_encode_layout():
    v = Vocabulary(["क", "ख"])
    seq = encode_caption("क ख अज्ञात", v)
    assert seq.ids == (BOS_ID, 4, 5, UNK_ID, EOS_ID, 0, 0, 0, 0, 0, 0)
    assert seq.raw_length == 5


def test_encode_truncates_to_max_len():
    v = Vocabulary(["क"])
    seq = encode_caption(" ".join(["क"] * 20), v)
    assert len(seq.ids) == 11 and seq.ids[-1] == EOS_ID and seq.raw_length == 11


@settings(max_examples=100, deadline=None)
@given(st.lists(st.sampled_from(["क", "ख", "ग", "घ", "ङ"]), min_size=0, max_size=9))
def test_encode_decode_round_trip(tokens):
    v = Vocabulary(["क", "ख", "ग", "घ", "ङ"])
    seq = encode_caption(" ".join(tokens), v)
    assert len(seq.ids) == 11
    assert seq.ids[0] == BOS_ID and seq.ids[seq.raw_length - 1] == EOS_ID
    assert all(i == PAD_ID for i in seq.ids[seq.raw_length:])
    assert decode_ids(seq.ids, v) == " ".join(tokens)


def test_decode_rejects_out_of_range():
    v = Vocabulary(["क"])
    with pytest.raises(InvalidIdError):
        decode_ids([1, 5, 2], v)
    with pytest.raises(InvalidIdError):
        decode_ids([-1], v)
