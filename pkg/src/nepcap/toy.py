"""A tiny synthetic captioning corpus for smoke tests and demos.

Eight "videos" of random frames, three Nepali captions each.  The first two
captions of a video are identical and the third swaps one word, so the first
caption is always the most likely sequence for its video.
"""

import numpy as np

from .corpus import CaptionRecord
from .frames import ArrayVideo

TOY_CAPTIONS = [
    ("a man is playing a guitar", "एक मान्छे गितार बजाउँदै छ", "एउटा मान्छे गितार बजाउँदै छ"),
    ("a girl is dancing", "एउटा केटी नाच्दै छ", "एउटा केटी नाचिरहेकी छ"),
    ("a cat is drinking milk", "एक बिरालो दूध पिउँदै छ", "एउटा बिरालो दूध पिउँदै छ"),
    ("a man is riding a bicycle", "एक मान्छे साइकल चलाउँदै छ", "एक मान्छे साइकल कुदाउँदै छ"),
    ("a dog is running", "एउटा कुकुर दौडिँदै छ", "एउटा कुकुर कुदिरहेको छ"),
    ("a woman is cooking food", "एक महिला खाना पकाउँदै छिन्", "एउटी महिला खाना पकाउँदै छिन्"),
    ("children are playing football", "केटाकेटीहरू फुटबल खेल्दै छन्", "बच्चाहरू फुटबल खेल्दै छन्"),
    ("a man is swimming", "एक मान्छे पौडी खेल्दै छ", "एक पुरुष पौडी खेल्दै छ"),
]


def toy_video_ids(n=len(TOY_CAPTIONS)):
    return [f"toy{i:02d}" for i in range(n)]


def toy_records(split="train"):
    """24 translated records (8 videos x 3 captions), all in ``split``."""
    records = []
    for vid, (english, main, variant) in zip(toy_video_ids(), TOY_CAPTIONS):
        for nepali in (main, main, variant):
            records.append(CaptionRecord(vid, english, nepali, split))
    return records


def toy_videos(seed=0, n_frames=45, size=(48, 64)):
    """Random-noise videos; frames are small and get resized to 224x224 on extraction."""
    rng = np.random.default_rng(seed)
    return [
        ArrayVideo(vid, rng.integers(0, 256, size=(n_frames, *size, 3), dtype=np.uint8))
        for vid in toy_video_ids()
    ]


def toy_features(dim=1280, seed=0):
    """``video_id -> (30, dim)`` synthetic-backbone features for the toy videos."""
    from .frames import SyntheticBackbone, extract_features, extract_frames

    backbone = SyntheticBackbone(dim)
    return {v.video_id: extract_features(extract_frames(v), backbone).features for v in toy_videos(seed)}

