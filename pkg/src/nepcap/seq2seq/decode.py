"""Greedy (argmax) caption generation."""

import numpy as np

from ..corpus import BOS_ID, EOS_ID, decode_ids
from ..errors import ShapeError
from .layers import gru_forward, lstm_forward


def greedy_ids(model, features, max_steps=10):
    """Greedy token ids for a batch of feature tensors ``(N, 30, D)``.

    Each sequence starts from bos; at every step the argmax of the next-token
    distribution is appended (ties go to the lowest index).  A sequence stops
    at eos or after ``max_steps - 1`` emissions.  The returned lists include
    the final eos when one was emitted.
    """
    feats = np.asarray(features)
    if feats.ndim == 2:
        feats = feats[None]
    model.check_encoder_input(feats)
    N = feats.shape[0]
    emitted = [[] for _ in range(N)]
    done = np.zeros(N, dtype=bool)
    state, _ = model.encode(feats)
    kind = model.config.decoder_kind
    p = model.params
    tokens = np.full((N, 1), BOS_ID, dtype=np.int64)
    h, c = state

    for _ in range(max_steps - 1):
        if kind == "bilstm":
            hs, _ = model.decode_states(state, tokens)
            last = hs[:, -1]
        elif kind == "lstm":
            hs, (h, c), _ = lstm_forward(p["dec.Wx"][tokens[:, -1:]] + p["dec.b"], p["dec.Wh"], h, c)
            last = hs[:, -1]
        else:
            hs, h, _ = gru_forward(p["dec.Wx"][tokens[:, -1:]] + p["dec.bx"], p["dec.Wh"], p["dec.bh"], h)
            last = hs[:, -1]
        nxt = model.logits(last).argmax(axis=1)
        for i in np.flatnonzero(~done):
            emitted[i].append(int(nxt[i]))
        done |= nxt == EOS_ID
        if done.all():
            break
        tokens = np.concatenate([tokens, nxt[:, None]], axis=1)
    return emitted


def greedy_decode(model, features, vocab, max_steps=10):
    """Caption text for one video's ``(30, D)`` features."""
    feats = np.asarray(features)
    if feats.ndim != 2:
        raise ShapeError(f"features must be (frames, dim), got shape {feats.shape}")
    return decode_ids(greedy_ids(model, feats, max_steps)[0], vocab)


def greedy_decode_many(model, features, vocab, max_steps=10, batch_size=64):
    out = []
    feats = np.asarray(features)
    for start in range(0, len(feats), batch_size):
        out.extend(decode_ids(ids, vocab) for ids in greedy_ids(model, feats[start : start + batch_size], max_steps))
    return out
