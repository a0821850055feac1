"""Adam training loop with per-epoch history and best-validation tracking."""

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .. import _kernels as K
from ..errors import DivergedTrainingError
from .checkpoint import Checkpoint
from .model import loss

log = logging.getLogger(__name__)


class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bc1, bc2 = 1 - b1**self.t, 1 - b2**self.t
        for k, g in grads.items():
            K.adam_update(params[k], g, self.m[k], self.v[k], self.lr, b1, b2, self.eps, bc1, bc2)


@dataclass
class TrainResult:
    final: Checkpoint
    best: Checkpoint
    history: list = field(default_factory=list)


def _epoch_batches(source, epoch):
    if source is None:
        return []
    if hasattr(source, "epoch"):
        return source.epoch(epoch)
    if callable(source):
        return source(epoch)
    return source


def evaluate_loss(model, batches):
    """Cell-weighted mean loss over ``batches`` (no parameter update)."""
    total, cells = 0.0, 0
    for batch in batches:
        value, n = _batch_loss(model, batch)
        total += value * n
        cells += n
    return total / cells if cells else float("nan")


def _batch_loss(model, batch):
    probs = model.forward(batch.encoder_input, batch.input_ids, check_steps=False)
    mask = model.config.mask_pad_loss
    n = int((batch.target_ids != 0).sum()) if mask else batch.target_ids.size
    return (loss(probs, batch.target_ids, mask) if n else 0.0), n


def train(model, train_batches, val_batches, train_config, vocab_fingerprint="", on_epoch=None):
    """Run ``train_config.epochs`` epochs of Adam updates on ``model`` in place.

    ``train_batches``/``val_batches`` are BatchGenerators, callables taking
    the epoch index, or plain re-iterable collections of batches.  Returns the
    final-epoch checkpoint and the checkpoint with the lowest validation loss
    (training loss when no validation data is given).
    """
    opt = Adam(model.params, train_config.learning_rate, train_config.beta1, train_config.beta2, train_config.epsilon)
    history = []
    best = None
    best_score = math.inf
    for epoch in range(train_config.epochs):
        t0 = time.perf_counter()
        total, cells = 0.0, 0
        for step, batch in enumerate(_epoch_batches(train_batches, epoch)):
            value, grads = model.loss_and_grads(batch.encoder_input, batch.input_ids, batch.target_ids)
            if not math.isfinite(value) or any(not np.isfinite(g).all() for g in grads.values()):
                raise DivergedTrainingError(epoch + 1, step)
            opt.step(model.params, grads)
            n = int((batch.target_ids != 0).sum()) if model.config.mask_pad_loss else batch.target_ids.size
            total += value * n
            cells += n
        train_loss = total / cells if cells else float("nan")
        val_loss = evaluate_loss(model, _epoch_batches(val_batches, 0)) if val_batches is not None else float("nan")
        history.append((epoch + 1, train_loss, val_loss))
        log.info("epoch %d train %.4f val %.4f (%.1fs)", epoch + 1, train_loss, val_loss, time.perf_counter() - t0)
        if on_epoch is not None:
            on_epoch(epoch + 1, train_loss, val_loss)
        score = val_loss if math.isfinite(val_loss) else train_loss
        if score < best_score:
            best_score = score
            best = Checkpoint.from_model(model, vocab_fingerprint, epoch + 1, list(history), train_config)
    final = Checkpoint.from_model(model, vocab_fingerprint, train_config.epochs, list(history), train_config)
    if best is None:
        best = final
    else:
        best.history = list(history)
    return TrainResult(final, best, history)
