"""Encoder-decoder captioning models: build, train, checkpoint, decode."""

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import DECODER_KINDS, ModelConfig, TrainConfig
from .decode import greedy_decode, greedy_decode_many, greedy_ids
from .model import Seq2SeqModel, build_model, forward, loss, param_shapes
from .train import Adam, TrainResult, evaluate_loss, train

__all__ = [
    "Adam",
    "Checkpoint",
    "DECODER_KINDS",
    "ModelConfig",
    "Seq2SeqModel",
    "TrainConfig",
    "TrainResult",
    "build_model",
    "evaluate_loss",
    "forward",
    "greedy_decode",
    "greedy_decode_many",
    "greedy_ids",
    "load_checkpoint",
    "loss",
    "param_shapes",
    "save_checkpoint",
    "train",
]
