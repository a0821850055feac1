"""Checkpoint archive: config document, parameter manifest, float32 payload, vocab fingerprint.

Layout of the zip archive::

    config.txt      key = value lines (model, training and run metadata)
    manifest.tsv    name <TAB> comma-separated shape <TAB> byte offset
    params.bin      concatenated little-endian float32 arrays
    vocab.sha256    fingerprint of the vocabulary the model was trained on
    history.tsv     epoch <TAB> train loss <TAB> val loss
    vocab.txt       optional; the vocabulary itself, one token per line
"""

import zipfile
from dataclasses import dataclass, field

import numpy as np

from ..corpus import Vocabulary
from ..errors import ConfigError, IncompatibleVocabError
from ..kvdoc import format_kv, parse_kv
from .config import ModelConfig, TrainConfig, from_kv, to_kv
from .model import Seq2SeqModel, param_shapes

FORMAT_VERSION = "1"
INIT_SCHEME = "uniform_fan_in"


@dataclass
class Checkpoint:
    config: ModelConfig
    params: dict
    vocab_fingerprint: str = ""
    epoch: int = 0
    history: list = field(default_factory=list)
    train_config: TrainConfig | None = None
    vocab: Vocabulary | None = None

    @classmethod
    def from_model(cls, model, vocab_fingerprint="", epoch=0, history=(), train_config=None):
        params = {k: v.astype(np.float32, copy=True) for k, v in model.params.items()}
        return cls(model.config, params, vocab_fingerprint, epoch, list(history), train_config)

    def to_model(self, dtype=np.float32):
        return Seq2SeqModel(self.config, {k: v.astype(dtype, copy=True) for k, v in self.params.items()})

    def check_vocab(self, vocab):
        fp = vocab.fingerprint() if hasattr(vocab, "fingerprint") else str(vocab)
        if self.vocab_fingerprint and fp != self.vocab_fingerprint:
            raise IncompatibleVocabError(
                f"checkpoint was trained with vocabulary {self.vocab_fingerprint[:12]}..., got {fp[:12]}..."
            )
        if hasattr(vocab, "size") and vocab.size != self.config.vocab_size:
            raise IncompatibleVocabError(f"vocabulary size {vocab.size} != model vocab_size {self.config.vocab_size}")


def save_checkpoint(ckpt, path):
    config = {"format_version": FORMAT_VERSION, "init": INIT_SCHEME, "epoch": ckpt.epoch}
    config.update(to_kv(ckpt.config, "model."))
    if ckpt.train_config is not None:
        config.update(to_kv(ckpt.train_config, "train."))
    manifest, chunks, offset = [], [], 0
    for name in param_shapes(ckpt.config):
        arr = np.ascontiguousarray(ckpt.params[name], dtype="<f4")
        manifest.append(f"{name}\t{','.join(map(str, arr.shape))}\t{offset}")
        chunks.append(arr.tobytes())
        offset += arr.nbytes
    history = "".join(f"{e}\t{tr!r}\t{va!r}\n" for e, tr, va in ckpt.history)
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        zf.writestr("config.txt", format_kv(config))
        zf.writestr("manifest.tsv", "\n".join(manifest) + "\n")
        zf.writestr("params.bin", b"".join(chunks))
        zf.writestr("vocab.sha256", ckpt.vocab_fingerprint + "\n")
        zf.writestr("history.tsv", history)
        if ckpt.vocab is not None:
            zf.writestr("vocab.txt", "".join(t + "\n" for t in ckpt.vocab.index_to_token))
    return path


def load_checkpoint(path, vocab=None):
    """Read a checkpoint; with ``vocab`` given, refuse a mismatched vocabulary."""
    with zipfile.ZipFile(path) as zf:
        config_text = zf.read("config.txt").decode("utf-8")
        manifest_text = zf.read("manifest.tsv").decode("utf-8")
        payload = zf.read("params.bin")
        fingerprint = zf.read("vocab.sha256").decode("utf-8").strip()
        names = set(zf.namelist())
        history_text = zf.read("history.tsv").decode("utf-8") if "history.tsv" in names else ""
        vocab_text = zf.read("vocab.txt").decode("utf-8") if "vocab.txt" in names else None

    values = parse_kv(config_text)
    if values.get("format_version") != FORMAT_VERSION:
        raise ConfigError(f"{path}: unsupported checkpoint format {values.get('format_version')!r}")
    model_cfg = from_kv(ModelConfig, values, "model.")
    train_cfg = from_kv(TrainConfig, values, "train.") if any(k.startswith("train.") for k in values) else None

    expected = param_shapes(model_cfg)
    params = {}
    for line in manifest_text.splitlines():
        if not line.strip():
            continue
        name, shape_s, offset_s = line.split("\t")
        shape = tuple(int(s) for s in shape_s.split(",") if s)
        if expected.get(name) != shape:
            raise ConfigError(f"{path}: config implies {name} of shape {expected.get(name)}, archive holds {shape}")
        offset = int(offset_s)
        n = int(np.prod(shape))
        if offset + 4 * n > len(payload):
            raise ConfigError(f"{path}: parameter {name} runs past the payload")
        params[name] = np.frombuffer(payload, dtype="<f4", count=n, offset=offset).reshape(shape).astype(np.float32)
    missing = set(expected) - set(params)
    if missing:
        raise ConfigError(f"{path}: parameters missing from manifest: {', '.join(sorted(missing))}")

    history = []
    for line in history_text.splitlines():
        e, tr, va = line.split("\t")
        history.append((int(e), float(tr), float(va)))
    stored_vocab = None
    if vocab_text is not None:
        stored_vocab = Vocabulary(vocab_text.splitlines())
        if fingerprint and stored_vocab.fingerprint() != fingerprint:
            raise IncompatibleVocabError(f"{path}: embedded vocabulary does not match its fingerprint")
    ckpt = Checkpoint(model_cfg, params, fingerprint, int(values.get("epoch", 0)), history, train_cfg, stored_vocab)
    if vocab is not None:
        ckpt.check_vocab(vocab)
    return ckpt
