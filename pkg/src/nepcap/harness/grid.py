"""Cross-product experiment runner with per-run persistence and resume."""

import itertools
import logging
import os
import tempfile
import time
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from ..datagen import BatchGenerator, make_pairs
from ..errors import ConfigError, GridError
from ..frames import BACKBONE_DIMS, FeatureStore
from ..kvdoc import format_kv, parse_kv
from ..metrics import EvalReport, evaluate_model
from ..seq2seq import DECODER_KINDS, ModelConfig, TrainConfig, build_model, save_checkpoint, train

log = logging.getLogger(__name__)

RECORD_FILE = "record.txt"
DISPLAY_NAMES = {
    "efficientnetb0": "EfficientNetB0",
    "resnet101": "ResNet101",
    "vgg16": "VGG16",
    "synthetic": "Synthetic",
    "precomputed": "Precomputed",
    "lstm": "LSTM",
    "gru": "GRU",
    "bilstm": "BiLSTM",
}
ERROR_FILE = "error.txt"


def _as_list(value, cast=str):
    if isinstance(value, str):
        return [cast(v.strip()) for v in value.split(",") if v.strip()]
    return [cast(v) for v in value]


@dataclass
class GridSpec:
    backbones: list
    decoders: list
    hidden_dims: list
    batch_sizes: list = field(default_factory=lambda: [128])
    epochs: list = field(default_factory=lambda: [30])
    seeds: list = field(default_factory=lambda: [0])
    learning_rate: float = 1e-3

    def __post_init__(self):
        self.backbones = _as_list(self.backbones)
        self.decoders = _as_list(self.decoders)
        self.hidden_dims = _as_list(self.hidden_dims, int)
        self.batch_sizes = _as_list(self.batch_sizes, int)
        self.epochs = _as_list(self.epochs, int)
        self.seeds = _as_list(self.seeds, int)
        for name in ("backbones", "decoders", "hidden_dims", "batch_sizes", "epochs", "seeds"):
            if not getattr(self, name):
                raise ConfigError(f"grid {name} must not be empty")
        unknown = [b for b in self.backbones if b not in BACKBONE_DIMS]
        if unknown:
            raise ConfigError(f"unknown backbone(s): {', '.join(unknown)}")
        unknown = [d for d in self.decoders if d not in DECODER_KINDS]
        if unknown:
            raise ConfigError(f"unknown decoder(s): {', '.join(unknown)}")

    @classmethod
    def from_kv(cls, values):
        keys = ("backbones", "decoders", "hidden_dims", "batch_sizes", "epochs", "seeds")
        kwargs = {k: values[k] for k in keys if k in values}
        if "learning_rate" in values:
            kwargs["learning_rate"] = float(values["learning_rate"])
        try:
            return cls(**kwargs)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad grid specification: {exc}") from exc

    def points(self):
        """Every (backbone, decoder, hidden_dim, batch_size, epochs, seed), in a fixed order."""
        return list(
            itertools.product(self.backbones, self.decoders, self.hidden_dims, self.batch_sizes, self.epochs, self.seeds)
        )


def run_label(backbone, decoder, hidden_dim, batch_size, epochs, seed):
    return f"{backbone}+{decoder}-h{hidden_dim}-b{batch_size}-e{epochs}-s{seed}"


@dataclass
class RunRecord:
    label: str
    backbone: str
    decoder: str
    hidden_dim: int
    batch_size: int
    epochs: int
    seed: int
    checkpoint: str
    report: EvalReport
    wall_time: float

    def to_kv(self):
        out = {
            "label": self.label,
            "backbone": self.backbone,
            "decoder": self.decoder,
            "hidden_dim": self.hidden_dim,
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "seed": self.seed,
            "checkpoint": self.checkpoint,
            "wall_time": round(self.wall_time, 3),
        }
        out.update({f"bleu{n}": v for n, v in sorted(self.report.bleu.items())})
        out["meteor"] = self.report.meteor
        return out

    @classmethod
    def from_kv(cls, v):
        report = EvalReport({n: float(v[f"bleu{n}"]) for n in range(1, 5)}, float(v["meteor"]), v["label"])
        return cls(
            v["label"], v["backbone"], v["decoder"], int(v["hidden_dim"]), int(v["batch_size"]),
            int(v["epochs"]), int(v["seed"]), v["checkpoint"], report, float(v["wall_time"]),
        )

    @property
    def model_name(self):
        return f"{DISPLAY_NAMES.get(self.backbone, self.backbone)} + {DISPLAY_NAMES.get(self.decoder, self.decoder)}"


def _atomic_write(path, text):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    with os.fdopen(fd, "w", encoding="utf-8") as fp:
        fp.write(text)
    os.replace(tmp, path)


def load_records(out_dir):
    """Every completed RunRecord under ``out_dir``, sorted by label."""
    out = []
    root = Path(out_dir)
    if not root.exists():
        return out
    for path in sorted(root.glob(f"*/{RECORD_FILE}")):
        out.append(RunRecord.from_kv(parse_kv(path.read_text(encoding="utf-8"), str(path))))
    return out


def _feature_dim(store, video_ids):
    for vid in video_ids:
        if vid in store:
            return store[vid].shape[1]
    return None


def run_one(point, records, vocab, features_root, out_dir, learning_rate=1e-3):
    backbone, decoder, hidden, batch_size, epochs, seed = point
    label = run_label(*point)
    run_dir = Path(out_dir) / label
    run_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()

    store = FeatureStore(features_root, backbone)
    split = {s: [r for r in records if r.split == s] for s in ("train", "val", "test")}
    dim = _feature_dim(store, [r.video_id for r in split["train"]]) or BACKBONE_DIMS.get(backbone)
    cfg = ModelConfig(backbone, decoder, hidden, vocab.size, encoder_dim=dim)
    tcfg = TrainConfig(batch_size=batch_size, epochs=epochs, seed=seed, learning_rate=learning_rate)

    train_gen = BatchGenerator(make_pairs(split["train"], store, vocab), store, vocab, batch_size, seed=seed)
    val_gen = None
    if split["val"]:
        val_gen = BatchGenerator(make_pairs(split["val"], store, vocab), store, vocab, batch_size, shuffle=False)
    model = build_model(cfg, seed=seed)
    result = train(model, train_gen, val_gen, tcfg, vocab.fingerprint())
    result.final.vocab = result.best.vocab = vocab
    save_checkpoint(result.final, run_dir / "final.ckpt")
    best_path = run_dir / "best.ckpt"
    save_checkpoint(result.best, best_path)

    test = split["test"] or split["val"] or split["train"]
    report = evaluate_model(result.best, test, store, vocab, label=label)
    # stored relative to out_dir so a run directory can be moved as a whole
    record = RunRecord(label, backbone, decoder, hidden, batch_size, epochs, seed, f"{label}/best.ckpt", report,
                       time.perf_counter() - t0)
    _atomic_write(run_dir / RECORD_FILE, format_kv(record.to_kv()))
    err = run_dir / ERROR_FILE
    if err.exists():
        err.unlink()
    return record


def run_grid(spec, records, vocab, features_root, out_dir, workers=1, run_fn=run_one):
    """Train and evaluate every grid point not already completed under ``out_dir``.

    A failing run leaves ``error.txt`` in its directory and is retried on the
    next call; ``GridError`` is raised only when every attempted run fails.
    Returns the records of all completed runs in grid order.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    done = {r.label: r for r in load_records(out_dir)}
    pending = [p for p in spec.points() if run_label(*p) not in done]
    log.info("%d grid points, %d already complete", len(spec.points()), len(spec.points()) - len(pending))

    def attempt(point):
        label = run_label(*point)
        try:
            return run_fn(point, records, vocab, features_root, out_dir, spec.learning_rate)
        except Exception as exc:
            log.warning("run %s failed: %s", label, exc)
            (out_dir / label).mkdir(parents=True, exist_ok=True)
            _atomic_write(out_dir / label / ERROR_FILE, "".join(traceback.format_exception(exc)))
            return None

    if workers > 1 and len(pending) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(attempt, pending))
    else:
        results = [attempt(p) for p in pending]

    failed = [run_label(*p) for p, r in zip(pending, results) if r is None]
    if pending and len(failed) == len(pending):
        raise GridError(f"all {len(pending)} grid runs failed (see {ERROR_FILE} in {out_dir}/<label>/)")
    for r in results:
        if r is not None:
            done[r.label] = r
    return [done[run_label(*p)] for p in spec.points() if run_label(*p) in done]
