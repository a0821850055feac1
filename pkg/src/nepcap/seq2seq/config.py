from dataclasses import asdict, dataclass, fields

from ..errors import ConfigError
from ..frames import BACKBONE_DIMS, NUM_FRAMES
from ..corpus import MAX_LEN

DECODER_KINDS = ("lstm", "gru", "bilstm")


@dataclass(frozen=True)
class ModelConfig:
    backbone: str
    decoder_kind: str
    hidden_dim: int
    vocab_size: int
    encoder_dim: int | None = None
    time_steps_encoder: int = NUM_FRAMES
    time_steps_decoder: int = MAX_LEN
    mask_pad_loss: bool = False

    def __post_init__(self):
        if self.encoder_dim is None:
            dim = BACKBONE_DIMS.get(self.backbone)
            if dim is None:
                raise ConfigError(f"encoder_dim required for backbone {self.backbone!r}")
            object.__setattr__(self, "encoder_dim", dim)
        if self.decoder_kind not in DECODER_KINDS:
            raise ConfigError(f"unknown decoder_kind {self.decoder_kind!r}; choose from {', '.join(DECODER_KINDS)}")
        if self.hidden_dim <= 0:
            raise ConfigError("hidden_dim must be positive")
        if self.vocab_size < 5:
            raise ConfigError("vocab_size must be at least 5 (four specials plus one word)")
        if self.encoder_dim <= 0 or self.time_steps_encoder <= 0 or self.time_steps_decoder <= 0:
            raise ConfigError("dimensions must be positive")

    @property
    def head_dim(self):
        return 2 * self.hidden_dim if self.decoder_kind == "bilstm" else self.hidden_dim


@dataclass(frozen=True)
class TrainConfig:
    """Optimisation settings; Adam defaults are the published ones (lr 1e-3, 0.9, 0.999, 1e-8)."""

    batch_size: int = 128
    epochs: int = 30
    seed: int = 0
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")


def to_kv(cfg, prefix=""):
    return {prefix + k: v for k, v in asdict(cfg).items()}


def from_kv(cls, values, prefix=""):
    """Build ``cls`` from string key/values, coercing by field type."""
    kwargs = {}
    for f in fields(cls):
        key = prefix + f.name
        if key not in values:
            continue
        raw = values[key]
        try:
            kwargs[f.name] = _coerce(raw, f.type)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {raw!r}") from exc
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def _coerce(raw, typ):
    if not isinstance(raw, str):
        return raw
    if typ is bool:
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(raw)
    if typ is int:
        return int(raw)
    if typ is float:
        return float(raw)
    if typ == (int | None):
        return None if raw.strip().lower() == "none" else int(raw)
    return raw
