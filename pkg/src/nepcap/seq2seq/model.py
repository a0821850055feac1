"""LSTM encoder over frame features feeding an LSTM, GRU or BiLSTM caption decoder."""

import warnings

import numpy as np

from .. import _kernels as K
from ..corpus import PAD_ID
from ..errors import ShapeError
from .config import ModelConfig
from .layers import gru_backward, gru_forward, lstm_backward, lstm_forward

PROB_FLOOR = 1e-12


def param_shapes(config):
    """Ordered ``name -> shape`` for every trainable array of ``config``."""
    D, H, V = config.encoder_dim, config.hidden_dim, config.vocab_size
    shapes = {"enc.Wx": (D, 4 * H), "enc.Wh": (H, 4 * H), "enc.b": (4 * H,)}
    if config.decoder_kind == "lstm":
        shapes.update({"dec.Wx": (V, 4 * H), "dec.Wh": (H, 4 * H), "dec.b": (4 * H,)})
    elif config.decoder_kind == "gru":
        shapes.update({"dec.Wx": (V, 3 * H), "dec.Wh": (H, 3 * H), "dec.bx": (3 * H,), "dec.bh": (3 * H,)})
    else:
        for d in ("fw", "bw"):
            shapes.update({f"dec.{d}.Wx": (V, 4 * H), f"dec.{d}.Wh": (H, 4 * H), f"dec.{d}.b": (4 * H,)})
    shapes.update({"head.W": (config.head_dim, V), "head.b": (V,)})
    return shapes


def init_params(config, seed, dtype=np.float32):
    """Uniform fan-in init: weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)).

    Biases start at zero except LSTM forget gates, which start at one.
    """
    rng = np.random.default_rng(seed)
    H = config.hidden_dim
    params = {}
    for name, shape in param_shapes(config).items():
        if len(shape) == 2:
            limit = 1.0 / np.sqrt(shape[0])
            params[name] = rng.uniform(-limit, limit, size=shape).astype(dtype)
        else:
            b = np.zeros(shape, dtype=dtype)
            if name.endswith(".b") and not name.startswith("head") and shape[0] == 4 * H:
                b[H : 2 * H] = 1.0
            params[name] = b
    return params


class Seq2SeqModel:
    """Parameters plus forward/backward passes for one :class:`ModelConfig`.

    Decoder inputs may be integer ids ``(B, T)`` or one-hot rows
    ``(B, T, V)``; both give identical results on valid one-hot data.
    """

    def __init__(self, config, params):
        self.config = config
        self.params = params
        expected = param_shapes(config)
        for name, shape in expected.items():
            if name not in params or params[name].shape != shape:
                got = params[name].shape if name in params else None
                raise ShapeError(f"parameter {name}: expected shape {shape}, got {got}")

    @property
    def dtype(self):
        return self.params["head.W"].dtype

    def copy(self):
        return Seq2SeqModel(self.config, {k: v.copy() for k, v in self.params.items()})

    # -- shape checks ---------------------------------------------------------------

    def check_encoder_input(self, x):
        cfg = self.config
        if x.ndim != 3:
            raise ShapeError(f"encoder_input must be 3-D (batch, frames, features), got shape {x.shape}")
        if x.shape[1] != cfg.time_steps_encoder:
            raise ShapeError(f"encoder_input axis 1 (frames) is {x.shape[1]}, expected {cfg.time_steps_encoder}")
        if x.shape[2] != cfg.encoder_dim:
            raise ShapeError(f"encoder_input axis 2 (features) is {x.shape[2]}, expected {cfg.encoder_dim}")

    def check_decoder_input(self, d, batch, steps=None):
        cfg = self.config
        if d.ndim not in (2, 3):
            raise ShapeError(f"decoder_input must be ids (batch, steps) or one-hot (batch, steps, vocab), got shape {d.shape}")
        if d.shape[0] != batch:
            raise ShapeError(f"decoder_input axis 0 (batch) is {d.shape[0]}, encoder batch is {batch}")
        if steps is not None and d.shape[1] != steps:
            raise ShapeError(f"decoder_input axis 1 (steps) is {d.shape[1]}, expected {steps}")
        if d.ndim == 3 and d.shape[2] != cfg.vocab_size:
            raise ShapeError(f"decoder_input axis 2 (vocab) is {d.shape[2]}, expected {cfg.vocab_size}")

    # -- forward ---------------------------------------------------------------------

    def _cast(self, a):
        return np.asarray(a, dtype=self.dtype)

    def encode(self, encoder_input):
        p = self.params
        x = self._cast(encoder_input)
        B = x.shape[0]
        H = self.config.hidden_dim
        xproj = x @ p["enc.Wx"] + p["enc.b"]
        zeros = np.zeros((B, H), dtype=self.dtype)
        _, (h, c), cache = lstm_forward(xproj, p["enc.Wh"], zeros, zeros)
        return (h, c), (x, cache)

    def _embed(self, W, b, dec_in):
        if dec_in.ndim == 2:
            return W[dec_in] + b
        return self._cast(dec_in) @ W + b

    def decode_states(self, state, dec_in):
        """Decoder hidden outputs ``(B, T, head_dim)`` seeded by encoder ``state``."""
        p = self.params
        kind = self.config.decoder_kind
        h, c = state
        if kind == "lstm":
            hs, _, cache = lstm_forward(self._embed(p["dec.Wx"], p["dec.b"], dec_in), p["dec.Wh"], h, c)
            return hs, cache
        if kind == "gru":
            hs, _, cache = gru_forward(self._embed(p["dec.Wx"], p["dec.bx"], dec_in), p["dec.Wh"], p["dec.bh"], h)
            return hs, cache
        fw_hs, _, fw_cache = lstm_forward(self._embed(p["dec.fw.Wx"], p["dec.fw.b"], dec_in), p["dec.fw.Wh"], h, c)
        rev = dec_in[:, ::-1]
        zeros = np.zeros_like(h)
        bw_hs, _, bw_cache = lstm_forward(self._embed(p["dec.bw.Wx"], p["dec.bw.b"], rev), p["dec.bw.Wh"], zeros, zeros)
        return np.concatenate([fw_hs, bw_hs[:, ::-1]], axis=2), (fw_cache, bw_cache)

    def logits(self, hs):
        p = self.params
        return hs @ p["head.W"] + p["head.b"]

    def forward(self, encoder_input, decoder_input, check_steps=True):
        """Per-step probability distributions ``(B, T, V)``."""
        encoder_input = np.asarray(encoder_input)
        decoder_input = np.asarray(decoder_input)
        self.check_encoder_input(encoder_input)
        self.check_decoder_input(
            decoder_input, encoder_input.shape[0], self.config.time_steps_decoder if check_steps else None
        )
        state, _ = self.encode(encoder_input)
        hs, _ = self.decode_states(state, decoder_input)
        return softmax(self.logits(hs))

    # -- loss and gradients ------------------------------------------------------------

    def loss_and_grads(self, encoder_input, decoder_input, target_ids, mask_pad_loss=None):
        """Mean clipped cross-entropy and its gradient for every parameter."""
        if mask_pad_loss is None:
            mask_pad_loss = self.config.mask_pad_loss
        p = self.params
        H = self.config.hidden_dim
        kind = self.config.decoder_kind
        encoder_input = np.asarray(encoder_input)
        decoder_input = np.asarray(decoder_input)
        target_ids = np.asarray(target_ids, dtype=np.int64)
        self.check_encoder_input(encoder_input)
        self.check_decoder_input(decoder_input, encoder_input.shape[0], target_ids.shape[1])

        (h, c), (x, enc_cache) = self.encode(encoder_input)
        hs, dec_cache = self.decode_states((h, c), decoder_input)
        B, T, _ = hs.shape
        V = self.config.vocab_size
        flat_targets = target_ids.reshape(-1)
        weights = (flat_targets != PAD_ID) if mask_pad_loss else np.ones(B * T, dtype=bool)
        count = int(weights.sum())
        _, nll, dlogits = K.softmax_xent(self.logits(hs).reshape(B * T, V), flat_targets, weights.astype(self.dtype))
        if count == 0:
            warnings.warn("every target cell is padding; loss defined as 0", RuntimeWarning, stacklevel=2)
            return 0.0, {k: np.zeros_like(v) for k, v in p.items()}
        loss = float(nll[weights].sum(dtype=np.float64) / count)
        dlogits = (dlogits / count).astype(self.dtype, copy=False)

        grads = {}
        flat_hs = hs.reshape(B * T, -1)
        grads["head.W"] = flat_hs.T @ dlogits
        grads["head.b"] = dlogits.sum(axis=0)
        dhs = (dlogits @ p["head.W"].T).reshape(B, T, -1)

        zeros = np.zeros((B, H), dtype=self.dtype)
        if kind == "lstm":
            dxp, grads["dec.Wh"], dh0, dc0 = lstm_backward(dhs, zeros, zeros, dec_cache, p["dec.Wh"])
            grads["dec.Wx"] = self._input_grad(decoder_input, dxp)
            grads["dec.b"] = dxp.sum(axis=(0, 1))
        elif kind == "gru":
            dxp, grads["dec.Wh"], grads["dec.bh"], dh0 = gru_backward(dhs, zeros, dec_cache, p["dec.Wh"])
            grads["dec.Wx"] = self._input_grad(decoder_input, dxp)
            grads["dec.bx"] = dxp.sum(axis=(0, 1))
            dc0 = zeros
        else:
            fw_cache, bw_cache = dec_cache
            dxp, grads["dec.fw.Wh"], dh0, dc0 = lstm_backward(
                np.ascontiguousarray(dhs[:, :, :H]), zeros, zeros, fw_cache, p["dec.fw.Wh"]
            )
            grads["dec.fw.Wx"] = self._input_grad(decoder_input, dxp)
            grads["dec.fw.b"] = dxp.sum(axis=(0, 1))
            dxp_bw, grads["dec.bw.Wh"], _, _ = lstm_backward(
                np.ascontiguousarray(dhs[:, ::-1, H:]), zeros, zeros, bw_cache, p["dec.bw.Wh"]
            )
            grads["dec.bw.Wx"] = self._input_grad(decoder_input[:, ::-1], dxp_bw)
            grads["dec.bw.b"] = dxp_bw.sum(axis=(0, 1))

        dxp_enc, grads["enc.Wh"], _, _ = lstm_backward(np.zeros((B, x.shape[1], H), dtype=self.dtype), dh0, dc0, enc_cache, p["enc.Wh"])
        flat_dxp = dxp_enc.reshape(-1, 4 * H)
        grads["enc.Wx"] = x.reshape(-1, x.shape[2]).T @ flat_dxp
        grads["enc.b"] = flat_dxp.sum(axis=0)
        return loss, grads

    def _input_grad(self, dec_in, dxp):
        G = dxp.shape[2]
        flat = dxp.reshape(-1, G)
        if dec_in.ndim == 2:
            out = np.zeros((self.config.vocab_size, G), dtype=self.dtype)
            np.add.at(out, np.ascontiguousarray(dec_in).reshape(-1), flat)
            return out
        return self._cast(dec_in).reshape(-1, self.config.vocab_size).T @ flat


def softmax(logits):
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def build_model(config, seed=0, dtype=np.float32):
    if not isinstance(config, ModelConfig):
        raise TypeError("config must be a ModelConfig")
    return Seq2SeqModel(config, init_params(config, seed, dtype))


def forward(model, encoder_input, decoder_input):
    return model.forward(encoder_input, decoder_input)


def loss(probabilities, decoder_target, mask_pad_loss=False):
    """Mean of ``-log p(target)`` over (sample, step) cells, probabilities clipped to [1e-12, 1].

    With ``mask_pad_loss`` cells whose target is pad are left out; if none
    remain the loss is 0 and a warning is issued.
    """
    probs = np.asarray(probabilities, dtype=np.float64)
    target = np.asarray(decoder_target)
    ids = target.argmax(axis=-1) if target.ndim == probs.ndim else target.astype(np.int64)
    p_t = np.take_along_axis(probs, ids[..., None], axis=-1)[..., 0]
    nll = -np.log(np.clip(p_t, PROB_FLOOR, 1.0))
    if mask_pad_loss:
        keep = ids != PAD_ID
        if not keep.any():
            warnings.warn("every target cell is padding; loss defined as 0", RuntimeWarning, stacklevel=2)
            return 0.0
        return float(nll[keep].mean())
    return float(nll.mean())
