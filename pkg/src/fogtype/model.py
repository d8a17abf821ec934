"""The sequence-labeling network: patch embedding, transformer encoder
layers, a BiLSTM stack, and a per-class sigmoid head.

Input (T, D) feature rows are grouped into non-overlapping patches of
`patch_len` timesteps (tail zero-padded); each flattened patch is densely
embedded, the stack produces one probability row per patch, and per-patch
probabilities are repeated back out to per-timestep granularity.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import ShapeError, ValidationError
from .nn import (
    BiLSTM,
    Dense,
    Dropout,
    Layer,
    LayerNorm,
    MultiHeadSelfAttention,
    Relu,
    bce_with_logits,
    fd_gradient,
    relative_error,
    sigmoid,
)

CHECKPOINT_MAGIC = b"FOGCKPT1\n"


@dataclass(frozen=True)
class TransBiLSTMConfig:
    """Architecture hyperparameters. Defaults are the full-scale values;
    desk-scale runs pass a smaller configuration."""

    input_dim: int
    d_model: int = 320
    n_heads: int = 6
    d_head: int = 320
    n_encoder_layers: int = 5
    ffn_dense_units: int = 320
    dropout_rate: float = 0.1
    n_bilstm_layers: int = 3
    bilstm_out: int = 320
    n_classes: int = 3
    patch_len: int = 15

    def __post_init__(self):
        counts = (
            self.input_dim,
            self.d_model,
            self.n_heads,
            self.d_head,
            self.n_encoder_layers,
            self.ffn_dense_units,
            self.n_bilstm_layers,
            self.bilstm_out,
            self.n_classes,
            self.patch_len,
        )
        if any(c < 1 for c in counts):
            raise ValidationError(f"all size/count fields must be >= 1: {self}")
        if self.bilstm_out % 2 != 0:
            raise ValidationError(f"bilstm_out must be even, got {self.bilstm_out}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValidationError(f"dropout_rate {self.dropout_rate} outside [0, 1)")


class EncoderBlock(Layer):
    """Self-attention with a residual connection and one layer norm,
    followed by a two-dense FFN (ReLU after the first dense, dropout after
    each dense) added back residually without a second norm."""

    def __init__(self, cfg: TransBiLSTMConfig, rng: np.random.Generator):
        super().__init__()
        self.sublayers["attn"] = MultiHeadSelfAttention(cfg.d_model, cfg.n_heads, cfg.d_head, rng)
        self.sublayers["norm"] = LayerNorm(cfg.d_model)
        self.sublayers["ffn1"] = Dense(cfg.d_model, cfg.ffn_dense_units, rng)
        self.sublayers["relu"] = Relu()
        self.sublayers["drop1"] = Dropout(cfg.dropout_rate)
        self.sublayers["ffn2"] = Dense(cfg.ffn_dense_units, cfg.d_model, rng)
        self.sublayers["drop2"] = Dropout(cfg.dropout_rate)

    def forward(self, x, train=False, rng=None):
        s = self.sublayers
        attended = s["norm"].forward(x + s["attn"].forward(x, train, rng))
        h = s["drop1"].forward(s["relu"].forward(s["ffn1"].forward(attended)), train, rng)
        h = s["drop2"].forward(s["ffn2"].forward(h), train, rng)
        return attended + h

    def backward(self, dy):
        s = self.sublayers
        dh = s["ffn2"].backward(s["drop2"].backward(dy))
        dattended = dy + s["ffn1"].backward(s["relu"].backward(s["drop1"].backward(dh)))
        dsum = s["norm"].backward(dattended)
        return dsum + s["attn"].backward(dsum)


class TransBiLSTM(Layer):
    """Patch embedding -> encoder stack -> BiLSTM stack -> sigmoid head."""

    def __init__(self, config: TransBiLSTMConfig, seed: int):
        super().__init__()
        self.config = config
        rng = np.random.default_rng(seed)
        cfg = config
        self.sublayers["embed"] = Dense(cfg.patch_len * cfg.input_dim, cfg.d_model, rng)
        for i in range(cfg.n_encoder_layers):
            self.sublayers[f"enc{i}"] = EncoderBlock(cfg, rng)
        half = cfg.bilstm_out // 2
        d_in = cfg.d_model
        for i in range(cfg.n_bilstm_layers):
            self.sublayers[f"lstm{i}"] = BiLSTM(d_in, half, rng, forget_bias=1.0)
            d_in = cfg.bilstm_out
        self.sublayers["head"] = Dense(cfg.bilstm_out, cfg.n_classes, rng)

    # -- patch plumbing ----------------------------------------------------

    def n_patches(self, t_len: int) -> int:
        return -(-t_len // self.config.patch_len)

    def _patchify(self, features: np.ndarray) -> np.ndarray:
        cfg = self.config
        t_len, d = features.shape
        if d != cfg.input_dim:
            raise ShapeError(f"expected {cfg.input_dim} feature columns, got {d}")
        if t_len < cfg.patch_len:
            warnings.warn(
                f"sequence of {t_len} timesteps shorter than patch length "
                f"{cfg.patch_len}; zero-padding to a single patch",
                stacklevel=3,
            )
        n = self.n_patches(t_len)
        padded = np.zeros((n * cfg.patch_len, d))
        padded[:t_len] = features
        self._t_len = t_len
        return padded.reshape(n, cfg.patch_len * d)

    def _unpatchify_grad(self, dpatches: np.ndarray) -> np.ndarray:
        cfg = self.config
        flat = dpatches.reshape(-1, cfg.input_dim)
        return flat[: self._t_len]

    # -- passes --------------------------------------------------------------

    def forward_patches(self, features, train=False, rng=None):
        """Run the stack at patch granularity; returns (probabilities,
        logits), both (n_patches, n_classes)."""
        cfg = self.config
        z = self.sublayers["embed"].forward(self._patchify(np.asarray(features, dtype=np.float64)))
        for i in range(cfg.n_encoder_layers):
            z = self.sublayers[f"enc{i}"].forward(z, train, rng)
        for i in range(cfg.n_bilstm_layers):
            z = self.sublayers[f"lstm{i}"].forward(z, train, rng)
        logits = self.sublayers["head"].forward(z)
        return sigmoid(logits), logits

    def backward_from_logits(self, dlogits):
        """Backpropagate from d(loss)/d(logits); accumulates parameter
        gradients and returns d(loss)/d(features) at timestep granularity."""
        cfg = self.config
        dz = self.sublayers["head"].backward(dlogits)
        for i in reversed(range(cfg.n_bilstm_layers)):
            dz = self.sublayers[f"lstm{i}"].backward(dz)
        for i in reversed(range(cfg.n_encoder_layers)):
            dz = self.sublayers[f"enc{i}"].backward(dz)
        return self._unpatchify_grad(self.sublayers["embed"].backward(dz))

    def forward(self, features, train=False, rng=None):
        """Per-timestep probabilities (T, n_classes): per-patch outputs
        repeated within each patch, trimmed to the input length."""
        probs, _ = self.forward_patches(features, train, rng)
        expanded = np.repeat(probs, self.config.patch_len, axis=0)
        return expanded[: self._t_len]


def init_model(config: TransBiLSTMConfig, seed: int) -> TransBiLSTM:
    """Glorot-uniform weights, zero biases, LSTM forget-gate bias 1;
    deterministic in `seed`."""
    return TransBiLSTM(config, seed)


def param_count(config: TransBiLSTMConfig) -> int:
    """Closed-form parameter total; affine in input_dim with slope
    patch_len * d_model."""
    cfg = config
    width = cfg.n_heads * cfg.d_head
    embed = cfg.patch_len * cfg.input_dim * cfg.d_model + cfg.d_model
    attn = 3 * cfg.d_model * width + width * cfg.d_model + cfg.d_model
    norm = 2 * cfg.d_model
    ffn = (cfg.d_model * cfg.ffn_dense_units + cfg.ffn_dense_units) + (
        cfg.ffn_dense_units * cfg.d_model + cfg.d_model
    )
    encoder = cfg.n_encoder_layers * (attn + norm + ffn)

    half = cfg.bilstm_out // 2
    lstm = 0
    d_in = cfg.d_model
    for _ in range(cfg.n_bilstm_layers):
        lstm += 2 * (4 * half * (d_in + half + 1))
        d_in = cfg.bilstm_out
    head = cfg.bilstm_out * cfg.n_classes + cfg.n_classes
    return embed + encoder + lstm + head


# ---------------------------------------------------------------------------
# Checkpoint container: magic, JSON header, raw little-endian float64 data
# ---------------------------------------------------------------------------


def save_checkpoint(
    model: TransBiLSTM,
    path: str | Path,
    feature_set: str,
    feature_columns: tuple[str, ...],
) -> None:
    """Write a self-describing binary checkpoint. The header carries a
    format version, the architecture config, the feature-set id and the
    ordered feature-column fingerprint; parameter arrays follow in header
    order as little-endian float64."""
    entries = [(name, arr) for name, arr in model.named_params()]
    header = {
        "format_version": 1,
        "config": asdict(model.config),
        "feature_set": feature_set,
        "feature_columns": list(feature_columns),
        "params": [{"name": name, "shape": list(arr.shape)} for name, arr in entries],
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(len(blob).to_bytes(8, "little"))
        fh.write(blob)
        for _, arr in entries:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path: str | Path) -> tuple[TransBiLSTM, dict]:
    """Load a checkpoint written by `save_checkpoint`; returns the model
    and the header metadata."""
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise ValidationError(f"{path}: not a checkpoint file")
        blob_len = int.from_bytes(fh.read(8), "little")
        header = json.loads(fh.read(blob_len).decode())
        if header.get("format_version") != 1:
            raise ValidationError(f"{path}: unsupported format version")
        config = TransBiLSTMConfig(**header["config"])
        model = TransBiLSTM(config, seed=0)
        state = {}
        for entry in header["params"]:
            shape = tuple(entry["shape"])
            n_bytes = int(np.prod(shape)) * 8
            state[entry["name"]] = np.frombuffer(fh.read(n_bytes), dtype="<f8").reshape(shape)
        model.load_state(state)
    return model, header


def check_model_gradients(
    model: TransBiLSTM, features: np.ndarray, targets: np.ndarray, eps: float = 1e-5
) -> float:
    """Finite-difference check of the whole network (eval mode) under the
    BCE training loss; returns the max relative error over every parameter
    and the input features."""
    features = np.array(features, dtype=np.float64)
    _, logits = model.forward_patches(features)
    loss, dlogits = bce_with_logits(logits, targets)
    model.zero_grads()
    dfeat = model.backward_from_logits(dlogits)
    analytic = {"__input__": dfeat.copy()}
    analytic.update({name: g.copy() for name, g in model.named_grads()})

    def loss_fn() -> float:
        _, lg = model.forward_patches(features)
        return bce_with_logits(lg, targets)[0]

    worst = relative_error(analytic["__input__"], fd_gradient(loss_fn, features, eps))
    for name, arr in model.named_params():
        worst = max(worst, relative_error(analytic[name], fd_gradient(loss_fn, arr, eps)))
    return worst
