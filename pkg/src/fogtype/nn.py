"""Minimal dense-tensor layer kernel in float64 numpy.

Every layer implements an analytic backward pass; `fd_gradient` /
`check_layer_gradients` provide the independent finite-difference oracle.
Inputs are (T, D) matrices: one sequence at a time, no batch axis. Backward
calls accumulate into `grads` so mini-batch gradients are built by summing
per-sequence passes; call `zero_grads` between optimizer steps.
"""

from __future__ import annotations

from typing import Callable, Iterator

import numpy as np

from .errors import NumericError, ShapeError, ValidationError


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax_rows(x: np.ndarray) -> np.ndarray:
    """Softmax over the last axis with max-subtraction for stability."""
    z = x - x.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, shape=None) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape if shape is not None else (fan_in, fan_out))


class Layer:
    """Base layer: named parameter/gradient arrays plus child layers.

    `forward` caches whatever the subsequent `backward` needs; a layer
    therefore supports exactly one in-flight forward/backward pair.
    """

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.sublayers: dict[str, Layer] = {}

    def _add_param(self, name: str, value: np.ndarray) -> None:
        self.params[name] = np.asarray(value, dtype=np.float64)
        self.grads[name] = np.zeros_like(self.params[name])

    def forward(self, x: np.ndarray, train: bool = False, rng=None) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dy: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def named_params(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray]]:
        for name, arr in self.params.items():
            yield prefix + name, arr
        for sub_name, sub in self.sublayers.items():
            yield from sub.named_params(f"{prefix}{sub_name}.")

    def named_grads(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray]]:
        for name, arr in self.grads.items():
            yield prefix + name, arr
        for sub_name, sub in self.sublayers.items():
            yield from sub.named_grads(f"{prefix}{sub_name}.")

    def zero_grads(self) -> None:
        for _, g in self.named_grads():
            g[...] = 0.0

    def param_count(self) -> int:
        return sum(arr.size for _, arr in self.named_params())

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: arr.copy() for name, arr in self.named_params()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        for name, arr in self.named_params():
            if name not in state:
                raise ShapeError(f"missing parameter {name!r} in state")
            if state[name].shape != arr.shape:
                raise ShapeError(
                    f"parameter {name!r}: shape {state[name].shape} != {arr.shape}"
                )
            arr[...] = state[name]


class Dense(Layer):
    """Affine map y = x @ w + b over the last axis."""

    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator):
        super().__init__()
        self._add_param("w", glorot_uniform(rng, d_in, d_out))
        self._add_param("b", np.zeros(d_out))

    def forward(self, x, train=False, rng=None):
        if x.shape[-1] != self.params["w"].shape[0]:
            raise ShapeError(
                f"dense expects inner dim {self.params['w'].shape[0]}, got {x.shape}"
            )
        self._x = x
        return x @ self.params["w"] + self.params["b"]

    def backward(self, dy):
        self.grads["w"] += self._x.T @ dy
        self.grads["b"] += dy.sum(axis=0)
        return dy @ self.params["w"].T


class Relu(Layer):
    def forward(self, x, train=False, rng=None):
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, dy):
        return np.where(self._mask, dy, 0.0)


class LayerNorm(Layer):
    """Per-row normalization to zero mean / unit (population) variance,
    followed by a learned affine transform."""

    def __init__(self, dim: int, eps: float = 1e-5):
        super().__init__()
        self.eps = eps
        self._add_param("gain", np.ones(dim))
        self._add_param("shift", np.zeros(dim))

    def forward(self, x, train=False, rng=None):
        mean = x.mean(axis=-1, keepdims=True)
        var = x.var(axis=-1, keepdims=True)
        self._inv = 1.0 / np.sqrt(var + self.eps)
        self._xhat = (x - mean) * self._inv
        return self.params["gain"] * self._xhat + self.params["shift"]

    def backward(self, dy):
        self.grads["gain"] += (dy * self._xhat).sum(axis=0)
        self.grads["shift"] += dy.sum(axis=0)
        dxhat = dy * self.params["gain"]
        return self._inv * (
            dxhat
            - dxhat.mean(axis=-1, keepdims=True)
            - self._xhat * (dxhat * self._xhat).mean(axis=-1, keepdims=True)
        )


class Dropout(Layer):
    """Inverted dropout: scales survivors at train time so eval is the
    identity. Train-mode forward needs an rng and is deterministic in it."""

    def __init__(self, rate: float):
        super().__init__()
        if not 0.0 <= rate < 1.0:
            raise ValidationError(f"dropout rate {rate} outside [0, 1)")
        self.rate = rate

    def forward(self, x, train=False, rng=None):
        if not train or self.rate == 0.0:
            self._mask = None
            return x
        if rng is None:
            raise ValidationError("train-mode dropout requires an rng")
        self._mask = rng.random(x.shape) >= self.rate
        return x * self._mask / (1.0 - self.rate)

    def backward(self, dy):
        if self._mask is None:
            return dy
        return dy * self._mask / (1.0 - self.rate)


class MultiHeadSelfAttention(Layer):
    """Unmasked (bidirectional) multi-head self-attention.

    Query/key/value projections map d_model -> n_heads * d_head; per head
    scores = Q K^T / sqrt(d_head) are row-softmaxed, the weighted values
    are concatenated across heads and projected back to d_model. The
    q/k/v projections carry no bias (a key bias is exactly inert under the
    row softmax and a value bias folds into the output bias); the output
    projection keeps one.
    """

    def __init__(self, d_model: int, n_heads: int, d_head: int, rng: np.random.Generator):
        super().__init__()
        self.n_heads = n_heads
        self.d_head = d_head
        width = n_heads * d_head
        for name in ("wq", "wk", "wv"):
            self._add_param(name, glorot_uniform(rng, d_model, width))
        self._add_param("wo", glorot_uniform(rng, width, d_model))
        self._add_param("bo", np.zeros(d_model))

    def _split(self, m: np.ndarray) -> np.ndarray:
        t = m.shape[0]
        return m.reshape(t, self.n_heads, self.d_head).transpose(1, 0, 2)

    def _merge(self, m: np.ndarray) -> np.ndarray:
        h, t, d = m.shape
        return m.transpose(1, 0, 2).reshape(t, h * d)

    def forward(self, x, train=False, rng=None):
        if x.shape[-1] != self.params["wq"].shape[0]:
            raise ShapeError(
                f"attention expects d_model {self.params['wq'].shape[0]}, got {x.shape}"
            )
        p = self.params
        self._x = x
        self._q = self._split(x @ p["wq"])
        self._k = self._split(x @ p["wk"])
        self._v = self._split(x @ p["wv"])
        scale = 1.0 / np.sqrt(self.d_head)
        scores = self._q @ self._k.transpose(0, 2, 1) * scale
        self._attn = softmax_rows(scores)
        self._ctx = self._merge(self._attn @ self._v)
        return self._ctx @ p["wo"] + p["bo"]

    def backward(self, dy):
        p = self.params
        self.grads["wo"] += self._ctx.T @ dy
        self.grads["bo"] += dy.sum(axis=0)
        dctx = self._split(dy @ p["wo"].T)

        dattn = dctx @ self._v.transpose(0, 2, 1)
        dv = self._attn.transpose(0, 2, 1) @ dctx
        ds = self._attn * (dattn - (dattn * self._attn).sum(axis=-1, keepdims=True))
        ds *= 1.0 / np.sqrt(self.d_head)
        dq = ds @ self._k
        dk = ds.transpose(0, 2, 1) @ self._q

        dq, dk, dv = (self._merge(m) for m in (dq, dk, dv))
        x = self._x
        for name, d in (("q", dq), ("k", dk), ("v", dv)):
            self.grads["w" + name] += x.T @ d
        return dq @ p["wq"].T + dk @ p["wk"].T + dv @ p["wv"].T

    @property
    def last_attention(self) -> np.ndarray:
        """(n_heads, T, T) attention weights of the most recent forward."""
        return self._attn


class LSTM(Layer):
    """One direction of a standard LSTM (gate order i, f, g, o)."""

    def __init__(self, d_in: int, hidden: int, rng: np.random.Generator, forget_bias: float = 0.0):
        super().__init__()
        self.hidden = hidden
        self._add_param("w", glorot_uniform(rng, d_in, 4 * hidden))
        self._add_param("u", glorot_uniform(rng, hidden, 4 * hidden))
        bias = np.zeros(4 * hidden)
        bias[hidden : 2 * hidden] = forget_bias
        self._add_param("b", bias)

    def forward(self, x, train=False, rng=None):
        if x.shape[-1] != self.params["w"].shape[0]:
            raise ShapeError(f"lstm expects input dim {self.params['w'].shape[0]}, got {x.shape}")
        t_len, h = x.shape[0], self.hidden
        p = self.params
        gates = np.empty((t_len, 4 * h))
        cells = np.empty((t_len, h))
        tanh_c = np.empty((t_len, h))
        outs = np.empty((t_len, h))
        h_prev = np.zeros(h)
        c_prev = np.zeros(h)
        for t in range(t_len):
            z = x[t] @ p["w"] + h_prev @ p["u"] + p["b"]
            i = sigmoid(z[:h])
            f = sigmoid(z[h : 2 * h])
            g = np.tanh(z[2 * h : 3 * h])
            o = sigmoid(z[3 * h :])
            c = f * c_prev + i * g
            gates[t] = np.concatenate([i, f, g, o])
            cells[t] = c
            tanh_c[t] = np.tanh(c)
            outs[t] = o * tanh_c[t]
            h_prev, c_prev = outs[t], c
        self._x, self._gates, self._cells, self._tanh_c, self._outs = x, gates, cells, tanh_c, outs
        return outs

    def backward(self, dy):
        x, gates, cells, tanh_c, outs = self._x, self._gates, self._cells, self._tanh_c, self._outs
        t_len, h = x.shape[0], self.hidden
        p = self.params
        dx = np.empty_like(x)
        dh_next = np.zeros(h)
        dc_next = np.zeros(h)
        for t in reversed(range(t_len)):
            i, f, g, o = gates[t, :h], gates[t, h : 2 * h], gates[t, 2 * h : 3 * h], gates[t, 3 * h :]
            c_prev = cells[t - 1] if t > 0 else np.zeros(h)
            h_prev = outs[t - 1] if t > 0 else np.zeros(h)
            dh = dy[t] + dh_next
            do = dh * tanh_c[t]
            dc = dc_next + dh * o * (1.0 - tanh_c[t] ** 2)
            dz = np.concatenate(
                [
                    dc * g * i * (1.0 - i),
                    dc * c_prev * f * (1.0 - f),
                    dc * i * (1.0 - g**2),
                    do * o * (1.0 - o),
                ]
            )
            self.grads["w"] += np.outer(x[t], dz)
            self.grads["u"] += np.outer(h_prev, dz)
            self.grads["b"] += dz
            dx[t] = dz @ p["w"].T
            dh_next = dz @ p["u"].T
            dc_next = dc * f
        return dx


class BiLSTM(Layer):
    """Forward and reversed LSTM passes, hidden states concatenated per
    timestep as [forward_h_t ; backward_h_t] (width 2 * hidden)."""

    def __init__(self, d_in: int, hidden_per_dir: int, rng: np.random.Generator,
                 forget_bias: float = 0.0):
        super().__init__()
        self.hidden_per_dir = hidden_per_dir
        self.sublayers["fw"] = LSTM(d_in, hidden_per_dir, rng, forget_bias=forget_bias)
        self.sublayers["bw"] = LSTM(d_in, hidden_per_dir, rng, forget_bias=forget_bias)

    def forward(self, x, train=False, rng=None):
        h_fw = self.sublayers["fw"].forward(x)
        h_bw = self.sublayers["bw"].forward(x[::-1])[::-1]
        return np.concatenate([h_fw, h_bw], axis=1)

    def backward(self, dy):
        h = self.hidden_per_dir
        dx_fw = self.sublayers["fw"].backward(dy[:, :h])
        dx_bw = self.sublayers["bw"].backward(dy[::-1, h:])[::-1]
        return dx_fw + dx_bw


def bce_with_logits(
    logits: np.ndarray, targets: np.ndarray, mask: np.ndarray | None = None
) -> tuple[float, np.ndarray]:
    """Mean binary cross-entropy of sigmoid(logits) against 0/1 targets,
    computed in logit space for stability. Returns (loss, dloss/dlogits).

    `mask` (one flag per row) excludes rows from both the mean and the
    gradient.
    """
    logits = np.asarray(logits, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if logits.shape != targets.shape:
        raise ShapeError(f"logits {logits.shape} vs targets {targets.shape}")
    elementwise = np.maximum(logits, 0.0) - logits * targets + np.log1p(np.exp(-np.abs(logits)))
    dlogits = sigmoid(logits) - targets
    if mask is not None:
        keep = np.asarray(mask, dtype=bool)
        if keep.shape != (logits.shape[0],):
            raise ShapeError(f"mask shape {keep.shape} != ({logits.shape[0]},)")
        elementwise = elementwise * keep[:, None]
        dlogits = dlogits * keep[:, None]
        count = int(keep.sum()) * logits.shape[1]
    else:
        count = logits.size
    if count == 0:
        raise ValidationError("loss undefined: no valid rows")
    loss = float(elementwise.sum() / count)
    if not np.isfinite(loss):
        raise NumericError("non-finite loss")
    return loss, dlogits / count


# ---------------------------------------------------------------------------
# Finite-difference gradient oracle
# ---------------------------------------------------------------------------


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Max elementwise |a - n| / max(|a|, |n|, 1e-8)."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float((np.abs(analytic - numeric) / denom).max())


def fd_gradient(f: Callable[[], float], arr: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of scalar f() with respect to `arr`,
    perturbing the array in place and restoring it."""
    grad = np.empty_like(arr)
    flat = arr.reshape(-1)
    gflat = grad.reshape(-1)
    for idx in range(flat.size):
        orig = flat[idx]
        flat[idx] = orig + eps
        f_plus = f()
        flat[idx] = orig - eps
        f_minus = f()
        flat[idx] = orig
        gflat[idx] = (f_plus - f_minus) / (2.0 * eps)
        if not np.isfinite(gflat[idx]):
            raise NumericError("non-finite value in finite-difference gradient")
    return grad


def check_layer_gradients(
    layer: Layer, x: np.ndarray, eps: float = 1e-5, train: bool = False
) -> float:
    """Compare the layer's analytic gradients (input and every parameter)
    against central finite differences of loss = sum(forward(x)^2).

    Returns the max relative error across all checked elements.
    """
    x = np.array(x, dtype=np.float64)
    y = layer.forward(x, train=train)
    layer.zero_grads()
    dx = layer.backward(2.0 * y)
    analytic = {"__input__": dx.copy()}
    analytic.update({name: g.copy() for name, g in layer.named_grads()})

    def loss() -> float:
        return float((layer.forward(x, train=train) ** 2).sum())

    worst = relative_error(analytic["__input__"], fd_gradient(loss, x, eps))
    for name, arr in layer.named_params():
        worst = max(worst, relative_error(analytic[name], fd_gradient(loss, arr, eps)))
    return worst


def check_bce_head_gradients(seed: int, t_len: int = 6, n_classes: int = 3,
                             eps: float = 1e-5) -> float:
    """Finite-difference check of the sigmoid/BCE loss head gradient."""
    rng = np.random.default_rng(seed)
    logits = rng.normal(size=(t_len, n_classes))
    targets = (rng.random((t_len, n_classes)) < 0.5).astype(np.float64)
    _, dlogits = bce_with_logits(logits, targets)
    numeric = fd_gradient(lambda: bce_with_logits(logits, targets)[0], logits, eps)
    return relative_error(dlogits, numeric)


def layer_gradcheck_suite(n_seeds: int = 10, eps: float = 1e-4) -> dict[str, float]:
    """Worst-case finite-difference relative error per layer kind over
    `n_seeds` random parameterizations and inputs.

    eps defaults to the top of the usable range: the sum-of-squares loss
    makes central-difference round-off (machine_eps * |loss| / 2 eps) the
    binding error term, and larger eps suppresses it. Layer norm is checked
    with random gain/shift; at gain=1, shift=0 the loss is constant by
    construction and input gradients degenerate to the eps residue.
    """
    worst: dict[str, float] = {}

    def record(name: str, value: float) -> None:
        worst[name] = max(worst.get(name, 0.0), value)

    for seed in range(n_seeds):
        rng = np.random.default_rng(1000 + seed)
        x = rng.normal(size=(5, 4)) * 0.5
        record("dense", check_layer_gradients(Dense(4, 3, rng), x, eps))
        norm = LayerNorm(4)
        norm.params["gain"][...] = 1.0 + 0.5 * rng.normal(size=4)
        norm.params["shift"][...] = 0.5 * rng.normal(size=4)
        record("layer_norm", check_layer_gradients(norm, x, eps))
        attn = MultiHeadSelfAttention(4, 2, 3, rng)
        attn.params["bo"][...] = 0.1 * rng.normal(size=4)
        record("attention", check_layer_gradients(attn, x, eps))
        record("lstm", check_layer_gradients(LSTM(4, 3, rng, forget_bias=1.0), x, eps))
        record("bilstm", check_layer_gradients(BiLSTM(4, 3, rng, forget_bias=1.0), x, eps))
        record("bce_head", check_bce_head_gradients(2000 + seed, eps=eps))
    return worst
