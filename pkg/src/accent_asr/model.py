"""Six-layer acoustic model: 3 clipped-ReLU dense layers, a unidirectional LSTM,
one more clipped-ReLU dense layer and a softmax output layer.

Everything is float64 numpy. Activations use the row-vector convention
``h = x @ W + b`` with ``x`` of shape ``(T, n_in)``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import ShapeMismatch

PARAM_NAMES = (
    "dense1.W", "dense1.b",
    "dense2.W", "dense2.b",
    "dense3.W", "dense3.b",
    "lstm.W", "lstm.U", "lstm.b",
    "dense5.W", "dense5.b",
    "out.W", "out.b",
)

_DENSE = ("dense1", "dense2", "dense3")


@dataclass(frozen=True)
class ModelConfig:
    n_input: int = 26
    n_hidden: int = 128
    n_output: int = 29
    relu_clip: float = 20.0
    dropout: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if min(self.n_input, self.n_hidden, self.n_output) < 1:
            raise ValueError("model dimensions must be >= 1")
        if self.n_output < 2:
            raise ValueError("n_output must include at least one symbol plus blank")
        if self.relu_clip <= 0:
            raise ValueError("relu_clip must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")

    def shapes(self) -> dict:
        i, h, o = self.n_input, self.n_hidden, self.n_output
        return {
            "dense1.W": (i, h), "dense1.b": (h,),
            "dense2.W": (h, h), "dense2.b": (h,),
            "dense3.W": (h, h), "dense3.b": (h,),
            "lstm.W": (h, 4 * h), "lstm.U": (h, 4 * h), "lstm.b": (4 * h,),
            "dense5.W": (h, h), "dense5.b": (h,),
            "out.W": (h, o), "out.b": (o,),
        }

    def n_params(self) -> int:
        i, h, o = self.n_input, self.n_hidden, self.n_output
        return (i * h + h) + 2 * (h * h + h) + (8 * h * h + 4 * h) + (h * h + h) + (h * o + o)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(eq=False)
class ModelParams:
    config: ModelConfig
    tensors: dict

    def __getitem__(self, name):
        return self.tensors[name]

    def copy(self) -> "ModelParams":
        return ModelParams(self.config, {k: v.copy() for k, v in self.tensors.items()})

    def check(self) -> None:
        shapes = self.config.shapes()
        for name in PARAM_NAMES:
            if name not in self.tensors:
                raise ShapeMismatch(f"missing tensor {name}")
            if self.tensors[name].shape != shapes[name]:
                raise ShapeMismatch(
                    f"{name}: shape {self.tensors[name].shape}, expected {shapes[name]}")


def init_model(cfg: ModelConfig) -> ModelParams:
    """Glorot-uniform weights, zero biases, LSTM forget-gate bias 1."""
    rng = np.random.default_rng(cfg.seed)
    tensors = {}
    for name, shape in cfg.shapes().items():
        if len(shape) == 2:
            bound = np.sqrt(6.0 / (shape[0] + shape[1]))
            tensors[name] = rng.uniform(-bound, bound, size=shape)
        else:
            tensors[name] = np.zeros(shape)
    h = cfg.n_hidden
    tensors["lstm.b"][h:2 * h] = 1.0
    return ModelParams(cfg, tensors)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def forward(params: ModelParams, feats, rng: np.random.Generator | None = None):
    """Run the network over one utterance.

    ``feats`` is a ``(T, n_input)`` array or a FeatureMatrix. Dropout is only
    applied when ``rng`` is given and the config's dropout rate is non-zero.

    Returns ``(probs, cache)``; ``cache["log_probs"]`` holds the log-softmax.
    """
    cfg = params.config
    x = np.asarray(getattr(feats, "frames", feats), dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != cfg.n_input:
        raise ShapeMismatch(f"features of shape {x.shape}, model expects (T, {cfg.n_input})")
    p = params.tensors
    clip = cfg.relu_clip
    h = cfg.n_hidden
    drop = cfg.dropout if rng is not None else 0.0
    cache = {"x": x, "masks": {}}

    def dense(name, inp):
        z = inp @ p[name + ".W"] + p[name + ".b"]
        out = np.clip(z, 0.0, clip)
        if drop:
            mask = (rng.random(out.shape) >= drop) / (1.0 - drop)
            cache["masks"][name] = mask
            out = out * mask
        cache[name + ".z"] = z
        cache[name + ".in"] = inp
        return out

    act = x
    for name in _DENSE:
        act = dense(name, act)

    t_len = x.shape[0]
    pre = act @ p["lstm.W"] + p["lstm.b"]
    gates = np.empty((t_len, 4 * h))
    cells = np.empty((t_len, h))
    hs = np.empty((t_len, h))
    h_prev = np.zeros(h)
    c_prev = np.zeros(h)
    U = p["lstm.U"]
    for t in range(t_len):
        a = pre[t] + h_prev @ U
        g = np.empty(4 * h)
        g[:2 * h] = _sigmoid(a[:2 * h])
        g[2 * h:3 * h] = np.tanh(a[2 * h:3 * h])
        g[3 * h:] = _sigmoid(a[3 * h:])
        c_prev = g[h:2 * h] * c_prev + g[:h] * g[2 * h:3 * h]
        h_prev = g[3 * h:] * np.tanh(c_prev)
        gates[t], cells[t], hs[t] = g, c_prev, h_prev
    cache.update({"lstm.in": act, "lstm.gates": gates, "lstm.cells": cells, "lstm.h": hs})

    act = dense("dense5", hs)
    logits = act @ p["out.W"] + p["out.b"]
    cache["out.in"] = act
    log_probs = log_softmax(logits)
    cache["log_probs"] = log_probs
    return np.exp(log_probs), cache


def backward(params: ModelParams, cache: dict, d_logits: np.ndarray) -> dict:
    """Reverse-mode gradients of a scalar loss given its gradient w.r.t. the logits."""
    cfg = params.config
    p = params.tensors
    h = cfg.n_hidden
    d_logits = np.asarray(d_logits, dtype=np.float64)
    expected = cache["log_probs"].shape
    if d_logits.shape != expected:
        raise ShapeMismatch(f"logit gradient of shape {d_logits.shape}, expected {expected}")
    grads = {}

    grads["out.W"] = cache["out.in"].T @ d_logits
    grads["out.b"] = d_logits.sum(axis=0)
    d_act = d_logits @ p["out.W"].T

    def dense_back(name, d_out):
        if name in cache["masks"]:
            d_out = d_out * cache["masks"][name]
        z = cache[name + ".z"]
        dz = d_out * ((z > 0.0) & (z < cfg.relu_clip))
        grads[name + ".W"] = cache[name + ".in"].T @ dz
        grads[name + ".b"] = dz.sum(axis=0)
        return dz @ p[name + ".W"].T

    d_hs = dense_back("dense5", d_act)

    gates, cells, hs = cache["lstm.gates"], cache["lstm.cells"], cache["lstm.h"]
    t_len = gates.shape[0]
    U = p["lstm.U"]
    d_pre = np.empty((t_len, 4 * h))
    dU = np.zeros_like(U)
    dh_next = np.zeros(h)
    dc_next = np.zeros(h)
    for t in range(t_len - 1, -1, -1):
        i, f, g, o = gates[t, :h], gates[t, h:2 * h], gates[t, 2 * h:3 * h], gates[t, 3 * h:]
        c = cells[t]
        c_prev = cells[t - 1] if t > 0 else np.zeros(h)
        h_prev = hs[t - 1] if t > 0 else np.zeros(h)
        tanh_c = np.tanh(c)
        dh = d_hs[t] + dh_next
        dc = dh * o * (1.0 - tanh_c ** 2) + dc_next
        da = d_pre[t]
        da[:h] = dc * g * i * (1.0 - i)
        da[h:2 * h] = dc * c_prev * f * (1.0 - f)
        da[2 * h:3 * h] = dc * i * (1.0 - g ** 2)
        da[3 * h:] = dh * tanh_c * o * (1.0 - o)
        dU += np.outer(h_prev, da)
        dh_next = U @ da
        dc_next = dc * f
    grads["lstm.U"] = dU
    grads["lstm.W"] = cache["lstm.in"].T @ d_pre
    grads["lstm.b"] = d_pre.sum(axis=0)
    d_act = d_pre @ p["lstm.W"].T

    for name in reversed(_DENSE):
        d_act = dense_back(name, d_act)
    return {name: grads[name] for name in PARAM_NAMES}
