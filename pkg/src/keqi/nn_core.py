"""Small float64 numerics: activations, dense layers with analytic gradients,
dropout, AdamW, finite-difference gradient checks and parameter checkpoints.

Layers follow the column convention ``y = act(W x + b)`` with ``W`` of shape
(out, in). Inputs may also be batches of row vectors, shape (n, in).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping

import numpy as np

ACTIVATIONS = ("none", "relu", "sigmoid", "tanh")


def sigmoid(x):
    # tanh form avoids overflow in exp for large |x|
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=np.float64)))


def softmax(x, axis=-1):
    x = np.asarray(x, dtype=np.float64)
    z = np.exp(x - x.max(axis=axis, keepdims=True))
    return z / z.sum(axis=axis, keepdims=True)


def log_softmax(x, axis=-1):
    x = np.asarray(x, dtype=np.float64)
    shifted = x - x.max(axis=axis, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))


def activation(x, kind: str):
    x = np.asarray(x, dtype=np.float64)
    if kind == "none":
        return x.copy()
    if kind == "relu":
        return np.maximum(x, 0.0)
    if kind == "sigmoid":
        return sigmoid(x)
    if kind == "tanh":
        return np.tanh(x)
    if kind == "softmax":
        return softmax(x)
    raise ValueError(f"unknown activation {kind!r}")


def activation_backward(z, y, dy, kind: str):
    """Gradient w.r.t. the pre-activation ``z`` given output ``y`` and upstream ``dy``."""
    if kind == "none":
        return dy
    if kind == "relu":
        return dy * (z > 0)
    if kind == "sigmoid":
        return dy * y * (1.0 - y)
    if kind == "tanh":
        return dy * (1.0 - y * y)
    raise ValueError(f"unknown activation {kind!r}")


@dataclass
class DenseLayer:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: str = "none"

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise ValueError(f"inconsistent layer shapes {self.weight.shape} / {self.bias.shape}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @classmethod
    def init(cls, n_in: int, n_out: int, rng: np.random.Generator, activation: str = "none") -> "DenseLayer":
        """Glorot-uniform weights, zero bias."""
        limit = np.sqrt(6.0 / (n_in + n_out))
        return cls(rng.uniform(-limit, limit, (n_out, n_in)), np.zeros(n_out), activation)

    @property
    def shape(self) -> tuple[int, int]:
        return self.weight.shape


def _check_input(layer: DenseLayer, x: np.ndarray) -> None:
    if x.shape[-1] != layer.weight.shape[1]:
        raise ValueError(f"input width {x.shape[-1]} does not match layer input {layer.weight.shape[1]}")


def dense_forward(layer: DenseLayer, x):
    x = np.asarray(x, dtype=np.float64)
    _check_input(layer, x)
    return activation(x @ layer.weight.T + layer.bias, layer.activation)


def dense_backward(layer: DenseLayer, x, dy):
    """Return ``(dx, dW, db)`` for ``y = act(W x + b)``; batched rows are summed into dW, db."""
    x = np.asarray(x, dtype=np.float64)
    dy = np.asarray(dy, dtype=np.float64)
    _check_input(layer, x)
    z = x @ layer.weight.T + layer.bias
    if dy.shape != z.shape:
        raise ValueError(f"upstream gradient shape {dy.shape} does not match output {z.shape}")
    dz = activation_backward(z, activation(z, layer.activation), dy, layer.activation)
    dx = dz @ layer.weight
    if x.ndim == 1:
        return dx, np.outer(dz, x), dz.copy()
    return dx, dz.T @ x, dz.sum(axis=0)


def dropout_mask(shape, rate: float, rng: np.random.Generator) -> np.ndarray:
    """Inverted-dropout mask: kept entries are 1/(1-rate), dropped ones 0."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if rate == 0.0:
        return np.ones(shape)
    keep = rng.random(shape) >= rate
    return keep / (1.0 - rate)


def dropout(x, rate: float, rng: np.random.Generator | None, training: bool):
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    x = np.asarray(x, dtype=np.float64)
    if not training or rate == 0.0:
        return x.copy()
    return x * dropout_mask(x.shape, rate, rng)


@dataclass
class AdamW:
    """AdamW with bias correction and decoupled weight decay.

    ``step`` updates a name -> array mapping in place and also returns it.
    """

    learning_rate: float = 2e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def step(self, params: dict, grads: Mapping[str, np.ndarray]) -> dict:
        self.t += 1
        lr = self.learning_rate
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for name, p in params.items():
            g = grads.get(name)
            if g is None:
                continue
            if g.shape != p.shape:
                raise ValueError(f"gradient for {name!r} has shape {g.shape}, expected {p.shape}")
            m = self.m.setdefault(name, np.zeros_like(p))
            v = self.v.setdefault(name, np.zeros_like(p))
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            if self.weight_decay:
                p *= 1.0 - lr * self.weight_decay
            p -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        return params


def adamw_step(state: AdamW, params: dict, grads: Mapping[str, np.ndarray]) -> dict:
    return state.step(params, grads)


def grad_check(
    loss_fn: Callable[[dict], tuple[float, dict]],
    params: dict,
    step: float = 1e-5,
    floor: float = 1e-7,
) -> float:
    """Worst relative error between analytic and central-difference gradients.

    ``loss_fn(params) -> (loss, grads)`` must be deterministic. Relative error
    is ``|a - n| / max(|a| + |n|, floor)`` per coordinate. Params are restored.
    """
    _, grads = loss_fn(params)
    worst = 0.0
    for name, p in params.items():
        analytic = grads[name]
        flat = p.reshape(-1)
        aflat = analytic.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up, _ = loss_fn(params)
            flat[i] = orig - step
            down, _ = loss_fn(params)
            flat[i] = orig
            numeric = (up - down) / (2 * step)
            err = abs(aflat[i] - numeric) / max(abs(aflat[i]) + abs(numeric), floor)
            worst = max(worst, err)
    return worst


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

CONFIG_KEY = "__config__"


def save_params(path, params: Mapping[str, np.ndarray], config: dict | None = None) -> None:
    """Write an uncompressed ``.npz``: one float64 array per parameter name, plus
    a JSON config string under ``__config__``. Arrays round-trip bit-exactly."""
    arrays = {name: np.asarray(a, dtype=np.float64) for name, a in params.items()}
    if CONFIG_KEY in arrays:
        raise ValueError(f"parameter name {CONFIG_KEY!r} is reserved")
    arrays[CONFIG_KEY] = np.array(json.dumps(config or {}, sort_keys=True))
    with Path(path).open("wb") as fh:
        np.savez(fh, **arrays)


def load_params(path) -> tuple[dict[str, np.ndarray], dict]:
    with np.load(Path(path), allow_pickle=False) as data:
        params = {k: data[k].copy() for k in data.files if k != CONFIG_KEY}
        config = json.loads(str(data[CONFIG_KEY])) if CONFIG_KEY in data.files else {}
    return params, config
