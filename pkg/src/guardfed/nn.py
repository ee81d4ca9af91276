"""A small numpy MLP with plain mini-batch SGD.

Parameters live in one flat float64 vector, laid out layer by layer as
``W`` (row-major, shape ``(fan_in, fan_out)``) followed by ``b``. Client
updates are differences of these vectors.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

CHECKPOINT_VERSION = 1


class TrainingDivergence(RuntimeError):
    pass


def _shapes(dims: Sequence[int]) -> list[tuple[tuple[int, int], tuple[int]]]:
    return [((dims[i], dims[i + 1]), (dims[i + 1],)) for i in range(len(dims) - 1)]


def param_count(dims: Sequence[int]) -> int:
    return sum(w[0] * w[1] + b[0] for w, b in _shapes(dims))


@dataclass(frozen=True)
class MlpModel:
    dims: tuple[int, ...]
    params: np.ndarray

    def __post_init__(self):
        if len(self.params) != param_count(self.dims):
            raise ValueError("parameter vector does not match layer dims")

    @property
    def n_params(self) -> int:
        return len(self.params)

    def layers(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """(W, b) views into ``params``."""
        out, pos = [], 0
        for (wshape, bshape) in _shapes(self.dims):
            nw = wshape[0] * wshape[1]
            w = self.params[pos:pos + nw].reshape(wshape)
            pos += nw
            b = self.params[pos:pos + bshape[0]]
            pos += bshape[0]
            out.append((w, b))
        return out

    def with_params(self, params: np.ndarray) -> "MlpModel":
        return MlpModel(self.dims, np.asarray(params, dtype=np.float64))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps({
            "version": CHECKPOINT_VERSION,
            "dims": list(self.dims),
            "params": [float(v).hex() for v in self.params],
        }))

    @classmethod
    def load(cls, path: str | Path) -> "MlpModel":
        blob = json.loads(Path(path).read_text())
        if blob.get("version") != CHECKPOINT_VERSION:
            raise ValueError("unsupported checkpoint version")
        return cls(tuple(blob["dims"]), np.array([float.fromhex(v) for v in blob["params"]]))


def flatten(layers: Sequence[tuple[np.ndarray, np.ndarray]]) -> np.ndarray:
    return np.concatenate([np.concatenate([w.ravel(), b.ravel()]) for w, b in layers])


def init(layer_dims: Sequence[int], seed: int = 0) -> MlpModel:
    """Xavier-uniform weights, zero biases."""
    dims = tuple(int(d) for d in layer_dims)
    if len(dims) < 2:
        raise ValueError("need at least an input and an output layer")
    if dims[-1] != 2:
        raise ValueError("output layer must have 2 units")
    rng = np.random.default_rng(seed)
    layers = []
    for (fan_in, fan_out), _ in _shapes(dims):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        layers.append((rng.uniform(-limit, limit, size=(fan_in, fan_out)), np.zeros(fan_out)))
    return MlpModel(dims, flatten(layers))


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _forward_cache(model: MlpModel, x: np.ndarray):
    acts = [x]
    layers = model.layers()
    h = x
    for i, (w, b) in enumerate(layers):
        a = h @ w + b
        if i < len(layers) - 1:
            h = np.maximum(a, 0.0)
            acts.append(h)
        else:
            h = a
    return acts, h


def forward(model: MlpModel, x: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != model.dims[0]:
        raise ValueError(f"batch width {x.shape[1]} != input dim {model.dims[0]}")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite input")
    _, logits = _forward_cache(model, x)
    return _softmax(logits)


def predict(model: MlpModel, x: np.ndarray) -> np.ndarray:
    """Class 1 only when its probability is strictly larger (ties go to 0)."""
    p = forward(model, x)
    return (p[:, 1] > p[:, 0]).astype(np.int8)


def loss(model: MlpModel, x, y, weights=None, normalizer: float | None = None) -> float:
    p = forward(model, x)
    y = np.asarray(y, dtype=np.int64)
    w = np.ones(len(y)) if weights is None else np.asarray(weights, dtype=np.float64)
    norm = w.sum() if normalizer is None else normalizer
    if norm == 0:
        return 0.0
    ce = -np.log(np.clip(p[np.arange(len(y)), y], 1e-300, None))
    return float(np.dot(w, ce) / norm)


def gradient(model: MlpModel, x, y, weights=None, normalizer: float | None = None) -> np.ndarray:
    """Flat gradient of ``sum_i w_i * CE_i / normalizer``.

    ``normalizer`` defaults to ``sum(w)``, which makes weight ``k`` on one row
    equal to ``k`` copies of that row.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.asarray(y, dtype=np.int64)
    w = np.ones(len(y)) if weights is None else np.asarray(weights, dtype=np.float64)
    norm = w.sum() if normalizer is None else float(normalizer)
    if norm == 0 or not np.any(w):
        return np.zeros(model.n_params)
    acts, logits = _forward_cache(model, x)
    delta = _softmax(logits)
    delta[np.arange(len(y)), y] -= 1.0
    delta *= (w / norm)[:, None]

    layers = model.layers()
    grads = [None] * len(layers)
    for i in range(len(layers) - 1, -1, -1):
        w_i, _ = layers[i]
        grads[i] = (acts[i].T @ delta, delta.sum(axis=0))
        if i > 0:
            delta = (delta @ w_i.T) * (acts[i] > 0)
    return flatten(grads)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 1
    batch_size: int = 64
    lr: float = 0.005
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.lr > 0:
            raise ValueError("lr must be positive")


def train_local(start: MlpModel, x: np.ndarray, y: np.ndarray, cfg: TrainConfig,
                weights: np.ndarray | None = None) -> MlpModel:
    """Mini-batch SGD on (weighted) cross-entropy; ``start`` is left untouched.

    Batch losses are divided by ``batch_len * mean(weights)`` so weights that
    average to one leave the step size of an unweighted run unchanged.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n = len(y)
    if n == 0:
        raise ValueError("no training data")
    if weights is not None:
        weights = np.asarray(weights, dtype=np.float64)
        if weights.shape != (n,) or np.any(weights <= 0):
            raise ValueError("weights must be positive and match the data length")
        mean_w = float(weights.mean())
    else:
        mean_w = 1.0
    rng = np.random.default_rng(cfg.seed)
    params = start.params.copy()
    model = start.with_params(params)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        for lo in range(0, n, cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            wb = None if weights is None else weights[idx]
            # Overflow shows up as non-finite parameters, which raise below.
            with np.errstate(over="ignore", invalid="ignore"):
                g = gradient(model, x[idx], y[idx], wb, normalizer=len(idx) * mean_w)
                params = params - cfg.lr * g
            if not np.all(np.isfinite(params)):
                raise TrainingDivergence(
                    f"non-finite parameters at epoch {epoch}, batch starting {lo}")
            model = start.with_params(params)
    return model


def compute_update(new: MlpModel, base: MlpModel) -> np.ndarray:
    if new.dims != base.dims:
        raise ValueError("architecture mismatch")
    return new.params - base.params


def apply_update(base: MlpModel, g: np.ndarray, eta: float = 1.0) -> MlpModel:
    g = np.asarray(g, dtype=np.float64)
    if g.shape != base.params.shape:
        raise ValueError(f"update length {g.size} != parameter count {base.n_params}")
    return base.with_params(base.params + eta * g)
