"""Minimal feed-forward multi-label classifier trained with Adam.

ReLU hidden layers, sigmoid outputs, per-label binary cross-entropy.
Gradients are computed analytically in numpy so selectors and the
verification suite can ask for exact per-instance gradients, and so an
optional per-instance loss weight (the importance-sampling correction)
enters the batch objective directly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ShapeError, TrainingError
from .linalg import RandomStream, SparseBinaryMatrix

__all__ = [
    "PROB_CLAMP",
    "LrSchedule",
    "AdamState",
    "MlpModel",
    "bce_loss_matrix",
    "save_checkpoint",
    "load_checkpoint",
]

PROB_CLAMP = 1e-7


@dataclass
class LrSchedule:
    """Linear warm-up to a constant rate: lr(t) = base_lr * min(1, t / warmup)."""

    base_lr: float = 1e-4
    warmup_epochs: int = 10

    def lr(self, epoch: int) -> float:
        if epoch < 0:
            raise ConfigError("epoch must be >= 0")
        if self.warmup_epochs <= 0:
            return self.base_lr
        return self.base_lr * min(1.0, epoch / self.warmup_epochs)


@dataclass
class AdamState:
    """Per-parameter first/second moments plus the step counter."""

    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-4
    step: int = 0
    m: list = field(default_factory=list, repr=False)
    v: list = field(default_factory=list, repr=False)

    @classmethod
    def for_model(cls, model: "MlpModel", **kw) -> "AdamState":
        state = cls(**kw)
        state.m = [np.zeros_like(p) for p in model.parameters()]
        state.v = [np.zeros_like(p) for p in model.parameters()]
        return state


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def as_dense_labels(labels, q: int | None = None) -> np.ndarray:
    if isinstance(labels, SparseBinaryMatrix):
        return labels.denseify()
    arr = np.asarray(labels, dtype=np.float64)
    return arr


def bce_loss_matrix(probs: np.ndarray, labels) -> np.ndarray:
    """Per-(instance, label) binary cross-entropy, natural log."""
    y = as_dense_labels(labels)
    probs = np.asarray(probs, dtype=np.float64)
    if probs.shape != y.shape:
        raise ShapeError(f"bce_loss_matrix: shapes differ ({probs.shape} vs {y.shape})")
    p = np.clip(probs, PROB_CLAMP, 1.0 - PROB_CLAMP)
    return -(y * np.log(p) + (1.0 - y) * np.log1p(-p))


class MlpModel:
    """Fully-connected net: ReLU hidden layers, sigmoid output head."""

    def __init__(self, layer_sizes, rng: RandomStream | None = None):
        self.layer_sizes = list(int(s) for s in layer_sizes)
        if len(self.layer_sizes) < 2:
            raise ConfigError("layer_sizes needs at least input and output sizes")
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            if rng is None:
                w = np.zeros((fan_in, fan_out))
            else:
                w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
            self.weights.append(np.asarray(w, dtype=np.float64))
            self.biases.append(np.zeros(fan_out, dtype=np.float64))

    def parameters(self) -> list:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def n_params(self) -> int:
        return int(sum(p.size for p in self.parameters()))

    def _forward_raw(self, x: np.ndarray):
        """Returns (clamped probabilities, per-layer activations for backward)."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.layer_sizes[0]:
            raise ShapeError(f"forward: expected (*, {self.layer_sizes[0]}) input, got {x.shape}")
        acts = [x]
        h = x
        last = len(self.weights) - 1
        for li, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            h = _sigmoid(z) if li == last else np.maximum(z, 0.0)
            acts.append(h)
        probs = np.clip(h, PROB_CLAMP, 1.0 - PROB_CLAMP)
        return probs, acts

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Probabilities in (PROB_CLAMP, 1 - PROB_CLAMP), shape (n, q)."""
        return self._forward_raw(x)[0]

    def gradients(self, x: np.ndarray, labels, instance_weights=None) -> list:
        """Gradient of mean_i w_i * sum_j bce_ij w.r.t. every parameter.

        ``instance_weights`` defaults to ones (plain mini-batch objective);
        positive finite weights are required.
        """
        y = as_dense_labels(labels)
        m = x.shape[0] if hasattr(x, "shape") else len(x)
        if m == 0:
            raise ConfigError("gradients: empty batch")
        if instance_weights is None:
            w_inst = np.ones(m, dtype=np.float64)
        else:
            w_inst = np.asarray(instance_weights, dtype=np.float64)
            if w_inst.shape != (m,):
                raise ShapeError("instance_weights must be one value per batch row")
            if not np.all(np.isfinite(w_inst)) or np.any(w_inst <= 0):
                raise ConfigError("instance_weights must be positive and finite")

        probs, acts = self._forward_raw(np.asarray(x, dtype=np.float64))
        if probs.shape != y.shape:
            raise ShapeError(f"gradients: label shape {y.shape} mismatches output {probs.shape}")

        # d(mean_i w_i * sum_j bce_ij)/d(logit_ij) = w_i (p_ij - y_ij) / m
        delta = (probs - y) * (w_inst / m)[:, None]
        grads = [None] * (2 * len(self.weights))
        for li in range(len(self.weights) - 1, -1, -1):
            grads[2 * li] = acts[li].T @ delta
            grads[2 * li + 1] = delta.sum(axis=0)
            if li > 0:
                delta = (delta @ self.weights[li].T) * (acts[li] > 0)
        return grads


def adam_step(model: MlpModel, adam: AdamState, grads: list, lr: float) -> None:
    """One Adam update with L2 weight decay folded into the gradient."""
    adam.step += 1
    b1, b2 = adam.beta1, adam.beta2
    bc1 = 1.0 - b1 ** adam.step
    bc2 = 1.0 - b2 ** adam.step
    for p, g, m, v in zip(model.parameters(), grads, adam.m, adam.v):
        g = g + adam.weight_decay * p
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + adam.eps)


def backward_and_update(model: MlpModel, adam: AdamState, batch_features,
                        batch_labels, instance_weights=None,
                        lr: float = 1e-4) -> None:
    """Backward pass on the weighted batch objective plus one Adam step."""
    grads = model.gradients(batch_features, batch_labels, instance_weights)
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise TrainingError("non-finite gradient; aborting epoch")
    adam_step(model, adam, grads, lr)


# ---------------------------------------------------------------------------
# Checkpoints

_CKPT_VERSION = 1


def save_checkpoint(path, model: MlpModel, adam: AdamState | None = None) -> None:
    payload = {
        "version": np.int64(_CKPT_VERSION),
        "layer_sizes": np.asarray(model.layer_sizes, dtype=np.int64),
    }
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        payload[f"w{i}"] = w
        payload[f"b{i}"] = b
    if adam is not None:
        payload["adam_step"] = np.int64(adam.step)
        payload["adam_hyper"] = np.asarray(
            [adam.beta1, adam.beta2, adam.eps, adam.weight_decay])
        for i, (m, v) in enumerate(zip(adam.m, adam.v)):
            payload[f"adam_m{i}"] = m
            payload[f"adam_v{i}"] = v
    np.savez(path, **payload)


def load_checkpoint(path) -> tuple:
    with np.load(path) as z:
        if int(z["version"]) != _CKPT_VERSION:
            raise ConfigError(f"unsupported checkpoint version {int(z['version'])}")
        model = MlpModel([int(s) for s in z["layer_sizes"]])
        for i in range(len(model.weights)):
            model.weights[i] = z[f"w{i}"].copy()
            model.biases[i] = z[f"b{i}"].copy()
        adam = None
        if "adam_step" in z:
            b1, b2, eps, wd = (float(v) for v in z["adam_hyper"])
            adam = AdamState(beta1=b1, beta2=b2, eps=eps, weight_decay=wd,
                             step=int(z["adam_step"]))
            adam.m = [z[f"adam_m{i}"].copy() for i in range(len(model.weights) * 2)]
            adam.v = [z[f"adam_v{i}"].copy() for i in range(len(model.weights) * 2)]
    return model, adam
