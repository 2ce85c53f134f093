"""Per-epoch prediction history and the uncertainty/hardness matrices.

The tracker keeps a sliding window of full-dataset probability matrices, the
last two thresholded prediction matrices, and an exponential moving average
of prediction flips. From those it derives, each epoch:

* an uncertainty score per (instance, label): a convex mix of the current
  prediction's binary entropy and the mean absolute change of recent
  predictions, and
* a hardness score: the current loss damped by long-term flip frequency, so
  stable misclassifications outrank noisy oscillators.
"""

from __future__ import annotations

from collections import deque

import numpy as np

from .errors import ShapeError
from .mlp import PROB_CLAMP

__all__ = [
    "binary_entropy",
    "temporal_fluctuation",
    "ema_update",
    "PredictionHistory",
    "compute_uncertainty",
    "compute_hardness",
]

BINARY_THRESHOLD = 0.5


def binary_entropy(p):
    """Entropy of a Bernoulli(p) in bits; clamped away from {0, 1}."""
    p = np.clip(np.asarray(p, dtype=np.float64), PROB_CLAMP, 1.0 - PROB_CLAMP)
    return -(p * np.log2(p) + (1.0 - p) * np.log2(1.0 - p))


def temporal_fluctuation(history, n_t: int):
    """Mean |adjacent difference| over the last min(len, n_t) entries.

    ``history`` is a sequence of equally-shaped arrays (or scalars) ordered
    oldest to newest. Fewer than two entries means no movement: returns 0.
    """
    window = list(history)[-n_t:]
    if len(window) < 2:
        ref = np.asarray(window[0], dtype=np.float64) if window else 0.0
        return np.zeros_like(ref, dtype=np.float64)
    stack = np.stack([np.asarray(w, dtype=np.float64) for w in window])
    return np.abs(np.diff(stack, axis=0)).mean(axis=0)


def ema_update(prev, flip, smoothing: float):
    """One exponential-moving-average step: smoothing*flip + (1-smoothing)*prev."""
    return smoothing * np.asarray(flip, dtype=np.float64) \
        + (1.0 - smoothing) * np.asarray(prev, dtype=np.float64)


class PredictionHistory:
    """Ring buffer of per-epoch probability matrices plus flip statistics."""

    def __init__(self, n: int, q: int, window: int = 5, flip_smoothing: float = 0.7):
        self.n = int(n)
        self.q = int(q)
        self.window_size = int(window)
        self.flip_smoothing = float(flip_smoothing)
        self.window: deque = deque(maxlen=self.window_size)
        self.prev_binary: np.ndarray | None = None
        self.curr_binary: np.ndarray | None = None
        self.ema_flip = np.zeros((self.n, self.q))
        self.epochs_seen = 0

    def push(self, probs: np.ndarray) -> None:
        probs = np.asarray(probs, dtype=np.float64)
        if probs.shape != (self.n, self.q):
            raise ShapeError(f"push: expected {(self.n, self.q)}, got {probs.shape}")
        self.window.append(probs)
        self.prev_binary = self.curr_binary
        self.curr_binary = probs >= BINARY_THRESHOLD
        if self.prev_binary is not None:
            flip = np.abs(self.curr_binary.astype(np.float64)
                          - self.prev_binary.astype(np.float64))
            self.ema_flip = ema_update(self.ema_flip, flip, self.flip_smoothing)
        self.epochs_seen += 1

    def current(self) -> np.ndarray:
        if not self.window:
            raise ShapeError("no predictions recorded yet")
        return self.window[-1]

    def fluctuation(self) -> np.ndarray:
        if len(self.window) < 2:
            return np.zeros((self.n, self.q))
        return temporal_fluctuation(self.window, self.window_size)

    def full_stack(self) -> np.ndarray:
        """Windowed history as a (w, n, q) stack (oldest first)."""
        return np.stack(list(self.window))


def compute_uncertainty(history: PredictionHistory, entropy_mix: float = 0.5) -> np.ndarray:
    """Uncertainty matrix: entropy_mix*entropy(current) + (1-entropy_mix)*fluctuation."""
    e = binary_entropy(history.current())
    d = history.fluctuation()
    return entropy_mix * e + (1.0 - entropy_mix) * d


def compute_hardness(loss_matrix: np.ndarray, ema_flip: np.ndarray) -> np.ndarray:
    """Hardness matrix: current loss scaled by (1 - flip EMA)."""
    loss_matrix = np.asarray(loss_matrix, dtype=np.float64)
    ema_flip = np.asarray(ema_flip, dtype=np.float64)
    if loss_matrix.shape != ema_flip.shape:
        raise ShapeError("compute_hardness: shapes differ")
    return loss_matrix * (1.0 - ema_flip)
