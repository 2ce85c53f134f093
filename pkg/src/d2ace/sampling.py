"""Instance weights to sampling probabilities, schedules, and batch draws.

Weights in [0, 1] are bucketed into integer quantization indices; an
exponentially decaying selection pressure turns the index into a geometric
probability profile, so high-weight instances are strongly favored early
and the distribution flattens to uniform by the final epoch. Two such
distributions (uncertainty- and hardness-driven) are blended by an
epoch-scheduled Bernoulli coin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractError
from .linalg import RandomStream

__all__ = [
    "SamplingSchedule",
    "SamplingDistribution",
    "quantization_index",
    "quantization_indices",
    "selection_pressure",
    "weight_to_probability",
    "mixing_coefficient",
    "mixture_distribution",
    "draw_batch",
    "batches_per_epoch",
]


@dataclass
class SamplingSchedule:
    """Selection-pressure decay and mixing-coefficient schedule."""

    s_init: float = 100.0
    warmup_epochs: int = 10
    total_epochs: int = 100
    p_start: float = 0.7
    p_end: float = 0.3
    t_start: int = 30
    t_end: int = 70

    def __post_init__(self):
        if self.s_init <= 1.0:
            raise ConfigError("s_init must exceed 1")
        if not 0 <= self.warmup_epochs < self.total_epochs - 1:
            raise ConfigError("need warmup_epochs + 1 < total_epochs")
        if not (0.0 <= self.p_end <= 1.0 and 0.0 <= self.p_start <= 1.0):
            raise ConfigError("mixing endpoints must lie in [0, 1]")
        if self.t_end <= self.t_start:
            raise ConfigError("t_end must exceed t_start")


def quantization_index(w: float, n: int) -> int:
    """Bucket a weight in [0, 1] into an integer index in [0, n].

    Higher weight, lower index: ceil((1 - w) * n), clamped. Index 0 is the
    most-favored bucket.
    """
    if not 0.0 <= w <= 1.0:
        raise ContractError(f"quantization_index: weight {w} outside [0, 1]")
    if n < 1:
        raise ConfigError("quantization_index: n must be >= 1")
    return int(min(max(math.ceil((1.0 - w) * n), 0), n))


def quantization_indices(weights: np.ndarray, n: int) -> np.ndarray:
    weights = np.asarray(weights, dtype=np.float64)
    if weights.min() < 0.0 or weights.max() > 1.0:
        raise ContractError("quantization_indices: weights outside [0, 1]")
    return np.clip(np.ceil((1.0 - weights) * n), 0, n).astype(np.int64)


def selection_pressure(t, schedule: SamplingSchedule) -> float:
    """Pressure at epoch t: s_init at warmup+1, geometric decay to 1 at T."""
    t0 = schedule.warmup_epochs + 1
    if t <= schedule.warmup_epochs or t > schedule.total_epochs:
        raise ConfigError(f"selection_pressure: epoch {t} outside ({schedule.warmup_epochs}, "
                          f"{schedule.total_epochs}]")
    span = schedule.total_epochs - t0
    rate = math.exp(math.log(1.0 / schedule.s_init) / span)
    return schedule.s_init * rate ** (t - t0)


def mixing_coefficient(t, schedule: SamplingSchedule) -> float:
    """Linear decay from p_start at t_start to p_end at t_end, clamped outside."""
    if t <= schedule.t_start:
        return schedule.p_start
    if t >= schedule.t_end:
        return schedule.p_end
    frac = (t - schedule.t_start) / (schedule.t_end - schedule.t_start)
    return schedule.p_start + frac * (schedule.p_end - schedule.p_start)


@dataclass
class SamplingDistribution:
    """Normalized, strictly positive sampling probabilities over n instances.

    For a mixture, the two component distributions and the coin probability
    are kept so draws can be realized as the two-stage process (coin, then
    categorical) that the marginal distribution summarizes.
    """

    probs: np.ndarray
    q_index: np.ndarray | None = None
    component_u: "SamplingDistribution | None" = None
    component_h: "SamplingDistribution | None" = None
    p_mix: float | None = None

    @property
    def n(self) -> int:
        return self.probs.shape[0]


def weight_to_probability(weights: np.ndarray, t,
                          schedule: SamplingSchedule) -> SamplingDistribution:
    """Geometric profile over quantization indices: P_i proportional to s^(-Q_i/n)."""
    weights = np.asarray(weights, dtype=np.float64)
    n = weights.shape[0]
    q_index = quantization_indices(weights, n)
    s = selection_pressure(t, schedule)
    # log-space: exponents stay tiny but this costs nothing and scales to any s
    log_unnorm = -(q_index.astype(np.float64) / n) * math.log(s)
    log_unnorm -= log_unnorm.max()
    probs = np.exp(log_unnorm)
    probs /= probs.sum()
    probs /= probs.sum()
    return SamplingDistribution(probs=probs, q_index=q_index)


def mixture_distribution(dist_u: SamplingDistribution, dist_h: SamplingDistribution,
                         p_mix: float) -> SamplingDistribution:
    """Convex blend of two distributions; stays strictly positive and normalized."""
    if dist_u.n != dist_h.n:
        raise ConfigError("mixture_distribution: component sizes differ")
    if not 0.0 <= p_mix <= 1.0:
        raise ConfigError("mixture_distribution: p_mix outside [0, 1]")
    probs = p_mix * dist_u.probs + (1.0 - p_mix) * dist_h.probs
    probs /= probs.sum()
    return SamplingDistribution(probs=probs, component_u=dist_u,
                                component_h=dist_h, p_mix=p_mix)


def draw_batch(dist: SamplingDistribution, b: int, rng: RandomStream,
               with_replacement: bool = True) -> np.ndarray:
    """Draw b indices i.i.d. from the distribution.

    Mixture distributions draw a per-instance coin first and then sample the
    chosen component, which marginalizes to the blended probabilities. The
    without-replacement mode (for parity with shuffling selectors) uses
    exponential-key weighted reservoir selection.
    """
    if b < 1:
        raise ConfigError("draw_batch: batch size must be >= 1")
    if not with_replacement:
        if b > dist.n:
            raise ConfigError("draw_batch: b exceeds n without replacement")
        keys = rng.random(dist.n) ** (1.0 / dist.probs)
        return np.argsort(-keys, kind="stable")[:b].astype(np.int64)
    if dist.component_u is not None and dist.component_h is not None:
        coins = rng.random(b) < dist.p_mix
        u = rng.random(b)
        cdf_u = np.cumsum(dist.component_u.probs)
        cdf_h = np.cumsum(dist.component_h.probs)
        cdf_u[-1] = cdf_h[-1] = 1.0
        picks_u = np.searchsorted(cdf_u, u, side="right")
        picks_h = np.searchsorted(cdf_h, u, side="right")
        return np.where(coins, picks_u, picks_h).astype(np.int64)
    return rng.categorical(dist.probs, b)


def batches_per_epoch(n: int, b: int) -> int:
    """Full-pass worth of updates per epoch: ceil(n / b)."""
    return -(-n // b)


def decile_loss_histogram(probs: np.ndarray, losses: np.ndarray,
                          tiers: int = 3) -> np.ndarray:
    """Counts of loss-tier membership per sampling-probability decile.

    Instances are sorted by descending sampling probability into ten equal
    deciles; loss tiers are quantile buckets of the per-instance loss
    (highest tier first). The (10, tiers) table shows which kinds of
    instances a distribution concentrates on.
    """
    probs = np.asarray(probs, dtype=np.float64)
    losses = np.asarray(losses, dtype=np.float64)
    if probs.shape != losses.shape:
        raise ConfigError("decile_loss_histogram: probs/losses lengths differ")
    n = probs.shape[0]
    order = np.argsort(-probs, kind="stable")
    cuts = np.quantile(losses, np.linspace(0, 1, tiers + 1)[1:-1])
    tier_of = tiers - 1 - np.searchsorted(cuts, losses, side="right")
    out = np.zeros((10, tiers), dtype=np.int64)
    for rank, idx in enumerate(order):
        out[min(rank * 10 // n, 9), tier_of[idx]] += 1
    return out
