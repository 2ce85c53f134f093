"""Batch selectors: the correlation-enhanced engine plus seven baselines.

Every selector implements the same contract: once per epoch it receives a
frozen snapshot (current predictions/losses, prediction history, labels,
neighbor table, schedule) and returns the epoch's batches, plus the sampling
distribution when one exists. During warm-up epochs every non-random
selector behaves exactly like the random one, so methods differ only after
their statistics have had time to fill.

Selector kinds
--------------
random    shuffled full-coverage batches
active    all-history prediction variance + confidence half-width
recent    entropy of thresholded predictions over a sliding window
dihcl     discounted |loss change| rewards with floor-mixed softmax sampling
balance   greedy per-batch label balancing toward positive:negative = 1:1
hard_imb  static global/local imbalance weights multiplying current loss
ml_unc    uncertainty propagated through dense mutual-information correlations
d2ace     dual uncertainty/hardness dynamics with label-masked, locally
          gated cosine correlations and a scheduled Bernoulli mixture
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .linalg import RandomStream, SparseBinaryMatrix
from .sampling import (SamplingDistribution, SamplingSchedule, batches_per_epoch,
                       draw_batch, mixing_coefficient, mixture_distribution,
                       weight_to_probability)
from .tracking import PredictionHistory, compute_hardness, compute_uncertainty
from .weighting import (InstanceWeights, finalize_weights, local_appearance,
                        weighting_pipeline)

__all__ = [
    "SELECTOR_KINDS",
    "SelectorConfig",
    "EpochSnapshot",
    "SelectorResult",
    "BatchSelector",
    "build_selector",
    "empirical_entropy",
    "mutual_information_correlation",
]

SELECTOR_KINDS = ("random", "active", "recent", "dihcl", "balance",
                  "hard_imb", "ml_unc", "d2ace")


@dataclass
class SelectorConfig:
    """Selector kind plus its hyperparameters (documented defaults)."""

    kind: str = "d2ace"
    window: int = 5                 # sliding window n_t
    entropy_mix: float = 0.5        # uncertainty blend between entropy and fluctuation
    flip_smoothing: float = 0.7     # EMA factor for prediction flips
    neighbors: int = 5              # K for local label context / local imbalance
    gamma: float = 0.95             # dihcl reward discount
    exp3_floor: float = 0.1         # dihcl uniform mixing floor
    confidence_scale: float = 0.1   # active's half-width constant
    balance_window: int = 8         # balance candidate pool per slot
    dihcl_metric: str = "dloss"     # "dloss" or "flip"
    with_replacement: bool = True

    def __post_init__(self):
        if self.kind not in SELECTOR_KINDS:
            raise ConfigError(f"unknown selector kind '{self.kind}'")
        if not 0.0 <= self.entropy_mix <= 1.0:
            raise ConfigError("entropy_mix must be in [0, 1]")
        if not 0.0 < self.flip_smoothing <= 1.0:
            raise ConfigError("flip_smoothing must be in (0, 1]")
        if self.dihcl_metric not in ("dloss", "flip"):
            raise ConfigError("dihcl_metric must be 'dloss' or 'flip'")

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class EpochSnapshot:
    """Frozen per-epoch view handed to a selector."""

    t: int
    history: PredictionHistory
    loss_matrix: np.ndarray
    labels: SparseBinaryMatrix
    schedule: SamplingSchedule
    neighbor_table: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.labels.rows


@dataclass
class SelectorResult:
    batches: list
    probs: np.ndarray | None = None     # sampling distribution, when one exists
    weights: InstanceWeights | None = None


def _shuffled_batches(n: int, b: int, rng: RandomStream) -> list:
    perm = rng.permutation(n)
    return [perm[i:i + b] for i in range(0, n, b)]


def _distribution_batches(dist: SamplingDistribution, n: int, b: int,
                          rng: RandomStream, with_replacement: bool) -> list:
    return [draw_batch(dist, min(b, n), rng, with_replacement)
            for _ in range(batches_per_epoch(n, b))]


class BatchSelector:
    """Base class; subclasses fill in `_observe` (state) and `_select`."""

    kind = "random"
    needs_neighbors = False

    def __init__(self, config: SelectorConfig):
        self.config = config

    def select(self, snap: EpochSnapshot, batch_size: int,
               rng: RandomStream) -> SelectorResult:
        self._observe(snap)
        if self.kind != "random" and snap.t <= snap.schedule.warmup_epochs:
            return SelectorResult(_shuffled_batches(snap.n, batch_size, rng))
        return self._select(snap, batch_size, rng)

    def _observe(self, snap: EpochSnapshot) -> None:
        pass

    def _select(self, snap, batch_size, rng) -> SelectorResult:
        raise NotImplementedError

    def _pipeline_result(self, raw_weights: np.ndarray, snap: EpochSnapshot,
                         batch_size: int, rng: RandomStream) -> SelectorResult:
        """Min-max normalize raw weights, quantize, and draw batches."""
        iw = finalize_weights(raw_weights, np.zeros_like(raw_weights))
        dist = weight_to_probability(iw.w, snap.t, snap.schedule)
        batches = _distribution_batches(dist, snap.n, batch_size, rng,
                                        self.config.with_replacement)
        return SelectorResult(batches, probs=dist.probs, weights=iw)


class RandomSelector(BatchSelector):
    kind = "random"

    def _select(self, snap, batch_size, rng):
        return SelectorResult(_shuffled_batches(snap.n, batch_size, rng))


class ActiveSelector(BatchSelector):
    """Variance of all historical predictions plus a c/sqrt(t) half-width."""

    kind = "active"

    def __init__(self, config):
        super().__init__(config)
        self._count = 0
        self._mean = None
        self._m2 = None

    def _observe(self, snap):
        probs = snap.history.current()
        if self._mean is None:
            self._mean = np.zeros_like(probs)
            self._m2 = np.zeros_like(probs)
        self._count += 1
        delta = probs - self._mean
        self._mean += delta / self._count
        self._m2 += delta * (probs - self._mean)

    def variance(self) -> np.ndarray:
        if self._count < 1:
            raise ConfigError("active selector has no observations")
        return self._m2 / self._count

    def _select(self, snap, batch_size, rng):
        half_width = self.config.confidence_scale / np.sqrt(self._count)
        per_pair = self.variance() + half_width
        return self._pipeline_result(per_pair.sum(axis=1), snap, batch_size, rng)


def empirical_entropy(freq: np.ndarray) -> np.ndarray:
    """Entropy in bits of an empirical binary frequency; exact 0 at {0, 1}."""
    freq = np.asarray(freq, dtype=np.float64)
    out = np.zeros_like(freq)
    interior = (freq > 0.0) & (freq < 1.0)
    p = freq[interior]
    out[interior] = -(p * np.log2(p) + (1.0 - p) * np.log2(1.0 - p))
    return out


class RecentSelector(BatchSelector):
    """Entropy of thresholded predictions over the sliding window."""

    kind = "recent"

    def _select(self, snap, batch_size, rng):
        stack = snap.history.full_stack() >= 0.5
        freq = stack.mean(axis=0)
        per_pair = empirical_entropy(freq)
        return self._pipeline_result(per_pair.sum(axis=1), snap, batch_size, rng)


class DihclSelector(BatchSelector):
    """Discounted per-instance rewards sampled through a floored softmax."""

    kind = "dihcl"

    def __init__(self, config):
        super().__init__(config)
        self._rewards = None
        self._prev_loss = None
        self._prev_binary = None

    def _observe(self, snap):
        if self.config.dihcl_metric == "dloss":
            signal = np.asarray(snap.loss_matrix).sum(axis=1)
            prev, self._prev_loss = self._prev_loss, signal
        else:
            binary = snap.history.current() >= 0.5
            signal = binary.astype(np.float64)
            prev, self._prev_binary = self._prev_binary, signal
        if self._rewards is None:
            self._rewards = np.zeros(snap.n)
        if prev is not None:
            change = np.abs(signal - prev)
            if change.ndim > 1:
                change = change.sum(axis=1)
            self._rewards = self.config.gamma * self._rewards + change
        else:
            self._rewards = self.config.gamma * self._rewards

    def distribution(self, n: int) -> SamplingDistribution:
        r = self._rewards - self._rewards.max()
        soft = np.exp(r)
        soft /= soft.sum()
        eps = self.config.exp3_floor
        probs = (1.0 - eps) * soft + eps / n
        probs /= probs.sum()
        return SamplingDistribution(probs=probs)

    def _select(self, snap, batch_size, rng):
        dist = self.distribution(snap.n)
        batches = _distribution_batches(dist, snap.n, batch_size, rng,
                                        self.config.with_replacement)
        return SelectorResult(batches, probs=dist.probs)


class BalanceSelector(BatchSelector):
    """Greedy full-coverage batches steering each label toward pos:neg = 1:1.

    Every slot considers the next few unused candidates of a seeded
    permutation and keeps the one minimizing sum_j |pos_j - neg_j| over the
    partial batch; exhausted improvement falls back to the first candidate.
    """

    kind = "balance"

    def _select(self, snap, batch_size, rng):
        y = snap.labels.denseify()
        sign = 2.0 * y - 1.0            # adding row i moves diff by sign[i]
        order = list(rng.permutation(snap.n))
        window = max(1, self.config.balance_window)
        batches = []
        while order:
            size = min(batch_size, len(order))
            diff = np.zeros(snap.labels.cols)
            members = []
            for _ in range(size):
                cands = order[:window]
                imb = np.abs(diff[None, :] + sign[cands]).sum(axis=1)
                pick = int(np.argmin(imb))   # earliest candidate wins ties
                chosen = order.pop(pick)
                members.append(chosen)
                diff += sign[chosen]
            batches.append(np.asarray(members, dtype=np.int64))
        return SelectorResult(batches)


class HardImbSelector(BatchSelector):
    """Static imbalance weights (global class ratio + local neighbor
    disagreement, min-max normalized per label, blended 50/50) multiplying
    the current per-label losses."""

    kind = "hard_imb"
    needs_neighbors = True

    def __init__(self, config):
        super().__init__(config)
        self._static = None

    @staticmethod
    def _per_label_minmax(mat: np.ndarray) -> np.ndarray:
        lo = mat.min(axis=0)
        hi = mat.max(axis=0)
        span = hi - lo
        out = np.ones_like(mat)          # degenerate columns are neutral
        ok = span > 1e-12
        out[:, ok] = (mat[:, ok] - lo[ok]) / span[ok]
        return out

    def static_weights(self, labels: SparseBinaryMatrix,
                       neighbor_table: np.ndarray) -> np.ndarray:
        y = labels.denseify()
        n = labels.rows
        pos = y.sum(axis=0)
        own_class_count = np.where(y == 1, pos[None, :], n - pos[None, :])
        global_factor = n / (2.0 * np.maximum(own_class_count, 1.0))
        neigh = y[neighbor_table]                      # (n, k, q)
        local = np.abs(neigh - y[:, None, :]).mean(axis=1) if neighbor_table.shape[1] \
            else np.zeros_like(y)
        blend = 0.5 * self._per_label_minmax(global_factor) \
            + 0.5 * self._per_label_minmax(local)
        return blend

    def _select(self, snap, batch_size, rng):
        if snap.neighbor_table is None:
            raise ConfigError("hard_imb requires a neighbor table")
        if self._static is None:
            self._static = self.static_weights(snap.labels, snap.neighbor_table)
        raw = (self._static * np.asarray(snap.loss_matrix)).sum(axis=1)
        return self._pipeline_result(raw, snap, batch_size, rng)


def mutual_information_correlation(binary: np.ndarray) -> np.ndarray:
    """Normalized pairwise mutual information between binary columns.

    2x2 contingency tables get add-one smoothing; MI is normalized by the
    smaller of the two marginal entropies, giving a symmetric matrix with
    entries in [0, 1].
    """
    b = np.asarray(binary, dtype=np.float64)
    n, q = b.shape
    ones = b.sum(axis=0)
    n11 = b.T @ b
    n10 = ones[:, None] - n11
    n01 = ones[None, :] - n11
    n00 = n - n11 - n10 - n01

    total = n + 4.0
    mi = np.zeros((q, q))
    marg_a = (ones + 2.0) / total           # smoothed P(col=1), same for rows/cols
    h = -(marg_a * np.log2(marg_a) + (1 - marg_a) * np.log2(1 - marg_a))
    for counts, pa, pb in (
        (n11, marg_a[:, None], marg_a[None, :]),
        (n10, marg_a[:, None], 1 - marg_a[None, :]),
        (n01, 1 - marg_a[:, None], marg_a[None, :]),
        (n00, 1 - marg_a[:, None], 1 - marg_a[None, :]),
    ):
        p = (counts + 1.0) / total
        mi += p * np.log2(p / (pa * pb))
    denom = np.minimum(h[:, None], h[None, :])
    out = mi / denom
    np.clip(out, 0.0, 1.0, out=out)
    out = 0.5 * (out + out.T)               # exact symmetry despite rounding
    return out


class MlUncSelector(BatchSelector):
    """Uncertainty propagated through dense global MI label correlations."""

    kind = "ml_unc"

    def uncertainty_weights(self, snap: EpochSnapshot) -> np.ndarray:
        u = compute_uncertainty(snap.history, self.config.entropy_mix)
        binary = snap.history.current() >= 0.5
        corr = mutual_information_correlation(binary)
        enhanced = u @ corr
        return enhanced.sum(axis=1)

    def _select(self, snap, batch_size, rng):
        return self._pipeline_result(self.uncertainty_weights(snap), snap,
                                     batch_size, rng)


class D2aceSelector(BatchSelector):
    """Dual uncertainty/hardness weighting with correlation enhancement.

    Each epoch builds two instance-weight vectors (label-dynamics term plus
    locally-gated correlation term, per metric), converts both to sampling
    distributions under the decayed selection pressure, and draws every
    batch instance through a scheduled Bernoulli choice between them.
    """

    kind = "d2ace"
    needs_neighbors = True

    def __init__(self, config):
        super().__init__(config)
        self._appearance = None
        self.last_weights_u: InstanceWeights | None = None
        self.last_weights_h: InstanceWeights | None = None
        self.last_mixture: SamplingDistribution | None = None

    def appearance(self, snap: EpochSnapshot) -> SparseBinaryMatrix:
        # labels and neighbors are fixed for a run: build the gate once
        if self._appearance is None:
            if snap.neighbor_table is None:
                raise ConfigError("d2ace requires a neighbor table")
            self._appearance = local_appearance(snap.labels, snap.neighbor_table)
        return self._appearance

    def _select(self, snap, batch_size, rng):
        z = self.appearance(snap)
        u = compute_uncertainty(snap.history, self.config.entropy_mix)
        h = compute_hardness(snap.loss_matrix, snap.history.ema_flip)
        iw_u = weighting_pipeline(u, snap.labels, z)
        iw_h = weighting_pipeline(h, snap.labels, z)
        dist_u = weight_to_probability(iw_u.w, snap.t, snap.schedule)
        dist_h = weight_to_probability(iw_h.w, snap.t, snap.schedule)
        p_mix = mixing_coefficient(snap.t, snap.schedule)
        mix = mixture_distribution(dist_u, dist_h, p_mix)
        self.last_weights_u, self.last_weights_h = iw_u, iw_h
        self.last_mixture = mix
        batches = _distribution_batches(mix, snap.n, batch_size, rng,
                                        self.config.with_replacement)
        return SelectorResult(batches, probs=mix.probs, weights=iw_u)


_SELECTORS = {
    "random": RandomSelector,
    "active": ActiveSelector,
    "recent": RecentSelector,
    "dihcl": DihclSelector,
    "balance": BalanceSelector,
    "hard_imb": HardImbSelector,
    "ml_unc": MlUncSelector,
    "d2ace": D2aceSelector,
}


def build_selector(config: SelectorConfig) -> BatchSelector:
    return _SELECTORS[config.kind](config)
