"""Dynamic label weights and locally-gated correlation enhancement.

Two signals are combined into one instance weight per epoch:

* ``delta`` — each label's column of the metric matrix is scaled by an
  exponential weight of that column's mean + std, then summed per instance,
  so labels that are currently hard/uncertain across the dataset count more.
* ``phi`` — metric entries at relevant labels are amplified by global label
  correlations (cosine similarity between masked metric columns), gated by
  which labels actually appear in each instance's neighborhood.

The correlation path runs entirely on sparse structures: the Gram matrix of
the label-masked metric touches only label pairs that co-occur on some
instance, and the appearance-gated propagation touches only the appearance
nonzeros. Cost therefore scales with nonzero counts, not with q^2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse as sp

from .errors import ContractError, ShapeError
from .linalg import SparseBinaryMatrix

__all__ = [
    "LabelStats",
    "InstanceWeights",
    "label_stats",
    "dynamic_label_weighted_sum",
    "masked_metric",
    "cosine_correlation",
    "cosine_correlation_sparse",
    "local_appearance",
    "correlation_enhance",
    "correlation_gain_dense",
    "finalize_weights",
    "weighting_pipeline",
    "mlunc_degenerate_weights",
]

ZERO_NORM = 1e-12


@dataclass
class LabelStats:
    mu: np.ndarray
    sigma: np.ndarray
    v: np.ndarray


def label_stats(metric: np.ndarray) -> LabelStats:
    """Column means/stds of a metric matrix and their exponential weights.

    Population std (1/n divisor); cancellation noise is clamped at zero
    before the square root so v stays finite.
    """
    metric = np.asarray(metric, dtype=np.float64)
    mu = metric.mean(axis=0)
    var = np.maximum((metric * metric).mean(axis=0) - mu * mu, 0.0)
    sigma = np.sqrt(var)
    return LabelStats(mu=mu, sigma=sigma, v=np.exp(0.5 * (mu + sigma)))


def dynamic_label_weighted_sum(metric: np.ndarray, stats: LabelStats) -> np.ndarray:
    """Row sums of the column-rescaled metric: delta_i = sum_j A_ij v_j."""
    metric = np.asarray(metric, dtype=np.float64)
    if metric.shape[1] != stats.v.shape[0]:
        raise ShapeError("dynamic_label_weighted_sum: stats do not match metric width")
    return metric @ stats.v


def masked_metric(metric: np.ndarray, labels: SparseBinaryMatrix) -> sp.csr_matrix:
    """Metric values kept only at relevant labels, stored sparse.

    The sparsity pattern equals the label matrix pattern; everything at an
    irrelevant (negative) label is structurally zero and can never leak into
    the correlation estimate.
    """
    metric = np.asarray(metric, dtype=np.float64)
    if metric.shape != (labels.rows, labels.cols):
        raise ShapeError(f"masked_metric: metric {metric.shape} vs labels "
                         f"{(labels.rows, labels.cols)}")
    pattern = labels.to_csr()
    rows = np.repeat(np.arange(labels.rows), np.diff(pattern.indptr))
    data = metric[rows, pattern.indices]
    return sp.csr_matrix((data, pattern.indices.copy(), pattern.indptr.copy()),
                         shape=(labels.rows, labels.cols))


def _normalize_gram(gram: sp.csr_matrix) -> sp.csr_matrix:
    """Turn a Gram matrix into cosine similarities, zeroing dead columns."""
    diag = gram.diagonal()
    norms = np.sqrt(np.maximum(diag, 0.0))
    inv = np.where(norms >= ZERO_NORM, 1.0 / np.maximum(norms, ZERO_NORM), 0.0)
    dinv = sp.diags(inv)
    out = (dinv @ gram @ dinv).tocsr()
    out.setdiag(np.where(norms >= ZERO_NORM, 1.0, 0.0))
    out.eliminate_zeros()
    return out


def cosine_correlation_sparse(masked: sp.csr_matrix) -> sp.csr_matrix:
    """Sparse cosine similarity between columns of the masked metric.

    Work is proportional to the number of co-occurring label pairs (the
    Gram of a row-sparse matrix), never to q^2.
    """
    masked = masked.tocsr()
    gram = (masked.T @ masked).tocsr()
    return _normalize_gram(gram)


def cosine_correlation(masked) -> np.ndarray:
    """Dense cosine similarity between columns; zero-norm columns stay zero."""
    if sp.issparse(masked):
        return cosine_correlation_sparse(masked).toarray()
    m = np.asarray(masked, dtype=np.float64)
    gram = m.T @ m
    norms = np.sqrt(np.maximum(np.diag(gram), 0.0))
    inv = np.where(norms >= ZERO_NORM, 1.0 / np.maximum(norms, ZERO_NORM), 0.0)
    out = gram * inv[:, None] * inv[None, :]
    np.fill_diagonal(out, np.where(norms >= ZERO_NORM, 1.0, 0.0))
    return out


def local_appearance(labels: SparseBinaryMatrix,
                     neighbor_table: np.ndarray) -> SparseBinaryMatrix:
    """Which labels occur on each instance or any of its listed neighbors.

    The instance itself always belongs to its own neighborhood, so a
    relevant label is always locally present.
    """
    neighbor_table = np.asarray(neighbor_table, dtype=np.int64)
    if neighbor_table.ndim != 2 or neighbor_table.shape[0] != labels.rows:
        raise ShapeError("local_appearance: neighbor table must be (n, k)")
    rows = []
    for i in range(labels.rows):
        group = [labels.row_index[i]]
        group.extend(labels.row_index[m] for m in neighbor_table[i])
        merged = np.unique(np.concatenate(group)) if group else np.empty(0, np.int64)
        rows.append(merged.astype(np.int64))
    return SparseBinaryMatrix(labels.rows, labels.cols, rows)


def correlation_enhance(masked: sp.csr_matrix, appearance: SparseBinaryMatrix,
                        correlation) -> np.ndarray:
    """Row sums of masked .* (appearance @ correlation).

    With a sparse correlation matrix this touches only appearance nonzeros
    times correlation-row nonzeros; with a dense one it is still linear in q.
    """
    if masked.shape != (appearance.rows, appearance.cols):
        raise ShapeError("correlation_enhance: masked/appearance shapes differ")
    z = appearance.to_csr()
    if sp.issparse(correlation):
        gate = z @ correlation.tocsr()
        enhanced = masked.multiply(gate)
        return np.asarray(enhanced.sum(axis=1)).ravel()
    corr = np.asarray(correlation, dtype=np.float64)
    if corr.shape != (appearance.cols, appearance.cols):
        raise ShapeError("correlation_enhance: correlation must be (q, q)")
    gate = z @ corr
    enhanced = masked.multiply(gate)
    return np.asarray(enhanced.sum(axis=1)).ravel()


def correlation_gain_dense(metric: np.ndarray, labels_dense: np.ndarray,
                           appearance_dense: np.ndarray) -> np.ndarray:
    """Dense reference evaluation of the correlation gain (oracle path)."""
    metric = np.asarray(metric, dtype=np.float64)
    y = np.asarray(labels_dense, dtype=np.float64)
    z = np.asarray(appearance_dense, dtype=np.float64)
    m = y * metric
    corr = cosine_correlation(m)
    return (m * (z @ corr)).sum(axis=1)


@dataclass
class InstanceWeights:
    delta: np.ndarray
    phi: np.ndarray
    w_raw: np.ndarray
    w: np.ndarray
    label_weights: np.ndarray | None = None    # the epoch's per-label v, if known


def finalize_weights(delta: np.ndarray, phi: np.ndarray) -> InstanceWeights:
    """Sum the two weight components and min-max normalize into [0, 1].

    A constant raw vector maps to 0.5 everywhere, which downstream turns
    into uniform sampling.
    """
    delta = np.asarray(delta, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    if delta.shape != phi.shape:
        raise ShapeError("finalize_weights: component lengths differ")
    w_raw = delta + phi
    if not np.all(np.isfinite(w_raw)):
        raise ContractError("finalize_weights: non-finite weight component")
    lo, hi = w_raw.min(), w_raw.max()
    if hi - lo < 1e-300:
        w = np.full_like(w_raw, 0.5)
    else:
        w = (w_raw - lo) / (hi - lo)
    return InstanceWeights(delta=delta, phi=phi, w_raw=w_raw, w=w)


def weighting_pipeline(metric: np.ndarray, labels: SparseBinaryMatrix,
                       appearance: SparseBinaryMatrix) -> InstanceWeights:
    """Full per-epoch weight computation for one metric matrix."""
    stats = label_stats(metric)
    delta = dynamic_label_weighted_sum(metric, stats)
    masked = masked_metric(metric, labels)
    corr = cosine_correlation_sparse(masked)
    phi = correlation_enhance(masked, appearance, corr)
    out = finalize_weights(delta, phi)
    out.label_weights = stats.v
    return out


def mlunc_degenerate_weights(metric: np.ndarray, correlation: np.ndarray) -> np.ndarray:
    """Unmasked, globally-propagated weights: w_i = sum_j A_ij * (sum_k C_jk).

    Requires a symmetric correlation matrix; equals the masked pipeline with
    an all-ones mask and all-ones appearance.
    """
    metric = np.asarray(metric, dtype=np.float64)
    corr = np.asarray(correlation, dtype=np.float64)
    if corr.shape[0] != corr.shape[1] or corr.shape[0] != metric.shape[1]:
        raise ShapeError("mlunc_degenerate_weights: correlation must be (q, q)")
    if not np.allclose(corr, corr.T, atol=1e-9, rtol=0.0):
        raise ContractError("mlunc_degenerate_weights: correlation matrix is not symmetric")
    return metric @ corr.sum(axis=1)
