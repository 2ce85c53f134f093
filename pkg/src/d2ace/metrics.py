"""Multi-label evaluation metrics.

All metrics take an (n, q) score matrix and the sparse binary label matrix.
Macro-AUC uses the rank-statistic (Mann-Whitney) formulation with 0.5 credit
for ties; ranking loss averages the per-instance fraction of mis-ordered
(relevant, irrelevant) pairs with the same tie convention.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import EvaluationError, ShapeError
from .linalg import SparseBinaryMatrix
from .mlp import as_dense_labels

__all__ = [
    "EvalReport",
    "macro_auc",
    "per_label_auc",
    "macro_f1",
    "ranking_loss",
    "mean_average_precision",
    "evaluate",
]


def _check(scores, labels) -> tuple:
    scores = np.asarray(scores, dtype=np.float64)
    y = as_dense_labels(labels)
    if scores.shape != y.shape:
        raise ShapeError(f"scores {scores.shape} vs labels {y.shape}")
    return scores, y


def per_label_auc(scores, labels) -> np.ndarray:
    """AUC per label; NaN for labels with no positives or no negatives."""
    scores, y = _check(scores, labels)
    n, q = scores.shape
    out = np.full(q, np.nan)
    for j in range(q):
        pos = y[:, j] == 1
        n_pos = int(pos.sum())
        n_neg = n - n_pos
        if n_pos == 0 or n_neg == 0:
            continue
        ranks = rankdata(scores[:, j])          # average ranks handle ties
        rank_sum = ranks[pos].sum()
        out[j] = (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)
    return out


def macro_auc(scores, labels) -> float:
    aucs = per_label_auc(scores, labels)
    usable = aucs[~np.isnan(aucs)]
    if usable.size == 0:
        raise EvaluationError("macro_auc: no label has both classes present")
    return float(usable.mean())


def macro_f1(scores, labels, threshold: float = 0.5,
             zero_positive_labels: str = "skip") -> float:
    """Mean per-label F1 at the threshold.

    Labels with no positives are skipped by default (``zero_positive_labels
    = 'skip'``) or scored 0 (``'zero'``); labels with positives but a
    degenerate precision+recall contribute F1 = 0.
    """
    if not 0.0 < threshold < 1.0:
        raise EvaluationError("macro_f1: threshold must be in (0, 1)")
    scores, y = _check(scores, labels)
    pred = scores >= threshold
    f1s = []
    for j in range(y.shape[1]):
        yt = y[:, j] == 1
        yp = pred[:, j]
        if not yt.any():
            if zero_positive_labels == "zero":
                f1s.append(0.0)
            continue
        tp = float(np.sum(yp & yt))
        fp = float(np.sum(yp & ~yt))
        fn = float(np.sum(~yp & yt))
        denom = 2 * tp + fp + fn
        f1s.append(2 * tp / denom if denom > 0 else 0.0)
    return float(np.mean(f1s)) if f1s else 0.0


def ranking_loss(scores, labels) -> float:
    """Fraction of (relevant, irrelevant) pairs ranked wrong, ties at 0.5.

    Averaged over instances that have at least one label of each kind.
    """
    scores, y = _check(scores, labels)
    per_instance = []
    for i in range(scores.shape[0]):
        rel = y[i] == 1
        s_rel = scores[i, rel]
        s_irr = np.sort(scores[i, ~rel])
        if s_rel.size == 0 or s_irr.size == 0:
            continue
        higher = s_irr.size - np.searchsorted(s_irr, s_rel, side="right")
        ties = (np.searchsorted(s_irr, s_rel, side="right")
                - np.searchsorted(s_irr, s_rel, side="left"))
        bad = higher.sum() + 0.5 * ties.sum()
        per_instance.append(bad / (s_rel.size * s_irr.size))
    if not per_instance:
        raise EvaluationError("ranking_loss: no instance has both label kinds")
    return float(np.mean(per_instance))


def mean_average_precision(scores, labels) -> float:
    """Per-label average precision over the score ranking, mean over labels
    with at least one positive. Score ties break by ascending index."""
    scores, y = _check(scores, labels)
    aps = []
    for j in range(y.shape[1]):
        pos = y[:, j] == 1
        if not pos.any():
            continue
        order = np.argsort(-scores[:, j], kind="stable")
        hits = pos[order]
        ranks = np.flatnonzero(hits) + 1
        precisions = np.cumsum(hits)[ranks - 1] / ranks
        aps.append(precisions.mean())
    if not aps:
        raise EvaluationError("mean_average_precision: no label has positives")
    return float(np.mean(aps))


@dataclass
class EvalReport:
    macro_auc: float
    macro_f1: float
    ranking_loss: float
    map: float
    per_label_auc: np.ndarray
    epoch: int = 0

    def row(self) -> dict:
        return {
            "macro_auc": self.macro_auc,
            "macro_f1": self.macro_f1,
            "ranking_loss": self.ranking_loss,
            "map": self.map,
        }


def evaluate(scores, labels: SparseBinaryMatrix, epoch: int = 0) -> EvalReport:
    return EvalReport(
        macro_auc=macro_auc(scores, labels),
        macro_f1=macro_f1(scores, labels),
        ranking_loss=ranking_loss(scores, labels),
        map=mean_average_precision(scores, labels),
        per_label_auc=per_label_auc(scores, labels),
        epoch=epoch,
    )
