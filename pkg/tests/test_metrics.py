from __future__ import annotations

import numpy as np
import pytest

from d2ace.errors import EvaluationError
from d2ace.linalg import SparseBinaryMatrix
from d2ace.metrics import (evaluate, macro_auc, macro_f1, mean_average_precision,
                           per_label_auc, ranking_loss)


def _labels(dense):
    return SparseBinaryMatrix.from_dense(np.asarray(dense, dtype=float))


# ---------------------------------------------------------------------------
# independent O(n^2) oracles


def _auc_oracle(scores, y):
    aucs = []
    for j in range(y.shape[1]):
        pos = np.flatnonzero(y[:, j] == 1)
        neg = np.flatnonzero(y[:, j] == 0)
        if pos.size == 0 or neg.size == 0:
            continue
        good = 0.0
        for p in pos:
            for n in neg:
                if scores[p, j] > scores[n, j]:
                    good += 1.0
                elif scores[p, j] == scores[n, j]:
                    good += 0.5
        aucs.append(good / (pos.size * neg.size))
    return float(np.mean(aucs))


def _ranking_loss_oracle(scores, y):
    per = []
    for i in range(y.shape[0]):
        rel = np.flatnonzero(y[i] == 1)
        irr = np.flatnonzero(y[i] == 0)
        if rel.size == 0 or irr.size == 0:
            continue
        bad = 0.0
        for r in rel:
            for s in irr:
                if scores[i, s] > scores[i, r]:
                    bad += 1.0
                elif scores[i, s] == scores[i, r]:
                    bad += 0.5
        per.append(bad / (rel.size * irr.size))
    return float(np.mean(per))


def _ap_oracle(scores, y):
    aps = []
    for j in range(y.shape[1]):
        if y[:, j].sum() == 0:
            continue
        order = sorted(range(y.shape[0]), key=lambda i: (-scores[i, j], i))
        hits, precs = 0, []
        for rank, i in enumerate(order, start=1):
            if y[i, j] == 1:
                hits += 1
                precs.append(hits / rank)
        aps.append(float(np.mean(precs)))
    return float(np.mean(aps))


class TestMacroAuc:
    def test_perfect_separation(self):
        scores = np.array([[0.9], [0.8], [0.2], [0.1]])
        scores = np.hstack([scores, 1 - scores])
        y = _labels([[1, 0], [1, 0], [0, 1], [0, 1]])
        assert macro_auc(scores, y) == 1.0

    def test_constant_scores_give_half(self):
        y = _labels([[1, 0], [0, 1], [1, 1], [0, 0]])
        assert macro_auc(np.full((4, 2), 0.5), y) == 0.5

    def test_hand_case(self):
        scores = np.array([[0.1], [0.4], [0.35], [0.8]])
        scores = np.hstack([scores, scores])
        y = _labels([[0, 0], [0, 0], [1, 1], [1, 1]])
        assert macro_auc(scores, y) == pytest.approx(0.75, abs=1e-15)

    def test_excludes_single_class_labels(self):
        scores = np.random.default_rng(0).random((5, 2))
        y_dense = np.zeros((5, 2))
        y_dense[:, 0] = [1, 1, 0, 0, 0]
        aucs = per_label_auc(scores, _labels(y_dense))
        assert not np.isnan(aucs[0]) and np.isnan(aucs[1])

    def test_error_when_nothing_usable(self):
        y = _labels(np.zeros((3, 2)))
        with pytest.raises(EvaluationError):
            macro_auc(np.random.default_rng(1).random((3, 2)), y)

    def test_invariant_under_monotone_transform(self):
        rng = np.random.default_rng(2)
        scores = rng.random((20, 4))
        y = _labels((rng.random((20, 4)) < 0.5).astype(float))
        a = macro_auc(scores, y)
        b = macro_auc(np.exp(3 * scores) + 7, y)
        assert a == pytest.approx(b, abs=1e-12)

    def test_matches_pairwise_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            n, q = int(rng.integers(3, 41)), int(rng.integers(2, 11))
            scores = np.round(rng.random((n, q)), 2)   # induce ties
            y = (rng.random((n, q)) < 0.4).astype(float)
            if np.all((y.sum(axis=0) == 0) | (y.sum(axis=0) == n)):
                continue
            assert macro_auc(scores, _labels(y)) == pytest.approx(
                _auc_oracle(scores, y), abs=1e-12)


class TestMacroF1:
    def test_perfect(self):
        y = _labels([[1, 0], [0, 1]])
        scores = np.array([[0.9, 0.1], [0.2, 0.8]])
        assert macro_f1(scores, y) == 1.0

    def test_all_negative_prediction_is_zero(self):
        y = _labels([[1, 1], [1, 0]])
        scores = np.array([[0.1, 0.1], [0.2, 0.9]])
        # label 0 predicted never -> F1 0; label 1: tp=0 fp=1 fn=1 -> 0
        assert macro_f1(scores, y) == 0.0

    def test_direct_formula(self):
        # tp=1, fp=1, fn=1 -> F1 = 2/(2+1+1) = 0.5
        y = _labels([[1, 0], [0, 1], [1, 1]])
        scores = np.array([[0.9, 0.0], [0.9, 0.0], [0.0, 0.9]])
        # label 0: tp=1 (row0), fp=1 (row1), fn=1 (row2) -> 0.5
        # label 1: tp=1 (row2), fp=0, fn=1 (row1) -> 2/3
        assert macro_f1(scores, y) == pytest.approx((0.5 + 2 / 3) / 2, abs=1e-12)

    def test_zero_positive_label_conventions(self):
        y = _labels([[1, 0], [1, 0]])
        scores = np.array([[0.9, 0.1], [0.9, 0.1]])
        assert macro_f1(scores, y, zero_positive_labels="skip") == 1.0
        assert macro_f1(scores, y, zero_positive_labels="zero") == 0.5


class TestRankingLoss:
    def test_perfect_ordering(self):
        y = _labels([[1, 0], [0, 1]])
        scores = np.array([[0.9, 0.1], [0.1, 0.9]])
        assert ranking_loss(scores, y) == 0.0

    def test_single_pair_reversed(self):
        y = _labels([[1, 0]])
        scores = np.array([[0.1, 0.9]])
        assert ranking_loss(scores, y) == 1.0

    def test_fully_tied_scores(self):
        y = _labels([[1, 0], [0, 1]])
        assert ranking_loss(np.full((2, 2), 0.4), y) == 0.5

    def test_matches_pairwise_oracle(self):
        rng = np.random.default_rng(4)
        for _ in range(100):
            n, q = int(rng.integers(2, 41)), int(rng.integers(2, 11))
            scores = np.round(rng.random((n, q)), 2)
            y = (rng.random((n, q)) < 0.4).astype(float)
            eligible = [(y[i] == 1).any() and (y[i] == 0).any() for i in range(n)]
            if not any(eligible):
                continue
            assert ranking_loss(scores, _labels(y)) == pytest.approx(
                _ranking_loss_oracle(scores, y), abs=1e-12)

    def test_complement_of_auc_style_accuracy(self):
        rng = np.random.default_rng(5)
        scores = rng.random((15, 5))            # ties measure-zero
        y = (rng.random((15, 5)) < 0.5).astype(float)
        y[0] = [1, 0, 0, 0, 0]                  # ensure eligibility
        rl = ranking_loss(scores, _labels(y))
        acc = 1.0 - _ranking_loss_oracle(scores, y)
        assert rl == pytest.approx(1.0 - acc, abs=1e-12)


class TestMeanAveragePrecision:
    def test_perfect_ranking(self):
        y = _labels([[1, 1], [0, 0]])
        scores = np.array([[0.9, 0.8], [0.1, 0.2]])
        assert mean_average_precision(scores, y) == 1.0

    def test_single_positive_second_rank(self):
        y = _labels([[0, 1], [1, 1], [0, 0], [0, 0]])
        scores = np.array([[0.9, 0.9], [0.8, 0.8], [0.1, 0.1], [0.0, 0.0]])
        # label 0: its positive sits at rank 2 -> AP = 0.5
        aps = mean_average_precision(scores[:, :1], _labels(y.denseify()[:, :1]))
        assert aps == pytest.approx(0.5, abs=1e-15)

    def test_reversed_ranking_oracle(self):
        y_dense = np.array([[0.0], [0.0], [1.0], [1.0]])
        scores = np.array([[0.9], [0.8], [0.2], [0.1]])
        expected = _ap_oracle(scores, y_dense)
        assert mean_average_precision(scores, _labels(y_dense)) == pytest.approx(
            expected, abs=1e-15)
        assert expected == pytest.approx((1 / 3 + 2 / 4) / 2, abs=1e-12)

    def test_matches_oracle_random(self):
        rng = np.random.default_rng(6)
        for _ in range(100):
            n, q = int(rng.integers(2, 41)), int(rng.integers(2, 11))
            scores = rng.random((n, q))
            y = (rng.random((n, q)) < 0.4).astype(float)
            if y.sum() == 0:
                continue
            assert mean_average_precision(scores, _labels(y)) == pytest.approx(
                _ap_oracle(scores, y), abs=1e-12)


class TestEvaluate:
    def test_report_fields_in_range(self):
        rng = np.random.default_rng(7)
        scores = rng.random((30, 5))
        y = (rng.random((30, 5)) < 0.4).astype(float)
        y[0] = [1, 0, 1, 0, 0]
        report = evaluate(scores, _labels(y), epoch=3)
        assert 0.0 <= report.macro_auc <= 1.0
        assert 0.0 <= report.macro_f1 <= 1.0
        assert 0.0 <= report.ranking_loss <= 1.0
        assert 0.0 <= report.map <= 1.0
        assert report.epoch == 3
        assert report.per_label_auc.shape == (5,)
