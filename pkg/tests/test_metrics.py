"""Metric computations against brute-force oracles."""

import numpy as np
import pytest

from copmtl.errors import UsageError
from copmtl.harness.metrics import auc_rank, metrics


def brute_force_auc(scores, labels):
    """Average over all (positive, negative) pairs; ties count half."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=float)
    pos = scores[labels > 0.5]
    neg = scores[labels <= 0.5]
    total = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                total += 1.0
            elif p == q:
                total += 0.5
    return total / (len(pos) * len(neg))


class TestAuc:
    def test_spec_example(self):
        auc, defined = auc_rank([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1])
        assert defined
        assert auc == pytest.approx(0.75, abs=1e-15)
        assert auc == pytest.approx(brute_force_auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]))

    def test_perfect_separation(self):
        auc, _ = auc_rank([-2.0, -1.0, 1.0, 2.0], [0, 0, 1, 1])
        assert auc == 1.0

    def test_single_class_flagged(self):
        auc, defined = auc_rank([0.1, 0.2, 0.3], [1, 1, 1])
        assert not defined
        assert np.isnan(auc)

    def test_ties_average_ranks(self):
        scores = [0.5, 0.5, 0.5, 0.1]
        labels = [1, 0, 1, 0]
        auc, _ = auc_rank(scores, labels)
        assert auc == pytest.approx(brute_force_auc(scores, labels), abs=1e-15)

    def test_matches_brute_force_randomly(self, rng):
        for _ in range(50):
            n = int(rng.integers(5, 200))
            scores = np.round(rng.normal(0, 1, n), 1)  # rounding forces ties
            labels = (rng.uniform(size=n) < 0.5).astype(float)
            if labels.min() == labels.max():
                continue
            auc, defined = auc_rank(scores, labels)
            assert defined
            assert auc == pytest.approx(brute_force_auc(scores, labels), abs=1e-12)


class TestMetricSet:
    def test_perfect_predictions(self):
        labels = np.array([[1.0, 1, -2.0, 0], [0.2, 0, 0.7, 1], [0.9, 1, 0.1, 0]], dtype=float)
        means = np.column_stack(
            [
                labels[:, 0],
                labels[:, 2],
                np.where(labels[:, 1] > 0.5, 3.0, -3.0),
                np.where(labels[:, 3] > 0.5, 3.0, -3.0),
            ]
        )
        mset = metrics(means, labels)
        assert mset.mse_left == 0.0 and mset.mse_right == 0.0
        assert mset.acc_left == 1.0 and mset.acc_right == 1.0
        assert mset.auc_left == 1.0 and mset.auc_right == 1.0

    def test_threshold_at_zero_latent(self):
        labels = np.array([[0.0, 1, 0.0, 0], [0.0, 0, 0.0, 1]], dtype=float)
        means = np.array([[0.0, 0.0, 0.0, -0.2], [0.0, 0.0, 0.1, 0.3]], dtype=float)
        mset = metrics(means, labels)
        # q1 = 0 counts as predicting class 1 (probability exactly one half)
        assert mset.acc_left == 0.5
        # q2 = -0.2 -> 0 (correct), q2 = 0.3 -> 1 (correct)
        assert mset.acc_right == 1.0

    def test_single_class_flag_not_exception(self):
        labels = np.array([[0.0, 1, 0.0, 0], [1.0, 1, 1.0, 1]], dtype=float)
        means = np.zeros((2, 4))
        mset = metrics(means, labels)
        assert not mset.auc_left_defined
        assert np.isnan(mset.auc_left)
        assert mset.auc_right_defined

    def test_shape_validation(self):
        with pytest.raises(UsageError):
            metrics(np.zeros((3, 4)), np.zeros((4, 4)))
