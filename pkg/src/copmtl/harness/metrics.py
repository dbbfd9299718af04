"""Prediction metrics: per-output MSE, thresholded accuracy, and rank AUC.

Classification thresholds the latent at zero (probability one half). AUC is
the Mann-Whitney rank statistic with average ranks on ties; when a label
column contains a single class the AUC is flagged undefined rather than
raised.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import UsageError


@dataclass(frozen=True)
class MetricSet:
    mse_left: float
    mse_right: float
    acc_left: float
    acc_right: float
    auc_left: float
    auc_right: float
    auc_left_defined: bool = True
    auc_right_defined: bool = True

    def as_record(self) -> dict[str, float]:
        return {
            "mse_left": self.mse_left,
            "mse_right": self.mse_right,
            "acc_left": self.acc_left,
            "acc_right": self.acc_right,
            "auc_left": self.auc_left,
            "auc_right": self.auc_right,
        }


def _average_ranks(scores: np.ndarray) -> np.ndarray:
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(scores.size)
    sorted_scores = scores[order]
    i = 0
    while i < scores.size:
        j = i
        while j < scores.size and sorted_scores[j] == sorted_scores[i]:
            j += 1
        ranks[order[i:j]] = 0.5 * (i + 1 + j)
        i = j
    return ranks


def auc_rank(scores, labels) -> tuple[float, bool]:
    """(AUC, defined) via the rank statistic; ties get average ranks."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise UsageError("scores and labels must be 1-D and equally long")
    pos = labels > 0.5
    n_pos = int(pos.sum())
    n_neg = int(scores.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        return float("nan"), False
    ranks = _average_ranks(scores)
    auc = (ranks[pos].sum() - 0.5 * n_pos * (n_pos + 1)) / (n_pos * n_neg)
    return float(auc), True


def metrics(means, labels) -> MetricSet:
    """Evaluate (n, 4) predictions (m1, m2, q1, q2) against (n, 4) labels."""
    m = np.asarray(means, dtype=float)
    y = np.asarray(labels, dtype=float)
    if m.ndim != 2 or m.shape[1] != 4 or m.shape != y.shape:
        raise UsageError("means and labels must both have shape (n, 4)")
    mse_left = float(np.mean((y[:, 0] - m[:, 0]) ** 2))
    mse_right = float(np.mean((y[:, 2] - m[:, 1]) ** 2))
    acc_left = float(np.mean((m[:, 2] >= 0.0) == (y[:, 1] > 0.5)))
    acc_right = float(np.mean((m[:, 3] >= 0.0) == (y[:, 3] > 0.5)))
    auc_left, def_left = auc_rank(m[:, 2], y[:, 1])
    auc_right, def_right = auc_rank(m[:, 3], y[:, 3])
    return MetricSet(
        mse_left=mse_left,
        mse_right=mse_right,
        acc_left=acc_left,
        acc_right=acc_right,
        auc_left=auc_left,
        auc_right=auc_right,
        auc_left_defined=def_left,
        auc_right_defined=def_right,
    )
