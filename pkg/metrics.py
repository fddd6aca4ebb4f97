"""
評価指標

AUC は Mann-Whitney U 統計量（同順位は 1/2 として数える）で計算する。
"""
import logging
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from exceptions import UndefinedAUCError

logger = logging.getLogger(__name__)


def _binary_inputs(scores: Sequence[float], labels: Sequence[int]):
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).astype(bool).ravel()
    if s.shape != y.shape:
        raise ValueError(f"scores と labels の長さが一致しません: {s.shape} != {y.shape}")
    n_pos = int(y.sum())
    n_neg = int(y.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise UndefinedAUCError(f"AUC は陽性・陰性の両方が必要です (陽性={n_pos}, 陰性={n_neg})")
    return s, y, n_pos, n_neg


def auc_binary(scores: Sequence[float], labels: Sequence[int]) -> float:
    """
    二値 AUC（正規化した Mann-Whitney U）

    P(陽性スコア > 陰性スコア) + 0.5 * P(同点)

    Raises:
        UndefinedAUCError: 単一クラスのみ
    """
    s, y, n_pos, n_neg = _binary_inputs(scores, labels)
    ranks = rankdata(s, method="average")
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def trapezoid_auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """ROC 曲線の台形則面積（同点スコアは1つの閾値としてまとめる）"""
    s, y, n_pos, n_neg = _binary_inputs(scores, labels)
    order = np.argsort(-s, kind="stable")
    s_sorted = s[order]
    y_sorted = y[order]
    last_of_group = np.r_[s_sorted[1:] != s_sorted[:-1], True]
    tps = np.cumsum(y_sorted)[last_of_group]
    fps = np.cumsum(~y_sorted)[last_of_group]
    tpr = np.r_[0, tps] / n_pos
    fpr = np.r_[0, fps] / n_neg
    return float(np.sum((fpr[1:] - fpr[:-1]) * (tpr[1:] + tpr[:-1]) / 2.0))


def confusion_matrix(true_labels: Sequence[int], predicted: Sequence[int], num_classes: int) -> np.ndarray:
    """混同行列（行: 正解、列: 予測）"""
    matrix = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(matrix, (np.asarray(true_labels, dtype=np.int64), np.asarray(predicted, dtype=np.int64)), 1)
    return matrix


def accuracy_from_confusion(matrix: np.ndarray) -> float:
    total = int(matrix.sum())
    if total == 0:
        return 0.0
    return int(np.trace(matrix)) / total
