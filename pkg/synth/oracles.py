"""
生成データの分離可能性オラクル

CNN を使わずに、生成器がタスクを学習可能にしているかを確認する。
"""
import logging
from dataclasses import dataclass
from itertools import combinations
from typing import List, Optional, Tuple

import numpy as np

from depth_io import read_frame
from image_resample import downsample, normalize_depth
from synth.manifest import DatasetManifest

logger = logging.getLogger(__name__)


def load_feature_matrix(manifest: DatasetManifest, dim: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    全フレームを正規化（必要なら dim まで縮小）して画素ベクトルに並べる

    Returns:
        Tuple[np.ndarray, np.ndarray]: (n, 画素数) の特徴と (n,) のラベル
    """
    rows = []
    labels = []
    for entry in manifest.entries:
        frame = normalize_depth(read_frame(manifest.resolve(entry), provenance=manifest.provenance))
        if dim is not None and frame.width > dim:
            frame = downsample(frame, frame.width // dim)
        rows.append(frame.data.astype(np.float64).ravel())
        labels.append(entry.label)
    return np.stack(rows), np.asarray(labels, dtype=np.int64)


def nearest_centroid_accuracy(features: np.ndarray, labels: np.ndarray) -> float:
    """
    最近傍重心分類器の leave-one-out 正解率

    各サンプルについて、自身を除いたクラス重心までのユークリッド距離で分類する。
    """
    classes = np.unique(labels)
    sums = {c: features[labels == c].sum(axis=0) for c in classes}
    counts = {c: int((labels == c).sum()) for c in classes}
    correct = 0
    for x, y in zip(features, labels):
        best_class, best_dist = None, np.inf
        for c in classes:
            n = counts[c] - (1 if c == y else 0)
            if n == 0:
                continue
            centroid = (sums[c] - (x if c == y else 0.0)) / n
            dist = float(np.sum((x - centroid) ** 2))
            if dist < best_dist:
                best_class, best_dist = c, dist
        correct += int(best_class == y)
    return correct / len(labels)


@dataclass
class Separability:
    """クラス重心間距離と、重心を結ぶ軸上のクラス内ばらつき"""
    mean_centroid_distance: float
    within_class_std: float

    @property
    def ratio(self) -> float:
        if self.mean_centroid_distance == 0.0:
            return 0.0
        if self.within_class_std == 0.0:
            return np.inf
        return self.mean_centroid_distance / self.within_class_std


def separability(features: np.ndarray, labels: np.ndarray) -> Separability:
    """
    クラス重心間のユークリッド距離の平均と、クラス内標準偏差を比較

    クラス内標準偏差は、クラス対ごとに重心を結ぶ単位ベクトルへサンプルを射影し、
    射影値のクラス内分散を両クラスでプールしたもの（対の平均の平方根）。
    距離と同じ L2 単位なので、画素数を増やしても比は変わらない。
    """
    classes = np.unique(labels)
    centroids = {c: features[labels == c].mean(axis=0) for c in classes}
    distances: List[float] = []
    variances: List[float] = []
    for a, b in combinations(classes, 2):
        diff = centroids[b] - centroids[a]
        distance = float(np.linalg.norm(diff))
        distances.append(distance)
        if distance == 0.0:
            variances.append(0.0)
            continue
        axis = diff / distance
        squared = 0.0
        count = 0
        for c in (a, b):
            projected = (features[labels == c] - centroids[c]) @ axis
            squared += float(projected @ projected)
            count += projected.size
        variances.append(squared / count)
    within = float(np.sqrt(np.mean(variances))) if variances else 0.0
    result = Separability(float(np.mean(distances)) if distances else 0.0, within)
    logger.debug(f"分離度: 重心距離={result.mean_centroid_distance:.4f}, クラス内σ={within:.4f}, 比={result.ratio:.2f}")
    return result


def manifest_oracles(manifest: DatasetManifest, low_dim: int = 14) -> Tuple[float, float]:
    """
    原解像度での最近傍重心正解率と、低解像度での分離度比を返す
    """
    features, labels = load_feature_matrix(manifest)
    accuracy = nearest_centroid_accuracy(features, labels)
    low_features, low_labels = load_feature_matrix(manifest, low_dim)
    ratio = separability(low_features, low_labels).ratio
    logger.info(f"オラクル: 最近傍重心正解率={accuracy:.3f}, {low_dim}x{low_dim} 分離度比={ratio:.2f}")
    return accuracy, ratio
