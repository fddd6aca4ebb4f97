"""
行動認識の学習と評価

フレームは「必要なら縮小 → 任意で DCSCN 超解像 → モデル入力サイズへのバイキュービック拡大」
の順に前処理され、クラス均衡のバッチと拡張で分類器を学習する。
"""
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from autodiff.ops import softmax, softmax_cross_entropy
from autodiff.optim import AdamState, adam_step
from autodiff.tensor import Graph, Tensor, backward
from classifier_model import ClsModel, cls_forward, predict_logits
from constants import ManifestConstants, ReportConstants
from dcscn_model import SrModel, sr_forward
from depth_io import read_frame
from exceptions import ManifestError, NonFiniteError, ReportError, TrainingDivergedError, UndefinedAUCError
from image_resample import DepthFrame, downsample, normalize_depth, resample_bicubic
from metrics import accuracy_from_confusion, auc_binary, confusion_matrix
from synth.manifest import DatasetManifest, ManifestEntry

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AugmentParams:
    """拡張パラメータ"""
    flip_prob: float = 0.5
    max_shift_fraction: float = 0.05
    noise_sigma: float = 0.01


def hflip(frame: DepthFrame) -> DepthFrame:
    return frame.with_data(frame.data[:, ::-1])


def _shift_clamped(data: np.ndarray, dy: int, dx: int) -> np.ndarray:
    h, w = data.shape
    rows = np.clip(np.arange(h) - dy, 0, h - 1)
    cols = np.clip(np.arange(w) - dx, 0, w - 1)
    return data[rows][:, cols]


def augment(frame: DepthFrame, rng: np.random.Generator, params: AugmentParams = AugmentParams()) -> DepthFrame:
    """
    ラベルを保つランダム変換

    乱数の消費順: 反転判定 (random) → 平行移動 (integers, 2値) → ノイズ (normal)。
    平行移動は辺の最大 5% で端の画素を延長、ノイズ付加後に [0, 1] にクランプ。
    寸法は変わらない。
    """
    data = frame.data
    if rng.random() < params.flip_prob:
        data = data[:, ::-1]
    max_shift = int(params.max_shift_fraction * max(frame.width, frame.height))
    dy, dx = (int(v) for v in rng.integers(-max_shift, max_shift + 1, size=2))
    if dy or dx:
        data = _shift_clamped(data, dy, dx)
    noise = rng.normal(0.0, params.noise_sigma, size=data.shape)
    data = np.clip(data.astype(np.float64) + noise, 0.0, 1.0)
    return frame.with_data(data.astype(np.float32))


def balanced_index_batches(
    labels: Sequence[int],
    class_names: Sequence[str],
    batch: int,
    rng: np.random.Generator
) -> Iterator[np.ndarray]:
    """
    クラス均衡のバッチ（インデックス列）を無限に生成

    各バッチはクラスごとに floor(batch / k) 件、余りはバッチごとにずらしながら順番に割り当てる。
    各クラスはシャッフルした順に取り出し、使い切ったら再シャッフルする（少数クラスは復元的に再利用）。

    Raises:
        ManifestError: サンプルのないクラスがある
    """
    labels_arr = np.asarray(labels, dtype=np.int64)
    k = len(class_names)
    pools = [np.flatnonzero(labels_arr == c) for c in range(k)]
    for c, pool in enumerate(pools):
        if pool.size == 0:
            raise ManifestError(f"クラス '{class_names[c]}' に学習サンプルがありません")
    per_class, remainder = divmod(batch, k)
    orders = [rng.permutation(pool) for pool in pools]
    positions = [0] * k
    offset = 0
    while True:
        counts = [per_class] * k
        for j in range(remainder):
            counts[(offset + j) % k] += 1
        offset = (offset + remainder) % k
        chosen: List[int] = []
        for c in range(k):
            for _ in range(counts[c]):
                if positions[c] == orders[c].size:
                    orders[c] = rng.permutation(pools[c])
                    positions[c] = 0
                chosen.append(int(orders[c][positions[c]]))
                positions[c] += 1
        yield np.asarray(chosen, dtype=np.int64)


def balanced_batches(
    manifest: DatasetManifest,
    batch: int,
    rng: np.random.Generator,
    split: str = ManifestConstants.SPLIT_TRAIN
) -> Iterator[List[ManifestEntry]]:
    """マニフェストの分割からクラス均衡のバッチを生成"""
    entries = manifest.split(split)
    labels = [e.label for e in entries]
    for index in balanced_index_batches(labels, manifest.class_names, batch, rng):
        yield [entries[i] for i in index]


@dataclass
class Preproc:
    """
    (次元 × 超解像) セルの前処理

    Attributes:
        target_dim: 評価する解像度（224 / 56 / 14）
        sr_model: 超解像モデル（None なら無効）
        input_side: 分類器の入力サイズ
    """
    target_dim: int
    sr_model: Optional[SrModel] = None
    input_side: int = 224

    @property
    def dcscn(self) -> bool:
        return self.sr_model is not None


def preprocess_frame(frame: DepthFrame, preproc: Preproc) -> DepthFrame:
    """
    正規化済みフレームを分類器の入力に変換

    フレームが target_dim より大きければ縮小し、超解像（任意）の後に input_side へリサイズする。
    """
    side = max(frame.width, frame.height)
    if side > preproc.target_dim:
        frame = downsample(frame, side // preproc.target_dim)
    if preproc.sr_model is not None:
        frame = sr_forward(preproc.sr_model, frame)
    if frame.width != preproc.input_side or frame.height != preproc.input_side:
        frame = resample_bicubic(frame, preproc.input_side, preproc.input_side)
    return frame


def load_inputs(manifest: DatasetManifest, entries: Sequence[ManifestEntry], preproc: Preproc) -> np.ndarray:
    """エントリを読み込み前処理した (n, 1, s, s) 配列"""
    frames = [
        preprocess_frame(normalize_depth(read_frame(manifest.resolve(e), provenance=manifest.provenance)), preproc).data
        for e in entries
    ]
    if not frames:
        return np.zeros((0, 1, preproc.input_side, preproc.input_side), dtype=np.float32)
    return np.stack(frames)[:, None]


@dataclass(frozen=True)
class ClsHyper:
    """分類器の学習ハイパーパラメータ"""
    lr: float = 1e-3
    batch: int = 16
    steps: int = 300
    seed: int = 0
    log_every: int = 50
    augment: bool = True


def train_cls(
    model: ClsModel,
    manifest: DatasetManifest,
    preproc: Preproc,
    hyper: ClsHyper
) -> Tuple[ClsModel, List[float]]:
    """
    均衡バッチと拡張で分類器を学習

    前処理済みの入力は学習開始前に一度だけ計算してキャッシュする。
    バッチ選択と拡張は同じ乱数生成器を順に消費する。

    Returns:
        Tuple[ClsModel, List[float]]: 学習後のモデルと各ステップの損失

    Raises:
        ManifestError: 学習分割が空、またはサンプルのないクラス
        TrainingDivergedError: 損失が非有限値
    """
    entries = manifest.split(ManifestConstants.SPLIT_TRAIN)
    if not entries:
        raise ManifestError("学習分割が空です", file_path=str(manifest.source_path) if manifest.source_path else None)
    losses: List[float] = []
    if hyper.steps <= 0:
        return model, losses

    inputs = load_inputs(manifest, entries, preproc)
    labels = np.asarray([e.label for e in entries], dtype=np.int64)
    logger.info(
        f"分類器の学習を開始します: 次元={preproc.target_dim}, DCSCN={'有' if preproc.dcscn else '無'}, "
        f"学習フレーム数={len(entries)}, ステップ数={hyper.steps}"
    )
    rng = np.random.default_rng(hyper.seed)
    batches = balanced_index_batches(labels, manifest.class_names, hyper.batch, rng)
    state = AdamState(lr=hyper.lr)
    for step in range(1, hyper.steps + 1):
        index = next(batches)
        batch = inputs[index]
        if hyper.augment:
            batch = np.stack([
                augment(DepthFrame(sample[0]), rng).data for sample in batch
            ])[:, None]
        try:
            with Graph() as graph:
                loss = softmax_cross_entropy(cls_forward(model, Tensor(batch)), labels[index])
            gradients = backward(loss, graph)
        except NonFiniteError as e:
            raise TrainingDivergedError(step=step, original_error=e) from e
        value = loss.item()
        if not math.isfinite(value):
            raise TrainingDivergedError(step=step)
        losses.append(value)
        grads = {name: gradients.get(id(t)) for name, t in model.params.items()}
        params, state = adam_step(model.params, grads, state)
        model = model.with_params(params)

        logger.debug(f"CLS step {step}: loss={value:.6f}", extra={"step": step, "loss": value, "stage": "train-cls"})
        if hyper.log_every and step % hyper.log_every == 0:
            logger.info(f"分類器学習 {step}/{hyper.steps}: loss={value:.6f}")
    return model, losses


@dataclass
class EvalReport:
    """
    1つの (次元 × 超解像) セルの評価結果

    Attributes:
        task: タスク名
        dim: 評価解像度
        dcscn: 超解像の有無
        test_accuracy: 正解率（混同行列の対角和 / 総数）
        auc: クラスごとの one-vs-rest AUC（テストに存在しないクラスは None）
        confusion: k x k 混同行列（行: 正解）
        class_names: クラス名
    """
    task: str
    dim: int
    dcscn: bool
    test_accuracy: float
    auc: List[Optional[float]]
    confusion: List[List[int]]
    class_names: List[str] = field(default_factory=list)

    @property
    def num_test(self) -> int:
        return int(sum(sum(row) for row in self.confusion))

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "EvalReport":
        try:
            return cls(
                task=str(data["task"]),
                dim=int(data["dim"]),
                dcscn=bool(data["dcscn"]),
                test_accuracy=float(data["test_accuracy"]),
                auc=[None if a is None else float(a) for a in data["auc"]],
                confusion=[[int(v) for v in row] for row in data["confusion"]],
                class_names=list(data.get("class_names", []))
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ReportError(f"評価レポートの形式が不正です: {e}", original_error=e) from e

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as e:
            raise ReportError("評価レポートを JSON として解析できません", original_error=e) from e

    @staticmethod
    def csv_header(num_classes: int) -> List[str]:
        return ["dim", "dcscn", "test_acc"] + [f"auc_{c}" for c in range(num_classes)]

    def csv_row(self) -> List[str]:
        aucs = [ReportConstants.UNDEFINED if a is None else repr(a) for a in self.auc]
        return [str(self.dim), "yes" if self.dcscn else "no", repr(self.test_accuracy)] + aucs


def report_from_scores(
    scores: np.ndarray,
    labels: Sequence[int],
    class_names: Sequence[str],
    task: str,
    dim: int,
    dcscn: bool
) -> EvalReport:
    """
    スコア行列から評価レポートを作成

    予測は argmax（同点は小さいクラス番号）。AUC はクラスごとの one-vs-rest。

    Args:
        scores: (n, k) スコア（ソフトマックス確率またはロジット）
        labels: 正解ラベル
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels_arr = np.asarray(labels, dtype=np.int64)
    k = len(class_names)
    if scores.ndim != 2 or scores.shape != (labels_arr.size, k):
        raise ReportError(f"スコアの形状 {scores.shape} がラベル数 {labels_arr.size} / クラス数 {k} と一致しません")
    if labels_arr.size == 0:
        raise ReportError("テストデータが空です")
    predicted = np.argmax(scores, axis=1)
    matrix = confusion_matrix(labels_arr, predicted, k)
    aucs: List[Optional[float]] = []
    for c in range(k):
        try:
            aucs.append(auc_binary(scores[:, c], labels_arr == c))
        except UndefinedAUCError:
            logger.warning(f"クラス '{class_names[c]}' の AUC は定義できません（テストに陽性または陰性がない）")
            aucs.append(None)
    return EvalReport(
        task=task,
        dim=int(dim),
        dcscn=bool(dcscn),
        test_accuracy=accuracy_from_confusion(matrix),
        auc=aucs,
        confusion=matrix.tolist(),
        class_names=list(class_names)
    )


def evaluate(model: ClsModel, manifest: DatasetManifest, preproc: Preproc) -> EvalReport:
    """
    テスト分割で評価

    Raises:
        ManifestError: テスト分割が空
    """
    entries = manifest.split(ManifestConstants.SPLIT_TEST)
    if not entries:
        raise ManifestError("テスト分割が空です", file_path=str(manifest.source_path) if manifest.source_path else None)
    logits = predict_logits(model, load_inputs(manifest, entries, preproc))
    report = report_from_scores(
        softmax(logits),
        [e.label for e in entries],
        manifest.class_names,
        manifest.task,
        preproc.target_dim,
        preproc.dcscn
    )
    logger.info(
        f"評価: 次元={report.dim}, DCSCN={'有' if report.dcscn else '無'}, "
        f"正解率={report.test_accuracy:.4f}, テスト数={report.num_test}"
    )
    return report
