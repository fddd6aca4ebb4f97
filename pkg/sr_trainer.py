"""
超解像モデルの学習

学習データは運用データと分離された public / synthetic コーパスに限る。
private タグのマニフェストはパッチ抽出・学習のどちらの経路でも拒否する。
"""
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from autodiff.ops import mse_loss
from autodiff.optim import AdamState, adam_step
from autodiff.tensor import Graph, Tensor, backward
from constants import ManifestConstants, Provenance
from dcscn_model import SrConfig, SrModel, bicubic_baseline, dcscn_forward, sr_forward
from depth_io import read_frame
from exceptions import FrameError, NonFiniteError, ProvenanceError, TrainingDivergedError
from image_resample import DepthFrame, downsample, normalize_depth, resample_bicubic
from synth.manifest import DatasetManifest

logger = logging.getLogger(__name__)

_ALLOWED = (Provenance.PUBLIC, Provenance.SYNTHETIC)


@dataclass
class PatchPairSet:
    """
    学習用の (LR, HR) パッチ対

    Attributes:
        lr: (n, 1, p/scale, p/scale) float32
        hr: (n, 1, p, p) float32
        source: 元マニフェストのパス
        provenance: 来歴タグ
    """
    lr: np.ndarray
    hr: np.ndarray
    source: Optional[Path]
    provenance: Provenance

    def __len__(self) -> int:
        return int(self.lr.shape[0])


@dataclass(frozen=True)
class SrHyper:
    """学習ハイパーパラメータ"""
    lr: float = 1e-3
    batch: int = 16
    steps: int = 2000
    seed: int = 0
    log_every: int = 100


def check_provenance(provenance: Provenance) -> None:
    """
    超解像の学習データとして許可された来歴か検査する

    Raises:
        ProvenanceError: private（運用データ）の場合
    """
    provenance = Provenance(provenance)
    if provenance not in _ALLOWED:
        raise ProvenanceError("このデータは超解像の学習に使用できません", provenance=provenance.value)


def check_manifest_provenance(manifest: DatasetManifest) -> None:
    check_provenance(manifest.provenance)


def load_normalized(manifest: DatasetManifest, entry) -> DepthFrame:
    """マニフェストのエントリを読み込んで正規化"""
    return normalize_depth(read_frame(manifest.resolve(entry), provenance=manifest.provenance))


def extract_patch_pairs(
    manifest: DatasetManifest,
    config: SrConfig,
    rng_seed: int,
    patches_per_frame: int = 4,
    split: str = ManifestConstants.SPLIT_TRAIN
) -> PatchPairSet:
    """
    HR フレームからランダムに切り出したパッチと、その縮小版の組を作成

    LR パッチは resample_bicubic による HR パッチの縮小そのもの。

    Args:
        manifest: public / synthetic のマニフェスト
        config: DCSCN 構成（patch_size, scale）
        rng_seed: 切り出し位置のシード
        patches_per_frame: フレームあたりのパッチ数
        split: 使用する分割

    Raises:
        ProvenanceError: private マニフェスト
        FrameError: フレームがパッチより小さい
    """
    check_manifest_provenance(manifest)
    rng = np.random.default_rng(rng_seed)
    side = config.patch_size
    lr_side = side // config.scale
    lr_patches: List[np.ndarray] = []
    hr_patches: List[np.ndarray] = []

    for entry in manifest.split(split):
        frame = load_normalized(manifest, entry)
        if frame.height < side or frame.width < side:
            raise FrameError(f"フレームがパッチ {side} より小さい: {entry.path}", width=frame.width, height=frame.height)
        for _ in range(patches_per_frame):
            top = int(rng.integers(0, frame.height - side + 1))
            left = int(rng.integers(0, frame.width - side + 1))
            hr = frame.with_data(frame.data[top:top + side, left:left + side])
            lr = resample_bicubic(hr, lr_side, lr_side)
            hr_patches.append(hr.data)
            lr_patches.append(lr.data)

    if not hr_patches:
        raise FrameError(f"分割 '{split}' にフレームがありません")
    logger.info(f"パッチ対を抽出しました: {len(hr_patches)}組 (HR {side}x{side}, LR {lr_side}x{lr_side})")
    return PatchPairSet(
        lr=np.stack(lr_patches)[:, None].astype(np.float32),
        hr=np.stack(hr_patches)[:, None].astype(np.float32),
        source=manifest.source_path,
        provenance=manifest.provenance
    )


def train_sr(model: SrModel, pairs: PatchPairSet, hyper: SrHyper) -> Tuple[SrModel, List[float]]:
    """
    Adam で MSE を最小化する

    Args:
        model: 初期モデル
        pairs: パッチ対（来歴は再検査される）
        hyper: ハイパーパラメータ

    Returns:
        Tuple[SrModel, List[float]]: 学習後のモデルと各ステップの損失

    Raises:
        ProvenanceError: private のパッチ対
        TrainingDivergedError: 損失が非有限値になったステップ
    """
    check_provenance(pairs.provenance)
    losses: List[float] = []
    if hyper.steps <= 0:
        return model, losses

    rng = np.random.default_rng(hyper.seed)
    state = AdamState(lr=hyper.lr)
    count = len(pairs)
    for step in range(1, hyper.steps + 1):
        index = rng.integers(0, count, size=min(hyper.batch, count))
        x = Tensor(pairs.lr[index])
        y = Tensor(pairs.hr[index])
        try:
            with Graph() as graph:
                loss = mse_loss(dcscn_forward(model, x), y)
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

        logger.debug(f"SR step {step}: loss={value:.6f}", extra={"step": step, "loss": value, "stage": "train-sr"})
        if hyper.log_every and step % hyper.log_every == 0:
            logger.info(f"超解像学習 {step}/{hyper.steps}: loss={value:.6f}")
    return model, losses


def psnr(a: DepthFrame, b: DepthFrame) -> float:
    """
    PSNR [dB]（値域 [0, 1]）

    Returns:
        float: 10*log10(1/MSE)、同一フレームは +inf

    Raises:
        FrameError: 寸法の不一致
    """
    if a.data.shape != b.data.shape:
        raise FrameError(f"寸法が一致しません: {a.width}x{a.height} vs {b.width}x{b.height}")
    diff = a.data.astype(np.float64) - b.data.astype(np.float64)
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


@dataclass
class PsnrComparison:
    """超解像とバイキュービックの PSNR 比較"""
    sr_db: List[float]
    bicubic_db: List[float]

    @property
    def mean_sr(self) -> float:
        return float(np.mean(self.sr_db))

    @property
    def mean_bicubic(self) -> float:
        return float(np.mean(self.bicubic_db))

    @property
    def gain(self) -> float:
        return self.mean_sr - self.mean_bicubic


def compare_psnr(model: SrModel, frames: Sequence[DepthFrame]) -> PsnrComparison:
    """
    HR フレームを縮小→拡大し、DCSCN とバイキュービックの PSNR を比較

    Args:
        model: DCSCN
        frames: 正規化済み HR フレーム（辺は scale で割り切れること）
    """
    sr_db: List[float] = []
    bicubic_db: List[float] = []
    for hr in frames:
        lr = downsample(hr, model.config.scale)
        sr_db.append(psnr(sr_forward(model, lr), hr))
        bicubic_db.append(psnr(bicubic_baseline(lr, model.config.scale), hr))
    comparison = PsnrComparison(sr_db, bicubic_db)
    logger.info(
        f"PSNR: DCSCN={comparison.mean_sr:.3f}dB, バイキュービック={comparison.mean_bicubic:.3f}dB, "
        f"差={comparison.gain:+.3f}dB"
    )
    return comparison
