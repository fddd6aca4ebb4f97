"""
DCSCN 超解像モデル

特徴抽出（3x3 畳み込み + PReLU を積み重ね、全層の出力をスキップ接続で連結）と
Network-in-Network 再構成（A1: 1x1、B1: 1x1 → B2: 3x3）、サブピクセル拡大、
バイキュービック残差経路からなる。16倍は4倍ステージ2段のカスケードで実現する。
"""
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple, Union

import numpy as np

from autodiff.ops import add, bicubic_upsample_const, concat_channels, conv2d, depth_to_space, prelu
from autodiff.tensor import Tensor
from checkpoint_io import load_checkpoint, save_checkpoint
from constants import CheckpointConstants, DepthConstants
from exceptions import CheckpointError, ConfigurationError, FrameError
from image_resample import DepthFrame, KernelParams, resample_plane

logger = logging.getLogger(__name__)

STAGE_FACTOR = 4
PRELU_INIT = 0.25


@dataclass(frozen=True)
class SrConfig:
    """
    DCSCN の構成

    Attributes:
        scale: 拡大率（4 または 16、16 は4倍2段）
        feature_layers: 特徴抽出層の数
        feature_filters: 各特徴抽出層のフィルタ数（非増加）
        nin_a1_filters: 再構成 A1 のフィルタ数
        nin_b1_filters: 再構成 B1 のフィルタ数
        nin_b2_filters: 再構成 B2 のフィルタ数
        patch_size: 学習用 HR パッチの一辺
        max_output_side: 出力の最大辺
    """
    scale: int = 4
    feature_layers: int = 5
    feature_filters: Tuple[int, ...] = (32, 26, 22, 18, 16)
    nin_a1_filters: int = 32
    nin_b1_filters: int = 16
    nin_b2_filters: int = 16
    patch_size: int = 32
    max_output_side: int = DepthConstants.ORIGINAL_SIDE

    def __post_init__(self) -> None:
        object.__setattr__(self, "feature_filters", tuple(int(f) for f in self.feature_filters))
        self.validate()

    def validate(self) -> None:
        """
        Raises:
            ConfigurationError: 不正な設定（キー名付き）
        """
        if self.scale not in (4, 16):
            raise ConfigurationError(f"scale は 4 または 16: {self.scale}", config_key="sr.scale")
        if self.feature_layers < 1 or len(self.feature_filters) != self.feature_layers:
            raise ConfigurationError(
                f"feature_filters の長さ {len(self.feature_filters)} が feature_layers {self.feature_layers} と一致しません",
                config_key="sr.feature_filters"
            )
        if any(f < 1 for f in self.feature_filters):
            raise ConfigurationError("フィルタ数は1以上", config_key="sr.feature_filters")
        if any(b > a for a, b in zip(self.feature_filters, self.feature_filters[1:])):
            raise ConfigurationError(
                f"feature_filters は非増加である必要があります: {list(self.feature_filters)}",
                config_key="sr.feature_filters"
            )
        for key in ("nin_a1_filters", "nin_b1_filters", "nin_b2_filters"):
            if getattr(self, key) < 1:
                raise ConfigurationError("フィルタ数は1以上", config_key=f"sr.{key}")
        if self.patch_size < self.scale or self.patch_size % self.scale:
            raise ConfigurationError(
                f"patch_size {self.patch_size} が scale {self.scale} で割り切れません",
                config_key="sr.patch_size"
            )

    @property
    def stage_factors(self) -> Tuple[int, ...]:
        return (STAGE_FACTOR,) * (2 if self.scale == 16 else 1)

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["feature_filters"] = list(self.feature_filters)
        return data

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "SrConfig":
        known = {k: v for k, v in data.items() if k in cls.__dataclass_fields__}
        unknown = sorted(set(data) - set(known))
        if unknown:
            raise ConfigurationError(f"不明なキー: {unknown}", config_key=f"sr.{unknown[0]}")
        return cls(**known)


@dataclass
class SrModel:
    """DCSCN の構成と名前付きパラメータ"""
    config: SrConfig
    params: Dict[str, Tensor] = field(default_factory=dict)

    def parameter_count(self) -> int:
        return sum(t.size for t in self.params.values())

    def arrays(self) -> Dict[str, np.ndarray]:
        return {name: t.numpy() for name, t in self.params.items()}

    def with_params(self, params: Mapping[str, Tensor]) -> "SrModel":
        return SrModel(self.config, dict(params))


def _param_shapes(config: SrConfig) -> List[Tuple[str, Tuple[int, ...]]]:
    """(名前, 形状) を初期化順に列挙"""
    shapes: List[Tuple[str, Tuple[int, ...]]] = []
    for s, r in enumerate(config.stage_factors):
        prefix = f"s{s}"
        in_ch = 1
        for i, out_ch in enumerate(config.feature_filters):
            shapes += [
                (f"{prefix}.feat{i}.w", (out_ch, in_ch, 3, 3)),
                (f"{prefix}.feat{i}.b", (out_ch,)),
                (f"{prefix}.feat{i}.alpha", (out_ch,)),
            ]
            in_ch = out_ch
        total = sum(config.feature_filters)
        shapes += [
            (f"{prefix}.a1.w", (config.nin_a1_filters, total, 1, 1)),
            (f"{prefix}.a1.b", (config.nin_a1_filters,)),
            (f"{prefix}.a1.alpha", (config.nin_a1_filters,)),
            (f"{prefix}.b1.w", (config.nin_b1_filters, total, 1, 1)),
            (f"{prefix}.b1.b", (config.nin_b1_filters,)),
            (f"{prefix}.b1.alpha", (config.nin_b1_filters,)),
            (f"{prefix}.b2.w", (config.nin_b2_filters, config.nin_b1_filters, 3, 3)),
            (f"{prefix}.b2.b", (config.nin_b2_filters,)),
            (f"{prefix}.b2.alpha", (config.nin_b2_filters,)),
            (f"{prefix}.recon.w", (r * r, config.nin_a1_filters + config.nin_b2_filters, 3, 3)),
            (f"{prefix}.recon.b", (r * r,)),
        ]
    return shapes


def build_dcscn(config: SrConfig, seed: int = 0) -> SrModel:
    """
    DCSCN を構築

    畳み込みの重みは fan-in による He 初期化、バイアスは0、PReLU の傾きは0.25。
    最終の再構成畳み込みは0で初期化するため、未学習モデルの出力はバイキュービック拡大と一致する。

    Args:
        config: モデル構成
        seed: 初期化シード

    Returns:
        SrModel: 構築したモデル
    """
    rng = np.random.default_rng(seed)
    params: Dict[str, Tensor] = {}
    for name, shape in _param_shapes(config):
        if name.endswith(".alpha"):
            data = np.full(shape, PRELU_INIT)
        elif name.endswith(".b") or ".recon." in name:
            data = np.zeros(shape)
        else:
            fan_in = shape[1] * shape[2] * shape[3]
            data = rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)
        params[name] = Tensor(data, requires_grad=True, name=name)
    model = SrModel(config, params)
    logger.debug(f"DCSCN を構築しました: scale={config.scale}, パラメータ数={model.parameter_count()}")
    return model


def _conv_prelu(params: Mapping[str, Tensor], key: str, x: Tensor, padding: int) -> Tensor:
    return prelu(conv2d(x, params[f"{key}.w"], params[f"{key}.b"], 1, padding), params[f"{key}.alpha"])


def _stage_forward(params: Mapping[str, Tensor], config: SrConfig, stage: int, x: Tensor, r: int) -> Tensor:
    prefix = f"s{stage}"
    features = []
    h = x
    for i in range(config.feature_layers):
        h = _conv_prelu(params, f"{prefix}.feat{i}", h, 1)
        features.append(h)
    skip = concat_channels(features)
    a1 = _conv_prelu(params, f"{prefix}.a1", skip, 0)
    b1 = _conv_prelu(params, f"{prefix}.b1", skip, 0)
    b2 = _conv_prelu(params, f"{prefix}.b2", b1, 1)
    recon = conv2d(concat_channels([a1, b2]), params[f"{prefix}.recon.w"], params[f"{prefix}.recon.b"], 1, 1)
    return add(depth_to_space(recon, r), bicubic_upsample_const(x, r, KernelParams()))


def dcscn_forward(model: SrModel, x: Tensor) -> Tensor:
    """
    バッチ順伝播 (b, 1, h, w) -> (b, 1, h*scale, w*scale)（クランプなし）

    カスケードのステージ間でもクランプしない。
    """
    out = x
    for stage, r in enumerate(model.config.stage_factors):
        out = _stage_forward(model.params, model.config, stage, out, r)
    return out


def _check_output_side(config: SrConfig, width: int, height: int) -> None:
    if max(width, height) * config.scale > config.max_output_side:
        raise FrameError(
            f"出力サイズが上限 {config.max_output_side} を超えます (scale={config.scale})",
            width=width,
            height=height
        )


def enhance_batch(model: SrModel, batch: np.ndarray) -> np.ndarray:
    """正規化済み (b, 1, h, w) 配列を超解像し、[0, 1] にクランプして返す"""
    _check_output_side(model.config, batch.shape[3], batch.shape[2])
    out = dcscn_forward(model, Tensor(batch, name="lr"))
    return np.clip(out.data, 0.0, 1.0)


def sr_forward(model: SrModel, lr: DepthFrame) -> DepthFrame:
    """
    低解像度フレームを超解像

    Args:
        model: DCSCN
        lr: 正規化済みの低解像度フレーム

    Returns:
        DepthFrame: [0, 1] にクランプした拡大フレーム。
            derived_from_privacy_level に元フレームのレベルを記録する。

    Raises:
        FrameError: 未正規化、または出力が最大辺を超える
    """
    if not lr.is_normalized:
        raise FrameError("sr_forward: 正規化済みフレームが必要です", width=lr.width, height=lr.height)
    out = enhance_batch(model, lr.data[None, None])
    origin = lr.derived_from_privacy_level or lr.privacy_level
    return lr.with_data(out[0, 0], derived_from_privacy_level=origin)


def bicubic_baseline(frame: DepthFrame, scale: int) -> DepthFrame:
    """
    未学習 DCSCN と同じ経路のバイキュービック拡大

    16倍は4倍を2回（段間クランプなし）適用し、最後に [0, 1] にクランプする。
    """
    if scale not in (4, 16):
        raise ConfigurationError(f"scale は 4 または 16: {scale}", config_key="sr.scale")
    data = frame.data
    for _ in range(2 if scale == 16 else 1):
        data = resample_plane(data, data.shape[0] * STAGE_FACTOR, data.shape[1] * STAGE_FACTOR, KernelParams())
    origin = frame.derived_from_privacy_level or frame.privacy_level
    return frame.with_data(np.clip(data, 0.0, 1.0), derived_from_privacy_level=origin)


def save_sr_model(model: SrModel, path: Union[str, Path], extra: Optional[Mapping[str, Any]] = None) -> Path:
    return save_checkpoint(path, CheckpointConstants.KIND_DCSCN, model.config.to_dict(), model.arrays(), extra)


def load_sr_model(path: Union[str, Path]) -> SrModel:
    """
    DCSCN チェックポイントを読み込む

    Raises:
        CheckpointError: kind が dcscn でない、またはパラメータ形状が構成と一致しない
    """
    checkpoint = load_checkpoint(path, expected_kind=CheckpointConstants.KIND_DCSCN)
    config = SrConfig.from_dict(checkpoint.config)
    expected = dict(_param_shapes(config))
    actual = {name: tuple(a.shape) for name, a in checkpoint.tensors.items()}
    if expected != actual:
        raise CheckpointError("パラメータ構成が設定と一致しません", file_path=str(path))
    params = {name: Tensor(a, requires_grad=True, name=name) for name, a in checkpoint.tensors.items()}
    return SrModel(config, params)
