"""
残差ブロック CNN 分類器

ステム（3x3 stride 2 畳み込み → グループ正規化 → ReLU）、
ステージごとに1つの残差ブロック（先頭畳み込みが stride 2、ショートカットは 1x1 stride 2 射影）、
グローバル平均プーリング、全結合ヘッド。正規化は実行時統計を持たないため、
評価結果はバッチサイズに依存しない。
"""
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple, Union

import numpy as np

from autodiff.ops import add, conv2d, dense, global_avg_pool, group_norm, relu
from autodiff.tensor import Tensor
from checkpoint_io import load_checkpoint, save_checkpoint
from constants import CheckpointConstants, DepthConstants
from exceptions import CheckpointError, ConfigurationError, ShapeError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ClsConfig:
    """
    分類器の構成

    Attributes:
        num_classes: クラス数（2以上）
        input_side: 入力の一辺（正方形）
        blocks: ステージごとのチャンネル数
        norm_groups: グループ正規化のグループ数
        seed: 初期化シード
    """
    num_classes: int = 2
    input_side: int = DepthConstants.ORIGINAL_SIDE
    blocks: Tuple[int, ...] = (16, 32, 64)
    norm_groups: int = 4
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "blocks", tuple(int(b) for b in self.blocks))
        if self.num_classes < 2:
            raise ConfigurationError(f"num_classes は2以上: {self.num_classes}", config_key="cls.num_classes")
        if self.input_side < 1:
            raise ConfigurationError(f"input_side が不正です: {self.input_side}", config_key="cls.input_side")
        if not self.blocks:
            raise ConfigurationError("blocks が空です", config_key="cls.blocks")
        if self.norm_groups < 1 or any(c % self.norm_groups for c in self.blocks):
            raise ConfigurationError(
                f"チャンネル数 {list(self.blocks)} が norm_groups={self.norm_groups} で割り切れません",
                config_key="cls.norm_groups"
            )

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["blocks"] = list(self.blocks)
        return data

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ClsConfig":
        unknown = sorted(set(data) - set(cls.__dataclass_fields__))
        if unknown:
            raise ConfigurationError(f"不明なキー: {unknown}", config_key=f"cls.{unknown[0]}")
        return cls(**dict(data))


@dataclass
class ClsModel:
    """分類器の構成と名前付きパラメータ"""
    config: ClsConfig
    params: Dict[str, Tensor] = field(default_factory=dict)

    def arrays(self) -> Dict[str, np.ndarray]:
        return {name: t.numpy() for name, t in self.params.items()}

    def with_params(self, params: Mapping[str, Tensor]) -> "ClsModel":
        return ClsModel(self.config, dict(params))


def _norm_shapes(key: str, channels: int) -> List[Tuple[str, Tuple[int, ...]]]:
    return [(f"{key}.gamma", (channels,)), (f"{key}.beta", (channels,))]


def _param_shapes(config: ClsConfig) -> List[Tuple[str, Tuple[int, ...]]]:
    first = config.blocks[0]
    shapes = [("stem.w", (first, 1, 3, 3)), ("stem.b", (first,))] + _norm_shapes("stem.gn", first)
    in_ch = first
    for i, ch in enumerate(config.blocks):
        key = f"stage{i}"
        shapes += [(f"{key}.conv1.w", (ch, in_ch, 3, 3)), (f"{key}.conv1.b", (ch,))]
        shapes += _norm_shapes(f"{key}.gn1", ch)
        shapes += [(f"{key}.conv2.w", (ch, ch, 3, 3)), (f"{key}.conv2.b", (ch,))]
        shapes += _norm_shapes(f"{key}.gn2", ch)
        shapes += [(f"{key}.proj.w", (ch, in_ch, 1, 1)), (f"{key}.proj.b", (ch,))]
        shapes += _norm_shapes(f"{key}.proj_gn", ch)
        in_ch = ch
    shapes += [("head.w", (in_ch, config.num_classes)), ("head.b", (config.num_classes,))]
    return shapes


def build_classifier(config: ClsConfig) -> ClsModel:
    """
    分類器を構築

    畳み込みは He 初期化、正規化は gamma=1 / beta=0、ヘッドは0初期化
    （初期ロジットは全クラス0で、損失は ln(num_classes)）。
    """
    rng = np.random.default_rng(config.seed)
    params: Dict[str, Tensor] = {}
    for name, shape in _param_shapes(config):
        if name.endswith(".gamma"):
            data = np.ones(shape)
        elif name.endswith(".beta") or name.endswith(".b") or name.startswith("head."):
            data = np.zeros(shape)
        else:
            fan_in = shape[1] * shape[2] * shape[3]
            data = rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)
        params[name] = Tensor(data, requires_grad=True, name=name)
    logger.debug(f"分類器を構築しました: クラス数={config.num_classes}, 入力={config.input_side}")
    return ClsModel(config, params)


def _conv_norm(p: Mapping[str, Tensor], conv: str, norm: str, x: Tensor, stride: int, padding: int, groups: int) -> Tensor:
    out = conv2d(x, p[f"{conv}.w"], p[f"{conv}.b"], stride, padding)
    return group_norm(out, p[f"{norm}.gamma"], p[f"{norm}.beta"], groups)


def cls_forward(model: ClsModel, x: Tensor) -> Tensor:
    """
    (b, 1, s, s) -> ロジット (b, num_classes)

    Raises:
        ShapeError: 入力が (b, 1, input_side, input_side) でない
    """
    config = model.config
    side = config.input_side
    if x.data.ndim != 4 or x.shape[1:] != (1, side, side):
        raise ShapeError(f"入力形状 {x.shape} は (b, 1, {side}, {side}) である必要があります", op="cls_forward", dimension="input")
    p = model.params
    groups = config.norm_groups
    h = relu(_conv_norm(p, "stem", "stem.gn", x, 2, 1, groups))
    for i in range(len(config.blocks)):
        key = f"stage{i}"
        out = relu(_conv_norm(p, f"{key}.conv1", f"{key}.gn1", h, 2, 1, groups))
        out = _conv_norm(p, f"{key}.conv2", f"{key}.gn2", out, 1, 1, groups)
        shortcut = _conv_norm(p, f"{key}.proj", f"{key}.proj_gn", h, 2, 0, groups)
        h = relu(add(out, shortcut))
    return dense(global_avg_pool(h), p["head.w"], p["head.b"])


def predict_logits(model: ClsModel, inputs: np.ndarray, chunk: int = 32) -> np.ndarray:
    """
    推論（固定順のチャンクで処理し、結果を連結）

    Args:
        inputs: (n, 1, s, s) 正規化済み入力
    """
    outputs = [
        cls_forward(model, Tensor(inputs[start:start + chunk])).numpy()
        for start in range(0, inputs.shape[0], chunk)
    ]
    if not outputs:
        return np.zeros((0, model.config.num_classes), dtype=np.float32)
    return np.concatenate(outputs, axis=0)


def save_classifier(model: ClsModel, path: Union[str, Path], extra: Optional[Mapping[str, Any]] = None) -> Path:
    return save_checkpoint(path, CheckpointConstants.KIND_CLASSIFIER, model.config.to_dict(), model.arrays(), extra)


def load_classifier(path: Union[str, Path]) -> ClsModel:
    """
    分類器チェックポイントを読み込む

    Raises:
        CheckpointError: kind が classifier でない、またはパラメータ形状が構成と一致しない
    """
    checkpoint = load_checkpoint(path, expected_kind=CheckpointConstants.KIND_CLASSIFIER)
    config = ClsConfig.from_dict(checkpoint.config)
    expected = dict(_param_shapes(config))
    actual = {name: tuple(a.shape) for name, a in checkpoint.tensors.items()}
    if expected != actual:
        raise CheckpointError("パラメータ構成が設定と一致しません", file_path=str(path))
    return ClsModel(config, {n: Tensor(a, requires_grad=True, name=n) for n, a in checkpoint.tensors.items()})
