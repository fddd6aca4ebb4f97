"""
バイキュービック補間とプライバシーゲート

Keys のキュービック畳み込みカーネルによる分離型リサンプリング、
デプスの正規化、解像度ベースのプライバシーレベル判定を提供する。

座標系はピクセル中心 (i + 0.5) / N（align-corners なし）。
境界は端の画素を延長し、出力は [0, 1] にクランプする。
"""
import logging
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Optional, Sequence, Tuple

import numpy as np

from constants import DepthConstants, PrivacyConstants, PrivacyLevel, Provenance, ResampleConstants
from exceptions import FrameError, PrivacyViolationError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class KernelParams:
    """
    Keys カーネルのパラメータ

    Attributes:
        a: Keys の自由パラメータ（既定 -0.5）
        antialias: 縮小時にカーネルを縮小率だけ引き伸ばす（拡大時は無関係）
    """
    a: float = ResampleConstants.KEYS_A
    antialias: bool = True


def _keys(x: np.ndarray, a: float) -> np.ndarray:
    ax = np.abs(x)
    ax2 = ax * ax
    ax3 = ax2 * ax
    inner = (a + 2.0) * ax3 - (a + 3.0) * ax2 + 1.0
    outer = a * ax3 - 5.0 * a * ax2 + 8.0 * a * ax - 4.0 * a
    return np.where(ax <= 1.0, inner, np.where(ax < 2.0, outer, 0.0))


def keys_kernel(x: float, params: Optional[KernelParams] = None) -> float:
    """
    Keys のキュービック畳み込みカーネル

    Args:
        x: サンプル位置からの距離
        params: カーネルパラメータ

    Returns:
        float: カーネル値（|x| >= 2 では 0）
    """
    a = (params or KernelParams()).a
    return float(_keys(np.asarray(x, dtype=np.float64), a))


@lru_cache(maxsize=256)
def _cached_matrix(in_n: int, out_n: int, a: float, antialias: bool) -> np.ndarray:
    stretch = max(in_n / out_n, 1.0) if antialias else 1.0
    radius = ResampleConstants.KERNEL_SUPPORT * stretch
    matrix = np.zeros((out_n, in_n), dtype=np.float64)
    for i in range(out_n):
        center = (i + 0.5) * in_n / out_n - 0.5
        taps = np.arange(int(np.floor(center - radius)) + 1, int(np.floor(center + radius)) + 1)
        weights = _keys((taps - center) / stretch, a)
        if stretch > 1.0:
            weights = weights / weights.sum()
        np.add.at(matrix[i], np.clip(taps, 0, in_n - 1), weights)
    matrix.setflags(write=False)
    return matrix


def resample_matrix(in_n: int, out_n: int, params: Optional[KernelParams] = None) -> np.ndarray:
    """
    1次元リサンプリング行列 (out_n, in_n) を取得（キャッシュ済み、読み取り専用）

    各行は出力画素に対するタップ重み。端のタップは境界画素に畳み込まれる。
    """
    if in_n < 1 or out_n < 1:
        raise FrameError(f"リサンプリングの寸法は1以上である必要があります: {in_n} -> {out_n}")
    params = params or KernelParams()
    return _cached_matrix(int(in_n), int(out_n), float(params.a), bool(params.antialias))


def resample_plane(plane: np.ndarray, out_h: int, out_w: int, params: Optional[KernelParams] = None) -> np.ndarray:
    """
    2次元平面を水平→垂直の順にリサンプリング（クランプなし）

    フレーム経路と DCSCN の残差経路の両方がこの関数を使うため、
    同じ入力に対する結果はビット単位で一致する。
    """
    in_h, in_w = plane.shape
    dtype = plane.dtype
    a_w = resample_matrix(in_w, out_w, params).astype(dtype)
    a_h = resample_matrix(in_h, out_h, params).astype(dtype)
    horizontal = np.ascontiguousarray(plane) @ a_w.T
    return a_h @ horizontal


def resample_array(array: np.ndarray, out_h: int, out_w: int, params: Optional[KernelParams] = None) -> np.ndarray:
    """末尾2軸を平面とみなし、先頭軸ごとに resample_plane を適用"""
    lead = array.shape[:-2]
    out = np.empty(lead + (out_h, out_w), dtype=array.dtype)
    for index in np.ndindex(*lead):
        out[index] = resample_plane(array[index], out_h, out_w, params)
    return out


def resample_array_adjoint(
    grad: np.ndarray,
    in_h: int,
    in_w: int,
    params: Optional[KernelParams] = None
) -> np.ndarray:
    """resample_array の随伴（逆伝播用）"""
    out_h, out_w = grad.shape[-2:]
    lead = grad.shape[:-2]
    a_w = resample_matrix(in_w, out_w, params).astype(grad.dtype)
    a_h = resample_matrix(in_h, out_h, params).astype(grad.dtype)
    out = np.empty(lead + (in_h, in_w), dtype=grad.dtype)
    for index in np.ndindex(*lead):
        out[index] = (a_h.T @ np.ascontiguousarray(grad[index])) @ a_w
    return out


def privacy_level(
    width: int,
    height: int,
    strong_threshold: int = PrivacyConstants.STRONG_THRESHOLD,
    weak_threshold: int = PrivacyConstants.WEAK_THRESHOLD
) -> PrivacyLevel:
    """
    解像度からプライバシーレベルを判定

    Strong: max(w, h) <= strong_threshold（顔特徴が判別不能）
    Weak: max(w, h) <= weak_threshold
    """
    if width < 1 or height < 1:
        raise FrameError("寸法は正の整数である必要があります", width=width, height=height)
    side = max(width, height)
    if side <= strong_threshold:
        return PrivacyLevel.STRONG
    if side <= weak_threshold:
        return PrivacyLevel.WEAK
    return PrivacyLevel.NONE


@dataclass(frozen=True, eq=False)
class DepthFrame:
    """
    単一チャンネルのデプスフレーム

    data は (height, width) の uint16 生値（ミリメートル、0 は無反射）
    または [0, 1] に正規化された float32。生成後は変更不可。

    Attributes:
        data: 画素配列
        depth_range: センサーの動作範囲（メートル）
        provenance: データ来歴
        derived_from_privacy_level: 超解像など低解像度データから派生した場合の元のレベル
    """
    data: np.ndarray
    depth_range: Optional[Tuple[float, float]] = (DepthConstants.MIN_DEPTH_M, DepthConstants.MAX_DEPTH_M)
    provenance: Provenance = Provenance.SYNTHETIC
    derived_from_privacy_level: Optional[PrivacyLevel] = field(default=None)

    def __post_init__(self) -> None:
        array = np.asarray(self.data)
        if array.ndim != 2:
            raise FrameError(f"デプスフレームは2次元である必要があります: shape={array.shape}")
        if array.shape[0] < 1 or array.shape[1] < 1:
            raise FrameError("寸法が0です", width=array.shape[1], height=array.shape[0])
        if array.dtype == np.uint16:
            array = np.array(array, copy=True)
        elif np.issubdtype(array.dtype, np.floating):
            array = np.array(array, dtype=np.float32, copy=True)
        else:
            raise FrameError(f"未対応のデータ型です: {array.dtype}")
        array.setflags(write=False)
        object.__setattr__(self, "data", array)
        if self.depth_range is not None:
            lo, hi = self.depth_range
            if not lo < hi:
                raise FrameError(f"深度範囲が不正です: min={lo}, max={hi}")

    @property
    def width(self) -> int:
        return int(self.data.shape[1])

    @property
    def height(self) -> int:
        return int(self.data.shape[0])

    @property
    def is_normalized(self) -> bool:
        return self.data.dtype != np.uint16

    @property
    def privacy_level(self) -> PrivacyLevel:
        return privacy_level(self.width, self.height)

    def with_data(self, data: np.ndarray, **changes) -> "DepthFrame":
        """メタデータを引き継いだ新しいフレームを作成"""
        return replace(self, data=data, **changes)


def _require_normalized(frame: DepthFrame, op: str) -> None:
    if not frame.is_normalized:
        raise FrameError(f"{op}: 正規化済みフレームが必要です", width=frame.width, height=frame.height)


def _depth_bounds_mm(frame: DepthFrame) -> Tuple[float, float]:
    if frame.depth_range is None:
        raise FrameError("depth_range が設定されていません", width=frame.width, height=frame.height)
    lo, hi = frame.depth_range
    return lo * DepthConstants.MM_PER_METER, hi * DepthConstants.MM_PER_METER


def normalize_depth(frame: DepthFrame) -> DepthFrame:
    """
    生のデプス値（mm）を [0, 1] に線形変換

    depth_range の下限が 0.0、上限が 1.0 に対応し、範囲外はクランプ。
    無反射（生値 0）は 0.0 になる。

    Raises:
        FrameError: depth_range が未設定、または既に正規化済み
    """
    if frame.is_normalized:
        raise FrameError("既に正規化済みです", width=frame.width, height=frame.height)
    lo, hi = _depth_bounds_mm(frame)
    raw = frame.data.astype(np.float64)
    values = np.clip((raw - lo) / (hi - lo), 0.0, 1.0)
    values[frame.data == DepthConstants.NO_RETURN] = 0.0
    return frame.with_data(values.astype(np.float32))


def denormalize_depth(frame: DepthFrame) -> DepthFrame:
    """正規化済みフレームを mm の uint16 に戻す（保存用、四捨五入）"""
    _require_normalized(frame, "denormalize_depth")
    lo, hi = _depth_bounds_mm(frame)
    values = np.clip(frame.data.astype(np.float64), 0.0, 1.0)
    raw = np.rint(lo + values * (hi - lo))
    return frame.with_data(np.clip(raw, 0, DepthConstants.MAX_RAW).astype(np.uint16))


def resample_bicubic(
    frame: DepthFrame,
    out_w: int,
    out_h: int,
    params: Optional[KernelParams] = None
) -> DepthFrame:
    """
    正規化済みフレームをバイキュービック補間でリサイズ

    Args:
        frame: 正規化済みフレーム
        out_w: 出力幅
        out_h: 出力高さ
        params: カーネルパラメータ

    Returns:
        DepthFrame: [0, 1] にクランプされたフレーム（プライバシーレベルは寸法から再計算）

    Raises:
        FrameError: 出力寸法が0、または未正規化
    """
    _require_normalized(frame, "resample_bicubic")
    if out_w < 1 or out_h < 1:
        raise FrameError("出力寸法は1以上である必要があります", width=out_w, height=out_h)
    out = resample_plane(frame.data, out_h, out_w, params)
    return frame.with_data(np.clip(out, 0.0, 1.0))


def downsample(frame: DepthFrame, scale: int, params: Optional[KernelParams] = None) -> DepthFrame:
    """幅・高さを scale で割った寸法に縮小（割り切れない場合はエラー）"""
    if scale < 1 or frame.width % scale or frame.height % scale:
        raise FrameError(f"縮小率 {scale} で割り切れません", width=frame.width, height=frame.height)
    if scale == 1:
        return frame
    return resample_bicubic(frame, frame.width // scale, frame.height // scale, params)


def downsample_cascade(
    frame: DepthFrame,
    factors: Sequence[int],
    params: Optional[KernelParams] = None
) -> DepthFrame:
    """
    段階的な縮小（例: 4倍→4倍で 224 -> 56 -> 14）

    直接 16 倍縮小とはプライバシーレベルが一致するが、画素値は一致しない。
    """
    for factor in factors:
        frame = downsample(frame, factor, params)
        logger.debug(f"段階縮小: x{factor} -> {frame.width}x{frame.height}")
    return frame


def privacy_gate(
    frame: DepthFrame,
    policy: PrivacyLevel,
    strong_threshold: int = PrivacyConstants.STRONG_THRESHOLD,
    weak_threshold: int = PrivacyConstants.WEAK_THRESHOLD
) -> None:
    """
    フレームがポリシーを満たすか検査する（永続化の直前に必ず呼ぶ）

    Raises:
        PrivacyViolationError: フレームのレベルがポリシー未満
    """
    level = privacy_level(frame.width, frame.height, strong_threshold, weak_threshold)
    if level < policy:
        raise PrivacyViolationError(
            width=frame.width,
            height=frame.height,
            required_level=policy.name,
            actual_level=level.name
        )
