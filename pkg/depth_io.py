"""
デプスフレームのファイル入出力

16bit 単一チャンネルの PGM（P5、maxval 65535、ビッグエンディアン）と PNG に対応する。
パイプラインがフレームを書き込むときは必ず write_frame を通し、
プライバシーゲートを通過したフレームだけを保存する。
"""
import logging
import re
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np
from PIL import Image

from constants import DepthConstants, PrivacyConstants, PrivacyLevel, Provenance
from exceptions import FileOperationError, FrameError, PathNotFoundError
from image_resample import DepthFrame, denormalize_depth, privacy_gate

logger = logging.getLogger(__name__)

_PGM_HEADER = re.compile(rb"\AP5\s+(?:#[^\n]*\n\s*)*(\d+)\s+(?:#[^\n]*\n\s*)*(\d+)\s+(?:#[^\n]*\n\s*)*(\d+)\s")


def encode_pgm(raw: np.ndarray) -> bytes:
    """uint16 配列を P5 形式のバイト列に変換"""
    height, width = raw.shape
    header = f"P5\n{width} {height}\n{DepthConstants.MAX_RAW}\n".encode("ascii")
    return header + np.ascontiguousarray(raw, dtype=">u2").tobytes()


def decode_pgm(blob: bytes, source: str = "<memory>") -> np.ndarray:
    """
    P5 形式のバイト列を uint16 配列に変換

    Raises:
        FrameError: ヘッダー不正、maxval が 65535 でない、またはデータ長不足
    """
    match = _PGM_HEADER.match(blob)
    if not match:
        raise FrameError(f"PGM ヘッダーが不正です: {source}")
    width, height, maxval = (int(g) for g in match.groups())
    if maxval != DepthConstants.MAX_RAW:
        raise FrameError(f"16bit PGM のみ対応しています (maxval={maxval}): {source}")
    start = match.end()
    expected = width * height * 2
    if len(blob) - start < expected:
        raise FrameError(f"PGM のデータ長が不足しています: {source}", width=width, height=height)
    data = np.frombuffer(blob, dtype=">u2", count=width * height, offset=start)
    return data.reshape(height, width).astype(np.uint16)


def read_frame(
    path: Union[str, Path],
    depth_range: Optional[Tuple[float, float]] = (DepthConstants.MIN_DEPTH_M, DepthConstants.MAX_DEPTH_M),
    provenance: Provenance = Provenance.SYNTHETIC
) -> DepthFrame:
    """
    デプスフレームを読み込む（生の uint16）

    Args:
        path: .pgm または .png
        depth_range: センサーの動作範囲
        provenance: データ来歴

    Raises:
        PathNotFoundError: ファイルが存在しない
        FrameError: 形式不正
    """
    path = Path(path)
    if not path.is_file():
        raise PathNotFoundError(str(path), description="デプスフレーム")
    suffix = path.suffix.lower()
    if suffix == ".pgm":
        raw = decode_pgm(path.read_bytes(), source=str(path))
    elif suffix == ".png":
        try:
            with Image.open(path) as img:
                raw = np.array(img, dtype=np.uint16)
        except OSError as e:
            raise FileOperationError(str(e), file_path=str(path), operation="読み込み", original_error=e) from e
        if raw.ndim != 2:
            raise FrameError(f"単一チャンネルの PNG が必要です: {path}")
    else:
        raise FrameError(f"未対応の拡張子です: {path.suffix}")
    return DepthFrame(raw, depth_range=depth_range, provenance=provenance)


def write_frame(
    path: Union[str, Path],
    frame: DepthFrame,
    policy: PrivacyLevel,
    *,
    pre_capture_source: bool = False,
    strong_threshold: int = PrivacyConstants.STRONG_THRESHOLD,
    weak_threshold: int = PrivacyConstants.WEAK_THRESHOLD
) -> Path:
    """
    プライバシーゲートを通してフレームを保存

    正規化済みフレームは mm の uint16 に戻してから保存する。

    Args:
        path: 保存先（.pgm / .png）
        frame: 保存するフレーム
        policy: 要求プライバシーレベル
        pre_capture_source: 撮影前シミュレーションの合成原画像（ゲート対象外）

    Raises:
        PrivacyViolationError: ゲート違反（何も書き込まない）
        FileOperationError: 書き込み失敗
    """
    path = Path(path)
    if pre_capture_source:
        if frame.provenance != Provenance.SYNTHETIC:
            raise FrameError("ゲート免除は合成原画像のみ許可されます", width=frame.width, height=frame.height)
    else:
        privacy_gate(frame, policy, strong_threshold, weak_threshold)

    raw = denormalize_depth(frame).data if frame.is_normalized else frame.data
    suffix = path.suffix.lower()
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        if suffix == ".pgm":
            path.write_bytes(encode_pgm(raw))
        elif suffix == ".png":
            Image.fromarray(np.ascontiguousarray(raw, dtype=np.uint16)).save(path, format="PNG")
        else:
            raise FrameError(f"未対応の拡張子です: {path.suffix}")
    except OSError as e:
        raise FileOperationError(str(e), file_path=str(path), operation="書き込み", original_error=e) from e
    logger.debug(f"フレームを保存しました: {path} ({frame.width}x{frame.height})")
    return path


def frame_size(path: Union[str, Path]) -> Tuple[int, int]:
    """画素データを読まずに (width, height) を取得（監査用）"""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".pgm":
        with open(path, "rb") as f:
            head = f.read(256)
        match = _PGM_HEADER.match(head)
        if not match:
            raise FrameError(f"PGM ヘッダーが不正です: {path}")
        return int(match.group(1)), int(match.group(2))
    if suffix == ".png":
        with Image.open(path) as img:
            return img.size
    raise FrameError(f"未対応の拡張子です: {path.suffix}")
