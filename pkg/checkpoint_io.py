"""
チェックポイントと損失曲線の入出力

チェックポイント形式:
    マジック "PVST" | u32 バージョン | u32 JSONヘッダー長 | JSONヘッダー | float32 LE 生データ
ヘッダーには kind、モデル設定、テンソル名・形状・オフセット（データ部先頭からのバイト位置）を記録する。
"""
import csv
import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Union

import numpy as np

from constants import CheckpointConstants
from exceptions import CheckpointError, FileOperationError, PathNotFoundError

logger = logging.getLogger(__name__)

_PREFIX = struct.Struct("<4sII")
_DTYPE = np.dtype("<f4")


@dataclass
class Checkpoint:
    """読み込んだチェックポイント"""
    kind: str
    config: Dict[str, Any]
    tensors: Dict[str, np.ndarray]
    extra: Dict[str, Any] = field(default_factory=dict)


def encode_checkpoint(
    kind: str,
    config: Mapping[str, Any],
    tensors: Mapping[str, np.ndarray],
    extra: Optional[Mapping[str, Any]] = None
) -> bytes:
    """チェックポイントをバイト列にエンコード（テンソルは名前順）"""
    entries = []
    chunks = []
    offset = 0
    for name in sorted(tensors):
        array = np.ascontiguousarray(tensors[name], dtype=_DTYPE)
        entries.append({"name": name, "shape": list(array.shape), "offset": offset})
        raw = array.tobytes()
        chunks.append(raw)
        offset += len(raw)
    header = {
        "kind": kind,
        "config": dict(config),
        "extra": dict(extra or {}),
        "tensors": entries,
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    prefix = _PREFIX.pack(CheckpointConstants.MAGIC, CheckpointConstants.VERSION, len(header_bytes))
    return prefix + header_bytes + b"".join(chunks)


def decode_checkpoint(blob: bytes, source: str = "<memory>") -> Checkpoint:
    """
    バイト列からチェックポイントを復元

    Raises:
        CheckpointError: マジック・バージョン・ヘッダー・データ長の不正
    """
    if len(blob) < _PREFIX.size:
        raise CheckpointError("ファイルが短すぎます", file_path=source)
    magic, version, header_len = _PREFIX.unpack_from(blob)
    if magic != CheckpointConstants.MAGIC:
        raise CheckpointError(f"マジックバイトが不正です: {magic!r}", file_path=source)
    if version != CheckpointConstants.VERSION:
        raise CheckpointError(f"未対応のバージョンです: {version}", file_path=source)
    start = _PREFIX.size + header_len
    try:
        header = json.loads(blob[_PREFIX.size:start].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError("ヘッダーの解析に失敗しました", file_path=source, original_error=e) from e

    data = blob[start:]
    tensors: Dict[str, np.ndarray] = {}
    expected = 0
    for entry in header.get("tensors", []):
        shape = tuple(int(s) for s in entry["shape"])
        count = int(np.prod(shape, dtype=np.int64))
        offset = int(entry["offset"])
        end = offset + count * _DTYPE.itemsize
        if offset != expected or end > len(data):
            raise CheckpointError(f"テンソル {entry['name']} のオフセットが不正です", file_path=source)
        tensors[entry["name"]] = np.frombuffer(data, dtype=_DTYPE, count=count, offset=offset).reshape(shape).astype(np.float32)
        expected = end
    if expected != len(data):
        raise CheckpointError(f"データ長が一致しません: {len(data)} != {expected}", file_path=source)

    return Checkpoint(
        kind=header.get("kind", ""),
        config=header.get("config", {}),
        tensors=tensors,
        extra=header.get("extra", {})
    )


def save_checkpoint(
    path: Union[str, Path],
    kind: str,
    config: Mapping[str, Any],
    tensors: Mapping[str, np.ndarray],
    extra: Optional[Mapping[str, Any]] = None
) -> Path:
    """
    チェックポイントを保存

    Args:
        path: 保存先
        kind: "dcscn" または "classifier"
        config: モデル設定（JSONヘッダーに埋め込む）
        tensors: パラメータ名 -> 配列
        extra: 追加メタデータ（ステップ数など）

    Returns:
        Path: 保存先パス

    Raises:
        FileOperationError: 書き込み失敗
    """
    path = Path(path)
    blob = encode_checkpoint(kind, config, tensors, extra)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(blob)
    except OSError as e:
        raise FileOperationError(str(e), file_path=str(path), operation="書き込み", original_error=e) from e
    logger.info(f"チェックポイントを保存しました: {path} (kind={kind}, テンソル数={len(tensors)})")
    return path


def load_checkpoint(path: Union[str, Path], expected_kind: Optional[str] = None) -> Checkpoint:
    """
    チェックポイントを読み込む

    Raises:
        PathNotFoundError: ファイルが存在しない
        CheckpointError: 形式不正、または kind が期待値と異なる
    """
    path = Path(path)
    if not path.is_file():
        raise PathNotFoundError(str(path), description="チェックポイント")
    checkpoint = decode_checkpoint(path.read_bytes(), source=str(path))
    if expected_kind is not None and checkpoint.kind != expected_kind:
        raise CheckpointError(
            f"kind が一致しません: {checkpoint.kind} (期待値: {expected_kind})",
            file_path=str(path)
        )
    logger.debug(f"チェックポイントを読み込みました: {path}")
    return checkpoint


def write_loss_curve(path: Union[str, Path], losses: Sequence[float]) -> Path:
    """損失曲線を CSV (step,loss) で書き出す"""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(["step", "loss"])
            for step, loss in enumerate(losses, start=1):
                writer.writerow([step, repr(float(loss))])
    except OSError as e:
        raise FileOperationError(str(e), file_path=str(path), operation="書き込み", original_error=e) from e
    return path


def read_loss_curve(path: Union[str, Path]) -> List[float]:
    path = Path(path)
    if not path.is_file():
        raise PathNotFoundError(str(path), description="損失曲線")
    with open(path, newline="", encoding="utf-8") as f:
        return [float(row["loss"]) for row in csv.DictReader(f)]
