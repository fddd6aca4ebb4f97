"""
シード管理

マスターシードとステージ名から独立したサブストリームのシードを導出する。
各ステージは単独で再実行しても同じ乱数列を得る。
"""
import hashlib

import numpy as np


def derive_seed(master_seed: int, stage: str) -> int:
    """
    sha256("{master_seed}/{stage}") の先頭8バイト（リトルエンディアン）を uint64 として返す

    Args:
        master_seed: マスターシード
        stage: ステージ名（例: "synth", "train-cls/56/dcscn"）
    """
    digest = hashlib.sha256(f"{int(master_seed)}/{stage}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def stage_rng(master_seed: int, stage: str) -> np.random.Generator:
    """ステージ専用の乱数生成器"""
    return np.random.default_rng(derive_seed(master_seed, stage))
