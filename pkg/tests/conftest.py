"""
pytest fixtures

テスト共通の設定とフィクスチャを定義
"""
import json
import logging
import os
import sys
import tempfile
from pathlib import Path

import numpy as np
import pytest

# プロジェクトルートをパスに追加
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from constants import ManifestConstants, PrivacyLevel, Provenance, Task  # noqa: E402
from depth_io import write_frame  # noqa: E402
from image_resample import DepthFrame  # noqa: E402
from synth.manifest import DatasetManifest, ManifestEntry, make_header, write_manifest  # noqa: E402


def pytest_addoption(parser):
    parser.addoption("--run-slow", action="store_true", default=False, help="受け入れ規模の低速テストも実行")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--run-slow"):
        return
    skip_slow = pytest.mark.skip(reason="--run-slow を指定したときのみ実行")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def restore_root_logger():
    """setup_logging が差し替えたルートロガーのハンドラを元に戻す"""
    root = logging.getLogger()
    handlers, level = list(root.handlers), root.level
    yield root
    for handler in list(root.handlers):
        root.removeHandler(handler)
        handler.close()
    for handler in handlers:
        root.addHandler(handler)
    root.setLevel(level)


@pytest.fixture
def temp_dir():
    """一時ディレクトリを作成"""
    with tempfile.TemporaryDirectory() as tmpdir:
        yield tmpdir


def make_raw_frame(side: int, seed: int = 0) -> np.ndarray:
    """動作範囲内（0.8〜4.0m）のランダムな16bitフレーム"""
    rng = np.random.default_rng(seed)
    return rng.integers(800, 4000, size=(side, side)).astype(np.uint16)


def write_small_manifest(
    root: Path,
    side: int = 32,
    per_class: int = 3,
    provenance: Provenance = Provenance.SYNTHETIC,
    task: str = Task.HAND_HYGIENE.value
) -> Path:
    """
    手書きの小さなマニフェスト（クラスごとに train 2枚以上 + test 1枚）

    Returns:
        Path: manifest.jsonl のパス
    """
    root = Path(root)
    (root / "frames").mkdir(parents=True, exist_ok=True)
    entries = []
    index = 0
    for label in (0, 1):
        for k in range(per_class):
            rel = f"frames/{index:06d}.pgm"
            frame = DepthFrame(make_raw_frame(side, seed=index), provenance=provenance)
            write_frame(root / rel, frame, PrivacyLevel.NONE)
            split = ManifestConstants.SPLIT_TEST if k == per_class - 1 else ManifestConstants.SPLIT_TRAIN
            entries.append(ManifestEntry(rel, label, split, task, provenance.value, index))
            index += 1
    header = make_header(
        task=task,
        provenance=provenance,
        seed=0,
        spec_hash="test",
        generator="tests",
        pre_capture_source=False,
        scale=1,
        parent_hash=None,
        num_instances=index
    )
    manifest = DatasetManifest(header=header, entries=entries, root=root)
    path = root / "manifest.jsonl"
    write_manifest(manifest, path)
    return path


@pytest.fixture
def small_manifest(temp_dir):
    """32x32 の合成フレーム6枚のマニフェスト"""
    return write_small_manifest(Path(temp_dir) / "data")


@pytest.fixture
def tiny_user_config():
    """学習ステップを最小限にしたユーザー設定"""
    return {
        "seed": 3,
        "dims": [224, 14],
        "dcscn": {"224": False, "56": False, "14": True},
        "synth": {"num_frames": 8, "split": 0.5},
        "sr": {
            "corpus_frames": 4,
            "corpus_split": 0.5,
            "patches_per_frame": 1,
            "batch": 2,
            "steps": 2,
            "log_every": 1,
            "model": {
                "feature_layers": 2,
                "feature_filters": [4, 3],
                "nin_a1_filters": 3,
                "nin_b1_filters": 2,
                "nin_b2_filters": 2
            }
        },
        "cls": {
            "batch": 2,
            "steps": 2,
            "log_every": 1,
            "model": {"input_side": 224, "blocks": [4], "norm_groups": 2}
        }
    }


@pytest.fixture
def user_config_file(temp_dir, tiny_user_config):
    """tiny_user_config を JSON ファイルに書き出す（work_dir は temp_dir 配下）"""
    data = dict(tiny_user_config)
    data["paths"] = {"work_dir": str(Path(temp_dir) / "work")}
    path = Path(temp_dir) / "user_config.json"
    path.write_text(json.dumps(data, ensure_ascii=False), encoding="utf-8")
    return path
