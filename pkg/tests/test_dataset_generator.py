"""
合成データ生成のテスト
"""
import os
import sys
from collections import Counter
from pathlib import Path

import numpy as np
import pytest

# プロジェクトルートをパスに追加
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from constants import Provenance, Task
from depth_io import frame_size
from exceptions import ConfigurationError
from synth.dataset_generator import GenSpec, assign_splits, class_counts, gen_dataset, train_instance_count
from synth.manifest import load_manifest
from synth.oracles import manifest_oracles, nearest_centroid_accuracy, separability
from synth.scene_renderer import (
    FAMILY_GENERIC,
    SIDE_CAMERA,
    SR_CORPUS_FAMILIES,
    VIEW_SIDE,
    VIEW_TOP_DOWN,
    Box,
    Plane,
    SceneSpec,
    gen_scene,
    render_background,
    render_depth,
    sr_corpus_family,
)


def _spec(temp_dir, name="data", **changes) -> GenSpec:
    values = dict(task=Task.HAND_HYGIENE.value, output_dir=str(Path(temp_dir) / name), num_frames=6, split=0.5, seed=1, size=32)
    values.update(changes)
    return GenSpec(**values)


class TestCounts:
    """クラス配分と分割のテスト"""

    def test_observed_mixture(self):
        """手指衛生の陽性率で 1000 フレームを配分"""
        spec = GenSpec(mixture="observed")
        assert class_counts(1000, spec.mixture_weights()) == [894, 106]

    def test_uniform(self):
        assert class_counts(10, [0.2] * 5) == [2, 2, 2, 2, 2]

    def test_largest_remainder_ties(self):
        """同じ剰余なら小さいクラス番号が優先"""
        assert class_counts(7, [0.5, 0.5]) == [4, 3]

    def test_train_instances(self):
        """316 インスタンス、split 0.9 -> train 284 / test 32"""
        assert train_instance_count(316, 0.9) == 284
        splits = assign_splits(316, 0.9, np.random.default_rng(0))
        assert Counter(splits) == {"train": 284, "test": 32}


class TestGenSpec:
    """生成仕様の検証"""

    @pytest.mark.parametrize("changes,key", [
        ({"task": "unknown"}, "synth.task"),
        ({"split": 1.0}, "synth.split"),
        ({"frame_format": "jpg"}, "synth.frame_format"),
        ({"mixture": (0.5, 0.6)}, "synth.mixture"),
        ({"provenance": "private"}, "synth.provenance"),
    ])
    def test_invalid(self, changes, key):
        with pytest.raises(ConfigurationError) as exc_info:
            GenSpec(**changes)
        assert exc_info.value.config_key == key

    def test_observed_mixture_only_for_hand_hygiene(self):
        with pytest.raises(ConfigurationError):
            GenSpec(task=Task.ICU.value, mixture="observed")

    def test_from_dict_unknown_key(self):
        with pytest.raises(ConfigurationError) as exc_info:
            GenSpec.from_dict({"task": "icu", "colour": "red"})
        assert exc_info.value.config_key == "synth.colour"

    def test_hash_ignores_output_dir(self, temp_dir):
        a = _spec(temp_dir, "a").hash_fields()
        b = _spec(temp_dir, "b").hash_fields()
        assert a == b


class TestGenDataset:
    """データセット生成のテスト"""

    def test_manifest_contents(self, temp_dir):
        manifest = gen_dataset(_spec(temp_dir))
        loaded = load_manifest(manifest.source_path)
        assert len(loaded.entries) == 6
        assert loaded.header["pre_capture_source"] is True
        assert loaded.header["scale"] == 1
        assert loaded.header["parent_hash"] is None
        assert loaded.provenance == Provenance.SYNTHETIC
        assert Counter(e.label for e in loaded.entries) == {0: 3, 1: 3}
        assert frame_size(loaded.resolve(loaded.entries[0])) == (32, 32)

    def test_byte_identical_for_same_spec(self, temp_dir):
        """同じ仕様なら全ファイルがバイト単位で一致"""
        a = gen_dataset(_spec(temp_dir, "a"))
        b = gen_dataset(_spec(temp_dir, "b"))
        assert a.source_path.read_bytes() == b.source_path.read_bytes()
        for entry in a.entries:
            assert a.resolve(entry).read_bytes() == b.resolve(entry).read_bytes()

    def test_seed_changes_output(self, temp_dir):
        a = gen_dataset(_spec(temp_dir, "a", seed=1))
        b = gen_dataset(_spec(temp_dir, "b", seed=2))
        assert a.resolve(a.entries[0]).read_bytes() != b.resolve(b.entries[0]).read_bytes()

    def test_instances_not_split(self, temp_dir):
        """同じインスタンスのフレームは同じ分割に入る"""
        manifest = gen_dataset(_spec(temp_dir, task=Task.ICU.value, num_frames=20, frames_per_instance=2))
        splits = {}
        for entry in manifest.entries:
            splits.setdefault(entry.instance, set()).add(entry.split)
        assert all(len(s) == 1 for s in splits.values())

    def test_frames_per_class(self, temp_dir):
        manifest = gen_dataset(_spec(temp_dir, task=Task.ICU.value, frames_per_class=(1, 2, 0, 1, 1)))
        assert Counter(e.label for e in manifest.entries) == {0: 1, 1: 2, 3: 1, 4: 1}

    def test_sr_corpus_unlabelled(self, temp_dir):
        manifest = gen_dataset(_spec(temp_dir, task=Task.SR_CORPUS.value, num_frames=3))
        assert all(e.label is None for e in manifest.entries)

    def test_png_format(self, temp_dir):
        manifest = gen_dataset(_spec(temp_dir, num_frames=2, frame_format="png"))
        assert manifest.entries[0].path.endswith(".png")


class TestSceneRenderer:
    """シーンレンダリングのテスト"""

    def test_frame_in_sensor_range(self):
        """ほぼ全画素がセンサー範囲に入り、範囲外は無反射の 0 だけ"""
        frame, label = gen_scene(SceneSpec(task="icu", label=3, seed=5, size=48))
        assert label == 3
        assert frame.data.dtype == np.uint16
        valid = frame.data[frame.data > 0]
        assert valid.size >= 0.95 * frame.data.size
        assert valid.min() >= 800 and valid.max() <= 4000

    @pytest.mark.parametrize("view", [VIEW_SIDE, VIEW_TOP_DOWN])
    def test_room_fully_visible(self, view):
        """ノイズなしなら部屋のどの画素もセンサー範囲内の深度になる"""
        spec = SceneSpec(task="hand_hygiene", label=0, seed=3, size=32, view=view, noise_sigma_m=0.0, dropout_rate=0.0)
        data = render_background(spec).data
        assert data.min() >= 800 and data.max() <= 4000
        assert len(np.unique(data)) > 3

    def test_surfaces_behind_camera_ignored(self):
        """カメラの後ろの平面・直方体は手前の面を隠さない"""
        wall = Plane((0.0, 0.0, 1.0), 0.0)
        behind = [Plane((0.0, 0.0, 1.0), 5.0), Plane((1.0, 0.0, 0.0), 2.3), Box((-1.0, 0.0, 4.0), (1.0, 2.0, 5.0))]
        expected = render_depth([wall], SIDE_CAMERA, 8)
        depth = render_depth([wall] + behind, SIDE_CAMERA, 8)
        assert np.all(np.isfinite(depth)) and depth.min() > 0.0
        np.testing.assert_array_equal(depth, expected)

    def test_sr_corpus_draws_all_families(self):
        """SR コーパスは手指衛生・ICU・一般的な室内のすべてを含む"""
        families = {sr_corpus_family(SceneSpec(task="sr_corpus", label=None, seed=s)) for s in range(40)}
        assert families == set(SR_CORPUS_FAMILIES)
        assert FAMILY_GENERIC in families

    def test_generic_sr_scene_renders(self):
        seed = next(s for s in range(100) if sr_corpus_family(SceneSpec(task="sr_corpus", label=None, seed=s)) == FAMILY_GENERIC)
        frame, label = gen_scene(SceneSpec(task="sr_corpus", label=None, seed=seed, size=32))
        assert label is None
        assert np.count_nonzero(frame.data) >= 0.95 * frame.data.size

    def test_deterministic(self):
        spec = SceneSpec(task="hand_hygiene", label=1, seed=9, size=32)
        np.testing.assert_array_equal(gen_scene(spec)[0].data, gen_scene(spec)[0].data)

    def test_top_down_view_differs(self):
        side = gen_scene(SceneSpec(task="hand_hygiene", label=0, seed=2, size=32))[0]
        top = gen_scene(SceneSpec(task="hand_hygiene", label=0, seed=2, size=32, view=VIEW_TOP_DOWN))[0]
        assert not np.array_equal(side.data, top.data)

    def test_invalid_label(self):
        with pytest.raises(ConfigurationError):
            gen_scene(SceneSpec(task="hand_hygiene", label=2, seed=0))

    def test_actor_changes_background(self):
        """人物ありのフレームは背景と異なる"""
        spec = SceneSpec(task="icu", label=1, seed=4, size=32, noise_sigma_m=0.0, dropout_rate=0.0)
        assert not np.array_equal(gen_scene(spec)[0].data, render_background(spec).data)


class TestOracles:
    """分離可能性オラクルのテスト"""

    def test_nearest_centroid_separable(self):
        features = np.array([[0.0, 0.0], [0.1, 0.0], [5.0, 5.0], [5.1, 5.0]])
        labels = np.array([0, 0, 1, 1])
        assert nearest_centroid_accuracy(features, labels) == 1.0
        assert separability(features, labels).ratio > 10.0

    def test_ratio_independent_of_pixel_count(self):
        """各画素を複製しても分離度比は変わらない"""
        rng = np.random.default_rng(0)
        labels = np.repeat([0, 1], 20)
        features = rng.normal(size=(40, 3)) + labels[:, None] * np.array([3.0, 0.0, 0.0])
        base = separability(features, labels)
        repeated = separability(np.repeat(features, 50, axis=1), labels)
        assert repeated.ratio == pytest.approx(base.ratio)
        assert repeated.mean_centroid_distance == pytest.approx(base.mean_centroid_distance * np.sqrt(50))

    def test_ratio_ignores_spread_off_axis(self):
        """重心を結ぶ軸と直交するばらつきは比に入らない"""
        features = np.array([[0.0, -1.0], [0.0, 1.0], [4.0, -1.0], [4.0, 1.0]])
        labels = np.array([0, 0, 1, 1])
        assert separability(features, labels).ratio == np.inf

    def test_identical_classes_not_separable(self):
        features = np.zeros((6, 4))
        labels = np.array([0, 0, 0, 1, 1, 1])
        assert separability(features, labels).ratio == 0.0
        assert nearest_centroid_accuracy(features, labels) <= 0.5

    def test_generated_hand_hygiene_is_learnable(self, temp_dir):
        """200 フレームで最近傍重心が 0.9 を超え、14x14 でも重心距離がクラス内σの5倍を超える"""
        manifest = gen_dataset(GenSpec(output_dir=str(Path(temp_dir) / "hh"), num_frames=200, seed=0, size=112))
        accuracy, ratio = manifest_oracles(manifest)
        assert accuracy > 0.9
        assert ratio > 5.0

    @pytest.mark.slow
    def test_generated_hand_hygiene_is_learnable_full_size(self, temp_dir):
        manifest = gen_dataset(GenSpec(output_dir=str(Path(temp_dir) / "hh"), num_frames=200, seed=0))
        accuracy, ratio = manifest_oracles(manifest)
        assert accuracy > 0.9
        assert ratio > 5.0
