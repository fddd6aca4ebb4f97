"""
合成データセットの生成

クラス混合比に従ってシーンインスタンスを作り、各インスタンスから複数フレームをレンダリングする。
train / test はインスタンス単位で割り当てるため、同じインスタンスのフレームが両方に入ることはない。
生成結果は GenSpec の純関数（同じ仕様なら全バイトが一致）。
"""
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from constants import ManifestConstants, PrivacyLevel, Provenance, Task, TaskClasses
from depth_io import write_frame
from exceptions import ConfigurationError, FileOperationError
from seed_utils import derive_seed
from synth.manifest import DatasetManifest, ManifestEntry, make_header, spec_hash, write_manifest
from synth.scene_renderer import VIEW_SIDE, VIEW_TOP_DOWN, SceneSpec, gen_scene

logger = logging.getLogger(__name__)

MIXTURE_UNIFORM = "uniform"
MIXTURE_OBSERVED = "observed"


@dataclass(frozen=True)
class GenSpec:
    """
    データセット生成仕様

    Attributes:
        task: "hand_hygiene" / "icu" / "sr_corpus"
        output_dir: 出力ディレクトリ
        num_frames: 総フレーム数（frames_per_class 指定時は無視）
        frames_per_class: クラスごとのフレーム数
        mixture: "uniform"、"observed"（手指衛生の陽性率 11,994/113,379）、またはクラスごとの比率
        frames_per_instance: インスタンスあたりのフレーム数（ICU の動画サンプリング相当）
        split: train に割り当てるインスタンスの割合
        seed: マスターシード
        top_down_fraction: 手指衛生シーンのうち俯瞰視点の割合
        absent_fraction: 陰性 / 背景クラスで人物がいないインスタンスの割合
        noise_sigma_m: デプスノイズ（m）
        dropout_rate: スペックルの割合
        size: フレームの一辺
        frame_format: "pgm" / "png"
    """
    task: str = Task.HAND_HYGIENE.value
    output_dir: str = "data/synth"
    num_frames: int = 200
    frames_per_class: Optional[Tuple[int, ...]] = None
    mixture: Union[str, Tuple[float, ...]] = MIXTURE_UNIFORM
    frames_per_instance: int = 1
    split: float = 0.9
    seed: int = 0
    top_down_fraction: float = 0.0
    absent_fraction: float = 0.3
    noise_sigma_m: float = 0.01
    dropout_rate: float = 0.002
    size: int = 224
    frame_format: str = "pgm"
    provenance: str = field(default=Provenance.SYNTHETIC.value)

    def __post_init__(self) -> None:
        if isinstance(self.mixture, list):
            object.__setattr__(self, "mixture", tuple(float(m) for m in self.mixture))
        if isinstance(self.frames_per_class, list):
            object.__setattr__(self, "frames_per_class", tuple(int(n) for n in self.frames_per_class))
        self.validate()

    @property
    def class_names(self) -> Tuple[str, ...]:
        return TaskClasses.for_task(self.task)

    def validate(self) -> None:
        """
        Raises:
            ConfigurationError: 不正な値（キー名付き）
        """
        if self.task not in {t.value for t in Task}:
            raise ConfigurationError(f"不明なタスク: {self.task}", config_key="synth.task")
        if self.provenance != Provenance.SYNTHETIC.value:
            raise ConfigurationError("合成データの来歴は synthetic 固定です", config_key="synth.provenance")
        if not 0.0 < self.split < 1.0:
            raise ConfigurationError(f"split は (0, 1) の範囲: {self.split}", config_key="synth.split")
        if self.frames_per_instance < 1:
            raise ConfigurationError("frames_per_instance は1以上", config_key="synth.frames_per_instance")
        if not 0.0 <= self.top_down_fraction <= 1.0:
            raise ConfigurationError("top_down_fraction は [0, 1]", config_key="synth.top_down_fraction")
        if not 0.0 <= self.absent_fraction <= 1.0:
            raise ConfigurationError("absent_fraction は [0, 1]", config_key="synth.absent_fraction")
        if self.frame_format not in ("pgm", "png"):
            raise ConfigurationError(f"未対応の形式: {self.frame_format}", config_key="synth.frame_format")
        k = max(len(self.class_names), 1)
        if self.frames_per_class is not None:
            if len(self.frames_per_class) != k or any(n < 0 for n in self.frames_per_class):
                raise ConfigurationError("frames_per_class の長さまたは値が不正です", config_key="synth.frames_per_class")
        elif self.num_frames < 1:
            raise ConfigurationError("num_frames は1以上", config_key="synth.num_frames")
        self.mixture_weights()

    def mixture_weights(self) -> Tuple[float, ...]:
        k = max(len(self.class_names), 1)
        if self.mixture == MIXTURE_UNIFORM:
            return (1.0 / k,) * k
        if self.mixture == MIXTURE_OBSERVED:
            if self.task != Task.HAND_HYGIENE.value:
                raise ConfigurationError("observed 混合比は hand_hygiene のみ", config_key="synth.mixture")
            positive = TaskClasses.OBSERVED_POSITIVE / TaskClasses.OBSERVED_TOTAL
            return (1.0 - positive, positive)
        if isinstance(self.mixture, str):
            raise ConfigurationError(f"不明な混合比: {self.mixture}", config_key="synth.mixture")
        weights = tuple(float(m) for m in self.mixture)
        if len(weights) != k or any(w < 0 for w in weights) or abs(sum(weights) - 1.0) > 1e-9:
            raise ConfigurationError(f"混合比はクラス数 {k} の非負値で合計1: {weights}", config_key="synth.mixture")
        return weights

    def hash_fields(self) -> Dict[str, Any]:
        """spec_hash の対象（output_dir は除く）"""
        data = asdict(self)
        data.pop("output_dir")
        data["mixture"] = list(self.mixture) if not isinstance(self.mixture, str) else self.mixture
        if self.frames_per_class is not None:
            data["frames_per_class"] = list(self.frames_per_class)
        return data

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "GenSpec":
        unknown = sorted(set(data) - set(cls.__dataclass_fields__))
        if unknown:
            raise ConfigurationError(f"不明なキー: {unknown}", config_key=f"synth.{unknown[0]}")
        return cls(**dict(data))


def class_counts(total: int, weights: Sequence[float]) -> List[int]:
    """
    最大剰余法でフレーム数をクラスに配分（同点は小さいクラス番号を優先）

    例: 1000 フレーム、陽性率 11,994/113,379 -> [894, 106]
    """
    raw = [total * w for w in weights]
    counts = [int(np.floor(r)) for r in raw]
    remainder = total - sum(counts)
    order = sorted(range(len(weights)), key=lambda c: (-(raw[c] - counts[c]), c))
    for c in order[:remainder]:
        counts[c] += 1
    return counts


def train_instance_count(num_instances: int, split: float) -> int:
    """train インスタンス数 = round(n * split)（0.5 は切り上げ）"""
    return int(np.floor(num_instances * split + 0.5))


def assign_splits(num_instances: int, split: float, rng: np.random.Generator) -> List[str]:
    """シャッフルしたインスタンス列の先頭 round(n * split) 件を train に割り当てる"""
    order = rng.permutation(num_instances)
    n_train = train_instance_count(num_instances, split)
    splits = [ManifestConstants.SPLIT_TEST] * num_instances
    for i in order[:n_train]:
        splits[int(i)] = ManifestConstants.SPLIT_TRAIN
    return splits


@dataclass(frozen=True)
class _Instance:
    index: int
    label: Optional[int]
    frames: int
    actor_present: bool
    view: str


def _plan_instances(spec: GenSpec, rng: np.random.Generator) -> List[_Instance]:
    if spec.task == Task.SR_CORPUS.value:
        counts = [spec.num_frames]
        labels: List[Optional[int]] = [None]
    else:
        counts = list(spec.frames_per_class) if spec.frames_per_class else class_counts(spec.num_frames, spec.mixture_weights())
        labels = list(range(len(counts)))

    instances: List[_Instance] = []
    for label, count in zip(labels, counts):
        remaining = count
        while remaining > 0:
            frames = min(spec.frames_per_instance, remaining)
            # 陰性（手指衛生）と背景（ICU）は一部を無人シーンにする
            absent = label == 0 and spec.task != Task.SR_CORPUS.value and rng.random() < spec.absent_fraction
            top_down = spec.task == Task.HAND_HYGIENE.value and rng.random() < spec.top_down_fraction
            instances.append(_Instance(
                index=len(instances),
                label=label,
                frames=frames,
                actor_present=not absent,
                view=VIEW_TOP_DOWN if top_down else VIEW_SIDE
            ))
            remaining -= frames
    return instances


def gen_dataset(spec: GenSpec) -> DatasetManifest:
    """
    フレームとマニフェストを書き出す

    Args:
        spec: 生成仕様

    Returns:
        DatasetManifest: 書き出したマニフェスト（source_path 設定済み）

    Raises:
        ConfigurationError: 不正な仕様
        FileOperationError: 出力ディレクトリに書き込めない
    """
    out_dir = Path(spec.output_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise FileOperationError(str(e), file_path=str(out_dir), operation="作成", original_error=e) from e

    plan_rng = np.random.default_rng(derive_seed(spec.seed, "synth/plan"))
    instances = _plan_instances(spec, plan_rng)
    splits = assign_splits(len(instances), spec.split, np.random.default_rng(derive_seed(spec.seed, "synth/split")))
    logger.info(f"データセットを生成します: task={spec.task}, インスタンス数={len(instances)}, 出力先={out_dir}")

    entries: List[ManifestEntry] = []
    frame_index = 0
    for instance in instances:
        instance_seed = derive_seed(spec.seed, f"synth/instance/{instance.index}")
        for _ in range(instance.frames):
            scene = SceneSpec(
                task=spec.task,
                label=instance.label,
                seed=derive_seed(spec.seed, f"synth/frame/{frame_index}"),
                instance_seed=instance_seed,
                view=instance.view,
                actor_present=instance.actor_present,
                noise_sigma_m=spec.noise_sigma_m,
                dropout_rate=spec.dropout_rate,
                size=spec.size
            )
            frame, label = gen_scene(scene)
            relative = f"frames/{frame_index:06d}.{spec.frame_format}"
            # 合成原画像は撮影前のシーンを模したものなのでゲート対象外
            write_frame(out_dir / relative, frame, PrivacyLevel.NONE, pre_capture_source=True)
            entries.append(ManifestEntry(
                path=relative,
                label=label,
                split=splits[instance.index],
                task=spec.task,
                provenance=spec.provenance,
                instance=instance.index
            ))
            frame_index += 1
        if (instance.index + 1) % 50 == 0:
            logger.debug(f"生成中: {instance.index + 1}/{len(instances)} インスタンス")

    header = make_header(
        spec.task,
        Provenance(spec.provenance),
        spec.seed,
        spec_hash=spec_hash(spec.hash_fields()),
        generator=spec.hash_fields(),
        pre_capture_source=True,
        scale=1,
        parent_hash=None,
        num_instances=len(instances)
    )
    manifest = DatasetManifest(header=header, entries=entries, root=out_dir)
    manifest.source_path = write_manifest(manifest, out_dir / f"manifest{ManifestConstants.FILE_SUFFIX}")
    return manifest
