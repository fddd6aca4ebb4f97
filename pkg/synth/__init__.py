"""
合成デプスデータパッケージ

手指衛生・ICU 行動・超解像コーパスの決定的なシーン生成とマニフェスト管理を提供する。
"""
from synth.dataset_generator import GenSpec, gen_dataset
from synth.manifest import DatasetManifest, ManifestEntry, load_manifest, write_manifest
from synth.scene_renderer import SceneSpec, gen_scene

__all__ = [
    'DatasetManifest',
    'GenSpec',
    'ManifestEntry',
    'SceneSpec',
    'gen_dataset',
    'gen_scene',
    'load_manifest',
    'write_manifest',
]
