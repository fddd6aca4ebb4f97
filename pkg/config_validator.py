"""
設定ファイル検証ユーティリティ

マージ済み設定の完全性と妥当性を検証します。
ConfigLoader.to_run_config() は最初の問題で例外を投げますが、
こちらはすべての問題を収集してレベル別に報告します。
"""
import logging
import os
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import List, Optional, Tuple

from config_loader import ConfigLoader
from constants import DepthConstants, PrivacyLevel, Task
from image_resample import privacy_level

logger = logging.getLogger(__name__)

# 超解像モデルが対応する倍率
_SR_SCALES = (4, 16)


class ValidationLevel(Enum):
    """検証レベル"""
    ERROR = "error"      # パイプラインが動作しない
    WARNING = "warning"  # 一部のセルが評価できない、または意図しない動作の可能性
    INFO = "info"        # 情報（自動作成されるディレクトリなど）


@dataclass
class ValidationResult:
    """検証結果"""
    level: ValidationLevel
    message: str
    field: Optional[str] = None  # 問題のあるフィールド名


class ConfigValidator:
    """設定検証クラス"""

    def __init__(self, config: ConfigLoader) -> None:
        """
        Args:
            config: 検証する設定オブジェクト
        """
        self.config = config
        self.results: List[ValidationResult] = []

    def _add(self, level: ValidationLevel, message: str, field: Optional[str] = None) -> None:
        self.results.append(ValidationResult(level=level, message=message, field=field))

    def validate_all(self) -> Tuple[bool, List[ValidationResult]]:
        """全ての設定を検証

        Returns:
            (is_valid, results): 有効性フラグと検証結果のリスト
        """
        logger.info("設定ファイルの検証を開始")
        self.results = []

        self._validate_task()
        self._validate_dims()
        self._validate_privacy()
        self._validate_scale_relation()
        self._validate_paths()

        is_valid = not self.has_errors()
        if is_valid:
            logger.info("設定ファイルの検証が完了しました（エラーなし）")
        else:
            logger.warning(f"設定ファイルの検証が完了しました（エラー数: {sum(1 for r in self.results if r.level == ValidationLevel.ERROR)}）")

        return is_valid, self.results

    def _validate_task(self) -> None:
        task = self.config.get('task')
        if task not in (Task.HAND_HYGIENE.value, Task.ICU.value):
            self._add(ValidationLevel.ERROR, f"不明なタスクです: {task}（hand_hygiene / icu）", "task")

    def _dims(self, key: str) -> List[int]:
        value = self.config.get(key)
        if not isinstance(value, list) or not all(isinstance(v, int) and v > 0 for v in value):
            self._add(ValidationLevel.ERROR, f"{key} は正の整数のリストである必要があります", key)
            return []
        return list(value)

    def _validate_dims(self) -> None:
        """次元が許可リストに含まれ、原解像度を割り切るか"""
        dims = self._dims('dims')
        allowed = set(self._dims('allowed_dims'))
        if not dims:
            self._add(ValidationLevel.ERROR, "評価する次元がありません", "dims")
        for dim in dims:
            if dim not in allowed:
                self._add(ValidationLevel.ERROR, f"次元 {dim} は許可リスト {sorted(allowed)} にありません", "dims")
            if DepthConstants.ORIGINAL_SIDE % dim:
                self._add(ValidationLevel.ERROR, f"次元 {dim} は {DepthConstants.ORIGINAL_SIDE} を割り切りません", "dims")
        if len(set(dims)) != len(dims):
            self._add(ValidationLevel.WARNING, "dims に重複があります", "dims")

    def _validate_privacy(self) -> None:
        """ポリシー名と閾値の大小関係"""
        name = self.config.get('privacy', 'policy')
        try:
            policy = PrivacyLevel.parse(str(name))
        except ValueError:
            self._add(ValidationLevel.ERROR, f"不明なプライバシーポリシー: {name}（none / weak / strong）", "privacy.policy")
            return
        if policy == PrivacyLevel.NONE:
            self._add(ValidationLevel.WARNING, "プライバシーポリシーが none です（高解像度の派生フレームも保存されます）", "privacy.policy")

        strong = self.config.get('privacy', 'strong_threshold')
        weak = self.config.get('privacy', 'weak_threshold')
        if not isinstance(strong, int) or not isinstance(weak, int) or not 0 < strong < weak:
            self._add(ValidationLevel.ERROR, f"閾値は 0 < strong < weak である必要があります: {strong}, {weak}", "privacy.strong_threshold")
            return

        for dim in self._dims('dims'):
            if dim < DepthConstants.ORIGINAL_SIDE and privacy_level(dim, dim, strong, weak) < policy:
                self._add(
                    ValidationLevel.INFO,
                    f"{dim}x{dim} はポリシー {policy.name} を満たさないため、派生フレームはメモリ上でのみ処理されます",
                    "dims"
                )

    def _validate_scale_relation(self) -> None:
        """次元 × 超解像倍率 = 分類器の入力サイズ"""
        input_side = self.config.get('cls', 'model', 'input_side')
        if input_side != DepthConstants.ORIGINAL_SIDE:
            self._add(
                ValidationLevel.ERROR,
                f"分類器の入力サイズは {DepthConstants.ORIGINAL_SIDE} である必要があります: {input_side}",
                "cls.model.input_side"
            )
        dcscn = self.config.get('dcscn', default={})
        if not isinstance(dcscn, dict):
            self._add(ValidationLevel.ERROR, "dcscn はオブジェクトである必要があります", "dcscn")
            return
        patch_sizes = self.config.get('sr', 'patch_sizes', default={})
        dims = self._dims('dims')
        for key, enabled in dcscn.items():
            if not enabled:
                continue
            try:
                dim = int(key)
            except ValueError:
                self._add(ValidationLevel.ERROR, f"dcscn のキーが次元ではありません: {key}", f"dcscn.{key}")
                continue
            if dim >= DepthConstants.ORIGINAL_SIDE:
                self._add(ValidationLevel.WARNING, f"{dim}x{dim} は超解像の対象外です（無視されます）", f"dcscn.{key}")
                continue
            scale = DepthConstants.ORIGINAL_SIDE // dim
            if dim * scale != DepthConstants.ORIGINAL_SIDE or scale not in _SR_SCALES:
                self._add(
                    ValidationLevel.ERROR,
                    f"{dim}x{dim} の超解像倍率 {DepthConstants.ORIGINAL_SIDE}/{dim} は {list(_SR_SCALES)} のいずれでもありません",
                    f"dcscn.{key}"
                )
                continue
            if str(scale) not in patch_sizes:
                self._add(ValidationLevel.ERROR, f"倍率 {scale} のパッチサイズがありません", f"sr.patch_sizes.{scale}")
            if dim not in dims:
                self._add(ValidationLevel.INFO, f"dcscn.{key} は dims に含まれないため使用されません", f"dcscn.{key}")

    def _validate_paths(self) -> None:
        """作業ディレクトリが作成可能か"""
        work_dir = self.config.get('paths', 'work_dir')
        if not isinstance(work_dir, str) or not work_dir.strip():
            self._add(ValidationLevel.ERROR, "作業ディレクトリが設定されていません", "paths.work_dir")
            return
        path = self.config.build_path(work_dir)
        if path.exists():
            if not path.is_dir():
                self._add(ValidationLevel.ERROR, f"作業ディレクトリがディレクトリではありません: {path}", "paths.work_dir")
            elif not os.access(path, os.W_OK):
                self._add(ValidationLevel.ERROR, f"作業ディレクトリに書き込めません: {path}", "paths.work_dir")
            return
        parent = self._existing_parent(path)
        if parent is None or not os.access(parent, os.W_OK):
            self._add(ValidationLevel.ERROR, f"作業ディレクトリを作成できません: {path}", "paths.work_dir")
        else:
            self._add(ValidationLevel.INFO, f"作業ディレクトリが存在しません（初回実行時に自動作成されます）: {path}", "paths.work_dir")

    @staticmethod
    def _existing_parent(path: Path) -> Optional[Path]:
        for candidate in path.absolute().parents:
            if candidate.exists():
                return candidate if candidate.is_dir() else None
        return None

    def has_errors(self) -> bool:
        """エラーレベルの問題があるか確認"""
        return any(r.level == ValidationLevel.ERROR for r in self.results)

    def has_warnings(self) -> bool:
        """警告レベルの問題があるか確認"""
        return any(r.level == ValidationLevel.WARNING for r in self.results)

    def get_summary(self) -> str:
        """検証結果のサマリーを取得

        Returns:
            検証結果のテキストサマリー
        """
        errors = [r for r in self.results if r.level == ValidationLevel.ERROR]
        warnings = [r for r in self.results if r.level == ValidationLevel.WARNING]
        infos = [r for r in self.results if r.level == ValidationLevel.INFO]

        summary_lines = []

        if errors:
            summary_lines.append(f"[ERROR] エラー ({len(errors)}件):")
            for r in errors:
                summary_lines.append(f"  - {r.message}")

        if warnings:
            summary_lines.append(f"\n[WARNING] 警告 ({len(warnings)}件):")
            for r in warnings:
                summary_lines.append(f"  - {r.message}")

        if infos:
            summary_lines.append(f"\n[INFO] 情報 ({len(infos)}件):")
            for r in infos:
                summary_lines.append(f"  - {r.message}")

        if not summary_lines:
            return "[OK] 設定に問題はありません"

        return "\n".join(summary_lines)
