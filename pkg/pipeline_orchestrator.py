"""
パイプラインオーケストレーター

synth → downsample → train-sr → train-cls → eval → report → audit の全体フローを制御する。
各ステージの乱数はマスターシードとステージ名から導出するため、
同じ設定なら2回の実行でマニフェスト・チェックポイント・レポートがバイト単位で一致する。
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from config_loader import RunConfig
from constants import DepthConstants, ReportConstants, Task
from exceptions import ManifestError
from image_resample import privacy_level
from pipeline_steps import cmd_downsample, cmd_eval, cmd_report, cmd_synth, cmd_train_cls, cmd_train_sr, eval_report_name
from privacy_audit import AuditReport, audit_directory, raise_for_violations
from recognition import EvalReport
from synth.manifest import DatasetManifest

logger = logging.getLogger(__name__)

CHECKPOINT_SUFFIX = ".pvst"
TOTAL_STEPS = 7


def _manifest_path(manifest: DatasetManifest) -> Path:
    if manifest.source_path is None:
        raise ManifestError("マニフェストが保存されていません")
    return manifest.source_path


@dataclass
class RunSummary:
    """パイプライン1回分の成果物"""
    manifests: Dict[int, Path] = field(default_factory=dict)
    sr_checkpoints: Dict[int, Path] = field(default_factory=dict)
    cls_checkpoints: Dict[Tuple[int, bool], Path] = field(default_factory=dict)
    reports: List[EvalReport] = field(default_factory=list)
    report_files: Tuple[Path, ...] = ()
    audit: Optional[AuditReport] = None


class PipelineOrchestrator:
    """パイプライン全体の流れを制御"""

    def __init__(self, run: RunConfig) -> None:
        """
        Args:
            run: 実行設定
        """
        self.run = run

    def _step(self, index: int, message: str) -> None:
        logger.info(ReportConstants.LOG_SEPARATOR_MINOR)
        logger.info(f"[Step {index}/{TOTAL_STEPS}] {message}")

    def _cls_checkpoint(self, dim: int, dcscn: bool) -> Path:
        return self.run.checkpoint_dir / f"cls_{dim}_{'dcscn' if dcscn else 'bicubic'}{CHECKPOINT_SUFFIX}"

    def _sr_checkpoint(self, scale: int) -> Path:
        return self.run.checkpoint_dir / f"dcscn_x{scale}{CHECKPOINT_SUFFIX}"

    def _clear_stale_reports(self) -> None:
        """前回の実行で残った評価レポートを削除（今回のセルだけを集計するため）"""
        if not self.run.report_dir.is_dir():
            return
        for path in sorted(self.run.report_dir.glob("eval_*.json")):
            try:
                path.unlink()
                logger.debug(f"古い評価レポートを削除: {path}")
            except OSError as e:
                logger.warning(f"評価レポート削除失敗: {path} - {e}")

    def execute(self) -> RunSummary:
        """
        全ステージを実行

        Returns:
            RunSummary: 生成したファイルと評価結果

        Raises:
            PrivacyPipelineError: いずれかのステージの失敗（監査違反を含む）
        """
        run = self.run
        summary = RunSummary()
        cells = run.cells()
        logger.info(ReportConstants.LOG_SEPARATOR_MAJOR)
        logger.info(
            f"パイプラインを開始: task={run.task}, seed={run.seed}, ポリシー={run.policy.name}, "
            f"セル={[(d, 'yes' if s else 'no') for d, s in cells]}"
        )
        logger.info(f"作業ディレクトリ: {run.work_dir}")

        # 1. 合成データ（認識タスク + 必要なら超解像コーパス）
        self._step(1, "合成データを生成中...")
        original = _manifest_path(cmd_synth(run.gen_spec()))
        corpus = None
        if run.sr_scales():
            corpus = _manifest_path(cmd_synth(run.gen_spec(Task.SR_CORPUS.value)))

        # 2. 縮小（ポリシーを満たす次元のみ保存し、それ以外はメモリ上で縮小）
        self._step(2, "派生フレームを縮小・保存中...")
        for dim in sorted(set(run.dims), reverse=True):
            summary.manifests[dim] = original
            if dim >= DepthConstants.ORIGINAL_SIDE:
                continue
            level = privacy_level(dim, dim, run.strong_threshold, run.weak_threshold)
            if level < run.policy:
                logger.info(f"{dim}x{dim} はポリシー {run.policy.name} を満たさないため保存しません（メモリ上で縮小）")
                continue
            derived = cmd_downsample(
                original,
                run.sr_scale(dim),
                run.policy,
                run.derived_dir(dim),
                strong_threshold=run.strong_threshold,
                weak_threshold=run.weak_threshold
            )
            if derived.source_path is not None:
                summary.manifests[dim] = derived.source_path

        # 3. 超解像モデル（倍率ごと）
        self._step(3, "超解像モデルを学習中...")
        for scale in run.sr_scales():
            if corpus is None:
                break
            result = cmd_train_sr(corpus, run, scale, self._sr_checkpoint(scale))
            summary.sr_checkpoints[scale] = result.checkpoint
        if not summary.sr_checkpoints:
            logger.info("超解像ありのセルがないためスキップ")

        # 4. 分類器（セルごと）
        self._step(4, "分類器を学習中...")
        for dim, dcscn in cells:
            sr_checkpoint = summary.sr_checkpoints[run.sr_scale(dim)] if dcscn else None
            result = cmd_train_cls(summary.manifests[dim], run, dim, self._cls_checkpoint(dim, dcscn), sr_checkpoint)
            summary.cls_checkpoints[(dim, dcscn)] = result.checkpoint

        # 5. 評価
        self._step(5, "テスト分割で評価中...")
        self._clear_stale_reports()
        for dim, dcscn in cells:
            sr_checkpoint = summary.sr_checkpoints[run.sr_scale(dim)] if dcscn else None
            summary.reports.append(cmd_eval(
                summary.manifests[dim],
                summary.cls_checkpoints[(dim, dcscn)],
                dim,
                run.report_dir / eval_report_name(dim, dcscn),
                sr_checkpoint
            ))

        # 6. 結果グリッド
        self._step(6, "結果グリッドを作成中...")
        summary.report_files = cmd_report(run.report_dir)

        # 7. プライバシー監査
        self._step(7, "保存済みフレームを監査中...")
        summary.audit = audit_directory(run.work_dir, run.policy, run.strong_threshold, run.weak_threshold)
        raise_for_violations(summary.audit)

        logger.info(ReportConstants.LOG_SEPARATOR_MAJOR)
        logger.info(f"パイプラインが完了しました: {summary.report_files[0]}")
        return summary
