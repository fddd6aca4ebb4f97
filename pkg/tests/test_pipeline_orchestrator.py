"""
パイプラインオーケストレーターのテスト
"""
import os
import sys
from pathlib import Path

import pytest

# プロジェクトルートをパスに追加
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from config_loader import ConfigLoader
from pipeline_orchestrator import PipelineOrchestrator


def _run_config(user_config_file, work_dir, **overrides):
    config = ConfigLoader(user_config_path=str(user_config_file))
    config.set('paths', 'work_dir', value=str(work_dir))
    for key, value in overrides.items():
        config.set(key, value=value)
    return config.to_run_config()


class TestPaths:
    """成果物のパスのテスト"""

    def test_checkpoint_names(self, user_config_file, temp_dir):
        orchestrator = PipelineOrchestrator(_run_config(user_config_file, temp_dir))
        assert orchestrator._sr_checkpoint(16).name == "dcscn_x16.pvst"
        assert orchestrator._cls_checkpoint(14, True).name == "cls_14_dcscn.pvst"

    def test_stale_reports_cleared(self, user_config_file, temp_dir):
        """前回の評価レポートは集計前に削除される"""
        run = _run_config(user_config_file, temp_dir)
        run.report_dir.mkdir(parents=True)
        (run.report_dir / "eval_56_dcscn.json").write_text("{}", encoding="utf-8")
        (run.report_dir / "notes.txt").write_text("keep", encoding="utf-8")
        PipelineOrchestrator(run)._clear_stale_reports()
        assert not (run.report_dir / "eval_56_dcscn.json").exists()
        assert (run.report_dir / "notes.txt").exists()


@pytest.mark.slow
class TestEndToEnd:
    """小さな設定での一括実行"""

    def test_two_runs_byte_identical(self, user_config_file, temp_dir):
        """同じシードならマニフェスト・チェックポイント・レポートが一致"""
        first = PipelineOrchestrator(_run_config(user_config_file, Path(temp_dir) / "a")).execute()
        second = PipelineOrchestrator(_run_config(user_config_file, Path(temp_dir) / "b")).execute()

        assert [len(r.auc) for r in first.reports] == [2, 2, 2]
        assert first.manifests[224].read_bytes() == second.manifests[224].read_bytes()
        for scale, path in first.sr_checkpoints.items():
            assert path.read_bytes() == second.sr_checkpoints[scale].read_bytes()
        for cell, path in first.cls_checkpoints.items():
            assert path.read_bytes() == second.cls_checkpoints[cell].read_bytes()
        for a, b in zip(first.report_files, second.report_files):
            assert a.read_bytes() == b.read_bytes()
        assert first.audit.passed

    def test_strong_policy_keeps_weak_dims_in_memory(self, user_config_file, temp_dir):
        """Strong では 56x56 の派生フレームを保存しない"""
        run = _run_config(
            user_config_file,
            temp_dir,
            dims=[224, 56, 14],
            dcscn={"224": False, "56": False, "14": False}
        )
        summary = PipelineOrchestrator(run).execute()
        assert not run.derived_dir(56).exists()
        assert run.derived_dir(14).is_dir()
        assert summary.manifests[56] == summary.manifests[224]
        assert summary.sr_checkpoints == {}
        assert summary.audit.passed
        assert [(r.dim, r.dcscn) for r in summary.reports] == [(224, False), (56, False), (14, False)]
