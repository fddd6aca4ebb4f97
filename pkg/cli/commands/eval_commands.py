"""
評価系コマンド

eval（テスト分割の評価）、report（結果グリッド）、audit（プライバシー監査）
"""
import argparse
import logging

from cli.commands.base_command import BaseCommand
from config_loader import ConfigLoader
from pipeline_steps import cmd_eval, cmd_report
from privacy_audit import audit_directory, raise_for_violations

logger = logging.getLogger(__name__)


class EvalCommand(BaseCommand):
    """分類器を評価"""

    name = "eval"
    help = "テスト分割で分類器を評価し、EvalReport を JSON で保存"

    def add_arguments(self, parser: argparse.ArgumentParser) -> None:
        parser.add_argument("--manifest", required=True, help="評価データのマニフェスト")
        parser.add_argument("--checkpoint", required=True, help="分類器チェックポイント")
        parser.add_argument("--dim", type=int, required=True, help="評価解像度")
        parser.add_argument("--sr-checkpoint", help="DCSCN チェックポイント")
        parser.add_argument("--output", help="EvalReport の保存先（JSON）")

    def execute(self, args: argparse.Namespace, config: ConfigLoader) -> int:
        report = cmd_eval(args.manifest, args.checkpoint, args.dim, args.output, args.sr_checkpoint)
        self.emit(args.output if args.output else report.to_json())
        return 0


class ReportCommand(BaseCommand):
    """結果グリッドを作成"""

    name = "report"
    help = "評価レポートから report.csv / report.txt / report.pdf を作成"

    def add_arguments(self, parser: argparse.ArgumentParser) -> None:
        parser.add_argument("--reports", help="eval_*.json のあるディレクトリ（省略時は作業ディレクトリの reports）")
        parser.add_argument("--output", help="出力ディレクトリ（省略時は --reports と同じ）")

    def execute(self, args: argparse.Namespace, config: ConfigLoader) -> int:
        report_dir = args.reports or str(self.run_config(config).report_dir)
        csv_path, _, _ = cmd_report(report_dir, args.output)
        self.emit(str(csv_path))
        return 0


class AuditCommand(BaseCommand):
    """保存済みフレームを監査"""

    name = "audit"
    help = "ディレクトリ配下の保存済みフレームがポリシーを満たすか監査"

    def add_arguments(self, parser: argparse.ArgumentParser) -> None:
        parser.add_argument("--root", help="監査するディレクトリ（省略時は作業ディレクトリ）")

    def execute(self, args: argparse.Namespace, config: ConfigLoader) -> int:
        run = self.run_config(config)
        report = audit_directory(args.root or run.work_dir, run.policy, run.strong_threshold, run.weak_threshold)
        self.emit(report.summary())
        raise_for_violations(report)
        return 0
