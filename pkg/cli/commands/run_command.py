"""
一括実行コマンド

run（synth → downsample → train-sr → train-cls → eval → report → audit）と設定検証
"""
import argparse
import logging

from cli.commands.base_command import BaseCommand
from config_loader import ConfigLoader
from config_validator import ConfigValidator
from exceptions import ConfigurationError
from pipeline_orchestrator import PipelineOrchestrator

logger = logging.getLogger(__name__)


def _validate_or_raise(config: ConfigLoader) -> None:
    validator = ConfigValidator(config)
    is_valid, results = validator.validate_all()
    for line in validator.get_summary().splitlines():
        if line.strip():
            logger.info(line)
    if not is_valid:
        first = next(r for r in results if r.level.value == "error")
        raise ConfigurationError(first.message, config_key=first.field)


class RunCommand(BaseCommand):
    """パイプラインを一括実行"""

    name = "run"
    help = "合成から監査までの全ステージを1つのマスターシードで実行"

    def add_arguments(self, parser: argparse.ArgumentParser) -> None:
        parser.add_argument("--work-dir", help="作業ディレクトリ（設定値を上書き）")

    def execute(self, args: argparse.Namespace, config: ConfigLoader) -> int:
        self.override(config, args.work_dir, "paths", "work_dir")
        _validate_or_raise(config)
        summary = PipelineOrchestrator(self.run_config(config)).execute()
        for path in summary.report_files:
            self.emit(str(path))
        return 0


class ValidateConfigCommand(BaseCommand):
    """設定を検証"""

    name = "validate-config"
    help = "設定ファイルを検証して結果を表示"

    def execute(self, args: argparse.Namespace, config: ConfigLoader) -> int:
        validator = ConfigValidator(config)
        is_valid, _ = validator.validate_all()
        self.emit(validator.get_summary())
        return 0 if is_valid else 2
