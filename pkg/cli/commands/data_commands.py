"""
データ系コマンド

synth（合成データ生成）、downsample（縮小）、enhance（超解像）
"""
import argparse
import dataclasses
import logging

from cli.commands.base_command import BaseCommand
from config_loader import ConfigLoader
from constants import Task
from pipeline_steps import cmd_downsample, cmd_enhance, cmd_synth

logger = logging.getLogger(__name__)


class SynthCommand(BaseCommand):
    """合成データセットを生成"""

    name = "synth"
    help = "合成デプスデータセット（フレーム + マニフェスト）を生成"

    def add_arguments(self, parser: argparse.ArgumentParser) -> None:
        parser.add_argument("--spec", help="生成仕様の JSON（省略時は設定ファイルの synth セクション）")
        parser.add_argument("--task", choices=[t.value for t in Task], help="タスク（--spec 省略時）")
        parser.add_argument("--output", help="出力ディレクトリ")

    def execute(self, args: argparse.Namespace, config: ConfigLoader) -> int:
        if args.spec:
            manifest = cmd_synth(args.spec, args.output)
        else:
            spec = self.run_config(config).gen_spec(args.task)
            if args.output:
                spec = dataclasses.replace(spec, output_dir=args.output)
            manifest = cmd_synth(spec)
        self.emit(str(manifest.source_path))
        return 0


class DownsampleCommand(BaseCommand):
    """フレームを縮小して派生マニフェストを作成"""

    name = "downsample"
    help = "マニフェストのフレームを縮小（プライバシーゲートを通過した場合のみ保存）"

    def add_arguments(self, parser: argparse.ArgumentParser) -> None:
        parser.add_argument("--manifest", required=True, help="元のマニフェスト")
        parser.add_argument("--scale", type=int, required=True, help="縮小率（1, 4, 16 など）")
        parser.add_argument("--output", required=True, help="出力ディレクトリ")
        parser.add_argument("--cascade", action="store_true", help="16倍を4倍の2段で行う")

    def execute(self, args: argparse.Namespace, config: ConfigLoader) -> int:
        run = self.run_config(config)
        manifest = cmd_downsample(
            args.manifest,
            args.scale,
            run.policy,
            args.output,
            cascade=args.cascade,
            strong_threshold=run.strong_threshold,
            weak_threshold=run.weak_threshold
        )
        self.emit(str(manifest.source_path))
        return 0


class EnhanceCommand(BaseCommand):
    """低解像度フレームを超解像して保存"""

    name = "enhance"
    help = "DCSCN で低解像度フレームを超解像して保存（出力がポリシーを満たす場合のみ）"

    def add_arguments(self, parser: argparse.ArgumentParser) -> None:
        parser.add_argument("--manifest", required=True, help="低解像度マニフェスト")
        parser.add_argument("--checkpoint", required=True, help="DCSCN チェックポイント")
        parser.add_argument("--output", required=True, help="出力ディレクトリ")

    def execute(self, args: argparse.Namespace, config: ConfigLoader) -> int:
        run = self.run_config(config)
        manifest = cmd_enhance(
            args.manifest,
            args.checkpoint,
            run.policy,
            args.output,
            strong_threshold=run.strong_threshold,
            weak_threshold=run.weak_threshold
        )
        self.emit(str(manifest.source_path))
        return 0
