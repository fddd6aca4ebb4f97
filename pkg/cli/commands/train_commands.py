"""
学習系コマンド

train-sr（DCSCN）、train-cls（分類器）
"""
import argparse
import logging

from cli.commands.base_command import BaseCommand
from config_loader import ConfigLoader
from pipeline_steps import cmd_train_cls, cmd_train_sr

logger = logging.getLogger(__name__)


class TrainSrCommand(BaseCommand):
    """DCSCN を学習"""

    name = "train-sr"
    help = "public / synthetic コーパスで DCSCN を学習（private は拒否）"

    def add_arguments(self, parser: argparse.ArgumentParser) -> None:
        parser.add_argument("--manifest", required=True, help="学習コーパスのマニフェスト")
        parser.add_argument("--scale", type=int, choices=[4, 16], default=4, help="拡大率")
        parser.add_argument("--output", required=True, help="チェックポイントの保存先")
        parser.add_argument("--steps", type=int, help="学習ステップ数（設定値を上書き）")

    def execute(self, args: argparse.Namespace, config: ConfigLoader) -> int:
        self.override(config, args.steps, "sr", "steps")
        result = cmd_train_sr(args.manifest, self.run_config(config), args.scale, args.output)
        if result.psnr is not None:
            logger.info(f"PSNR 改善: {result.psnr.gain:+.3f}dB")
        self.emit(str(result.checkpoint))
        return 0


class TrainClsCommand(BaseCommand):
    """分類器を学習"""

    name = "train-cls"
    help = "1つの (次元 x 超解像) セルの分類器を学習"

    def add_arguments(self, parser: argparse.ArgumentParser) -> None:
        parser.add_argument("--manifest", required=True, help="学習データのマニフェスト")
        parser.add_argument("--dim", type=int, required=True, help="評価解像度（224 / 56 / 14）")
        parser.add_argument("--sr-checkpoint", help="DCSCN チェックポイント（省略時は超解像なし）")
        parser.add_argument("--output", required=True, help="チェックポイントの保存先")
        parser.add_argument("--steps", type=int, help="学習ステップ数（設定値を上書き）")

    def execute(self, args: argparse.Namespace, config: ConfigLoader) -> int:
        self.override(config, args.steps, "cls", "steps")
        result = cmd_train_cls(args.manifest, self.run_config(config), args.dim, args.output, args.sr_checkpoint)
        self.emit(str(result.checkpoint))
        return 0
