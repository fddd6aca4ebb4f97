"""
ベースコマンドクラス

全てのサブコマンドで共有される基本機能を提供
"""
import argparse
import logging
from typing import Any, Optional

from config_loader import ConfigLoader, RunConfig
from constants import PrivacyLevel

logger = logging.getLogger(__name__)


class BaseCommand:
    """サブコマンドの基底クラス"""

    name: str = ""
    help: str = ""

    def register(self, subparsers: Any) -> argparse.ArgumentParser:
        """
        サブコマンドをパーサーに追加

        Args:
            subparsers: ArgumentParser.add_subparsers() の戻り値
        """
        parser = subparsers.add_parser(self.name, help=self.help, description=self.help)
        self.add_arguments(parser)
        parser.set_defaults(command=self)
        return parser

    def add_arguments(self, parser: argparse.ArgumentParser) -> None:
        """サブコマンド固有の引数（サブクラスで上書き）"""

    def execute(self, args: argparse.Namespace, config: ConfigLoader) -> int:
        """
        サブコマンドを実行

        Returns:
            int: 終了コード（成功は0）
        """
        raise NotImplementedError

    @staticmethod
    def override(config: ConfigLoader, value: Optional[Any], *keys: str) -> None:
        """引数が指定されていれば設定値を上書き"""
        if value is not None:
            config.set(*keys, value=value)

    @staticmethod
    def run_config(config: ConfigLoader) -> RunConfig:
        return config.to_run_config()

    @staticmethod
    def policy(config: ConfigLoader) -> PrivacyLevel:
        return config.to_run_config().policy

    @staticmethod
    def emit(text: str) -> None:
        """結果（出力ファイルのパスなど）を標準出力に1行で出す"""
        print(text)
