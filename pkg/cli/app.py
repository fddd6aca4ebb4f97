"""
コマンドラインアプリケーション

グローバルフラグ（--seed, --config, --privacy-policy, --log-dir, --log-json）を解釈し、
設定を読み込んでサブコマンドに処理を委譲する。

終了コード:
    0: 成功
    1: パイプラインのエラー（プライバシー違反・来歴違反・ファイル不正など）
    2: 設定エラー
    3: 予期しないエラー（run_app.py で処理）
"""
import argparse
import logging
import sys
from typing import List, NoReturn, Optional, Sequence

from cli.commands import (
    AuditCommand,
    DownsampleCommand,
    EnhanceCommand,
    EvalCommand,
    ReportCommand,
    RunCommand,
    SynthCommand,
    TrainClsCommand,
    TrainSrCommand,
    ValidateConfigCommand,
)
from cli.commands.base_command import BaseCommand
from config_loader import ConfigLoader
from constants import AppConstants, PrivacyLevel
from exceptions import ConfigurationError, PrivacyPipelineError
from logging_config import setup_logging

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_PIPELINE_ERROR = 1
EXIT_CONFIG_ERROR = 2
EXIT_UNEXPECTED = 3

COMMANDS: List[BaseCommand] = [
    SynthCommand(),
    DownsampleCommand(),
    EnhanceCommand(),
    TrainSrCommand(),
    TrainClsCommand(),
    EvalCommand(),
    ReportCommand(),
    AuditCommand(),
    RunCommand(),
    ValidateConfigCommand(),
]


class SingleLineArgumentParser(argparse.ArgumentParser):
    """引数エラーを使い方の全文ではなく1行で stderr に出し、終了コード2で終わる"""

    def error(self, message: str) -> NoReturn:
        self.exit(EXIT_CONFIG_ERROR, f"error: ArgumentError: {' '.join(message.split())}\n")


def build_parser() -> argparse.ArgumentParser:
    """引数パーサーを構築"""
    parser = SingleLineArgumentParser(
        prog=AppConstants.APP_NAME,
        description="プライバシー保護型デプス映像パイプライン（合成・縮小・超解像・認識・監査）"
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {AppConstants.VERSION}")
    parser.add_argument("--seed", type=int, help="マスターシード（設定値を上書き）")
    parser.add_argument("--config", help="ユーザー設定 JSON（既定設定に上書きマージ）")
    parser.add_argument(
        "--privacy-policy",
        choices=[level.name.lower() for level in PrivacyLevel],
        help="保存フレームのプライバシーポリシー（設定値を上書き）"
    )
    parser.add_argument("--log-dir", help="ログファイルの保存先")
    parser.add_argument("--log-json", action="store_true", help="ログを JSON 形式で出力")

    subparsers = parser.add_subparsers(dest="command_name", metavar="COMMAND")
    subparsers.required = True
    for command in COMMANDS:
        command.register(subparsers)
    return parser


def load_config(args: argparse.Namespace) -> ConfigLoader:
    """
    設定を読み込み、グローバルフラグで上書き

    Raises:
        ConfigurationError: 設定ファイルの読み込み失敗、または未知のキー
    """
    config = ConfigLoader(user_config_path=args.config)
    if args.seed is not None:
        config.set("seed", value=args.seed)
    if args.privacy_policy is not None:
        config.set("privacy", "policy", value=args.privacy_policy)
    return config


def error_line(error: BaseException) -> str:
    """機械可読な1行のエラーメッセージ"""
    message = " ".join(str(error).split())
    return f"error: {type(error).__name__}: {message}"


def main(argv: Optional[Sequence[str]] = None, log_level: int = logging.INFO) -> int:
    """
    CLI を実行

    Args:
        argv: 引数（省略時は sys.argv[1:]）
        log_level: ログレベル

    Returns:
        int: 終了コード
    """
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(log_dir=args.log_dir, level=log_level, use_json=args.log_json)
    command: BaseCommand = args.command
    logger.info(f"{AppConstants.APP_NAME} v{AppConstants.VERSION}: {command.name}")

    try:
        config = load_config(args)
        return command.execute(args, config)
    except ConfigurationError as e:
        logger.error(f"設定エラー: {e}")
        print(error_line(e), file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except PrivacyPipelineError as e:
        logger.error(f"{command.name} が失敗しました: {e}")
        print(error_line(e), file=sys.stderr)
        return EXIT_PIPELINE_ERROR
