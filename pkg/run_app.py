"""
プライバシー保護型デプス映像パイプライン - エントリーポイント

コマンドラインから各サブコマンド（synth, downsample, train-sr, ...）を実行する
"""
import logging
import os
import sys
import traceback
from types import TracebackType
from typing import NoReturn, Optional, Type

# プロジェクトルートをパスに追加
if getattr(sys, 'frozen', False):
    application_path = os.path.dirname(sys.executable)
else:
    application_path = os.path.dirname(os.path.abspath(__file__))

sys.path.insert(0, application_path)

from cli.app import EXIT_UNEXPECTED  # noqa: E402

# ログレベルマッピング（定数として定義）
LOG_LEVEL_MAP = {
    'DEBUG': logging.DEBUG,
    'INFO': logging.INFO,
    'WARNING': logging.WARNING,
    'ERROR': logging.ERROR,
    'CRITICAL': logging.CRITICAL
}

logger = logging.getLogger(__name__)


def get_log_level() -> int:
    """環境変数 LOG_LEVEL からログレベルを取得（不明な値は INFO）"""
    log_level_str = os.environ.get('LOG_LEVEL', 'INFO').upper()
    return LOG_LEVEL_MAP.get(log_level_str, logging.INFO)


def global_exception_handler(
    exc_type: Type[BaseException],
    exc_value: BaseException,
    exc_traceback: Optional[TracebackType]
) -> None:
    """
    キャッチされなかった例外を処理するグローバルハンドラ.

    Args:
        exc_type: 例外の型
        exc_value: 例外のインスタンス
        exc_traceback: トレースバック情報

    Note:
        KeyboardInterrupt と SystemExit は標準処理に委譲する
    """
    if issubclass(exc_type, (KeyboardInterrupt, SystemExit)):
        sys.__excepthook__(exc_type, exc_value, exc_traceback)
        return

    error_msg = ''.join(traceback.format_exception(exc_type, exc_value, exc_traceback))
    logger.critical(f"未処理の例外が発生しました:\n{error_msg}")

    # stderr には1行だけ出力（詳細はログファイル）
    message = " ".join(str(exc_value).split())
    print(f"error: {exc_type.__name__}: {message}", file=sys.stderr)


def main() -> NoReturn:
    """
    CLI を起動して終了コードで終了.

    予期しない例外はグローバルハンドラで記録し、終了コード 3 で終了する。
    """
    sys.excepthook = global_exception_handler

    from cli.app import main as cli_main

    try:
        code = cli_main(sys.argv[1:], log_level=get_log_level())
    except Exception as e:
        global_exception_handler(type(e), e, e.__traceback__)
        code = EXIT_UNEXPECTED
    sys.exit(code)


if __name__ == "__main__":
    main()
