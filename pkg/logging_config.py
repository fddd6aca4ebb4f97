"""
ロギング設定モジュール

統一されたロギングシステムを提供
"""
import json
import logging
import os
import re
import sys
from datetime import datetime
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Optional, Union

from constants import AppConstants

# LogRecord の標準属性（これ以外は extra= で渡されたカスタム属性）
_RESERVED_ATTRS = frozenset([
    'name', 'msg', 'args', 'created', 'filename', 'funcName',
    'levelname', 'levelno', 'lineno', 'module', 'msecs',
    'message', 'pathname', 'process', 'processName',
    'relativeCreated', 'thread', 'threadName', 'exc_info',
    'exc_text', 'stack_info', 'taskName',
])


class StructuredFormatter(logging.Formatter):
    """JSON形式でログを出力するフォーマッター（extra の step / loss / stage も出力）"""

    def format(self, record: logging.LogRecord) -> str:
        log_data = {
            "timestamp": self.formatTime(record, self.datefmt),
            "level": record.levelname,
            "logger": record.name,
            "message": record.getMessage(),
        }

        # 例外情報があれば追加
        if record.exc_info:
            log_data["exception"] = self.formatException(record.exc_info)

        # カスタム属性を追加
        for key, value in record.__dict__.items():
            if key not in _RESERVED_ATTRS:
                log_data[key] = value

        return json.dumps(log_data, ensure_ascii=False, default=str)


class SensitiveDataFilter(logging.Filter):
    """ホームディレクトリのユーザー名をマスクするフィルター"""

    _HOME_PATTERN = re.compile(r'(?P<prefix>/home/|/Users/|C:\\Users\\)[^\\/\s]+', re.I)

    def filter(self, record: logging.LogRecord) -> bool:
        """ログレコードのメッセージと引数からユーザー名をマスク"""
        try:
            if isinstance(record.msg, str):
                record.msg = self._HOME_PATTERN.sub(r'\g<prefix>***', record.msg)
            if isinstance(record.args, tuple):
                record.args = tuple(
                    self._HOME_PATTERN.sub(r'\g<prefix>***', a) if isinstance(a, str) else a
                    for a in record.args
                )
        except Exception:
            pass  # マスキング失敗時はログ出力を継続

        return True


def default_log_dir() -> Path:
    """$XDG_STATE_HOME（未設定なら ~）配下のログディレクトリ"""
    base = os.environ.get('XDG_STATE_HOME') or os.path.expanduser('~')
    return Path(base) / AppConstants.LOG_DIR_NAME / 'logs'


def setup_logging(
    log_dir: Optional[Union[str, Path]] = None,
    level: int = logging.INFO,
    app_name: str = AppConstants.APP_NAME,
    use_json: bool = False
) -> logging.Logger:
    """
    統一ログシステムをセットアップ

    Args:
        log_dir: ログファイルの保存ディレクトリ（省略時は default_log_dir()）
        level: ログレベル（デフォルト: INFO）
        app_name: アプリケーション名（ログファイル名に使用）
        use_json: JSON形式でログを出力するか（デフォルト: False）

    Returns:
        logging.Logger: 設定済みのルートロガー
    """
    log_path = Path(log_dir) if log_dir is not None else default_log_dir()
    log_path.mkdir(parents=True, exist_ok=True)

    # ログファイル名（日付入り）
    log_file = log_path / f"{app_name}_{datetime.now():%Y%m%d}.log"

    # ルートロガーの設定（すべてのモジュールのログをキャッチ）
    root_logger = logging.getLogger()
    root_logger.setLevel(level)

    # 既存のハンドラをクリア（重複防止）
    for handler in list(root_logger.handlers):
        root_logger.removeHandler(handler)
        handler.close()

    if use_json:
        formatter: logging.Formatter = StructuredFormatter(datefmt='%Y-%m-%d %H:%M:%S')
    else:
        formatter = logging.Formatter(
            '%(asctime)s [%(levelname)s] %(name)s: %(message)s',
            datefmt='%Y-%m-%d %H:%M:%S'
        )
    sensitive_filter = SensitiveDataFilter()

    # ファイルハンドラ（ローテーション付き: 5MB x 5ファイル）
    file_handler = RotatingFileHandler(
        log_file,
        maxBytes=5 * 1024 * 1024,
        backupCount=5,
        encoding='utf-8'
    )
    file_handler.setLevel(level)
    file_handler.setFormatter(formatter)
    file_handler.addFilter(sensitive_filter)
    root_logger.addHandler(file_handler)

    # コンソールハンドラ
    console_handler = logging.StreamHandler(sys.stdout)
    console_handler.setLevel(level)
    console_handler.setFormatter(formatter)
    console_handler.addFilter(sensitive_filter)
    root_logger.addHandler(console_handler)

    return root_logger
