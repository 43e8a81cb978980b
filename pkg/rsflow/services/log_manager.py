"""ログ管理サービス

ログの出力先とレベルを管理する。標準出力はレポート専用のため、
コンソールログは標準エラーへ出力する。

ファイル出力を有効にした場合のディレクトリ構成:
    logs/
    └── YYYY-MM-DD/
        ├── run/
        │   ├── app.log
        │   ├── numeric.log
        │   └── check.log
        ├── selfcheck/
        └── demo/
"""

import logging
import sys
from dataclasses import dataclass
from datetime import datetime
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Literal

from rsflow.services.models import LoggingConfig

# ログ種別
LogType = Literal["app", "numeric", "check"]
LOG_TYPES: list[LogType] = ["app", "numeric", "check"]

# コマンド名が無い場合（ライブラリとして使う場合）の出力先
DEFAULT_COMMAND = "library"

# フォーマット
LOG_FORMAT = "%(asctime)s.%(msecs)03d [%(levelname)s] %(name)s: %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"


@dataclass(frozen=True)
class LogConfig:
    """ログ設定（解決済み）"""

    level: int
    console_enabled: bool
    file_enabled: bool
    directory: Path
    max_size_bytes: int
    backup_count: int

    @classmethod
    def resolve(cls, config: LoggingConfig, base_path: Path) -> "LogConfig":
        """LoggingConfig のレベル名と相対ディレクトリを解決する。"""
        directory = Path(config.file.directory)
        if not directory.is_absolute():
            directory = base_path / directory
        return cls(
            level=logging.getLevelName(config.level.upper()),
            console_enabled=config.console,
            file_enabled=config.file.enabled,
            directory=directory,
            max_size_bytes=int(config.file.max_size_mb * 1024 * 1024),
            backup_count=config.file.backup_count,
        )


class CommandFileHandler(RotatingFileHandler):
    """コマンド単位のログファイルハンドラー

    {directory}/YYYY-MM-DD/{command}/{log_type}.log に出力し、サイズ超過で世代を切り替える。
    日付は起動時刻で固定する。
    """

    def __init__(
        self,
        directory: Path,
        log_type: LogType,
        command: str = DEFAULT_COMMAND,
        started: datetime | None = None,
        max_bytes: int = 10 * 1024 * 1024,
        backup_count: int = 3,
    ):
        started = started or datetime.now()
        self.log_path = directory / started.strftime("%Y-%m-%d") / command / f"{log_type}.log"
        self.log_path.parent.mkdir(parents=True, exist_ok=True)
        super().__init__(
            filename=str(self.log_path),
            maxBytes=max_bytes,
            backupCount=backup_count,
            encoding="utf-8",
        )


_config: LogConfig | None = None


def setup_logging(
    config: LoggingConfig | None = None,
    base_path: Path | None = None,
    command: str | None = None,
) -> LogConfig:
    """ロギングを初期化する。再初期化すると既存のハンドラーを閉じて置き換える。

    Args:
        config: ログ設定。None の場合は LoggingConfig の既定値。
        base_path: 相対ディレクトリの基準。None の場合はカレントディレクトリ。
        command: ログファイルを振り分けるコマンド名（run / selfcheck / demo）

    Returns:
        適用したログ設定
    """
    global _config

    _config = LogConfig.resolve(config or LoggingConfig(), base_path or Path.cwd())
    formatter = logging.Formatter(LOG_FORMAT, DATE_FORMAT)
    started = datetime.now()

    for log_type in LOG_TYPES:
        logger = logging.getLogger(log_type)
        logger.setLevel(_config.level)
        _close_handlers(logger)

        handlers: list[logging.Handler] = []
        if _config.file_enabled:
            handlers.append(
                CommandFileHandler(
                    _config.directory,
                    log_type,
                    command or DEFAULT_COMMAND,
                    started,
                    max_bytes=_config.max_size_bytes,
                    backup_count=_config.backup_count,
                )
            )
        if _config.console_enabled:
            handlers.append(logging.StreamHandler(sys.stderr))
        for handler in handlers:
            handler.setFormatter(formatter)
            logger.addHandler(handler)

    return _config


def shutdown_logging() -> None:
    """全ハンドラーを閉じて未初期化状態に戻す。"""
    global _config

    for log_type in LOG_TYPES:
        _close_handlers(logging.getLogger(log_type))
    _config = None


def get_logger(name: LogType) -> logging.Logger:
    """指定された種別のロガーを取得する。未初期化なら既定値で初期化する。

    Raises:
        ValueError: 不正なログ種別が指定された場合
    """
    if name not in LOG_TYPES:
        raise ValueError(f"不正なログ種別です: {name}. 有効な値: {LOG_TYPES}")
    if _config is None:
        setup_logging()
    return logging.getLogger(name)


def get_log_config() -> LogConfig | None:
    """現在のログ設定。未初期化の場合は None。"""
    return _config


def _close_handlers(logger: logging.Logger) -> None:
    for handler in list(logger.handlers):
        handler.close()
        logger.removeHandler(handler)
