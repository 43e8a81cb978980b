"""コマンドラインインターフェース

    rsflow [--config-dir DIR] [--log-level LEVEL] run <spec.json> [--out FILE] [--format json|csv] [--tolerance X]
    rsflow selfcheck [--seed N] [--budget small|full]
    rsflow demo <tanwrap|covering|gn> [options]
"""

import argparse
from pathlib import Path

from rsflow import __version__
from rsflow.commands import EXIT_INVALID, demo, emit, run, selfcheck, to_json
from rsflow.services.config_loader import ConfigLoader, ConfigValidationError, validate_log_level
from rsflow.services.log_manager import get_logger, setup_logging


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rsflow", description="半有限トレース環のパスの実数値スペクトル流を計算・検証する"
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config-dir", type=Path, default=None, help="config.yaml のディレクトリ")
    parser.add_argument("--log-level", default=None, help="ログレベル（config.yaml の値を上書き）")
    subparsers = parser.add_subparsers(dest="command", required=True)

    run.add_arguments(subparsers.add_parser("run", help="実行仕様に従ってスペクトル流を計算する"))
    selfcheck.add_arguments(subparsers.add_parser("selfcheck", help="不変量の自己検査"))
    demo.add_arguments(subparsers.add_parser("demo", help="例示用の族"))
    return parser


def main(argv: list[str] | None = None) -> int:
    """CLI のエントリポイント。終了コードを返す。"""
    args = build_parser().parse_args(argv)

    loader = ConfigLoader(args.config_dir)
    try:
        config = loader.load_config_yaml()
        if args.log_level is not None:
            validate_log_level(args.log_level)
            config.logging.level = args.log_level.upper()
    except ConfigValidationError as e:
        emit(to_json(e.to_dict()), None)
        return EXIT_INVALID

    setup_logging(config.logging, command=args.command)
    get_logger("app").info("コマンドを開始します command=%s version=%s", args.command, __version__)

    args.loader = loader
    args.config = config
    return int(args.func(args))
