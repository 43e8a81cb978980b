"""run コマンド

実行仕様（JSON）を読み込み、選択した手法でスペクトル流を計算してレポートを出力する。

終了コード:
    0: 成功
    2: 仕様のバリデーションエラー
    3: 数値的な失敗（端点が可逆でない、求積が収束しない等）
    4: 手法間の食い違いが許容差を超えた
"""

import argparse
from dataclasses import replace
from pathlib import Path

from rsflow.commands import (
    EXIT_DISAGREEMENT,
    EXIT_OK,
    emit,
    emit_error,
    to_csv,
    to_json,
)
from rsflow.services.config_loader import ConfigLoader, ConfigValidationError, validate_positive
from rsflow.services.errors import ParameterError, RsflowError
from rsflow.services.families import build_path
from rsflow.services.log_manager import get_logger
from rsflow.services.models import RunSpec, SpectralFlowReport, SystemConfig
from rsflow.services.runner import run_methods

logger = get_logger("app")

CSV_COLUMNS = ["method", "value", "quadrature_error", "max_discrepancy"]


def add_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("spec", type=Path, help="実行仕様 JSON ファイル")
    parser.add_argument("--out", default=None, help="レポートの出力先（省略時は標準出力）")
    parser.add_argument("--format", choices=["json", "csv"], default=None, help="出力形式")
    parser.add_argument("--tolerance", type=float, default=None, help="手法間の食い違いの許容差")
    parser.set_defaults(func=handle)


def _path_key(key: str) -> str:
    """ParameterError の key を実行仕様のドット区切りパスに変換する。"""
    if key == "family" or key.startswith("samples"):
        return f"path.{key}"
    if key == "kind":
        return "backend.kind"
    return f"path.params.{key}"


def execute(spec: RunSpec, config: SystemConfig) -> SpectralFlowReport:
    """RunSpec を実行してレポートを返す。

    Raises:
        ConfigValidationError: パス族のパラメータや手法パラメータの誤り
        RsflowError: 数値計算の失敗
    """
    try:
        path = build_path(spec.path, spec.backend, derivative_step=spec.quadrature.derivative_step)
    except ParameterError as e:
        raise ConfigValidationError(str(e), key=_path_key(e.key)) from e

    try:
        return run_methods(
            path,
            spec.methods,
            spec.method_params,
            quad=spec.quadrature,
            cross_check=replace(config.cross_check, tolerance=spec.output.tolerance),
            regularize_eps=spec.path.regularize_eps,
            tolerances=config.tolerances,
        )
    except ParameterError as e:
        raise ConfigValidationError(str(e), key=f"method_params.{e.key}") from e


def format_report(report: SpectralFlowReport, fmt: str) -> str:
    if fmt == "csv":
        discrepancy = report.max_discrepancy
        rows = [
            {
                "method": method,
                "value": repr(value),
                "quadrature_error": repr(report.errors.get(method, 0.0)),
                "max_discrepancy": repr(discrepancy),
            }
            for method, value in report.values.items()
        ]
        return to_csv(rows, CSV_COLUMNS)
    return to_json(report.to_dict())


def handle(args: argparse.Namespace) -> int:
    """run コマンドを実行する。"""
    loader: ConfigLoader = args.loader
    config: SystemConfig = args.config
    try:
        spec = loader.load_run_spec(args.spec, config)
        if args.tolerance is not None:
            validate_positive(args.tolerance, "output.tolerance")
            spec.output.tolerance = args.tolerance
        if args.format is not None:
            spec.output.format = args.format
    except ConfigValidationError as e:
        logger.error("実行仕様が不正です key=%s message=%s", e.key, e)
        return emit_error(e, args.out)

    out = args.out if args.out is not None else spec.output.path
    try:
        report = execute(spec, config)
    except RsflowError as e:
        logger.error("計算に失敗しました reason=%s message=%s", e.reason, e)
        return emit_error(e, out)

    emit(format_report(report, spec.output.format), out)
    if report.max_discrepancy > spec.output.tolerance:
        logger.warning(
            "手法間の食い違いが許容差を超えました max_discrepancy=%.3e tolerance=%.1e",
            report.max_discrepancy, spec.output.tolerance,
        )
        return EXIT_DISAGREEMENT
    return EXIT_OK
