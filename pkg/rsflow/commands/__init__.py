"""サブコマンド定義

各モジュールは add_arguments(parser) と handle(args) -> 終了コードを持つ。
レポートは標準出力（または --out のファイル）へ、ログは標準エラーへ出力する。
"""

import csv
import io
import json
import sys
from pathlib import Path
from typing import Any

import numpy as np

from rsflow.services.config_loader import ConfigValidationError
from rsflow.services.errors import RsflowError

# 終了コード
EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_INVALID = 2
EXIT_NUMERIC = 3
EXIT_DISAGREEMENT = 4


def _json_default(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, complex):
        return [value.real, value.imag]
    if isinstance(value, (set, frozenset, tuple)):
        return list(value)
    raise TypeError(f"JSON に変換できない値です: {type(value).__name__}")


def to_json(data: Any) -> str:
    """キー順を固定した JSON 文字列（同じ入力からは同じバイト列）"""
    return json.dumps(data, sort_keys=True, indent=2, ensure_ascii=False, default=_json_default) + "\n"


def to_csv(rows: list[dict[str, Any]], columns: list[str]) -> str:
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({c: row.get(c, "") for c in columns})
    return buffer.getvalue()


def emit(text: str, out: str | Path | None) -> None:
    """out が None なら標準出力へ、そうでなければファイルへ書き出す。"""
    if out is None:
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    path = Path(out)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def emit_error(error: RsflowError, out: str | Path | None) -> int:
    """エラー文書を書き出し、対応する終了コードを返す。"""
    emit(to_json(error.to_dict()), out)
    return EXIT_INVALID if isinstance(error, ConfigValidationError) else EXIT_NUMERIC
