"""設定ファイル・実行仕様の読み込み・バリデーションモジュール"""

import json
import math
import os
from dataclasses import fields, replace
from pathlib import Path
from typing import Any

import yaml

from rsflow.services.errors import ParameterError, RsflowError
from rsflow.services.families import FAMILIES, FAMILY_NAMES, check_params
from rsflow.services.log_manager import get_logger
from rsflow.services.runner import METHOD_PARAMS
from rsflow.services.models import (
    METHOD_NAMES,
    BackendSpec,
    CrossCheckConfig,
    LoggingConfig,
    LoggingFileConfig,
    OutputSpec,
    PathSpec,
    QuadratureConfig,
    RunSpec,
    SystemConfig,
    ToleranceConfig,
)

logger = get_logger("app")

# 設定ディレクトリを差し替える環境変数（任意）
CONFIG_DIR_ENV = "RSFLOW_CONFIG_DIR"

RUN_SPEC_KEYS = ("backend", "path", "methods", "method_params", "quadrature", "output")
REQUIRED_RUN_SPEC_KEYS = ("backend", "path", "methods")
IMPROPER_SUBSTITUTIONS = ("inverse_square", "inverse")
NORMALIZING_KINDS = ("smooth_gap", "chi_e", "chi_p")
OUTPUT_FORMATS = ("json", "csv")


class ConfigValidationError(RsflowError):
    """設定・実行仕様のバリデーションエラー

    key は問題のある項目のドット区切りのパス（例: "path.params.a"）。
    """

    reason = "invalid_spec"

    def __init__(self, message: str, key: str | None = None) -> None:
        super().__init__(message)
        self.key = key

    def to_dict(self) -> dict:
        data = super().to_dict()
        if self.key is not None:
            data["key"] = self.key
        return data


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool) and math.isfinite(value)


def validate_positive(value: Any, key: str) -> None:
    """正の有限数をバリデートする。

    Raises:
        ConfigValidationError: 正の有限数でない場合
    """
    if not _is_number(value) or value <= 0:
        raise ConfigValidationError(f"{key} は正の数で指定してください: {value!r}", key=key)


def validate_int(value: Any, key: str, minimum: int) -> None:
    """minimum 以上の整数をバリデートする。

    Raises:
        ConfigValidationError: 整数でない、または minimum 未満の場合
    """
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise ConfigValidationError(f"{key} は{minimum}以上の整数で指定してください: {value!r}", key=key)


def validate_fraction(value: Any, key: str) -> None:
    """開区間 (0, 1) の数をバリデートする。"""
    if not _is_number(value) or not 0 < value < 1:
        raise ConfigValidationError(f"{key} は0より大きく1未満で指定してください: {value!r}", key=key)


def validate_choice(value: Any, choices: tuple[str, ...], key: str) -> None:
    """列挙値をバリデートする。"""
    if value not in choices:
        raise ConfigValidationError(
            f"{key} は{'/'.join(choices)}のいずれかで指定してください: {value!r}", key=key
        )


def validate_log_level(level: str) -> None:
    """ログレベルをバリデートする。

    Raises:
        ConfigValidationError: DEBUG/INFO/WARNING/ERROR/CRITICAL以外の場合
    """
    valid_levels = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")
    if not isinstance(level, str) or level.upper() not in valid_levels:
        raise ConfigValidationError(
            f"ログレベルは{'/'.join(valid_levels)}のいずれかで指定してください: {level}",
            key="logging.level",
        )


def validate_quadrature(config: QuadratureConfig, prefix: str = "quadrature") -> None:
    """数値積分設定をバリデートする。"""
    validate_positive(config.tolerance, f"{prefix}.tolerance")
    validate_int(config.max_depth, f"{prefix}.max_depth", 1)
    validate_int(config.min_panels, f"{prefix}.min_panels", 1)
    validate_choice(config.improper_substitution, IMPROPER_SUBSTITUTIONS, f"{prefix}.improper_substitution")
    validate_fraction(config.truncation_factor, f"{prefix}.truncation_factor")
    validate_positive(config.derivative_step, f"{prefix}.derivative_step")
    validate_int(config.workers, f"{prefix}.workers", 1)


def _section(data: dict[str, Any], name: str, key: str) -> dict[str, Any]:
    section = data.get(name, {})
    if section is None:
        return {}
    if not isinstance(section, dict):
        raise ConfigValidationError(f"{key} はオブジェクトで指定してください", key=key)
    return section


def _build_dataclass(cls: type, data: dict[str, Any], key: str, base: Any = None) -> Any:
    """既知のフィールドだけを受け付けて dataclass を生成する。"""
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigValidationError(f"{key} に不明な項目があります: {unknown[0]}", key=f"{key}.{unknown[0]}")
    if base is not None:
        return replace(base, **data)
    return cls(**data)


class ConfigLoader:
    """設定ファイル・実行仕様読み込みクラス"""

    def __init__(self, config_dir: Path | None = None) -> None:
        """初期化。

        Args:
            config_dir: 設定ファイルディレクトリ。Noneの場合は環境変数
                RSFLOW_CONFIG_DIR、それも無ければリポジトリの config/ を使用。
        """
        if config_dir is None:
            env_dir = os.environ.get(CONFIG_DIR_ENV)
            config_dir = Path(env_dir) if env_dir else Path(__file__).parent.parent.parent / "config"
        self.config_dir = Path(config_dir)

    def load_config_yaml(self) -> SystemConfig:
        """config.yamlを読み込む。

        Returns:
            システム設定

        Raises:
            ConfigValidationError: 値が不正な場合

        Note:
            ファイルが存在しない場合はデフォルト値を使用
        """
        config_path = self.config_dir / "config.yaml"
        config_data: dict[str, Any] = {}

        if config_path.exists():
            with open(config_path, encoding="utf-8") as f:
                loaded = yaml.safe_load(f) or {}
            if not isinstance(loaded, dict):
                raise ConfigValidationError(f"設定ファイルの形式が不正です: {config_path}")
            config_data = loaded
        else:
            logger.warning("設定ファイルが見つかりません path=%s", config_path)

        config = self._parse_config(config_data)
        self.validate_config(config)
        return config

    def _parse_config(self, data: dict[str, Any]) -> SystemConfig:
        """設定データをパースする。

        Args:
            data: 生の設定データ

        Returns:
            パース済みのSystemConfig
        """
        quadrature = _build_dataclass(QuadratureConfig, _section(data, "quadrature", "quadrature"), "quadrature")
        tolerances = _build_dataclass(ToleranceConfig, _section(data, "tolerances", "tolerances"), "tolerances")
        cross_check = _build_dataclass(
            CrossCheckConfig, _section(data, "cross_check", "cross_check"), "cross_check"
        )

        # ログ設定
        logging_data = dict(_section(data, "logging", "logging"))
        file_data = logging_data.pop("file", {}) or {}
        if not isinstance(file_data, dict):
            raise ConfigValidationError("logging.file はオブジェクトで指定してください", key="logging.file")
        logging_config = _build_dataclass(LoggingConfig, logging_data, "logging")
        logging_config.file = _build_dataclass(LoggingFileConfig, file_data, "logging.file")

        return SystemConfig(
            quadrature=quadrature,
            tolerances=tolerances,
            cross_check=cross_check,
            logging=logging_config,
        )

    def validate_config(self, config: SystemConfig) -> None:
        """設定をバリデートする。

        Args:
            config: システム設定

        Raises:
            ConfigValidationError: バリデーションエラー
        """
        validate_quadrature(config.quadrature)

        for f in fields(ToleranceConfig):
            validate_positive(getattr(config.tolerances, f.name), f"tolerances.{f.name}")

        validate_positive(config.cross_check.tolerance, "cross_check.tolerance")
        validate_int(config.cross_check.partition, "cross_check.partition", 1)
        validate_int(config.cross_check.crossing_samples, "cross_check.crossing_samples", 2)
        validate_fraction(config.cross_check.gap_fraction, "cross_check.gap_fraction")

        validate_log_level(config.logging.level)
        validate_positive(config.logging.file.max_size_mb, "logging.file.max_size_mb")
        validate_int(config.logging.file.backup_count, "logging.file.backup_count", 0)

    def get_default_config(self) -> SystemConfig:
        """デフォルト設定を取得する。"""
        return SystemConfig()

    # =====================================================
    # 実行仕様
    # =====================================================

    def load_run_spec(self, spec_path: Path, defaults: SystemConfig | None = None) -> RunSpec:
        """実行仕様（JSON）を読み込む。

        Args:
            spec_path: 実行仕様ファイル
            defaults: quadrature・output.tolerance の既定値の元になる設定

        Returns:
            バリデート済みの RunSpec

        Raises:
            ConfigValidationError: 読み込み・バリデーションエラー
        """
        spec_path = Path(spec_path)
        try:
            with open(spec_path, encoding="utf-8") as f:
                data = json.load(f)
        except FileNotFoundError as e:
            raise ConfigValidationError(f"実行仕様ファイルが見つかりません: {spec_path}") from e
        except json.JSONDecodeError as e:
            raise ConfigValidationError(f"実行仕様の JSON が不正です: {e.msg} (line {e.lineno})") from e
        return self.parse_run_spec(data, defaults)

    def parse_run_spec(self, data: Any, defaults: SystemConfig | None = None) -> RunSpec:
        """実行仕様の辞書をパースしてバリデートする。"""
        defaults = defaults or self.get_default_config()
        if not isinstance(data, dict):
            raise ConfigValidationError("実行仕様はオブジェクトで指定してください")
        unknown = sorted(set(data) - set(RUN_SPEC_KEYS))
        if unknown:
            raise ConfigValidationError(f"不明な項目があります: {unknown[0]}", key=unknown[0])
        for name in REQUIRED_RUN_SPEC_KEYS:
            if name not in data:
                raise ConfigValidationError(f"{name} は必須です", key=name)

        backend = self._parse_backend(data["backend"])
        path = self._parse_path(data["path"], backend)
        methods = self._parse_methods(data["methods"])
        method_params = self._parse_method_params(data.get("method_params") or {}, methods)

        quadrature_data = _section(data, "quadrature", "quadrature")
        quadrature = _build_dataclass(QuadratureConfig, quadrature_data, "quadrature", base=defaults.quadrature)
        validate_quadrature(quadrature)

        output = self._parse_output(_section(data, "output", "output"), defaults.cross_check.tolerance)
        return RunSpec(
            backend=backend,
            path=path,
            methods=methods,
            method_params=method_params,
            quadrature=quadrature,
            output=output,
        )

    def _parse_backend(self, data: Any) -> BackendSpec:
        if not isinstance(data, dict):
            raise ConfigValidationError("backend はオブジェクトで指定してください", key="backend")
        kind = data.get("kind")
        validate_choice(kind, ("block", "grid"), "backend.kind")
        if kind == "block":
            blocks = data.get("blocks", [])
            if not isinstance(blocks, list) or not blocks:
                raise ConfigValidationError("backend.blocks は1個以上の [次元, 重み] の配列で指定してください", key="backend.blocks")
            parsed = []
            for i, block in enumerate(blocks):
                key = f"backend.blocks[{i}]"
                if not isinstance(block, (list, tuple)) or len(block) != 2:
                    raise ConfigValidationError(f"{key} は [次元, 重み] で指定してください", key=key)
                validate_int(block[0], f"{key}[0]", 1)
                validate_positive(block[1], f"{key}[1]")
                parsed.append((int(block[0]), float(block[1])))
            return BackendSpec(kind="block", blocks=parsed)

        if "count" in data:
            validate_int(data["count"], "backend.count", 1)
            total = data.get("total_weight", 1.0)
            validate_positive(total, "backend.total_weight")
            count = data["count"]
            points = [(i + 0.5) / count for i in range(count)]
            return BackendSpec(kind="grid", points=points, weights=[total / count] * count)
        points = data.get("points")
        weights = data.get("weights")
        if not isinstance(points, list) or not points:
            raise ConfigValidationError("backend.points は空でない配列で指定してください", key="backend.points")
        if not isinstance(weights, list) or len(weights) != len(points):
            raise ConfigValidationError(
                "backend.weights は points と同じ長さの配列で指定してください", key="backend.weights"
            )
        for i, x in enumerate(points):
            if not _is_number(x):
                raise ConfigValidationError(f"backend.points[{i}] は数値で指定してください", key=f"backend.points[{i}]")
        if len(set(points)) != len(points):
            raise ConfigValidationError("backend.points が重複しています", key="backend.points")
        for i, w in enumerate(weights):
            validate_positive(w, f"backend.weights[{i}]")
        return BackendSpec(kind="grid", points=[float(x) for x in points], weights=[float(w) for w in weights])

    def _parse_path(self, data: Any, backend: BackendSpec) -> PathSpec:
        if not isinstance(data, dict):
            raise ConfigValidationError("path はオブジェクトで指定してください", key="path")
        unknown = sorted(set(data) - {"family", "params", "samples", "regularize"})
        if unknown:
            raise ConfigValidationError(f"path に不明な項目があります: {unknown[0]}", key=f"path.{unknown[0]}")
        has_family = "family" in data
        has_samples = "samples" in data
        if has_family == has_samples:
            raise ConfigValidationError("path は family と samples のどちらか一方を指定してください", key="path")

        regularize_eps = None
        if "regularize" in data:
            reg = data["regularize"]
            if not isinstance(reg, dict) or "eps" not in reg:
                raise ConfigValidationError("path.regularize は {\"eps\": 数値} で指定してください", key="path.regularize")
            validate_fraction(reg["eps"], "path.regularize.eps")
            regularize_eps = float(reg["eps"])

        if has_family:
            family = data["family"]
            if family not in FAMILY_NAMES:
                raise ConfigValidationError(
                    f"未登録のパス族です: {family!r}（{', '.join(FAMILY_NAMES)}）", key="path.family"
                )
            required = FAMILIES[family].backend
            if required != "any" and required != backend.kind:
                raise ConfigValidationError(
                    f"族 {family} は {required} バックエンド専用です", key="backend.kind"
                )
            params = data.get("params", {})
            if not isinstance(params, dict):
                raise ConfigValidationError("path.params はオブジェクトで指定してください", key="path.params")
            try:
                check_params(FAMILIES[family], params)
            except ParameterError as e:
                raise ConfigValidationError(str(e), key=f"path.params.{e.key}") from e
            return PathSpec(family=family, params=params, regularize_eps=regularize_eps)

        samples = data["samples"]
        if not isinstance(samples, list) or len(samples) < 2:
            raise ConfigValidationError("path.samples は2個以上の [t, 値] で指定してください", key="path.samples")
        parsed = []
        previous = None
        for i, sample in enumerate(samples):
            key = f"path.samples[{i}]"
            if not isinstance(sample, list) or len(sample) != 2:
                raise ConfigValidationError(f"{key} は [t, 値] で指定してください", key=key)
            t = sample[0]
            if not _is_number(t) or not 0 <= t <= 1:
                raise ConfigValidationError(f"{key}[0] は [0, 1] の数で指定してください", key=f"{key}[0]")
            if previous is not None and t <= previous:
                raise ConfigValidationError(f"{key}[0] は狭義単調増加でなければなりません", key=f"{key}[0]")
            previous = t
            parsed.append((float(t), sample[1]))
        return PathSpec(samples=parsed, regularize_eps=regularize_eps)

    def _parse_methods(self, data: Any) -> list[str]:
        if not isinstance(data, list) or not data:
            raise ConfigValidationError("methods は1個以上の手法名の配列で指定してください", key="methods")
        for i, method in enumerate(data):
            validate_choice(method, METHOD_NAMES, f"methods[{i}]")
        if len(set(data)) != len(data):
            raise ConfigValidationError("methods に重複があります", key="methods")
        return list(data)

    def _parse_method_params(self, data: Any, methods: list[str]) -> dict[str, dict[str, Any]]:
        if not isinstance(data, dict):
            raise ConfigValidationError("method_params はオブジェクトで指定してください", key="method_params")
        parsed: dict[str, dict[str, Any]] = {}
        for method, params in data.items():
            key = f"method_params.{method}"
            validate_choice(method, METHOD_NAMES, key)
            if not isinstance(params, dict):
                raise ConfigValidationError(f"{key} はオブジェクトで指定してください", key=key)
            unknown = sorted(set(params) - set(METHOD_PARAMS[method]))
            if unknown:
                raise ConfigValidationError(
                    f"{key} に不明なパラメータがあります: {unknown[0]}", key=f"{key}.{unknown[0]}"
                )
            if method not in methods:
                logger.warning("実行しない手法のパラメータです method=%s", method)
            if "chi" in params:
                if method not in ("winding", "integral_chi"):
                    raise ConfigValidationError(f"{key}.chi は指定できません", key=f"{key}.chi")
                validate_choice(params["chi"], NORMALIZING_KINDS, f"{key}.chi")
                if params["chi"] == "smooth_gap" and "eps" not in params:
                    raise ConfigValidationError(f"{key}.eps は smooth_gap に必須です", key=f"{key}.eps")
            if "eps" in params:
                validate_positive(params["eps"], f"{key}.eps")
            if "p" in params:
                if not _is_number(params["p"]) or params["p"] < 1:
                    raise ConfigValidationError(f"{key}.p は1以上で指定してください: {params['p']!r}", key=f"{key}.p")
            if "partition" in params:
                validate_int(params["partition"], f"{key}.partition", 1)
            if "samples" in params:
                validate_int(params["samples"], f"{key}.samples", 2)
            if "gap_fraction" in params:
                validate_fraction(params["gap_fraction"], f"{key}.gap_fraction")
            if "transform" in params and params["transform"] not in (True, False, None):
                raise ConfigValidationError(f"{key}.transform は真偽値で指定してください", key=f"{key}.transform")
            parsed[method] = dict(params)
        return parsed

    def _parse_output(self, data: dict[str, Any], default_tolerance: float) -> OutputSpec:
        unknown = sorted(set(data) - {"path", "format", "tolerance"})
        if unknown:
            raise ConfigValidationError(f"output に不明な項目があります: {unknown[0]}", key=f"output.{unknown[0]}")
        path = data.get("path")
        if path is not None and not isinstance(path, str):
            raise ConfigValidationError("output.path は文字列で指定してください", key="output.path")
        fmt = data.get("format", "json")
        validate_choice(fmt, OUTPUT_FORMATS, "output.format")
        tolerance = data.get("tolerance", default_tolerance)
        validate_positive(tolerance, "output.tolerance")
        return OutputSpec(path=path, format=fmt, tolerance=float(tolerance))
