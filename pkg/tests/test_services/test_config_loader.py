"""config_loader のテスト"""

import json
from pathlib import Path

import pytest
import yaml

from rsflow.services.config_loader import (
    ConfigLoader,
    ConfigValidationError,
    validate_choice,
    validate_fraction,
    validate_int,
    validate_log_level,
    validate_positive,
)
from rsflow.services.models import SystemConfig

BASE_SPEC = {
    "backend": {"kind": "block", "blocks": [[1, 1.0]]},
    "path": {"family": "scalar_linear", "params": {"a": -1, "b": 1}},
    "methods": ["winding", "crossing"],
}


def _spec(**overrides) -> dict:
    data = json.loads(json.dumps(BASE_SPEC))
    data.update(overrides)
    return data


def _key_of(loader: ConfigLoader, data: dict) -> str | None:
    with pytest.raises(ConfigValidationError) as excinfo:
        loader.parse_run_spec(data)
    return excinfo.value.key


class TestValidateFunctions:
    """バリデーション関数のテスト"""

    def test_validate_positive_ok(self) -> None:
        """正の数は通る"""
        validate_positive(1e-9, "x")
        validate_positive(3, "x")

    @pytest.mark.parametrize("value", [0, -1.0, float("inf"), float("nan"), True, "1"])
    def test_validate_positive_invalid(self, value) -> None:
        """0・負・非有限・真偽値・文字列は拒否"""
        with pytest.raises(ConfigValidationError) as excinfo:
            validate_positive(value, "quadrature.tolerance")
        assert excinfo.value.key == "quadrature.tolerance"

    def test_validate_int(self) -> None:
        """minimum 以上の整数"""
        validate_int(2, "n", 2)
        for value in (1, 2.0, False):
            with pytest.raises(ConfigValidationError):
                validate_int(value, "n", 2)

    @pytest.mark.parametrize("value", [0.0, 1.0, -0.5, 2])
    def test_validate_fraction_invalid(self, value) -> None:
        """開区間 (0, 1) の外は拒否"""
        with pytest.raises(ConfigValidationError):
            validate_fraction(value, "eps")

    def test_validate_choice(self) -> None:
        """列挙値以外は拒否"""
        validate_choice("json", ("json", "csv"), "output.format")
        with pytest.raises(ConfigValidationError) as excinfo:
            validate_choice("xml", ("json", "csv"), "output.format")
        assert excinfo.value.key == "output.format"

    def test_validate_log_level(self) -> None:
        """ログレベルは大文字小文字を問わない"""
        validate_log_level("debug")
        with pytest.raises(ConfigValidationError) as excinfo:
            validate_log_level("VERBOSE")
        assert excinfo.value.key == "logging.level"

    def test_error_to_dict(self) -> None:
        """エラーの辞書表現は reason=invalid_spec と key を持つ"""
        data = ConfigValidationError("bad", key="methods").to_dict()
        assert data["status"] == "error"
        assert data["reason"] == "invalid_spec"
        assert data["key"] == "methods"


class TestConfigLoader:
    """ConfigLoader（config.yaml）のテスト"""

    def test_load_config_yaml(self, tmp_path: Path) -> None:
        """config.yaml読み込み"""
        config_yaml = {
            "quadrature": {"tolerance": 1.0e-10, "max_depth": 30, "improper_substitution": "inverse"},
            "tolerances": {"rank": 1.0e-9},
            "cross_check": {"tolerance": 1.0e-6, "partition": 32},
            "logging": {"level": "DEBUG", "console": False, "file": {"enabled": True, "directory": "out"}},
        }
        with open(tmp_path / "config.yaml", "w", encoding="utf-8") as f:
            yaml.dump(config_yaml, f)

        config = ConfigLoader(tmp_path).load_config_yaml()

        assert config.quadrature.tolerance == 1.0e-10
        assert config.quadrature.max_depth == 30
        assert config.quadrature.improper_substitution == "inverse"
        assert config.quadrature.min_panels == 64
        assert config.tolerances.rank == 1.0e-9
        assert config.tolerances.kernel == 1.0e-10
        assert config.cross_check.tolerance == 1.0e-6
        assert config.cross_check.partition == 32
        assert config.logging.level == "DEBUG"
        assert config.logging.console is False
        assert config.logging.file.enabled is True
        assert config.logging.file.directory == "out"
        assert config.logging.file.backup_count == 3

    def test_load_config_yaml_missing_file(self, tmp_path: Path) -> None:
        """config.yamlが存在しない場合はデフォルト値"""
        config = ConfigLoader(tmp_path).load_config_yaml()
        assert config == SystemConfig()
        assert config.quadrature.tolerance == 1e-8
        assert config.cross_check.tolerance == 1e-5
        assert config.logging.level == "WARNING"

    def test_load_config_yaml_empty_file(self, tmp_path: Path) -> None:
        """空ファイルはデフォルト値"""
        (tmp_path / "config.yaml").write_text("", encoding="utf-8")
        assert ConfigLoader(tmp_path).load_config_yaml() == SystemConfig()

    def test_load_config_yaml_not_mapping(self, tmp_path: Path) -> None:
        """トップレベルが辞書でなければエラー"""
        (tmp_path / "config.yaml").write_text("- 1\n- 2\n", encoding="utf-8")
        with pytest.raises(ConfigValidationError):
            ConfigLoader(tmp_path).load_config_yaml()

    def test_unknown_key(self, tmp_path: Path) -> None:
        """不明な項目は key=セクション.項目"""
        with open(tmp_path / "config.yaml", "w", encoding="utf-8") as f:
            yaml.dump({"quadrature": {"foo": 1}}, f)
        with pytest.raises(ConfigValidationError) as excinfo:
            ConfigLoader(tmp_path).load_config_yaml()
        assert excinfo.value.key == "quadrature.foo"

    @pytest.mark.parametrize(
        "config_yaml, key",
        [
            ({"logging": {"level": "LOUD"}}, "logging.level"),
            ({"quadrature": {"tolerance": -1}}, "quadrature.tolerance"),
            ({"quadrature": {"improper_substitution": "cubic"}}, "quadrature.improper_substitution"),
            ({"cross_check": {"gap_fraction": 1.5}}, "cross_check.gap_fraction"),
            ({"logging": {"file": {"backup_count": -1}}}, "logging.file.backup_count"),
            ({"tolerances": {"bisection": 0}}, "tolerances.bisection"),
            ({"tolerances": {"hermitian": 1e-12}}, "tolerances.hermitian"),
            ({"quadrature": {"derivative_step": -1e-6}}, "quadrature.derivative_step"),
        ],
    )
    def test_invalid_values(self, tmp_path: Path, config_yaml: dict, key: str) -> None:
        """不正な値は該当キーでエラー"""
        with open(tmp_path / "config.yaml", "w", encoding="utf-8") as f:
            yaml.dump(config_yaml, f)
        with pytest.raises(ConfigValidationError) as excinfo:
            ConfigLoader(tmp_path).load_config_yaml()
        assert excinfo.value.key == key

    def test_config_dir_from_env(self, tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> None:
        """環境変数 RSFLOW_CONFIG_DIR を使う"""
        monkeypatch.setenv("RSFLOW_CONFIG_DIR", str(tmp_path))
        assert ConfigLoader().config_dir == tmp_path


class TestParseRunSpec:
    """実行仕様のパースのテスト"""

    @pytest.fixture
    def loader(self, config_dir: Path) -> ConfigLoader:
        """テスト用ローダー"""
        return ConfigLoader(config_dir)

    def test_minimal(self, loader: ConfigLoader) -> None:
        """必須項目だけの実行仕様"""
        spec = loader.parse_run_spec(_spec())
        assert spec.backend.blocks == [(1, 1.0)]
        assert spec.path.family == "scalar_linear"
        assert spec.methods == ["winding", "crossing"]
        assert spec.method_params == {}
        assert spec.output.format == "json"
        assert spec.output.path is None

    def test_defaults_from_system_config(self, loader: ConfigLoader) -> None:
        """quadrature と output.tolerance の既定値は config.yaml から"""
        defaults = loader.load_config_yaml()
        spec = loader.parse_run_spec(_spec(quadrature={"max_depth": 12}), defaults)
        assert spec.quadrature.tolerance == 1.0e-9
        assert spec.quadrature.max_depth == 12
        assert spec.output.tolerance == 1.0e-5

    def test_grid_count_shorthand(self, loader: ConfigLoader) -> None:
        """count と total_weight で一様格子を指定できる"""
        spec = loader.parse_run_spec(
            _spec(backend={"kind": "grid", "count": 4, "total_weight": 2.0}, path={"family": "tan_wrap"})
        )
        assert spec.backend.points == [0.125, 0.375, 0.625, 0.875]
        assert spec.backend.weights == [0.5] * 4

    def test_samples_path(self, loader: ConfigLoader) -> None:
        """samples による区分線形パス"""
        spec = loader.parse_run_spec(
            _spec(path={"samples": [[0.0, [-1.0]], [1.0, [1.0]]], "regularize": {"eps": 0.25}})
        )
        assert spec.path.family is None
        assert spec.path.samples == [(0.0, [-1.0]), (1.0, [1.0])]
        assert spec.path.regularize_eps == 0.25

    def test_method_params(self, loader: ConfigLoader) -> None:
        """手法ごとのパラメータ"""
        spec = loader.parse_run_spec(
            _spec(
                methods=["winding", "resolvent_power"],
                method_params={"winding": {"chi": "smooth_gap", "eps": 0.3}, "resolvent_power": {"p": 2}},
            )
        )
        assert spec.method_params["winding"] == {"chi": "smooth_gap", "eps": 0.3}
        assert spec.method_params["resolvent_power"] == {"p": 2}

    def test_output(self, loader: ConfigLoader) -> None:
        """output の path・format・tolerance"""
        spec = loader.parse_run_spec(_spec(output={"path": "out.csv", "format": "csv", "tolerance": 1e-3}))
        assert spec.output.path == "out.csv"
        assert spec.output.format == "csv"
        assert spec.output.tolerance == 1e-3

    @pytest.mark.parametrize(
        "overrides, key",
        [
            ({"extra": 1}, "extra"),
            ({"backend": {"kind": "torus"}}, "backend.kind"),
            ({"backend": {"kind": "block", "blocks": []}}, "backend.blocks"),
            ({"backend": {"kind": "block", "blocks": [[0, 1.0]]}}, "backend.blocks[0][0]"),
            ({"backend": {"kind": "block", "blocks": [[1, -1.0]]}}, "backend.blocks[0][1]"),
            ({"backend": {"kind": "grid", "points": [0.1, 0.2], "weights": [1.0]}}, "backend.weights"),
            ({"backend": {"kind": "grid", "points": [0.1, 0.2], "weights": [1.0, 0.0]}}, "backend.weights[1]"),
            ({"path": {"family": "spiral"}}, "path.family"),
            ({"path": {"family": "tan_wrap"}}, "backend.kind"),
            ({"path": {"family": "linear", "samples": []}}, "path"),
            ({"path": {}}, "path"),
            ({"path": {"family": "linear", "regularize": {"eps": 1.5}}}, "path.regularize.eps"),
            ({"path": {"samples": [[0.0, [1.0]], [0.0, [2.0]]]}}, "path.samples[1][0]"),
            ({"path": {"samples": [[0.0, [1.0]], [1.5, [2.0]]]}}, "path.samples[1][0]"),
            ({"path": {"family": "scalar_linear", "params": {"a": -1, "b": 1, "offest": 0.3}}}, "path.params.offest"),
            ({"methods": []}, "methods"),
            ({"methods": ["winding", "magic"]}, "methods[1]"),
            ({"methods": ["winding", "winding"]}, "methods"),
            ({"method_params": {"heat": {"chi": "chi_e"}}}, "method_params.heat.chi"),
            ({"method_params": {"winding": {"chi": "smooth_gap"}}}, "method_params.winding.eps"),
            ({"method_params": {"winding": {"chi": "tanh"}}}, "method_params.winding.chi"),
            ({"method_params": {"resolvent_power": {"p": 0.5}}}, "method_params.resolvent_power.p"),
            ({"method_params": {"analytic": {"partition": 0}}}, "method_params.analytic.partition"),
            ({"method_params": {"crossing": {"samples": 1}}}, "method_params.crossing.samples"),
            ({"method_params": {"winding": {"bogus": 1}}}, "method_params.winding.bogus"),
            ({"method_params": {"analytic": {"samples": 8}}}, "method_params.analytic.samples"),
            ({"output": {"format": "xml"}}, "output.format"),
            ({"output": {"tolerance": 0}}, "output.tolerance"),
            ({"output": {"color": True}}, "output.color"),
            ({"quadrature": {"workers": 0}}, "quadrature.workers"),
        ],
    )
    def test_invalid(self, loader: ConfigLoader, overrides: dict, key: str) -> None:
        """不正な実行仕様は該当キーでエラー"""
        assert _key_of(loader, _spec(**overrides)) == key

    @pytest.mark.parametrize("missing", ["backend", "path", "methods"])
    def test_required(self, loader: ConfigLoader, missing: str) -> None:
        """必須項目が無ければ key はその名前"""
        data = _spec()
        del data[missing]
        assert _key_of(loader, data) == missing

    def test_not_mapping(self, loader: ConfigLoader) -> None:
        """トップレベルが辞書でなければエラー"""
        with pytest.raises(ConfigValidationError):
            loader.parse_run_spec([1, 2])


class TestLoadRunSpec:
    """load_run_spec のテスト"""

    def test_load(self, config_dir: Path, write_spec) -> None:
        """JSON ファイルから読み込む"""
        spec = ConfigLoader(config_dir).load_run_spec(write_spec(BASE_SPEC))
        assert spec.methods == ["winding", "crossing"]

    def test_missing_file(self, tmp_path: Path) -> None:
        """ファイルが無ければエラー"""
        with pytest.raises(ConfigValidationError) as excinfo:
            ConfigLoader(tmp_path).load_run_spec(tmp_path / "none.json")
        assert excinfo.value.reason == "invalid_spec"

    def test_bad_json(self, tmp_path: Path) -> None:
        """不正な JSON はエラー"""
        path = tmp_path / "bad.json"
        path.write_text("{backend: }", encoding="utf-8")
        with pytest.raises(ConfigValidationError) as excinfo:
            ConfigLoader(tmp_path).load_run_spec(path)
        assert "JSON" in str(excinfo.value)
