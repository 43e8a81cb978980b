"""run コマンドのテスト"""

import csv
import io
import json

from rsflow.services.models import METHOD_NAMES

LINEAR_SPEC = {
    "backend": {"kind": "block", "blocks": [[1, 1.0]]},
    "path": {"family": "scalar_linear", "params": {"a": -1, "b": 1}},
    "methods": list(METHOD_NAMES),
}


def _spec(**overrides) -> dict:
    data = json.loads(json.dumps(LINEAR_SPEC))
    data.update(overrides)
    return data


class TestRunSuccess:
    """正常終了のテスト"""

    def test_all_methods(self, cli, write_spec):
        """D_t = 2t − 1 では全手法が 1 で終了コード 0"""
        code, out = cli("run", str(write_spec(LINEAR_SPEC)))
        assert code == 0
        report = json.loads(out)
        assert set(report["values"]) == set(METHOD_NAMES)
        for value in report["values"].values():
            assert abs(value - 1.0) < 1e-6
        assert "winding-crossing" in report["discrepancies"]

    def test_csv_output(self, cli, write_spec):
        """CSV は手法ごとに1行"""
        spec = _spec(methods=["winding", "crossing"])
        code, out = cli("run", str(write_spec(spec)), "--format", "csv")
        assert code == 0
        rows = list(csv.DictReader(io.StringIO(out)))
        assert list(rows[0]) == ["method", "value", "quadrature_error", "max_discrepancy"]
        assert [row["method"] for row in rows] == ["winding", "crossing"]
        assert abs(float(rows[1]["value"]) - 1.0) < 1e-12

    def test_out_file(self, cli, write_spec, tmp_path):
        """--out でファイルに書き出す"""
        out_path = tmp_path / "reports" / "result.json"
        code, out = cli("run", str(write_spec(_spec(methods=["crossing"]))), "--out", str(out_path))
        assert code == 0
        assert out == ""
        assert abs(json.loads(out_path.read_text(encoding="utf-8"))["values"]["crossing"] - 1.0) < 1e-12

    def test_output_path_in_spec(self, cli, write_spec, tmp_path):
        """output.path が指定されていればそこへ書き出す"""
        out_path = tmp_path / "spec_out.csv"
        spec = _spec(methods=["analytic"], output={"path": str(out_path), "format": "csv"})
        code, _ = cli("run", str(write_spec(spec)))
        assert code == 0
        assert out_path.read_text(encoding="utf-8").startswith("method,value")

    def test_regularized_endpoint(self, cli, write_spec):
        """regularize を指定すれば非可逆端点も計算できる"""
        spec = _spec(
            path={"family": "scalar_linear", "params": {"a": -1, "b": 0}, "regularize": {"eps": 0.5}},
            methods=["analytic", "crossing"],
        )
        code, out = cli("run", str(write_spec(spec)))
        assert code == 0
        report = json.loads(out)
        assert abs(report["values"]["analytic"] - 1.0) < 1e-12
        assert report["corrections"]["applied"] is True


class TestRunFailure:
    """異常終了のテスト"""

    def test_singular_endpoint(self, cli, write_spec):
        """非可逆端点は終了コード 3"""
        spec = _spec(path={"family": "scalar_linear", "params": {"a": -1, "b": 0}}, methods=["analytic"])
        code, out = cli("run", str(write_spec(spec)))
        assert code == 3
        error = json.loads(out)
        assert error["status"] == "error"
        assert error["reason"] == "endpoint_not_invertible"

    def test_unknown_family(self, cli, write_spec):
        """未登録の族は終了コード 2"""
        code, out = cli("run", str(write_spec(_spec(path={"family": "spiral"}))))
        assert code == 2
        error = json.loads(out)
        assert error["reason"] == "invalid_spec"
        assert error["key"] == "path.family"

    def test_family_parameter_error(self, cli, write_spec):
        """族のパラメータ誤りは path.params のキー"""
        code, out = cli("run", str(write_spec(_spec(path={"family": "scalar_linear", "params": {"a": -1}}))))
        assert code == 2
        assert json.loads(out)["key"] == "path.params.b"

    def test_empty_blocks(self, cli, write_spec):
        """ブロックが空の環は終了コード 2 で key=backend.blocks"""
        code, out = cli("run", str(write_spec(_spec(backend={"kind": "block", "blocks": []}))))
        assert code == 2
        error = json.loads(out)
        assert error["reason"] == "invalid_spec"
        assert error["key"] == "backend.blocks"

    def test_unknown_family_parameter(self, cli, write_spec):
        """族が受け付けないパラメータは終了コード 2"""
        params = {"a": -1, "b": 1, "typo": 5}
        code, out = cli("run", str(write_spec(_spec(path={"family": "scalar_linear", "params": params}))))
        assert code == 2
        assert json.loads(out)["key"] == "path.params.typo"

    def test_unknown_method_parameter(self, cli, write_spec):
        """手法が受け付けないパラメータは終了コード 2"""
        spec = _spec(methods=["winding"], method_params={"winding": {"bogus": 1}})
        code, out = cli("run", str(write_spec(spec)))
        assert code == 2
        assert json.loads(out)["key"] == "method_params.winding.bogus"

    def test_missing_spec_file(self, cli, tmp_path):
        """実行仕様ファイルが無ければ終了コード 2"""
        code, out = cli("run", str(tmp_path / "none.json"))
        assert code == 2
        assert json.loads(out)["reason"] == "invalid_spec"

    def test_invalid_tolerance(self, cli, write_spec):
        """--tolerance は正の数"""
        code, out = cli("run", str(write_spec(LINEAR_SPEC)), "--tolerance", "-1")
        assert code == 2
        assert json.loads(out)["key"] == "output.tolerance"

    def test_disagreement(self, cli, write_spec):
        """食い違いが許容差を超えれば終了コード 4 でもレポートは出力する"""
        spec = _spec(path={"family": "scalar_linear", "params": {"a": -2, "b": 3}}, methods=["winding", "analytic"])
        code, out = cli("run", str(write_spec(spec)), "--tolerance", "1e-300")
        assert code == 4
        assert "values" in json.loads(out)

    def test_invalid_log_level(self, cli, write_spec):
        """--log-level が不正なら終了コード 2"""
        code, out = cli("--log-level", "LOUD", "run", str(write_spec(LINEAR_SPEC)))
        assert code == 2
        assert json.loads(out)["key"] == "logging.level"
