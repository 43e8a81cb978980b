"""selfcheck コマンドのテスト"""

import json

import pytest


class TestSelfcheckCommand:
    """selfcheck コマンドのテスト"""

    def test_selected_invariants(self, cli):
        """--only で選んだ不変量を測定して終了コード 0"""
        code, out = cli(
            "selfcheck", "--seed", "5", "--only", "lp_holder_inequality", "--only", "chi_e_normalizing_constant"
        )
        assert code == 0
        report = json.loads(out)
        assert report["status"] == "ok"
        assert report["seed"] == 5
        assert [r["name"] for r in report["invariants"]] == [
            "chi_e_normalizing_constant",
            "lp_holder_inequality",
        ]

    def test_same_seed_same_bytes(self, cli):
        """同じシードからは同じ出力"""
        _, first = cli("selfcheck", "--seed", "9", "--only", "lp_holder_inequality")
        _, second = cli("selfcheck", "--seed", "9", "--only", "lp_holder_inequality")
        assert first == second

    def test_out_file(self, cli, tmp_path):
        """--out でファイルに書き出す"""
        out_path = tmp_path / "selfcheck.json"
        code, out = cli("selfcheck", "--only", "cp_constant_gamma_identity", "--out", str(out_path))
        assert code == 0
        assert out == ""
        assert json.loads(out_path.read_text(encoding="utf-8"))["failures"] == []

    def test_unknown_invariant(self, cli):
        """未登録の不変量名は引数エラー"""
        with pytest.raises(SystemExit) as excinfo:
            cli("selfcheck", "--only", "no_such_invariant")
        assert excinfo.value.code == 2
