"""families のテスト"""

import numpy as np
import pytest

from rsflow.services.errors import ParameterError
from rsflow.services.families import (
    FAMILY_NAMES,
    build_algebra,
    build_path,
    get_family,
    parse_complex,
    parse_element,
    parse_matrix,
)
from rsflow.services.models import BackendSpec, PathSpec
from rsflow.services.specflow import sf_analytic, sf_crossing

BLOCK = BackendSpec(kind="block", blocks=[(1, 0.5), (2, 1.0)])
GRID = BackendSpec(kind="grid", points=[0.1, 0.4, 0.7], weights=[0.2, 0.3, 0.5])


class TestParsing:
    """値の解釈のテスト"""

    def test_parse_complex(self):
        """数値と [re, im]"""
        assert parse_complex(2, "x") == 2 + 0j
        assert parse_complex([1.0, -0.5], "x") == 1 - 0.5j

    @pytest.mark.parametrize("value", [True, "1", [1, 2, 3]])
    def test_parse_complex_rejects(self, value):
        """真偽値・文字列・長さ違いは拒否する"""
        with pytest.raises(ParameterError) as excinfo:
            parse_complex(value, "x")
        assert excinfo.value.key == "x"

    def test_parse_matrix_ragged(self):
        """行の長さが揃っていなければ拒否する"""
        with pytest.raises(ParameterError):
            parse_matrix([[1, 2], [3]], "m")

    def test_parse_element_diagonal_shorthand(self):
        """実数の列は対角成分とみなす"""
        algebra = build_algebra(BLOCK)
        element = parse_element(algebra, [[1.0], [[0.0, [0.0, 1.0]], [[0.0, -1.0], 2.0]]], "start")
        np.testing.assert_allclose(element.data[1], [[0.0, 1j], [-1j, 2.0]])

    def test_parse_element_not_hermitian(self):
        """エルミートでない行列は構成エラーの reason を引き継ぐ"""
        algebra = build_algebra(BLOCK)
        with pytest.raises(ParameterError) as excinfo:
            parse_element(algebra, [[1.0], [[0.0, 1.0], [0.0, 0.0]]], "end")
        assert excinfo.value.key == "end"
        assert excinfo.value.reason == "not_hermitian"


class TestRegistry:
    """族の登録のテスト"""

    def test_registered_names(self):
        """組み込み族の一覧"""
        assert set(FAMILY_NAMES) == {
            "scalar_linear", "linear", "random_block", "tan_wrap", "covering", "suspension"
        }

    def test_unknown_family(self):
        """未登録の族は key=family"""
        with pytest.raises(ParameterError) as excinfo:
            get_family("spiral")
        assert excinfo.value.key == "family"
        assert excinfo.value.reason == "unknown_family"

    def test_unknown_backend(self):
        """backend.kind は block か grid"""
        with pytest.raises(ParameterError) as excinfo:
            build_algebra(BackendSpec(kind="torus"))
        assert excinfo.value.key == "kind"


class TestBuildPath:
    """build_path のテスト"""

    def test_scalar_linear(self):
        """スカラーの直線パスの sf は総重み"""
        path = build_path(PathSpec(family="scalar_linear", params={"a": -1, "b": 2}), BLOCK)
        assert sf_crossing(path).value == pytest.approx(2.5)

    def test_missing_parameter(self):
        """必須パラメータが無ければ key はその名前"""
        with pytest.raises(ParameterError) as excinfo:
            build_path(PathSpec(family="scalar_linear", params={"a": -1}), BLOCK)
        assert excinfo.value.key == "b"
        assert excinfo.value.reason == "missing_parameter"

    def test_unknown_parameter(self):
        """族が受け付けないパラメータは key がその名前"""
        spec = PathSpec(family="tan_wrap", params={"offest": 0.3})
        with pytest.raises(ParameterError) as excinfo:
            build_path(spec, GRID)
        assert excinfo.value.key == "offest"
        assert excinfo.value.reason == "unknown_parameter"

    def test_derivative_step(self):
        """derivative_step を指定すればパスの差分刻みになる"""
        spec = PathSpec(family="scalar_linear", params={"a": -1, "b": 2})
        assert build_path(spec, BLOCK, derivative_step=1e-4).derivative_step == 1e-4
        assert build_path(spec, BLOCK).derivative_step == 1e-6

    def test_linear_on_grid(self):
        """grid の直線パス"""
        spec = PathSpec(family="linear", params={"start": [-1.0, 1.0, -1.0], "end": [1.0, -1.0, -1.0]})
        assert sf_analytic(build_path(spec, GRID)).value == pytest.approx(0.2 - 0.3)

    def test_random_block_is_seeded(self):
        """同じシードなら同じパス"""
        spec = PathSpec(family="random_block", params={"seed": 7})
        first = build_path(spec, BLOCK).at(0.3)
        second = build_path(spec, BLOCK).at(0.3)
        for a, b in zip(first.data, second.data):
            np.testing.assert_array_equal(a, b)

    def test_tan_wrap_requires_grid(self):
        """tan_wrap は grid 専用"""
        with pytest.raises(ParameterError) as excinfo:
            build_path(PathSpec(family="tan_wrap"), BLOCK)
        assert excinfo.value.reason == "unsupported_backend"

    def test_tan_wrap_bad_offset(self):
        """極に当たる offset は key=offset"""
        with pytest.raises(ParameterError) as excinfo:
            build_path(PathSpec(family="tan_wrap", params={"offset": 0.4}), GRID)
        assert excinfo.value.key == "offset"
        assert excinfo.value.reason == "offset_hits_singularity"

    def test_covering_full_trace(self):
        """trace=full では被覆全体のトレース"""
        gamma = build_path(PathSpec(family="covering", params={"m": 4, "k": 2}), BLOCK)
        full = build_path(PathSpec(family="covering", params={"m": 4, "k": 2, "trace": "full"}), BLOCK)
        assert sf_crossing(full).value == pytest.approx(2 * sf_crossing(gamma).value)
        assert gamma.metadata["equivariance_residual"] <= 1e-12

    def test_covering_bad_trace(self):
        """trace は gamma か full"""
        with pytest.raises(ParameterError) as excinfo:
            build_path(PathSpec(family="covering", params={"trace": "half"}), BLOCK)
        assert excinfo.value.key == "trace"

    def test_suspension(self):
        """懸垂パスは指数をメタデータに持つ"""
        params = {"maps": [{"weight": 0.5, "matrix": [], "shape": [1, 2]}]}
        path = build_path(PathSpec(family="suspension", params=params), BLOCK)
        assert path.metadata["breuer_index"] == pytest.approx(0.5)
        assert sf_crossing(path).value == pytest.approx(0.5)

    def test_suspension_bad_weight(self):
        """重みは正"""
        params = {"maps": [{"weight": -1.0, "matrix": [[1.0]]}]}
        with pytest.raises(ParameterError) as excinfo:
            build_path(PathSpec(family="suspension", params=params), BLOCK)
        assert excinfo.value.key == "maps[0].weight"

    def test_samples(self):
        """標本列の区分線形パス"""
        spec = PathSpec(samples=[(0.0, [-1.0, -1.0, 1.0]), (0.5, [1.0, -1.0, 1.0]), (1.0, [1.0, 1.0, 1.0])])
        assert sf_crossing(build_path(spec, GRID)).value == pytest.approx(0.5)

    def test_samples_unordered(self):
        """t が単調でない標本列は key=samples"""
        spec = PathSpec(samples=[(0.5, [1.0, 1.0, 1.0]), (0.0, [1.0, 1.0, 1.0])])
        with pytest.raises(ParameterError) as excinfo:
            build_path(spec, GRID)
        assert excinfo.value.key == "samples"
        assert excinfo.value.reason == "unordered_samples"
