"""gallery のテスト"""

import numpy as np
import pytest

from rsflow.services.algebra import nonnegative_projection, trace, uniform_grid_algebra
from rsflow.services.errors import ConstructionError, PreconditionError
from rsflow.services.gallery import (
    CoveringError,
    CoveringSpec,
    build_covering_path,
    build_gn_family,
    build_tan_wrap_loop,
    default_covering_spec,
    g_infinity,
    g_n,
    gn_grid,
)
from rsflow.services.specflow import sf_analytic, sf_crossing, sf_winding


class TestTanWrapLoop:
    """build_tan_wrap_loop のテスト"""

    @pytest.mark.parametrize("total_weight", [1.0, 2.5])
    def test_spectral_flow_is_total_weight(self, total_weight, quad):
        """各点が1回ずつ上向きに横断し、sf は総重み"""
        loop = build_tan_wrap_loop(uniform_grid_algebra(8, total_weight=total_weight))
        assert sf_crossing(loop).value == pytest.approx(total_weight, abs=1e-12)
        assert sf_analytic(loop).value == pytest.approx(total_weight, abs=1e-12)
        assert sf_winding(loop, quad=quad).value == pytest.approx(total_weight, abs=1e-6)

    def test_endpoint_projections_agree(self):
        """閉ループなので端点射影の差は 0"""
        loop = build_tan_wrap_loop(uniform_grid_algebra(8), offset=0.1)
        p0 = trace(nonnegative_projection(loop.at(0.0))).real
        p1 = trace(nonnegative_projection(loop.at(1.0))).real
        assert p1 - p0 == pytest.approx(0.0, abs=1e-12)

    def test_wrap_annotations(self):
        """ラップは各点に1回、向き +1"""
        loop = build_tan_wrap_loop(uniform_grid_algebra(4))
        assert len(loop.all_wraps()) == 4
        assert all(direction == 1 for _, _, direction in loop.all_wraps())
        assert loop.check_wraps() == 0.0

    def test_offset_hits_singularity(self):
        """端点で零点か極に当たる offset は拒否する"""
        with pytest.raises(ConstructionError) as excinfo:
            build_tan_wrap_loop(uniform_grid_algebra(4), offset=0.375)
        assert excinfo.value.reason == "offset_hits_singularity"

    def test_block_backend_rejected(self, block_algebra):
        """block では構成できない"""
        with pytest.raises(ConstructionError) as excinfo:
            build_tan_wrap_loop(block_algebra)
        assert excinfo.value.reason == "unsupported_backend"


class TestCovering:
    """被覆閉路のテスト"""

    @pytest.mark.parametrize("m, k", [(4, 1), (4, 3), (5, 2)])
    def test_gamma_trace_is_fraction(self, m, k):
        """Γ トレースの sf は全体の 1/k"""
        covering = build_covering_path(default_covering_spec(m, k))
        gamma = sf_crossing(covering.path).value
        full = sf_crossing(covering.full_path).value
        assert full < 0
        assert gamma == pytest.approx(full / k, abs=1e-12)
        assert covering.equivariance_residual <= 1e-12

    def test_winding_agrees(self, quad):
        """巻き数による値も一致する"""
        covering = build_covering_path(default_covering_spec(4, 3))
        gamma = sf_winding(covering.path, quad=quad).value
        assert gamma == pytest.approx(sf_crossing(covering.path).value, abs=1e-7)

    def test_unpack(self):
        """(path, gamma_algebra, full_algebra) に展開できる"""
        path, gamma_algebra, full_algebra = build_covering_path(default_covering_spec(3, 2))
        assert gamma_algebra.block_weights == (0.5,)
        assert full_algebra.dims == (6,)
        assert path.algebra == gamma_algebra

    @pytest.mark.parametrize("m, k, reason", [(2, 1, "invalid_cycle"), (4, 0, "invalid_degree")])
    def test_invalid_spec(self, m, k, reason):
        """閉路長 3 以上・次数 1 以上"""
        with pytest.raises(ConstructionError) as excinfo:
            CoveringSpec.linear(m, k, [1.0] * 4, [1.0] * 4, [0.0] * 4, [0.0] * 4)
        assert excinfo.value.reason == reason

    def test_not_equivariant(self):
        """周期的でないポテンシャルは拒否する"""
        spec = CoveringSpec.linear(3, 2, [1.0] * 3, [1.0] * 3, [0.1] * 6, [0.1, 0.2, 0.3, 0.4, 0.5, 0.6])
        with pytest.raises(CoveringError) as excinfo:
            build_covering_path(spec)
        assert excinfo.value.reason == "not_equivariant"

    def test_shape_mismatch(self):
        """長さは m か mk"""
        spec = CoveringSpec.linear(3, 2, [1.0] * 3, [1.0] * 3, [0.1] * 4, [0.1] * 4)
        with pytest.raises(CoveringError) as excinfo:
            build_covering_path(spec)
        assert excinfo.value.reason == "shape_mismatch"


class TestGnFamily:
    """g_n 族のテスト"""

    def test_g_infinity_bands(self):
        """帯 ]1/(j+1), 1/j] で j 偶数なら j/2、奇数なら −(j+1)/2"""
        x = np.array([0.0, 0.75, 0.4, 0.3, -0.3, 1.5])
        np.testing.assert_array_equal(g_infinity(x), [0.0, -1.0, 1.0, -2.0, -2.0, 0.0])

    def test_g_n_near_zero(self):
        """0 < |x| ≤ 1/n では n"""
        np.testing.assert_array_equal(g_n(4, np.array([0.0, 0.2, -0.25, 0.3])), [0.0, 4.0, 4.0, -2.0])

    def test_grid_is_symmetric(self):
        """標本点は 0 について対称"""
        points = gn_grid(2)
        np.testing.assert_array_equal(points, -points[::-1])

    def test_distances(self):
        """レゾルベント距離は減少し、関数計算の距離は 0.5 以上"""
        report = build_gn_family([1, 2, 4, 8])
        distances = [row.resolvent_distance for row in report.rows]
        np.testing.assert_allclose(distances, [1.0, 0.8, 0.5369, 0.3162], atol=5e-4)
        assert report.resolvent_decreasing is True
        assert report.calculus_bounded_below is True
        assert report.to_dict()["grid_size"] == report.grid_size

    def test_invalid_n(self):
        """n は正の整数"""
        with pytest.raises(PreconditionError) as excinfo:
            build_gn_family([0, 1])
        assert excinfo.value.reason == "invalid_parameter"
