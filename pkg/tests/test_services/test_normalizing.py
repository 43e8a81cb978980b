"""normalizing のテスト"""

import math

import numpy as np
import pytest
from scipy.special import erf

from rsflow.services.errors import PreconditionError
from rsflow.services.normalizing import (
    chi_e,
    chi_e_constant,
    chi_p,
    cp_constant,
    make_normalizing,
    smooth_gap,
    validate_normalizing,
)


class TestConstants:
    """正規化定数のテスト"""

    def test_chi_e_constant(self):
        """χ_e の正規化定数は √π/2"""
        check = chi_e_constant()
        assert check.deviation <= 1e-10
        assert check.value == pytest.approx(math.sqrt(math.pi) / 2, abs=1e-10)

    @pytest.mark.parametrize("p", [1.0, 1.5, 2.0, 3.0, 5.0])
    def test_cp_gamma_identity(self, p):
        """C_p の求積値とガンマ関数の恒等式が一致する"""
        assert cp_constant(p).deviation <= 1e-10

    @pytest.mark.parametrize(
        "p, expected", [(1.0, math.pi / 2), (2.0, 1.0), (3.0, math.pi / 4)]
    )
    def test_cp_known_values(self, p, expected):
        """C_1 = π/2、C_2 = 1、C_3 = π/4"""
        assert cp_constant(p).value == pytest.approx(expected, abs=1e-10)


class TestSmoothGap:
    """smooth_gap のテスト"""

    def test_sign_outside_gap(self):
        """|x| ≥ ε では符号関数"""
        chi = smooth_gap(0.5)
        np.testing.assert_array_equal(chi(np.array([-2.0, -0.5, 0.5, 3.0])), [-1.0, -1.0, 1.0, 1.0])

    def test_infinite_arguments(self):
        """±∞ では ±1"""
        chi = smooth_gap(0.5)
        np.testing.assert_array_equal(chi(np.array([-np.inf, np.inf])), [-1.0, 1.0])

    def test_c1_at_gap_edge(self):
        """ε で導関数は 0 に連続につながる"""
        chi = smooth_gap(0.5)
        assert chi.prime(np.array([0.5 - 1e-9]))[0] == pytest.approx(0.0, abs=1e-12)
        assert chi.prime(np.array([0.0]))[0] == pytest.approx(15.0 / 8.0 / 0.5)

    def test_invalid_eps(self):
        """ε ≤ 0 は拒否する"""
        with pytest.raises(PreconditionError) as excinfo:
            smooth_gap(0.0)
        assert excinfo.value.reason == "invalid_gap"

    def test_involution_radius(self):
        """χ² = 1 となる半径は ε"""
        assert smooth_gap(0.3).involution_radius() == 0.3


class TestChiE:
    """chi_e のテスト"""

    @pytest.mark.parametrize("x", [-1.5, -0.4, 0.2, 0.9])
    def test_bounded_transform_gives_erf(self, x):
        """χ_e(x(1+x²)^{-1/2}) = erf(x)"""
        chi = chi_e()
        assert chi(x / math.sqrt(1 + x * x)) == pytest.approx(erf(x), abs=1e-10)

    def test_through_bounded_transform(self):
        """合成関数も erf に一致する"""
        f = chi_e().through_bounded_transform()
        x = np.array([-0.7, 0.3, 2.0])
        np.testing.assert_allclose(f(x), erf(x), atol=1e-10)

    def test_flat_outside_unit_interval(self):
        """|x| ≥ 1 では ±1"""
        chi = chi_e()
        np.testing.assert_array_equal(chi(np.array([-1.0, 1.0, 4.0])), [-1.0, 1.0, 1.0])
        assert chi.prime(np.array([1.5]))[0] == 0.0


class TestChiP:
    """chi_p のテスト"""

    def test_p2_is_identity_on_unit_interval(self):
        """χ_2(x) = x（|x| ≤ 1）"""
        chi = chi_p(2.0)
        x = np.array([-0.8, -0.1, 0.5])
        np.testing.assert_allclose(chi(x), x, atol=1e-10)

    def test_invalid_exponent(self):
        """p < 1 は拒否する"""
        with pytest.raises(PreconditionError) as excinfo:
            chi_p(0.5)
        assert excinfo.value.reason == "invalid_exponent"


class TestMakeNormalizing:
    """make_normalizing のテスト"""

    def test_by_name(self):
        """名前から生成する"""
        assert make_normalizing("smooth_gap", eps=0.2).name == "smooth_gap(0.2)"
        assert make_normalizing("chi_e").name == "chi_e"
        assert make_normalizing("chi_p", p=3.0).name == "chi_p(3)"

    def test_smooth_gap_requires_eps(self):
        """smooth_gap には eps が必要"""
        with pytest.raises(PreconditionError) as excinfo:
            make_normalizing("smooth_gap")
        assert excinfo.value.reason == "missing_parameter"

    def test_unknown_kind(self):
        """未知の名前は拒否する"""
        with pytest.raises(PreconditionError) as excinfo:
            make_normalizing("tanh")
        assert excinfo.value.reason == "unknown_normalizing"

    def test_blend(self):
        """補間 s·χ₁ + (1−s)·χ₀"""
        chi0, chi1 = smooth_gap(0.2), smooth_gap(0.6)
        blended = chi0.blend(chi1, 0.25)
        x = np.array([0.1, 0.3])
        np.testing.assert_allclose(blended(x), 0.25 * chi1(x) + 0.75 * chi0(x))
        assert blended.involution_radius() == 0.6

    def test_blend_rejects_out_of_range(self):
        """補間パラメータは [0, 1]"""
        with pytest.raises(PreconditionError):
            smooth_gap(0.2).blend(smooth_gap(0.4), 1.5)


class TestValidateNormalizing:
    """validate_normalizing のテスト"""

    @pytest.mark.parametrize("chi", [smooth_gap(0.3), chi_p(3.0)])
    def test_properties_hold(self, chi):
        """奇関数・単調・極限・零点集合・χ(±1) = ±1"""
        deviations = validate_normalizing(chi, samples=201)
        assert set(deviations) == {"odd", "monotone", "limits", "zero_set", "unit_at_one"}
        assert max(deviations.values()) <= 1e-10
