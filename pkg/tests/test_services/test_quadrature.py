"""quadrature のテスト"""

import math

import numpy as np
import pytest
from scipy.special import erfc

from rsflow.services.errors import QuadratureError
from rsflow.services.models import QuadratureConfig
from rsflow.services.quadrature import adaptive_simpson, gauss_legendre, integrate_to_infinity


class TestAdaptiveSimpson:
    """adaptive_simpson のテスト"""

    def test_polynomial_exact(self):
        """3次多項式は厳密に積分できる"""
        result = adaptive_simpson(lambda t: t**3 - 2 * t, 0.0, 2.0)
        assert result.value == pytest.approx(0.0, abs=1e-12)
        assert result.converged is True

    def test_smooth_function(self):
        """sin の積分"""
        result = adaptive_simpson(math.sin, 0.0, math.pi, QuadratureConfig(tolerance=1e-10))
        assert result.value == pytest.approx(2.0, abs=1e-10)

    def test_reversed_interval(self):
        """上端 < 下端 では符号が反転する"""
        forward = adaptive_simpson(math.exp, 0.0, 1.0).value
        backward = adaptive_simpson(math.exp, 1.0, 0.0).value
        assert backward == -forward

    def test_empty_interval(self):
        """a == b なら 0"""
        result = adaptive_simpson(math.exp, 0.3, 0.3)
        assert result.value == 0.0
        assert result.evaluations == 0

    def test_array_valued(self):
        """配列値の被積分関数"""
        result = adaptive_simpson(lambda t: np.array([t, t * t]), 0.0, 1.0)
        np.testing.assert_allclose(result.value, [0.5, 1.0 / 3.0], atol=1e-12)

    def test_complex_valued(self):
        """複素数値の被積分関数"""
        result = adaptive_simpson(lambda t: np.exp(2j * math.pi * t), 0.0, 1.0)
        assert abs(result.value) < 1e-12

    def test_breakpoint_with_jump(self):
        """区切り点に跳びがあっても正確"""
        result = adaptive_simpson(
            lambda t: 0.0 if t < 0.3 else 1.0,
            0.0,
            1.0,
            QuadratureConfig(min_panels=4),
            breakpoints=[0.3],
            one_sided=lambda t, side: 0.0 if (t < 0.3 or (t == 0.3 and side < 0)) else 1.0,
        )
        assert result.value == pytest.approx(0.7, abs=1e-12)

    def test_not_converged_raises(self):
        """最大深さで収束しなければ QuadratureError"""
        config = QuadratureConfig(tolerance=1e-14, max_depth=2, min_panels=1)
        with pytest.raises(QuadratureError) as excinfo:
            adaptive_simpson(lambda t: math.sqrt(t), 0.0, 1.0, config)
        assert excinfo.value.reason == "quadrature_not_converged"
        assert excinfo.value.estimate > 0

    def test_not_converged_non_strict(self):
        """strict=False なら結果を返す"""
        config = QuadratureConfig(tolerance=1e-14, max_depth=2, min_panels=1)
        result = adaptive_simpson(lambda t: math.sqrt(t), 0.0, 1.0, config, strict=False)
        assert result.converged is False
        assert result.value == pytest.approx(2.0 / 3.0, abs=1e-2)

    def test_workers_bit_identical(self):
        """workers の値によらず結果はビット単位で一致する"""
        func = lambda t: math.exp(-t * t) * math.cos(5 * t)  # noqa: E731
        single = adaptive_simpson(func, -2.0, 3.0, QuadratureConfig(workers=1)).value
        threaded = adaptive_simpson(func, -2.0, 3.0, QuadratureConfig(workers=4)).value
        assert single == threaded

    def test_to_dict(self):
        """診断情報に値そのものは含めない"""
        data = adaptive_simpson(math.exp, 0.0, 1.0).to_dict()
        assert set(data) == {"error_estimate", "evaluations", "converged"}


class TestIntegrateToInfinity:
    """integrate_to_infinity のテスト"""

    def test_power_decay(self):
        """∫₁^∞ t⁻² dt = 1"""
        result = integrate_to_infinity(lambda t: 1.0 / (t * t), 1.0)
        assert result.value == pytest.approx(1.0, abs=1e-8)

    def test_inverse_substitution(self):
        """t = 1/u の変数変換でも同じ値"""
        config = QuadratureConfig(improper_substitution="inverse")
        result = integrate_to_infinity(lambda t: 1.0 / (t**3), 1.0, config)
        assert result.value == pytest.approx(0.5, abs=1e-8)

    def test_gaussian_tail_with_truncation(self):
        """指数減衰の打ち切りで erfc が再現できる"""
        d = 0.7
        config = QuadratureConfig(tolerance=1e-10)
        result = integrate_to_infinity(
            lambda t: d * math.exp(-t * d * d) / math.sqrt(t), 1.0, config, decay_rate=d * d
        )
        assert result.value / math.sqrt(math.pi) == pytest.approx(erfc(d), abs=1e-9)

    def test_nonpositive_lower(self):
        """下端が正でなければ ValueError"""
        with pytest.raises(ValueError):
            integrate_to_infinity(lambda t: 1.0, 0.0)


class TestGaussLegendre:
    """gauss_legendre のテスト"""

    def test_polynomial(self):
        """n 点則は 2n−1 次まで厳密"""
        value = gauss_legendre(lambda x: x**5 + x**2, -1.0, 2.0, 3)
        assert value == pytest.approx((64 - 1) / 6 + (8 + 1) / 3, abs=1e-12)

    def test_vector_values(self):
        """先頭軸がノードの配列値"""
        value = gauss_legendre(lambda x: np.stack([x, np.ones_like(x)], axis=-1), 0.0, 1.0, 4)
        np.testing.assert_allclose(value, [0.5, 1.0], atol=1e-14)
