"""winding のテスト"""

import math

import numpy as np
import pytest

from rsflow.services.algebra import make_element, random_unitary
from rsflow.services.errors import PreconditionError
from rsflow.services.selfcheck import perturbation_loop, phase_loop
from rsflow.services.winding import UnitaryLoop, rectangle_defect, winding_number


def _grid_phase_loop(algebra, windings):
    """grid 上の s(t)(x_j) = e^{2πi n_j t}"""
    n = np.asarray(windings, dtype=float)
    return UnitaryLoop(
        value=lambda t: make_element(algebra, np.exp(2j * math.pi * n * t)),
        derivative=lambda t: make_element(algebra, 2j * math.pi * n * np.exp(2j * math.pi * n * t)),
        name="grid_phase",
    )


def _flat_phase_loop(algebra, windings):
    """端点で導関数が 0 になる位相 φ(t) = t − sin(2πt)/(2π) のループ"""
    n = np.asarray(windings, dtype=float)

    def phase(t: float) -> np.ndarray:
        return np.exp(2j * math.pi * n * (t - math.sin(2 * math.pi * t) / (2 * math.pi)))

    return UnitaryLoop(
        value=lambda t: make_element(algebra, phase(t)),
        derivative=lambda t: make_element(
            algebra, 2j * math.pi * n * (1 - math.cos(2 * math.pi * t)) * phase(t)
        ),
        name="flat_phase",
    )


class TestWindingNumber:
    """winding_number のテスト"""

    def test_block_phase_loop(self, block_algebra, rng, quad):
        """位相ループの巻き数は Σ c_k Σ n_j"""
        loop, expected = phase_loop(block_algebra, rng)
        result = winding_number(loop, quad)
        assert result.value == pytest.approx(expected, abs=1e-8)
        assert abs(result.imaginary) < 1e-8
        assert result.diagnostics["closed"] is True

    def test_grid_weighted_winding(self, grid_algebra, quad):
        """grid では重み付きの和（非整数になりうる）"""
        loop = _grid_phase_loop(grid_algebra, [1, 0, -2, 3])
        assert winding_number(loop, quad).value == pytest.approx(0.25 * (1 - 2 + 3), abs=1e-8)

    def test_perturbation_loop_is_zero(self, block_algebra, rng, quad):
        """1 + 小さな摂動のループの巻き数は 0"""
        assert winding_number(perturbation_loop(block_algebra, rng), quad).value == pytest.approx(0.0, abs=1e-8)

    def test_finite_difference_derivative(self, grid_algebra, quad):
        """導関数を省略しても差分で計算できる"""
        n = np.array([1.0, 1.0, 0.0, 0.0])
        loop = UnitaryLoop(value=lambda t: make_element(grid_algebra, np.exp(2j * math.pi * n * t)))
        assert winding_number(loop, quad).value == pytest.approx(0.5, abs=1e-6)

    def test_not_invertible(self, grid_algebra, quad):
        """非可逆な標本点があれば not_invertible"""
        loop = UnitaryLoop(
            value=lambda t: make_element(grid_algebra, [t - 0.5, 1.0, 1.0, 1.0]),
            derivative=lambda t: make_element(grid_algebra, [1.0, 0.0, 0.0, 0.0]),
        )
        with pytest.raises(PreconditionError) as excinfo:
            winding_number(loop, quad)
        assert excinfo.value.reason == "not_invertible"


class TestLoopOperations:
    """ループ演算のテスト"""

    def test_multiplication_by_constant(self, block_algebra, rng, quad):
        """定数ユニタリ倍で巻き数は変わらない"""
        loop, expected = phase_loop(block_algebra, rng)
        u = random_unitary(block_algebra, rng)
        assert winding_number(loop.multiply_right(u), quad).value == pytest.approx(expected, abs=1e-8)
        assert winding_number(loop.multiply_left(u), quad).value == pytest.approx(expected, abs=1e-8)

    def test_conjugation(self, block_algebra, rng, quad):
        """共役で巻き数は変わらない"""
        loop, expected = phase_loop(block_algebra, rng)
        conjugated = loop.conjugate_by(random_unitary(block_algebra, rng))
        assert winding_number(conjugated, quad).value == pytest.approx(expected, abs=1e-8)

    def test_product_is_additive(self, grid_algebra, quad):
        """各点積の巻き数は和"""
        first = _grid_phase_loop(grid_algebra, [1, 2, 0, 0])
        second = _grid_phase_loop(grid_algebra, [0, -1, 1, 4])
        total = winding_number(first.product(second), quad).value
        assert total == pytest.approx(0.75 + 1.0, abs=1e-8)

    def test_product_interval_mismatch(self, grid_algebra):
        """区間が異なるループの積は拒否する"""
        first = _grid_phase_loop(grid_algebra, [1, 0, 0, 0])
        second = UnitaryLoop(value=first.value, a=0.0, b=2.0)
        with pytest.raises(PreconditionError) as excinfo:
            first.product(second)
        assert excinfo.value.reason == "interval_mismatch"

    def test_concat_is_additive(self, grid_algebra, quad):
        """連結の巻き数は和"""
        first = _flat_phase_loop(grid_algebra, [1, 0, 0, 0])
        second = _flat_phase_loop(grid_algebra, [0, 0, 2, 0])
        joined = first.concat(second)
        assert (joined.a, joined.b) == (0.0, 2.0)
        assert winding_number(joined, quad).value == pytest.approx(0.75, abs=1e-8)

    def test_reparameterize(self, grid_algebra, quad):
        """向きを保つ再パラメータ化で巻き数は変わらない"""
        loop = _grid_phase_loop(grid_algebra, [1, 1, 1, 1])
        squeezed = loop.reparameterize(lambda t: t * t, lambda t: 2 * t)
        assert winding_number(squeezed, quad).value == pytest.approx(1.0, abs=1e-8)

    def test_open_path_is_not_closed(self, grid_algebra):
        """閉じていないパスは closed ではない"""
        loop = UnitaryLoop(value=lambda t: make_element(grid_algebra, np.full(4, np.exp(1j * t))))
        assert loop.closed is False


class TestRectangleDefect:
    """rectangle_defect のテスト"""

    def test_homotopy_rectangle(self, grid_algebra, quad):
        """連続な2変数族の4辺の和は 0"""
        weights = np.array([1.0, -1.0, 2.0, 0.0])

        def h(x: float, y: float):
            return make_element(grid_algebra, (2.0 + y) * np.exp(2j * math.pi * weights * x * y))

        assert rectangle_defect(h, 0.0, 1.0, 0.0, 1.0, quad) == pytest.approx(0.0, abs=1e-6)
