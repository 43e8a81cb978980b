"""自己検査サービス

名前付きの不変量をシードから決定的に生成した入力で測定し、
不変量ごとの最悪偏差を報告する。各不変量は独立な乱数列
default_rng([seed, 番号]) を使うため、実行順や並列度に依存しない。
"""

import math
from collections.abc import Callable
from dataclasses import dataclass, field, replace
from typing import Any, Literal

import numpy as np
from scipy.special import erfc

from rsflow import __version__
from rsflow.services.algebra import (
    Element,
    TracialAlgebra,
    bounded_transform_function,
    derivative_of_function,
    duhamel_derivative,
    func_calc,
    gaussian_function,
    hermitian_with_spectrum,
    lp_norm,
    make_block_algebra,
    make_element,
    make_grid_algebra,
    nonnegative_projection,
    operator_norm,
    random_element,
    random_hermitian,
    random_unitary,
    trace,
)
from rsflow.services.errors import ParameterError, RsflowError
from rsflow.services.families import random_curved_path
from rsflow.services.gallery import (
    build_covering_path,
    build_gn_family,
    build_tan_wrap_loop,
    default_covering_spec,
)
from rsflow.services.index import (
    CornerOperator,
    breuer_index,
    corner_from_maps,
    suspension_path,
    verify_index_homotopy,
)
from rsflow.services.integral_formulas import (
    duhamel_trace_identity,
    endpoint_defect,
    eta1,
    sf_heat,
    sf_integral_chi,
    sf_resolvent_power,
    sf_resolvent_power_laplace,
)
from rsflow.services.log_manager import get_logger
from rsflow.services.models import QuadratureConfig
from rsflow.services.normalizing import (
    chi_e,
    chi_e_constant,
    chi_p,
    cp_constant,
    smooth_gap,
    validate_normalizing,
)
from rsflow.services.paths import OperatorPath, concat, conjugate, linear_path, reverse, scaled_path
from rsflow.services.specflow import (
    chi_homotopy_invariance,
    projection_shift_gap,
    regularize_endpoints,
    sf_analytic,
    sf_crossing,
    sf_winding,
)
from rsflow.services.winding import UnitaryLoop, rectangle_defect, winding_number

logger = get_logger("check")

BudgetName = Literal["small", "full"]


@dataclass(frozen=True)
class Budget:
    """検査の規模"""

    paths: int
    grid_paths: int
    formula_paths: int
    corners: int
    loops: int
    elements: int
    pairs: int
    derivative_cases: int
    tan_points: int
    normalizing_samples: int


BUDGETS: dict[str, Budget] = {
    "small": Budget(
        paths=4, grid_paths=2, formula_paths=2, corners=10, loops=4, elements=8,
        pairs=10, derivative_cases=4, tan_points=16, normalizing_samples=201,
    ),
    "full": Budget(
        paths=100, grid_paths=20, formula_paths=100, corners=100, loops=20, elements=50,
        pairs=50, derivative_cases=20, tan_points=32, normalizing_samples=2001,
    ),
}


@dataclass
class InvariantResult:
    """1つの不変量の測定結果

    measured ≤ tolerance（strict では <）で合格。
    """

    name: str
    measured: float | None
    tolerance: float
    cases: int
    passed: bool
    strict: bool = False
    error: dict | None = None

    def to_dict(self) -> dict:
        data = {
            "name": self.name,
            "measured": self.measured,
            "tolerance": self.tolerance,
            "comparison": "<" if self.strict else "<=",
            "cases": self.cases,
            "passed": self.passed,
        }
        if self.error is not None:
            data["error"] = self.error
        return data


@dataclass
class SelfcheckReport:
    """自己検査の結果"""

    seed: int
    budget: str
    results: list[InvariantResult] = field(default_factory=list)
    version: str = __version__

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    @property
    def failures(self) -> list[str]:
        return [r.name for r in self.results if not r.passed]

    def to_dict(self) -> dict[str, Any]:
        return {
            "status": "ok" if self.passed else "failed",
            "seed": self.seed,
            "budget": self.budget,
            "invariants": [r.to_dict() for r in self.results],
            "failures": self.failures,
            "version": self.version,
        }


# =====================================================
# 入力の生成
# =====================================================


def random_block_algebra(rng: np.random.Generator, max_blocks: int = 3) -> TracialAlgebra:
    """2〜max_blocks ブロック、全次元 ≤ 16、重み ∈ [0.1, 3] の環"""
    count = int(rng.integers(2, max_blocks + 1))
    dims = rng.integers(1, 6, size=count)
    weights = rng.uniform(0.1, 3.0, size=count)
    return make_block_algebra([(int(n), float(c)) for n, c in zip(dims, weights)])


def random_grid_algebra(rng: np.random.Generator, count: int = 8) -> TracialAlgebra:
    points = np.sort(rng.uniform(0.0, 1.0, size=count))
    return make_grid_algebra(points.tolist(), rng.uniform(0.1, 3.0, size=count).tolist())


def phase_loop(algebra: TracialAlgebra, rng: np.random.Generator) -> tuple[UnitaryLoop, float]:
    """s(t) = V diag(e^{2πi n_j t}) V*（n_j ∈ {−2, …, 2}）と巻き数 Σ c_k Σ n_j"""
    windings = [rng.integers(-2, 3, size=n) for n in algebra.dims]
    frames = random_unitary(algebra, rng).data
    expected = float(sum(c * float(np.sum(n)) for c, n in zip(algebra.block_weights, windings)))

    def value(t: float) -> Element:
        return make_element(
            algebra,
            [v @ np.diag(np.exp(2j * math.pi * n * t)) @ v.conj().T for v, n in zip(frames, windings)],
        )

    def derivative(t: float) -> Element:
        return make_element(
            algebra,
            [
                v @ np.diag(2j * math.pi * n * np.exp(2j * math.pi * n * t)) @ v.conj().T
                for v, n in zip(frames, windings)
            ],
        )

    return UnitaryLoop(value=value, derivative=derivative, name="phase"), expected


def perturbation_loop(algebra: TracialAlgebra, rng: np.random.Generator) -> UnitaryLoop:
    """s(t) = 1 + 0.3 sin(2πt)·K（‖K‖ = 1、巻き数 0）"""
    k = random_element(algebra, rng)
    k = k * (1.0 / operator_norm(k))
    one = algebra.identity()
    return UnitaryLoop(
        value=lambda t: one + k * (0.3 * math.sin(2 * math.pi * t)),
        derivative=lambda t: k * (0.6 * math.pi * math.cos(2 * math.pi * t)),
        name="perturbation",
    )


def random_corner(rng: np.random.Generator) -> CornerOperator:
    """ランク落ちを含むランダムな角作用素（重みは非整数）"""
    maps = []
    for _ in range(int(rng.integers(1, 4))):
        r_p, r_q = (int(x) for x in rng.integers(0, 4, size=2))
        inner = int(rng.integers(0, min(r_p, r_q) + 1))
        left = rng.normal(size=(r_p, inner)) + 1j * rng.normal(size=(r_p, inner))
        right = rng.normal(size=(inner, r_q)) + 1j * rng.normal(size=(inner, r_q))
        maps.append((float(rng.uniform(0.1, 3.0)), left @ right))
    return corner_from_maps(maps)


def scalar_path(start: float, end: float, weight: float = 1.0) -> OperatorPath:
    algebra = make_block_algebra([(1, weight)])
    return linear_path(algebra.scalar(start), algebra.scalar(end), name=f"scalar({start:g},{end:g})")


def _invertible_path(algebra: TracialAlgebra, rng: np.random.Generator) -> OperatorPath:
    """全区間で可逆なパス D_t = A + sin(πt)·C（‖C‖ = 0.2 < min |σ(A)|）"""
    a = hermitian_with_spectrum(algebra, rng)
    c = random_hermitian(algebra, rng)
    c = c * (0.2 / operator_norm(c))
    return OperatorPath(
        algebra=algebra,
        value=lambda t: a + c * math.sin(math.pi * t),
        derivative=lambda t: c * (math.pi * math.cos(math.pi * t)),
        name="invertible",
    )


def _unitary_path(algebra: TracialAlgebra, rng: np.random.Generator):
    """U_t = exp(itH)"""
    h = random_hermitian(algebra, rng)
    systems = [np.linalg.eigh(block) for block in h.data]

    def value(t: float) -> Element:
        return make_element(algebra, [(v * np.exp(1j * t * w)) @ v.conj().T for w, v in systems])

    def derivative(t: float) -> Element:
        return make_element(algebra, [(v * (1j * w * np.exp(1j * t * w))) @ v.conj().T for w, v in systems])

    return value, derivative


# =====================================================
# 不変量
# =====================================================

Check = Callable[[np.random.Generator, Budget, QuadratureConfig], tuple[float, int]]


def _normalizing_properties(rng, budget, quad):
    worst = 0.0
    functions = (smooth_gap(0.3), chi_e(), chi_p(3.0))
    for chi in functions:
        worst = max(worst, *validate_normalizing(chi, samples=budget.normalizing_samples).values())
    return worst, len(functions)


def _chi_e_constant(rng, budget, quad):
    return chi_e_constant().deviation, 1


def _cp_constants(rng, budget, quad):
    ps = (1.0, 1.5, 2.0, 3.0, 5.0)
    return max(cp_constant(p).deviation for p in ps), len(ps)


def _eta1_closed_form(rng, budget, quad):
    worst = 0.0
    algebra = make_block_algebra([(1, 1.0)])
    points = (-2.0, -0.5, 0.5, 2.0)
    for d in points:
        value = eta1(algebra.scalar(d), quad).value
        worst = max(worst, abs(value - math.copysign(1.0, d) * erfc(abs(d))))
    return worst, len(points)


def _winding_integer_loops(rng, budget, quad):
    worst = 0.0
    for _ in range(budget.loops):
        loop, expected = phase_loop(random_block_algebra(rng), rng)
        worst = max(worst, abs(winding_number(loop, quad).value - expected))
    return worst, budget.loops


def _winding_multiplication(rng, budget, quad):
    worst = 0.0
    for _ in range(budget.loops):
        algebra = random_block_algebra(rng)
        loop, _ = phase_loop(algebra, rng)
        loop = loop.product(perturbation_loop(algebra, rng))
        base = winding_number(loop, quad).value
        u = random_unitary(algebra, rng)
        worst = max(
            worst,
            abs(winding_number(loop.multiply_right(u), quad).value - base),
            abs(winding_number(loop.multiply_left(u), quad).value - base),
        )
    return worst, budget.loops


def _winding_conjugation(rng, budget, quad):
    worst = 0.0
    for _ in range(budget.loops):
        algebra = random_block_algebra(rng)
        loop, _ = phase_loop(algebra, rng)
        loop = loop.product(perturbation_loop(algebra, rng))
        g = random_element(algebra, rng) + algebra.scalar(5.0)
        worst = max(worst, abs(winding_number(loop.conjugate_by(g), quad).value - winding_number(loop, quad).value))
    return worst, budget.loops


def _winding_product(rng, budget, quad):
    worst = 0.0
    for _ in range(budget.loops):
        algebra = random_block_algebra(rng)
        first, w1 = phase_loop(algebra, rng)
        second, w2 = phase_loop(algebra, rng)
        second = second.product(perturbation_loop(algebra, rng))
        worst = max(worst, abs(winding_number(first.product(second), quad).value - (w1 + w2)))
    return worst, budget.loops


def _winding_rectangle(rng, budget, quad):
    worst = 0.0
    for _ in range(budget.loops):
        algebra = random_block_algebra(rng)
        loop, _ = phase_loop(algebra, rng)
        k = random_element(algebra, rng)
        k = k * (0.3 / operator_norm(k))
        one = algebra.identity()

        def h(x: float, y: float, loop=loop, k=k, one=one) -> Element:
            return loop.at(x) @ (one + k * math.sin(2 * math.pi * (x + y)))

        worst = max(worst, abs(rectangle_defect(h, 0.0, 1.0, 0.0, 1.0, quad)))
    return worst, budget.loops


def _cross_method(rng, budget, quad):
    worst = 0.0
    for _ in range(budget.paths):
        path = random_curved_path(random_block_algebra(rng), rng)
        values = [
            sf_winding(path, quad=quad).value,
            sf_analytic(path).value,
            sf_crossing(path).value,
        ]
        worst = max(worst, max(values) - min(values))
    return worst, budget.paths


def _grid_cross_method(rng, budget, quad):
    worst = 0.0
    for _ in range(budget.grid_paths):
        path = random_curved_path(random_grid_algebra(rng), rng)
        values = [
            sf_winding(path, quad=quad).value,
            sf_analytic(path).value,
            sf_crossing(path).value,
        ]
        worst = max(worst, max(values) - min(values))
    return worst, budget.grid_paths


def _integral_formulas(rng, budget, quad):
    worst = 0.0
    for _ in range(budget.formula_paths):
        path = random_curved_path(random_block_algebra(rng), rng)
        reference = sf_winding(path, quad=quad).value
        values = [sf_integral_chi(path, quad=quad).value, sf_heat(path, quad).value]
        values += [sf_resolvent_power(path, p, quad).value for p in (1.0, 2.0, 3.0, 5.0)]
        worst = max(worst, max(abs(v - reference) for v in values))
    return worst, budget.formula_paths


def _heat_closed_form(rng, budget, quad):
    return abs(sf_heat(scalar_path(-2.0, 3.0), quad).value - 1.0), 1


def _resolvent_closed_form(rng, budget, quad):
    return abs(sf_resolvent_power(scalar_path(-2.0, 3.0), 2.0, quad).value - 1.0), 1


def _resolvent_laplace_route(rng, budget, quad):
    path = scalar_path(-2.0, 3.0)
    direct = sf_resolvent_power(path, 3.0, quad).value
    return abs(sf_resolvent_power_laplace(path, 3.0, quad).value - direct), 1


def _eta_defect_identity(rng, budget, quad):
    worst = 0.0
    chi = chi_e().through_bounded_transform()
    for _ in range(budget.elements):
        n = int(rng.integers(1, 9))
        d = hermitian_with_spectrum(make_block_algebra([(n, float(rng.uniform(0.1, 3.0)))]), rng, 0.1, 3.0)
        defect = endpoint_defect(d, chi, quad)
        worst = max(worst, defect.discrepancy, abs(defect.value - eta1(d, quad).value))
    return worst, budget.elements


def _invertible_vanishes(rng, budget, quad):
    worst = 0.0
    for _ in range(budget.paths):
        path = _invertible_path(random_block_algebra(rng), rng)
        worst = max(worst, abs(sf_winding(path, quad=quad).value))
    return worst, budget.paths


def _concatenation(rng, budget, quad):
    worst = 0.0
    for _ in range(budget.paths):
        algebra = random_block_algebra(rng)
        first = random_curved_path(algebra, rng)
        middle = first.value(1.0)
        end = hermitian_with_spectrum(algebra, rng)
        bend = random_hermitian(algebra, rng, scale=0.5)
        second = OperatorPath(
            algebra=algebra,
            value=lambda t, m=middle, e=end, c=bend: m * (1.0 - t) + e * t + c * math.sin(math.pi * t),
            derivative=lambda t, m=middle, e=end, c=bend: e - m + c * (math.pi * math.cos(math.pi * t)),
        )
        joined = sf_winding(concat(first, second), quad=quad).value
        separate = sf_winding(first, quad=quad).value + sf_winding(second, quad=quad).value
        worst = max(worst, abs(joined - separate))
    return worst, budget.paths


def _reversal(rng, budget, quad):
    worst = 0.0
    for _ in range(budget.paths):
        path = random_curved_path(random_block_algebra(rng), rng)
        worst = max(worst, abs(sf_winding(reverse(path), quad=quad).value + sf_winding(path, quad=quad).value))
    return worst, budget.paths


def _unitary_conjugation(rng, budget, quad):
    worst = 0.0
    for _ in range(budget.paths):
        algebra = random_block_algebra(rng)
        path = random_curved_path(algebra, rng)
        unitary, derivative = _unitary_path(algebra, rng)
        moved = conjugate(path, unitary, derivative)
        worst = max(worst, abs(sf_winding(moved, quad=quad).value - sf_winding(path, quad=quad).value))
    return worst, budget.paths


def _normalizing_independence(rng, budget, quad):
    worst = 0.0
    for _ in range(budget.paths):
        path = random_curved_path(random_block_algebra(rng), rng)
        margin = min(path.endpoint_margins)
        report = chi_homotopy_invariance(
            path, smooth_gap(0.25 * margin), smooth_gap(0.75 * margin), (0.0, 0.5, 1.0), quad
        )
        worst = max(worst, report["max_deviation"])
    # χ_e は端点マージン > 1 のパスで比べる
    path = scalar_path(-2.0, 3.0, weight=0.7)
    worst = max(worst, abs(sf_winding(path, chi_e(), quad).value - sf_winding(path, quad=quad).value))
    return worst, budget.paths + 1


def _scaling(rng, budget, quad):
    worst = 0.0
    for _ in range(budget.paths):
        path = random_curved_path(random_block_algebra(rng), rng)
        factor = float(rng.uniform(0.2, 5.0))
        worst = max(worst, abs(sf_winding(scaled_path(path, factor), quad=quad).value - sf_winding(path, quad=quad).value))
    return worst, budget.paths


def _projection_gap(rng, budget, quad):
    worst = 0.0
    for _ in range(budget.pairs):
        n = int(rng.integers(2, 7))
        algebra = make_block_algebra([(n, 1.0)])
        v = random_unitary(algebra, rng).data[0]
        signs = rng.choice([-1.0, 1.0], size=n)
        involution = make_element(algebra, [(v * signs) @ v.conj().T], hermitian=True)
        a = random_hermitian(algebra, rng)
        a = a * (float(rng.uniform(0.05, 0.45)) / operator_norm(a))
        gap = projection_shift_gap(involution, a)
        worst = max(worst, 1.0 - gap / (2.0 * operator_norm(a)))
    return worst, budget.pairs


def _regularization(rng, budget, quad):
    weight = 0.7
    rising = scalar_path(0.0, 1.0, weight)
    falling_to_zero = scalar_path(-1.0, 0.0, weight)
    worst = 0.0
    for path, expected in ((rising, 0.0), (falling_to_zero, weight)):
        regularized, correction = regularize_endpoints(path, 0.5)
        worst = max(worst, abs(sf_winding(regularized, quad=quad).value - correction - expected))
    return worst, 2


def _suspension_index(rng, budget, quad):
    worst = 0.0
    for _ in range(budget.corners):
        corner = random_corner(rng)
        worst = max(worst, abs(sf_winding(suspension_path(corner), quad=quad).value - breuer_index(corner).value))
    return worst, budget.corners


def _index_homotopy(rng, budget, quad):
    worst = 0.0
    for _ in range(budget.loops):
        corner = random_corner(rng)
        maps = [(w, m) for m, w in zip(corner.compressed(), corner.algebra.block_weights)]

        def family(s: float, maps=maps) -> CornerOperator:
            return corner_from_maps([(w, m * (1.0 + s)) for w, m in maps])

        worst = max(worst, verify_index_homotopy(family, 5).max_deviation)
    # 核が変化しても指数は一定
    report = verify_index_homotopy(
        lambda s: corner_from_maps([(0.7, np.diag([s, 1.0]))]), [0.0, 0.5, 1.0]
    )
    return max(worst, report.max_deviation), budget.loops + 1


def _random_small_pair(rng: np.random.Generator, norm: float) -> tuple[Element, Element]:
    n = int(rng.integers(3, 5))
    algebra = make_block_algebra([(n, 1.0)])
    f = random_hermitian(algebra, rng)
    f = f * (norm / operator_norm(f))
    return f, random_hermitian(algebra, rng)


def _divided_vs_finite(rng, budget, quad):
    worst = 0.0
    step = 1e-5
    for _ in range(budget.derivative_cases):
        f, fdot = _random_small_pair(rng, 1.5)
        for g in (bounded_transform_function(), gaussian_function(1.0)):
            exact = derivative_of_function(g, f, fdot)
            numeric = (func_calc(g, f + fdot * step) - func_calc(g, f - fdot * step)) * (0.5 / step)
            worst = max(worst, operator_norm(exact - numeric) / max(operator_norm(exact), 1e-12))
    return worst, budget.derivative_cases


def _duhamel(rng, budget, quad):
    worst = 0.0
    g = gaussian_function(1.0)
    for _ in range(budget.derivative_cases):
        f, fdot = _random_small_pair(rng, 0.9)
        worst = max(worst, operator_norm(duhamel_derivative(g, f, fdot, quad) - derivative_of_function(g, f, fdot)))
    return worst, budget.derivative_cases


def _exponential_trace_identity(rng, budget, quad):
    worst = 0.0
    chi = smooth_gap(0.8)
    for _ in range(budget.derivative_cases):
        f, fdot = _random_small_pair(rng, 1.0)
        worst = max(worst, duhamel_trace_identity(chi, f, fdot)[2])
    return worst, budget.derivative_cases


def _tan_wrap(rng, budget, quad):
    worst = 0.0
    cases = 0
    for total in (1.0, 2.5):
        grid = make_grid_algebra(
            ((np.arange(budget.tan_points) + 0.5) / budget.tan_points).tolist(),
            [total / budget.tan_points] * budget.tan_points,
        )
        loop = build_tan_wrap_loop(grid, 0.0)
        for value in (sf_winding(loop, quad=quad).value, sf_crossing(loop).value, sf_analytic(loop).value):
            worst = max(worst, abs(value - total))
        telescoping = (
            trace(nonnegative_projection(loop.value(1.0))).real
            - trace(nonnegative_projection(loop.value(0.0))).real
        )
        # 端点射影の差は 0 で、スペクトル流とは一致しない
        worst = max(worst, abs(telescoping))
        cases += 1
    return worst, cases


def _covering(rng, budget, quad):
    worst = 0.0
    for m, k in ((4, 3), (5, 2)):
        covering = build_covering_path(default_covering_spec(m, k))
        gamma = sf_winding(covering.path, quad=quad).value
        full = sf_winding(covering.full_path, quad=quad).value
        worst = max(
            worst,
            abs(gamma - full / k),
            abs(gamma - sf_crossing(covering.path).value),
            covering.equivariance_residual,
        )
    return worst, 2


def _gn_decreasing(rng, budget, quad):
    rows = build_gn_family((1, 2, 4, 8)).rows
    steps = [b.resolvent_distance - a.resolvent_distance for a, b in zip(rows[:-1], rows[1:])]
    return max(steps), len(rows)


def _gn_lower_bound(rng, budget, quad):
    rows = build_gn_family((1, 2, 4, 8)).rows
    return 0.5 - min(r.calculus_distance for r in rows), len(rows)


def _lp_holder(rng, budget, quad):
    worst = -math.inf
    for _ in range(budget.elements):
        algebra = random_block_algebra(rng)
        s, a, t = (random_element(algebra, rng) for _ in range(3))
        p = float(rng.choice([1.0, 1.5, 2.0, 4.0]))
        lhs = lp_norm(s @ a @ t, p)
        rhs = operator_norm(s) * lp_norm(a, p) * operator_norm(t)
        worst = max(worst, (lhs - rhs) / rhs)
    return worst, budget.elements


@dataclass(frozen=True)
class Invariant:
    name: str
    tolerance: float
    check: Check
    strict: bool = False
    # 1e-8 級の比較では求積の許容差を締める
    tight: bool = False


INVARIANTS: tuple[Invariant, ...] = (
    Invariant("normalizing_function_properties", 1e-10, _normalizing_properties),
    Invariant("chi_e_normalizing_constant", 1e-10, _chi_e_constant),
    Invariant("cp_constant_gamma_identity", 1e-10, _cp_constants),
    Invariant("eta1_closed_form", 1e-8, _eta1_closed_form, tight=True),
    Invariant("winding_of_phase_loops", 1e-7, _winding_integer_loops),
    Invariant("winding_constant_multiplication", 1e-7, _winding_multiplication),
    Invariant("winding_conjugation", 1e-7, _winding_conjugation),
    Invariant("winding_product_homomorphism", 1e-7, _winding_product),
    Invariant("winding_rectangle_defect", 1e-6, _winding_rectangle),
    Invariant("sf_cross_method_agreement", 1e-6, _cross_method),
    Invariant("sf_grid_cross_method_agreement", 1e-6, _grid_cross_method),
    Invariant("integral_formula_agreement", 1e-6, _integral_formulas),
    Invariant("heat_formula_closed_form", 1e-8, _heat_closed_form, tight=True),
    Invariant("resolvent_power_closed_form", 1e-8, _resolvent_closed_form, tight=True),
    Invariant("resolvent_power_laplace_route", 1e-6, _resolvent_laplace_route),
    Invariant("eta_defect_identity", 1e-6, _eta_defect_identity),
    Invariant("invertible_path_vanishes", 1e-8, _invertible_vanishes, tight=True),
    Invariant("concatenation_additivity", 1e-8, _concatenation, tight=True),
    Invariant("reversal_antisymmetry", 1e-8, _reversal, tight=True),
    Invariant("unitary_conjugation_invariance", 1e-7, _unitary_conjugation),
    Invariant("normalizing_function_independence", 1e-7, _normalizing_independence),
    Invariant("positive_scaling_invariance", 1e-8, _scaling, tight=True),
    Invariant("projection_gap_bound", 1.0, _projection_gap, strict=True),
    Invariant("endpoint_regularization", 1e-8, _regularization, tight=True),
    Invariant("suspension_index", 1e-8, _suspension_index, tight=True),
    Invariant("index_homotopy_invariance", 1e-12, _index_homotopy),
    Invariant("divided_difference_vs_finite_difference", 1e-5, _divided_vs_finite),
    Invariant("duhamel_vs_divided_difference", 1e-6, _duhamel),
    Invariant("exponential_trace_identity", 1e-7, _exponential_trace_identity),
    Invariant("tan_wrap_total_weight", 1e-6, _tan_wrap),
    Invariant("covering_gamma_trace", 1e-8, _covering, tight=True),
    Invariant("gn_resolvent_decreasing", 0.0, _gn_decreasing, strict=True),
    Invariant("gn_calculus_lower_bound", 0.0, _gn_lower_bound),
    Invariant("lp_holder_inequality", 1e-12, _lp_holder),
)


def _finite_or_none(value: float) -> float | None:
    return float(value) if math.isfinite(value) else None


def run_invariant(
    index: int, invariant: Invariant, seed: int, budget: Budget, quad: QuadratureConfig
) -> InvariantResult:
    """1つの不変量を測定する。RsflowError は不合格として記録する。"""
    rng = np.random.default_rng([seed, index])
    config = replace(quad, tolerance=min(quad.tolerance, 1e-10)) if invariant.tight else quad
    try:
        measured, cases = invariant.check(rng, budget, config)
    except RsflowError as e:
        logger.error("不変量の測定に失敗しました name=%s reason=%s", invariant.name, e.reason)
        return InvariantResult(
            name=invariant.name, measured=None, tolerance=invariant.tolerance, cases=0,
            passed=False, strict=invariant.strict, error=e.to_dict(),
        )
    if invariant.strict:
        passed = measured < invariant.tolerance
    else:
        passed = measured <= invariant.tolerance
    level = logger.info if passed else logger.warning
    level(
        "不変量を測定しました name=%s measured=%.3e tolerance=%.1e passed=%s",
        invariant.name, measured, invariant.tolerance, passed,
    )
    return InvariantResult(
        name=invariant.name,
        measured=_finite_or_none(measured),
        tolerance=invariant.tolerance,
        cases=cases,
        passed=passed,
        strict=invariant.strict,
    )


def run_selfcheck(
    seed: int = 0,
    budget: BudgetName = "small",
    quad: QuadratureConfig | None = None,
    names: list[str] | None = None,
) -> SelfcheckReport:
    """全不変量（または names で選んだもの）を測定する。

    Args:
        seed: 乱数シード
        budget: "small" または "full"
        quad: 数値積分設定
        names: 測定する不変量名（None なら全て）

    Returns:
        不変量ごとの測定値と合否

    Raises:
        ParameterError: 未登録の不変量名が含まれる場合
    """
    if names is not None:
        unknown = sorted(set(names) - {invariant.name for invariant in INVARIANTS})
        if unknown:
            raise ParameterError(
                f"未登録の不変量です: {unknown[0]}", key=unknown[0], reason="unknown_invariant"
            )
    quad = quad or QuadratureConfig()
    sizes = BUDGETS[budget]
    report = SelfcheckReport(seed=seed, budget=budget)
    for index, invariant in enumerate(INVARIANTS):
        if names is not None and invariant.name not in names:
            continue
        report.results.append(run_invariant(index, invariant, seed, sizes, quad))
    logger.info(
        "自己検査が完了しました seed=%d budget=%s failures=%d", seed, budget, len(report.failures)
    )
    return report
