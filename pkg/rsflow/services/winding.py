"""巻き数サービス

1 + トレース類の形の可逆元のループ s: [a, b] → Gl に対し
w(s) = (2πi)⁻¹ ∫ τ(s⁻¹ s′) dt を適応求積で計算する。
"""

import math
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np

from rsflow.services.algebra import INVERTIBILITY_TOL, Element, smallest_singular_value, trace
from rsflow.services.errors import PreconditionError
from rsflow.services.log_manager import get_logger
from rsflow.services.models import QuadratureConfig
from rsflow.services.quadrature import QuadratureResult, adaptive_simpson

logger = get_logger("numeric")

# 閉ループ判定の許容差
CLOSED_TOL = 1e-10

ValueFn = Callable[[float], Element]


def finite_difference(value: ValueFn, t: float, step: float, a: float, b: float) -> Element:
    """中心差分（区間端では片側差分）による微分"""
    h = step * max(1.0, abs(t))
    if t - h < a:
        return (value(t + h) - value(t)) * (1.0 / h)
    if t + h > b:
        return (value(t) - value(t - h)) * (1.0 / h)
    return (value(t + h) - value(t - h)) * (1.0 / (2 * h))


@dataclass(frozen=True)
class UnitaryLoop:
    """可逆元のループ（またはパス）

    derivative が None の場合は刻み derivative_step の中心差分を使う。
    sided が True の場合、derivative は (t, side) を受け取り区切り点で片側微分を返す。
    """

    value: ValueFn
    derivative: ValueFn | None = None
    a: float = 0.0
    b: float = 1.0
    breakpoints: tuple[float, ...] = ()
    derivative_step: float = 1e-6
    name: str = "loop"
    sided: bool = False

    def at(self, t: float) -> Element:
        return self.value(t)

    def tangent(self, t: float, side: int = 0) -> Element:
        if self.derivative is not None:
            return self.derivative(t, side) if self.sided else self.derivative(t)
        return finite_difference(self.value, t, self.derivative_step, self.a, self.b)

    def closure_residual(self) -> float:
        """‖s(b) − s(a)‖（成分の最大絶対値）"""
        diff = self.value(self.b) - self.value(self.a)
        return max(float(np.max(np.abs(x))) if x.size else 0.0 for x in diff.data)

    @property
    def closed(self) -> bool:
        return self.closure_residual() <= CLOSED_TOL

    # ループの演算

    def multiply_right(self, u: Element) -> "UnitaryLoop":
        """t ↦ s(t)U"""
        return UnitaryLoop(
            value=lambda t: self.value(t) @ u,
            derivative=lambda t: self.tangent(t) @ u,
            a=self.a, b=self.b, breakpoints=self.breakpoints,
            derivative_step=self.derivative_step, name=f"{self.name}*U",
        )

    def multiply_left(self, u: Element) -> "UnitaryLoop":
        """t ↦ U s(t)"""
        return UnitaryLoop(
            value=lambda t: u @ self.value(t),
            derivative=lambda t: u @ self.tangent(t),
            a=self.a, b=self.b, breakpoints=self.breakpoints,
            derivative_step=self.derivative_step, name=f"U*{self.name}",
        )

    def conjugate_by(self, u: Element) -> "UnitaryLoop":
        """t ↦ U⁻¹ s(t) U"""
        inverse = u.inverse()
        return self.multiply_right(u).multiply_left(inverse)

    def product(self, other: "UnitaryLoop") -> "UnitaryLoop":
        """各点積 t ↦ s₁(t)s₂(t)（同じパラメータ区間）"""
        if (self.a, self.b) != (other.a, other.b):
            raise PreconditionError("パラメータ区間が一致しません", reason="interval_mismatch")
        return UnitaryLoop(
            value=lambda t: self.value(t) @ other.value(t),
            derivative=lambda t: self.tangent(t) @ other.value(t) + self.value(t) @ other.tangent(t),
            a=self.a, b=self.b,
            breakpoints=tuple(sorted(set(self.breakpoints) | set(other.breakpoints))),
            derivative_step=self.derivative_step, name=f"{self.name}.{other.name}",
        )

    def concat(self, other: "UnitaryLoop") -> "UnitaryLoop":
        """連結。other は [b, b + (other.b − other.a)] に平行移動する。"""
        shift = self.b - other.a
        end = other.b + shift

        def value(t: float) -> Element:
            return self.value(t) if t <= self.b else other.value(t - shift)

        def derivative(t: float) -> Element:
            return self.tangent(t) if t < self.b else other.tangent(t - shift)

        return UnitaryLoop(
            value=value, derivative=derivative, a=self.a, b=end,
            breakpoints=self.breakpoints + (self.b,) + tuple(x + shift for x in other.breakpoints),
            derivative_step=self.derivative_step, name=f"{self.name}+{other.name}",
        )

    def reparameterize(
        self, phi: Callable[[float], float], dphi: Callable[[float], float]
    ) -> "UnitaryLoop":
        """t ↦ s(φ(t))。φ は [a, b] の単調な全単射。"""
        return UnitaryLoop(
            value=lambda t: self.value(phi(t)),
            derivative=lambda t: self.tangent(phi(t)) * dphi(t),
            a=self.a, b=self.b, derivative_step=self.derivative_step,
            name=f"{self.name}∘φ",
        )


@dataclass(frozen=True)
class WindingResult:
    """巻き数と求積の診断情報"""

    value: float
    imaginary: float
    quadrature: QuadratureResult
    diagnostics: dict = field(default_factory=dict)

    def __float__(self) -> float:
        return self.value


def log_derivative_trace(s: Element, sdot: Element, t: float) -> complex:
    """τ(s⁻¹ s′)

    Raises:
        PreconditionError: s が t で可逆でない場合
    """
    if smallest_singular_value(s) <= INVERTIBILITY_TOL:
        raise PreconditionError(f"t={t:.12g} でループが可逆ではありません", reason="not_invertible")
    alg = s.algebra
    if alg.is_block:
        total = 0j
        for block, dblock, weight in zip(s.data, sdot.data, alg.block_weights):
            total += weight * complex(np.trace(np.linalg.solve(block, dblock)))
        return total
    return trace(Element(alg, (sdot.values / s.values,)))


def winding_number(loop: UnitaryLoop, quad: QuadratureConfig | None = None) -> WindingResult:
    """ループの巻き数 (2πi)⁻¹ ∫ τ(s⁻¹ s′) dt を計算する。

    Args:
        loop: 可逆元のループ
        quad: 数値積分設定

    Returns:
        巻き数（実部）と虚部・推定誤差

    Raises:
        PreconditionError: 非可逆な標本点がある場合
        QuadratureError: 求積が収束しない場合
    """
    quad = quad or QuadratureConfig()

    def integrand(t: float, side: int = 0) -> complex:
        s = loop.at(t)
        return log_derivative_trace(s, loop.tangent(t, side), t) / (2j * math.pi)

    result = adaptive_simpson(
        integrand, loop.a, loop.b, quad,
        breakpoints=loop.breakpoints,
        one_sided=integrand if loop.sided else None,
    )
    raw = complex(result.value)
    diagnostics = {"closed": loop.closed}
    if diagnostics["closed"] and abs(raw.imag) > max(quad.tolerance, result.error):
        logger.warning(
            "閉ループの巻き数に虚部が残っています loop=%s imaginary=%.3e", loop.name, raw.imag
        )
        diagnostics["imaginary_exceeds_tolerance"] = True
    logger.debug(
        "巻き数を計算しました loop=%s value=%.12g evaluations=%d",
        loop.name, raw.real, result.evaluations,
    )
    return WindingResult(value=raw.real, imaginary=raw.imag, quadrature=result, diagnostics=diagnostics)


def rectangle_defect(
    h: Callable[[float, float], Element],
    a: float,
    b: float,
    c: float,
    d: float,
    quad: QuadratureConfig | None = None,
    derivative_step: float = 1e-6,
) -> float:
    """長方形の4辺の巻き数の符号付き和

    w(h(·, c)) + w(h(b, ·)) − w(h(a, ·)) − w(h(·, d)) を返す（ホモトピー不変性の証明書）。
    """
    quad = quad or QuadratureConfig()

    def edge(value: ValueFn, lo: float, hi: float, name: str) -> float:
        loop = UnitaryLoop(value=value, a=lo, b=hi, derivative_step=derivative_step, name=name)
        return winding_number(loop, quad).value

    bottom = edge(lambda x: h(x, c), a, b, "bottom")
    right = edge(lambda y: h(b, y), c, d, "right")
    left = edge(lambda y: h(a, y), c, d, "left")
    top = edge(lambda x: h(x, d), a, b, "top")
    defect = bottom + right - left - top
    logger.debug("長方形欠損を計算しました defect=%.3e", defect)
    return defect
