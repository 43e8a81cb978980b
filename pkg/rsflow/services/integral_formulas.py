"""積分公式サービス

スペクトル流の積分公式と η 不変量による端点補正を計算する。

- sf_integral_chi:     ½∫ τ(Ḟ_t χ′(F_t)) dt + 端点欠損
- sf_heat:             (1/√π)∫ τ(Ḋ_t e^{−D_t²}) dt + ½η₁(D_1) − ½η₁(D_0)
- sf_resolvent_power:  (1/2C_p)∫ τ(Ḋ_t (1+D_t²)^{−(p+1)/2}) dt + χ_p 端点欠損

端点欠損 τ(2P − 1 − χ(D)) は直接のトレースと [1, ∞) 上の積分表示の両方で計算する。
"""

import math
from dataclasses import dataclass, replace
from typing import Protocol

import numpy as np
from scipy.special import gamma

from rsflow.services.algebra import (
    Element,
    FunctionSpec,
    bounded_transform,
    derivative_of_function,
    func_calc,
    nonnegative_projection,
    operator_norm,
    trace,
)
from rsflow.services.errors import PreconditionError
from rsflow.services.log_manager import get_logger
from rsflow.services.models import MethodResult, QuadratureConfig
from rsflow.services.normalizing import NormalizingFunction, chi_e, chi_p, cp_constant
from rsflow.services.paths import OperatorPath, bounded_transform_path, scaled_path
from rsflow.services.quadrature import adaptive_simpson, integrate_to_infinity
from rsflow.services.specflow import require_invertible_endpoints

logger = get_logger("numeric")

__all__ = [
    "DefectResult",
    "cp_constant",
    "duhamel_trace_identity",
    "endpoint_defect",
    "eta1",
    "sf_heat",
    "sf_heat_scaled",
    "sf_integral_chi",
    "sf_resolvent_power",
    "sf_resolvent_power_laplace",
]

# 二通りの端点計算の食い違いを警告する閾値
ROUTE_TOLERANCE = 1e-6


class ScalarFunction(Protocol):
    def __call__(self, x: np.ndarray) -> np.ndarray: ...

    def prime(self, x: np.ndarray) -> np.ndarray: ...


def trace_with_function(weight: ScalarFunction, d: Element, ddot: Element) -> float:
    """τ(Ḋ·g(D))。grid の極マーカー上では 0 とする。"""
    alg = d.algebra
    if alg.is_block:
        total = 0.0
        for (w, v), dot, c in zip(d.eigensystem, ddot.data, alg.block_weights):
            local = np.real(np.einsum("ij,ji->i", v.conj().T @ dot, v))
            total += c * float(np.dot(np.asarray(weight(w), dtype=float), local))
        return total
    x, xdot = d.values, ddot.values
    finite = np.isfinite(x) & np.isfinite(xdot)
    safe_x = np.where(finite, x, 0.0)
    values = np.where(finite, np.asarray(weight(safe_x), dtype=float) * np.where(finite, xdot, 0.0), 0.0)
    return float(np.dot(alg.weights_array, values))


def _finite_spectrum(d: Element) -> tuple[np.ndarray, np.ndarray]:
    eigs, weights = d.weighted_spectrum()
    finite = np.isfinite(eigs)
    return eigs[finite], weights[finite]


# =====================================================
# η 不変量と端点欠損
# =====================================================


def eta1(d: Element, quad: QuadratureConfig | None = None) -> MethodResult:
    """切断 η 不変量 η₁(D) = (1/√π)∫₁^∞ t^{−1/2} τ(D e^{−tD²}) dt

    Raises:
        PreconditionError: 固有値 0 を持つ場合
    """
    quad = quad or QuadratureConfig()
    eigs, weights = _finite_spectrum(d)
    if eigs.size == 0:
        return MethodResult(value=0.0)
    margin = float(np.min(np.abs(eigs)))
    if margin == 0.0:
        raise PreconditionError("固有値 0 を持つ元の η₁ は発散します", reason="zero_eigenvalue")

    def integrand(t: float) -> float:
        return float(np.dot(weights, eigs * np.exp(-t * eigs * eigs))) / math.sqrt(t)

    scale = float(np.dot(weights, np.abs(eigs)))
    result = integrate_to_infinity(
        integrand, 1.0, quad, decay_rate=margin * margin, decay_scale=scale
    )
    return MethodResult(
        value=float(result.value) / math.sqrt(math.pi),
        error=result.error,
        diagnostics={"evaluations": result.evaluations},
    )


@dataclass(frozen=True)
class DefectResult:
    """端点欠損 τ(2P − 1 − χ(D)) と積分表示の値"""

    value: float
    integral: float
    discrepancy: float

    def __float__(self) -> float:
        return self.value


def endpoint_defect(
    d: Element,
    chi: ScalarFunction,
    quad: QuadratureConfig | None = None,
) -> DefectResult:
    """τ(2·1_{≥0}(D) − 1 − χ(D)) と ½∫₁^∞ t^{−1/2} τ(D χ′(√t D)) dt

    Args:
        d: 可逆なエルミート元
        chi: 奇関数（NormalizingFunction または FunctionSpec）
        quad: 数値積分設定

    Raises:
        PreconditionError: D が可逆でない場合
    """
    quad = quad or QuadratureConfig()
    eigs, weights = _finite_spectrum(d)
    if eigs.size and float(np.min(np.abs(eigs))) == 0.0:
        raise PreconditionError("端点が可逆ではありません", reason="endpoint_not_invertible")

    # 極マーカーは χ(±∞) = ±1 により寄与しない
    direct = float(np.dot(weights, 2.0 * (eigs >= 0) - 1.0 - np.asarray(chi(eigs), dtype=float)))

    def integrand(t: float) -> float:
        root = math.sqrt(t)
        return float(np.dot(weights, eigs * np.asarray(chi.prime(root * eigs), dtype=float))) / root

    if eigs.size:
        result = integrate_to_infinity(integrand, 1.0, quad)
        integral = 0.5 * float(result.value)
    else:
        integral = 0.0
    discrepancy = abs(direct - integral)
    if discrepancy > ROUTE_TOLERANCE:
        logger.warning("端点欠損の二通りの値が食い違います discrepancy=%.3e", discrepancy)
    return DefectResult(value=direct, integral=integral, discrepancy=discrepancy)


# =====================================================
# 積分公式
# =====================================================


def _integral_term(
    path: OperatorPath,
    weight: ScalarFunction,
    quad: QuadratureConfig,
) -> tuple[float, float, int]:
    def integrand(t: float, side: int = 0) -> float:
        return trace_with_function(weight, path.value(t), path.tangent(t, side))

    result = adaptive_simpson(
        integrand, 0.0, 1.0, quad, breakpoints=path.breakpoints,
        one_sided=integrand if path.sided else None,
    )
    return float(result.value), result.error, result.evaluations


def _is_bounded_path(path: OperatorPath) -> bool:
    if path.has_wraps:
        return False
    return all(operator_norm(path.value(t)) <= 1.0 + 1e-12 for t in (0.0, 0.5, 1.0))


def sf_integral_chi(
    path: OperatorPath,
    chi: NormalizingFunction | None = None,
    quad: QuadratureConfig | None = None,
    transform: bool | None = None,
) -> MethodResult:
    """χ 積分公式

    sf = ½∫ τ(Ḟ_t χ′(F_t)) dt + ½τ(2P₁ − 1 − χ(F₁)) − ½τ(2P₀ − 1 − χ(F₀))

    Args:
        path: パス（‖F_t‖ ≤ 1 でなければ有界変換を適用する）
        chi: χ(1) = 1 の奇関数（None なら chi_e）
        quad: 数値積分設定
        transform: True で常に有界変換、False で変換しない、None で自動判定

    Raises:
        PreconditionError: 端点が可逆でない場合
    """
    quad = quad or QuadratureConfig()
    chi = chi or chi_e()
    require_invertible_endpoints(path)
    if transform is None:
        transform = not _is_bounded_path(path)
    bounded = bounded_transform_path(path) if transform else path

    integral, error, evaluations = _integral_term(
        bounded, FunctionSpec(name=f"{chi.name}'", func=chi.prime), quad
    )
    start = endpoint_defect(bounded.value(0.0), chi, quad)
    end = endpoint_defect(bounded.value(1.0), chi, quad)
    value = 0.5 * integral + 0.5 * end.value - 0.5 * start.value
    return MethodResult(
        value=value,
        error=0.5 * error,
        diagnostics={
            "normalizing": chi.name,
            "bounded_transform_applied": bool(transform),
            "integral_term": 0.5 * integral,
            "endpoint_terms": [0.5 * start.value, 0.5 * end.value],
            "endpoint_integral_discrepancy": max(start.discrepancy, end.discrepancy),
            "evaluations": evaluations,
        },
    )


def _heat_weight() -> FunctionSpec:
    return FunctionSpec(name="exp(-x^2)", func=lambda x: np.exp(-np.asarray(x, dtype=float) ** 2))


def sf_heat(path: OperatorPath, quad: QuadratureConfig | None = None) -> MethodResult:
    """熱核公式

    sf = (1/√π)∫ τ(Ḋ_t e^{−D_t²}) dt + ½τ(2P₁ − 1 − χ_e(F₁)) − ½τ(2P₀ − 1 − χ_e(F₀))

    端点項は χ_e 欠損と ½η₁ の二通りで計算して比較する。
    """
    quad = quad or QuadratureConfig()
    require_invertible_endpoints(path)
    integral, error, evaluations = _integral_term(path, _heat_weight(), quad)
    integral /= math.sqrt(math.pi)

    chi_f = chi_e().through_bounded_transform()
    d0, d1 = path.value(0.0), path.value(1.0)
    defect0 = endpoint_defect(d0, chi_f, quad).value
    defect1 = endpoint_defect(d1, chi_f, quad).value
    eta0 = eta1(d0, quad).value
    eta_1 = eta1(d1, quad).value
    route_gap = max(abs(defect0 - eta0), abs(defect1 - eta_1))
    if route_gap > ROUTE_TOLERANCE:
        logger.warning("熱核公式の端点項が二通りで食い違います gap=%.3e", route_gap)

    value = integral + 0.5 * defect1 - 0.5 * defect0
    return MethodResult(
        value=value,
        error=error / math.sqrt(math.pi),
        diagnostics={
            "integral_term": integral,
            "endpoint_terms_chi_e": [0.5 * defect0, 0.5 * defect1],
            "endpoint_terms_eta": [0.5 * eta0, 0.5 * eta_1],
            "endpoint_route_discrepancy": route_gap,
            "evaluations": evaluations,
        },
    )


def sf_heat_scaled(path: OperatorPath, s: float, quad: QuadratureConfig | None = None) -> MethodResult:
    """熱核公式を √s·D_t に適用する（sf は s > 0 によらない）"""
    return sf_heat(scaled_path(path, math.sqrt(s)), quad)


def sf_resolvent_power(
    path: OperatorPath, p: float, quad: QuadratureConfig | None = None
) -> MethodResult:
    """レゾルベント冪公式

    sf = (1/2C_p)∫ τ(Ḋ_t (1+D_t²)^{−(p+1)/2}) dt
         + ½τ(2P₁ − 1 − χ_p(F₁)) − ½τ(2P₀ − 1 − χ_p(F₀))

    Raises:
        PreconditionError: p < 1、または端点が可逆でない場合
    """
    if p < 1:
        raise PreconditionError(f"p は1以上で指定してください: {p}", reason="invalid_exponent")
    quad = quad or QuadratureConfig()
    require_invertible_endpoints(path)
    constant = cp_constant(float(p))
    weight = FunctionSpec(
        name=f"(1+x^2)^-{(p + 1) / 2:g}",
        func=lambda x: (1.0 + np.asarray(x, dtype=float) ** 2) ** (-(p + 1) / 2),
    )
    integral, error, evaluations = _integral_term(path, weight, quad)
    integral /= 2 * constant.value

    chi = chi_p(p)
    f0 = bounded_transform(path.value(0.0))
    f1 = bounded_transform(path.value(1.0))
    defect0 = _direct_defect(f0, chi)
    defect1 = _direct_defect(f1, chi)
    value = integral + 0.5 * defect1 - 0.5 * defect0
    return MethodResult(
        value=value,
        error=error / (2 * constant.value),
        diagnostics={
            "p": float(p),
            "cp_quadrature": constant.quadrature,
            "cp_closed_form": constant.closed_form,
            "integral_term": integral,
            "endpoint_terms": [0.5 * defect0, 0.5 * defect1],
            "evaluations": evaluations,
        },
    )


def _direct_defect(f: Element, chi: NormalizingFunction) -> float:
    """τ(2·1_{≥0}(F) − 1 − χ(F))"""
    projection = nonnegative_projection(f)
    defect = projection * 2.0 - f.algebra.identity() - func_calc(chi.as_function(), f)
    return trace(defect).real


def sf_resolvent_power_laplace(
    path: OperatorPath, p: float, quad: QuadratureConfig | None = None
) -> MethodResult:
    """レゾルベント冪公式の積分項をラプラス変換で熱核データから再構成する。

    (1+x²)^{−(p+1)/2} = Γ((p+1)/2)⁻¹ ∫₀^∞ s^{(p−1)/2} e^{−s} e^{−sx²} ds から、積分項は
    (2/Γ(p/2)) ∫₀^∞ r^{p−1} e^{−r²} H(r²) dr に等しい。ここで H(s) は √s·D_t に対する
    熱核公式の積分項。端点項は直接の公式と共通。
    """
    if p < 1:
        raise PreconditionError(f"p は1以上で指定してください: {p}", reason="invalid_exponent")
    quad = quad or QuadratureConfig()
    require_invertible_endpoints(path)
    inner_quad = quad
    outer_quad = replace(quad, min_panels=8)

    def heat_term(r: float) -> float:
        if r == 0.0:
            return 0.0
        scaled = scaled_path(path, r)
        value, _, _ = _integral_term(scaled, _heat_weight(), inner_quad)
        return value / math.sqrt(math.pi)

    cutoff = math.sqrt(-math.log(quad.tolerance * quad.truncation_factor)) + 1.0
    outer = adaptive_simpson(
        lambda r: r ** (p - 1) * math.exp(-r * r) * heat_term(r), 0.0, cutoff, outer_quad
    )
    integral = 2.0 * float(outer.value) / gamma(p / 2)

    chi = chi_p(p)
    defect0 = _direct_defect(bounded_transform(path.value(0.0)), chi)
    defect1 = _direct_defect(bounded_transform(path.value(1.0)), chi)
    return MethodResult(
        value=integral + 0.5 * defect1 - 0.5 * defect0,
        error=outer.error,
        diagnostics={"p": float(p), "integral_term": integral, "cutoff": cutoff},
    )


def duhamel_trace_identity(
    chi: NormalizingFunction, f: Element, fdot: Element
) -> tuple[complex, complex, float]:
    """τ(e^{−πi(χ(F)+1)}·d/dt e^{πi(χ(F_t)+1)}) と iπ·τ(Ḟ χ′(F)) の組と差"""
    exp_chi = chi.exponential()
    u = func_calc(exp_chi, f)
    udot = derivative_of_function(exp_chi, f, fdot)
    lhs = trace(u.adjoint @ udot)
    rhs = 1j * math.pi * trace_with_function(
        FunctionSpec(name=f"{chi.name}'", func=chi.prime), f, fdot
    )
    return lhs, rhs, abs(lhs - rhs)
