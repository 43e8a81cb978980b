"""正規化関数サービス

スペクトルを [-1, 1] に圧縮する奇関数・非減少関数 χ（χ(±∞) = ±1、χ⁻¹(0) = {0}）を提供する。

- smooth_gap(ε): |x| ≥ ε で符号関数に一致する C² 関数
- chi_e: 密度 (1−y²)^{-3/2} e^{1−1/(1−y²)} の正規化積分
- chi_p(p): 密度 (1−y²)^{(p−2)/2} の正規化積分

chi_e と chi_p は定義積分の適応求積で評価し、結果をメモ化する。
"""

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Literal

import numpy as np
from scipy.special import gamma

from rsflow.services.algebra import FunctionSpec
from rsflow.services.errors import ConsistencyError, PreconditionError
from rsflow.services.log_manager import get_logger
from rsflow.services.models import QuadratureConfig
from rsflow.services.quadrature import adaptive_simpson

logger = get_logger("numeric")

NormalizingKind = Literal["smooth_gap", "chi_e", "chi_p", "blend"]

# 定義積分の精度目標
_CHI_TOLERANCE = 1e-12
_CHI_QUAD = QuadratureConfig(tolerance=_CHI_TOLERANCE, max_depth=30, min_panels=8)
# 定数の二通りの計算の許容差
_CONSTANT_TOLERANCE = 1e-10


@dataclass(frozen=True)
class ConstantCheck:
    """正規化定数の二通りの計算結果"""

    quadrature: float
    closed_form: float

    @property
    def value(self) -> float:
        return self.closed_form

    @property
    def deviation(self) -> float:
        return abs(self.quadrature - self.closed_form)


def _chi_e_density(y: np.ndarray | float) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    s = 1.0 - y * y
    out = np.zeros_like(y)
    # s ≤ 1e-2 では密度は 1e-40 未満
    inside = s > 1e-2
    si = s[inside]
    out[inside] = si**-1.5 * np.exp(1.0 - 1.0 / si)
    return out


@lru_cache(maxsize=1)
def chi_e_constant() -> ConstantCheck:
    """C = ∫₀¹ (1−y²)^{-3/2} e^{1−1/(1−y²)} dy = √π/2

    Raises:
        ConsistencyError: 求積値と閉じた形が 1e-10 を超えて食い違う場合
    """
    quad = adaptive_simpson(lambda y: float(_chi_e_density(y)), 0.0, 1.0, _CHI_QUAD)
    check = ConstantCheck(quadrature=float(quad.value), closed_form=math.sqrt(math.pi) / 2)
    if check.deviation > _CONSTANT_TOLERANCE:
        raise ConsistencyError(
            f"χ_e の正規化定数が一致しません deviation={check.deviation:.3e}"
        )
    return check


@lru_cache(maxsize=64)
def cp_constant(p: float) -> ConstantCheck:
    """C_p = ∫₀¹ (1−y²)^{(p−2)/2} dy を求積と Beta 関数の恒等式で計算する。

    p < 2 では端点の特異性を y = sin θ で取り除く。

    Args:
        p: 冪（p ≥ 1）

    Returns:
        求積値と √π·Γ(p/2) / (2Γ((p+1)/2)) の組

    Raises:
        PreconditionError: p < 1 の場合
        ConsistencyError: 二通りの値が 1e-10 を超えて食い違う場合
    """
    if p < 1:
        raise PreconditionError(f"p は1以上で指定してください: {p}", reason="invalid_exponent")
    if p < 2:
        quad = adaptive_simpson(
            lambda theta: math.cos(theta) ** (p - 1), 0.0, math.pi / 2, _CHI_QUAD
        )
    else:
        quad = adaptive_simpson(
            lambda y: max(1.0 - y * y, 0.0) ** ((p - 2) / 2), 0.0, 1.0, _CHI_QUAD
        )
    closed = math.sqrt(math.pi) * gamma(p / 2) / (2 * gamma((p + 1) / 2))
    check = ConstantCheck(quadrature=float(quad.value), closed_form=float(closed))
    if check.deviation > _CONSTANT_TOLERANCE:
        raise ConsistencyError(
            f"C_p の二通りの値が一致しません p={p} deviation={check.deviation:.3e}"
        )
    return check


@lru_cache(maxsize=200_000)
def _chi_e_scalar(x: float) -> float:
    if x == 0.0:
        return 0.0
    if abs(x) >= 1.0:
        return math.copysign(1.0, x)
    quad = adaptive_simpson(lambda y: float(_chi_e_density(y)), 0.0, abs(x), _CHI_QUAD)
    return math.copysign(min(float(quad.value) / chi_e_constant().value, 1.0), x)


@lru_cache(maxsize=200_000)
def _chi_p_scalar(p: float, x: float) -> float:
    if x == 0.0:
        return 0.0
    if abs(x) >= 1.0:
        return math.copysign(1.0, x)
    # y = sin θ
    quad = adaptive_simpson(
        lambda theta: math.cos(theta) ** (p - 1), 0.0, math.asin(abs(x)), _CHI_QUAD
    )
    return math.copysign(min(float(quad.value) / cp_constant(p).value, 1.0), x)


def _psi(s: np.ndarray) -> np.ndarray:
    return (15.0 * s - 10.0 * s**3 + 3.0 * s**5) / 8.0


def _psi_prime(s: np.ndarray) -> np.ndarray:
    return 15.0 / 8.0 * (1.0 - s * s) ** 2


@dataclass(frozen=True, eq=False)
class NormalizingFunction:
    """正規化関数

    kind が "blend" の場合は components = (χ₀, χ₁) を weight = s で
    s·χ₁ + (1−s)·χ₀ と補間する。
    """

    kind: NormalizingKind
    eps: float | None = None
    p: float | None = None
    components: tuple["NormalizingFunction", "NormalizingFunction"] | None = None
    weight: float = 0.0

    @property
    def name(self) -> str:
        if self.kind == "smooth_gap":
            return f"smooth_gap({self.eps:g})"
        if self.kind == "chi_p":
            return f"chi_p({self.p:g})"
        if self.kind == "blend":
            chi0, chi1 = self.components
            return f"blend({chi0.name},{chi1.name};{self.weight:g})"
        return "chi_e"

    def __call__(self, x: np.ndarray | float) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "smooth_gap":
            clipped = np.clip(np.nan_to_num(x / self.eps, posinf=2.0, neginf=-2.0), -1.0, 1.0)
            return np.where(np.abs(x) >= self.eps, np.sign(x), _psi(clipped))
        if self.kind == "blend":
            chi0, chi1 = self.components
            return self.weight * chi1(x) + (1.0 - self.weight) * chi0(x)
        flat = x.ravel()
        if self.kind == "chi_e":
            values = [_chi_e_scalar(float(v)) if np.isfinite(v) else math.copysign(1.0, v) for v in flat]
        else:
            values = [
                _chi_p_scalar(float(self.p), float(v)) if np.isfinite(v) else math.copysign(1.0, v)
                for v in flat
            ]
        return np.asarray(values, dtype=float).reshape(x.shape)

    def prime(self, x: np.ndarray | float) -> np.ndarray:
        """導関数 χ′（±∞ と |x| ≥ 1 の平坦部では 0）"""
        x = np.asarray(x, dtype=float)
        finite = np.isfinite(x)
        xf = np.where(finite, x, 0.0)
        if self.kind == "smooth_gap":
            s = np.clip(xf / self.eps, -1.0, 1.0)
            out = np.where(np.abs(xf) < self.eps, _psi_prime(s) / self.eps, 0.0)
        elif self.kind == "blend":
            chi0, chi1 = self.components
            out = self.weight * chi1.prime(xf) + (1.0 - self.weight) * chi0.prime(xf)
        elif self.kind == "chi_e":
            out = _chi_e_density(xf) / chi_e_constant().value
        else:
            inside = np.abs(xf) < 1.0
            safe = np.where(inside, 1.0 - xf * xf, 1.0)
            out = np.where(inside, safe ** ((self.p - 2) / 2), 0.0) / cp_constant(self.p).value
        return np.where(finite, out, 0.0)

    def involution_radius(self) -> float:
        """χ² = 1 となる |x| の下限（smooth_gap では ε、chi_e / chi_p では 1）"""
        if self.kind == "smooth_gap":
            return float(self.eps)
        if self.kind == "blend":
            return max(c.involution_radius() for c in self.components)
        return 1.0

    def as_function(self) -> FunctionSpec:
        """関数計算用の FunctionSpec"""
        return FunctionSpec(
            name=self.name,
            func=self.__call__,
            derivative=self.prime,
            limits=(-1.0, 1.0),
            kind="normalizing",
        )

    def exponential(self) -> FunctionSpec:
        """x ↦ e^{πi(χ(x)+1)}（±∞ での値は 1）"""

        def func(x: np.ndarray) -> np.ndarray:
            return np.exp(1j * math.pi * (self(x) + 1.0))

        def derivative(x: np.ndarray) -> np.ndarray:
            return 1j * math.pi * self.prime(x) * func(x)

        return FunctionSpec(
            name=f"exp_pi_i({self.name}+1)",
            func=func,
            derivative=derivative,
            limits=(1.0, 1.0),
            kind="normalizing",
        )

    def through_bounded_transform(self) -> FunctionSpec:
        """x ↦ χ(x(1+x²)^{-1/2})"""

        def func(x: np.ndarray) -> np.ndarray:
            x = np.asarray(x, dtype=float)
            return self(x / np.sqrt(1.0 + x * x))

        def derivative(x: np.ndarray) -> np.ndarray:
            x = np.asarray(x, dtype=float)
            return self.prime(x / np.sqrt(1.0 + x * x)) * (1.0 + x * x) ** -1.5

        return FunctionSpec(
            name=f"{self.name}∘F",
            func=func,
            derivative=derivative,
            limits=(-1.0, 1.0),
            kind="normalizing",
        )

    def blend(self, other: "NormalizingFunction", s: float) -> "NormalizingFunction":
        """s·other + (1−s)·self"""
        if not 0.0 <= s <= 1.0:
            raise PreconditionError(f"補間パラメータは [0, 1] で指定してください: {s}")
        return NormalizingFunction(kind="blend", components=(self, other), weight=float(s))


def smooth_gap(eps: float) -> NormalizingFunction:
    """|x| ≥ ε で χ = sign(x) となる C² 正規化関数

    (−ε, ε) 上では ψ(x/ε), ψ(s) = (15s − 10s³ + 3s⁵)/8。
    """
    if not math.isfinite(eps) or eps <= 0:
        raise PreconditionError(f"ε は正で指定してください: {eps}", reason="invalid_gap")
    return NormalizingFunction(kind="smooth_gap", eps=float(eps))


def chi_e() -> NormalizingFunction:
    return NormalizingFunction(kind="chi_e")


def chi_p(p: float) -> NormalizingFunction:
    """χ_p(x) = (1/C_p) ∫₀ˣ (1−y²)^{(p−2)/2} dy（p ≥ 1）"""
    if p < 1:
        raise PreconditionError(f"p は1以上で指定してください: {p}", reason="invalid_exponent")
    return NormalizingFunction(kind="chi_p", p=float(p))


def make_normalizing(kind: str, eps: float | None = None, p: float | None = None) -> NormalizingFunction:
    """名前から正規化関数を生成する。"""
    if kind == "smooth_gap":
        if eps is None:
            raise PreconditionError("smooth_gap には eps が必要です", reason="missing_parameter")
        return smooth_gap(eps)
    if kind == "chi_e":
        return chi_e()
    if kind == "chi_p":
        return chi_p(2.0 if p is None else p)
    raise PreconditionError(f"不明な正規化関数です: {kind}", reason="unknown_normalizing")


def validate_normalizing(chi: NormalizingFunction, span: float = 3.0, samples: int = 2001) -> dict[str, float]:
    """密な標本で正規化関数の性質を測定する。

    Returns:
        性質ごとの最大偏差
        (odd, monotone, limits, zero_set, unit_at_one)
    """
    x = np.linspace(-span, span, samples)
    values = chi(x)
    odd = float(np.max(np.abs(values + values[::-1])))
    monotone = float(max(0.0, -np.min(np.diff(values))))
    limits = float(
        max(abs(chi(np.array([np.inf]))[0] - 1.0), abs(chi(np.array([-np.inf]))[0] + 1.0))
    )
    nonzero = x[x != 0.0]
    zero_set = float(max(0.0, -np.min(np.sign(nonzero) * chi(nonzero))))
    if np.any(chi(nonzero) == 0.0):
        zero_set = max(zero_set, 1.0)
    unit_at_one = float(
        max(abs(chi(np.array([1.0]))[0] - 1.0), abs(chi(np.array([-1.0]))[0] + 1.0))
    )
    result = {
        "odd": odd,
        "monotone": monotone,
        "limits": limits,
        "zero_set": zero_set,
        "unit_at_one": unit_at_one,
    }
    logger.debug("正規化関数を検査しました name=%s deviations=%s", chi.name, result)
    return result
