"""トレース付き環サービス

半有限フォン・ノイマン環 (N, τ) の卓上モデルを提供する。

- block: 重み付き行列ブロックの直和。τ(A) = Σ_k c_k tr(A_k)
- grid:  重み付き標本点上の掛け算作用素。τ(f) = Σ_i w_i f(x_i)

grid の値は ±inf を極マーカーとして許す（パスの内部でのみ使う）。
元は生成後に変更しない。
"""

import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from functools import cached_property
from typing import Literal

import numpy as np
from scipy import integrate as sp_integrate
from scipy.linalg import block_diag

from rsflow.services.errors import ConstructionError, DomainError, PreconditionError
from rsflow.services.log_manager import get_logger
from rsflow.services.models import QuadratureConfig
from rsflow.services.quadrature import adaptive_simpson, gauss_legendre

logger = get_logger("numeric")

# 公開閾値（読み取り専用）
HERMITIAN_TOL = 1e-12
RANK_TOL = 1e-8
EIGENVALUE_GAP_TOL = 1e-9
INVERTIBILITY_TOL = 1e-10
UNITARY_TOL = 1e-12

BackendKind = Literal["block", "grid"]


@dataclass(frozen=True)
class TracialAlgebra:
    """トレース付き環"""

    kind: BackendKind
    dims: tuple[int, ...] = ()
    block_weights: tuple[float, ...] = ()
    points: tuple[float, ...] = ()
    point_weights: tuple[float, ...] = ()

    @property
    def is_block(self) -> bool:
        return self.kind == "block"

    @property
    def total_dimension(self) -> int:
        """全次元（grid では標本点数）"""
        return sum(self.dims) if self.is_block else len(self.points)

    @cached_property
    def weights_array(self) -> np.ndarray:
        """ブロック重み（block）または測度重み（grid）の配列"""
        if self.is_block:
            return np.asarray(self.block_weights, dtype=float)
        return np.asarray(self.point_weights, dtype=float)

    @cached_property
    def points_array(self) -> np.ndarray:
        return np.asarray(self.points, dtype=float)

    def trace_of_identity(self) -> float:
        """τ(1)"""
        if self.is_block:
            return float(sum(n * c for n, c in zip(self.dims, self.block_weights)))
        return float(np.sum(self.weights_array))

    def identity(self) -> "Element":
        return self.scalar(1.0)

    def zero(self) -> "Element":
        return self.scalar(0.0)

    def scalar(self, value: complex) -> "Element":
        """スカラー倍の単位元"""
        hermitian = complex(value).imag == 0
        if self.is_block:
            data = tuple(value * np.eye(n, dtype=complex) for n in self.dims)
        else:
            fill = complex(value).real if hermitian else complex(value)
            data = (np.full(len(self.points), fill),)
        return Element(self, data, hermitian=hermitian)

    def element(self, data: Sequence, hermitian: bool = False) -> "Element":
        """ブロック列（block）または値の列（grid）から元を生成する。"""
        return make_element(self, data, hermitian=hermitian)

    def diagonal(self, diagonals: Sequence[Sequence[float]]) -> "Element":
        """ブロックごとの対角成分から実対角元を生成する（block のみ）。"""
        if not self.is_block:
            return self.element(diagonals, hermitian=True)
        return self.element([np.diag(np.asarray(d, dtype=complex)) for d in diagonals], hermitian=True)

    def function(self, values: Callable[[np.ndarray], np.ndarray] | np.ndarray) -> "Element":
        """grid 上の関数から実元を生成する。"""
        if self.is_block:
            raise ConstructionError("function() は grid バックエンド専用です")
        if callable(values):
            values = values(self.points_array)
        return self.element(values, hermitian=True)


def make_block_algebra(blocks: Sequence[tuple[int, float]]) -> TracialAlgebra:
    """行列ブロック直和の環を生成する。

    Args:
        blocks: (次元 n_k, 重み c_k) の列

    Returns:
        τ(A) = Σ_k c_k tr(A_k) を持つ環

    Raises:
        ConstructionError: 次元 < 1 または重み ≤ 0 の場合
    """
    if not blocks:
        raise ConstructionError("ブロックが空です", reason="empty_algebra")
    dims: list[int] = []
    weights: list[float] = []
    for i, (dim, weight) in enumerate(blocks):
        if int(dim) != dim or dim < 1:
            raise ConstructionError(
                f"ブロック次元は1以上の整数で指定してください: blocks[{i}]={dim}",
                reason="nonpositive_dimension",
            )
        if not math.isfinite(weight) or weight <= 0:
            raise ConstructionError(
                f"ブロック重みは正で指定してください: blocks[{i}]={weight}",
                reason="nonpositive_weight",
            )
        dims.append(int(dim))
        weights.append(float(weight))
    return TracialAlgebra(kind="block", dims=tuple(dims), block_weights=tuple(weights))


def make_grid_algebra(points: Sequence[float], weights: Sequence[float]) -> TracialAlgebra:
    """重み付き標本点の可換環を生成する。

    Raises:
        ConstructionError: 点の重複、重み ≤ 0、長さ不一致の場合
    """
    pts = [float(x) for x in points]
    wts = [float(w) for w in weights]
    if not pts:
        raise ConstructionError("標本点が空です", reason="empty_algebra")
    if len(pts) != len(wts):
        raise ConstructionError(
            f"点と重みの個数が一致しません: {len(pts)} != {len(wts)}",
            reason="length_mismatch",
        )
    if len(set(pts)) != len(pts):
        raise ConstructionError("標本点が重複しています", reason="duplicate_points")
    for i, w in enumerate(wts):
        if not math.isfinite(w) or w <= 0:
            raise ConstructionError(
                f"測度重みは正で指定してください: weights[{i}]={w}",
                reason="nonpositive_weight",
            )
    return TracialAlgebra(kind="grid", points=tuple(pts), point_weights=tuple(wts))


def uniform_grid_algebra(
    count: int, lower: float = 0.0, upper: float = 1.0, total_weight: float = 1.0
) -> TracialAlgebra:
    """[lower, upper) 上の等間隔・等重みの grid を生成する。"""
    if count < 1:
        raise ConstructionError(f"点数は1以上で指定してください: {count}", reason="empty_algebra")
    points = lower + (upper - lower) * (np.arange(count) + 0.5) / count
    return make_grid_algebra(points.tolist(), [total_weight / count] * count)


@dataclass(frozen=True, eq=False)
class Element:
    """環の元

    data は block ではブロック行列のタプル、grid では値配列1つのタプル。
    """

    algebra: TracialAlgebra
    data: tuple[np.ndarray, ...]
    hermitian: bool = False

    # 算術

    def _combine(self, other: "Element", op: Callable) -> tuple[np.ndarray, ...]:
        if other.algebra != self.algebra:
            raise ConstructionError("異なる環の元は演算できません", reason="algebra_mismatch")
        return tuple(op(a, b) for a, b in zip(self.data, other.data))

    def __add__(self, other: "Element") -> "Element":
        return Element(self.algebra, self._combine(other, np.add), self.hermitian and other.hermitian)

    def __sub__(self, other: "Element") -> "Element":
        return Element(self.algebra, self._combine(other, np.subtract), self.hermitian and other.hermitian)

    def __neg__(self) -> "Element":
        return Element(self.algebra, tuple(-a for a in self.data), self.hermitian)

    def __mul__(self, scalar: complex) -> "Element":
        if isinstance(scalar, Element):
            return self @ scalar
        hermitian = self.hermitian and complex(scalar).imag == 0
        return Element(self.algebra, tuple(scalar * a for a in self.data), hermitian)

    __rmul__ = __mul__

    def __matmul__(self, other: "Element") -> "Element":
        op = np.matmul if self.algebra.is_block else np.multiply
        return Element(self.algebra, self._combine(other, op), False)

    @property
    def adjoint(self) -> "Element":
        """共役転置 A*"""
        if self.algebra.is_block:
            data = tuple(a.conj().T for a in self.data)
        else:
            data = tuple(np.conj(a) for a in self.data)
        return Element(self.algebra, data, self.hermitian)

    @property
    def values(self) -> np.ndarray:
        """grid の値配列"""
        if self.algebra.is_block:
            raise ConstructionError("values は grid バックエンド専用です")
        return self.data[0]

    def has_poles(self) -> bool:
        return any(not np.all(np.isfinite(a)) for a in self.data)

    def to_dense(self) -> np.ndarray:
        """ブロック対角の稠密行列（grid では対角行列）"""
        if self.algebra.is_block:
            return block_diag(*self.data)
        return np.diag(self.values)

    def inverse(self) -> "Element":
        """逆元。特異値が INVERTIBILITY_TOL 以下なら PreconditionError。"""
        if smallest_singular_value(self) <= INVERTIBILITY_TOL:
            raise PreconditionError("元が可逆ではありません", reason="not_invertible")
        if self.algebra.is_block:
            data = tuple(np.linalg.inv(a) for a in self.data)
        else:
            data = (1.0 / self.values,)
        return Element(self.algebra, data, self.hermitian)

    # スペクトル

    @cached_property
    def eigensystem(self) -> tuple[tuple[np.ndarray, np.ndarray | None], ...]:
        """エルミート元の固有分解（ブロックごとの (固有値, 固有ベクトル)）"""
        if not self.hermitian:
            raise PreconditionError("エルミートでない元の固有分解はできません", reason="not_hermitian")
        if self.algebra.is_block:
            return tuple(np.linalg.eigh(a) for a in self.data)
        return ((np.real(self.values), None),)

    def weighted_spectrum(self) -> tuple[np.ndarray, np.ndarray]:
        """固有値とそれぞれのトレース重みの組 (λ, w)。τ(f(A)) = Σ w f(λ)。"""
        if self.algebra.is_block:
            eigs = [w for w, _ in self.eigensystem]
            weights = [np.full(len(w), c) for w, c in zip(eigs, self.algebra.block_weights)]
            return np.concatenate(eigs), np.concatenate(weights)
        return np.real(self.values), self.algebra.weights_array

    def margin(self) -> float:
        """0 からのスペクトルの距離（最小の |固有値|）"""
        eigs, _ = self.weighted_spectrum()
        return float(np.min(np.abs(eigs)))


def make_element(algebra: TracialAlgebra, data: Sequence, hermitian: bool = False) -> Element:
    """形状を検査して元を生成する。

    hermitian=True の場合、‖A − A*‖ ≤ HERMITIAN_TOL·‖A‖ なら (A + A*)/2 に対称化し、
    そうでなければ拒否する。grid のエルミート元は実数値でなければならない。

    Raises:
        ConstructionError: 形状不一致・エルミート性違反
    """
    if algebra.is_block:
        if len(data) != len(algebra.dims):
            raise ConstructionError(
                f"ブロック数が一致しません: {len(data)} != {len(algebra.dims)}",
                reason="shape_mismatch",
            )
        blocks = []
        for k, (block, n) in enumerate(zip(data, algebra.dims)):
            arr = np.array(block, dtype=complex)
            if arr.shape != (n, n):
                raise ConstructionError(
                    f"ブロック {k} の形状が一致しません: {arr.shape} != {(n, n)}",
                    reason="shape_mismatch",
                )
            if hermitian:
                arr = _symmetrize(arr, k)
            blocks.append(arr)
        return Element(algebra, tuple(blocks), hermitian)

    values = np.asarray(data[0] if _is_nested_grid(data) else data)
    if values.shape != (len(algebra.points),):
        raise ConstructionError(
            f"値の個数が一致しません: {values.shape} != {(len(algebra.points),)}",
            reason="shape_mismatch",
        )
    if hermitian:
        if np.iscomplexobj(values):
            finite = np.isfinite(values)
            if np.any(np.abs(values.imag[finite]) > HERMITIAN_TOL * max(_finite_max(values), 1.0)):
                raise ConstructionError("grid のエルミート元は実数値です", reason="not_hermitian")
            values = values.real
        values = values.astype(float)
    return Element(algebra, (values,), hermitian)


def _is_nested_grid(data: Sequence) -> bool:
    return len(data) == 1 and np.ndim(data[0]) == 1


def _finite_max(values: np.ndarray) -> float:
    finite = values[np.isfinite(values)]
    return float(np.max(np.abs(finite))) if finite.size else 0.0


def _symmetrize(arr: np.ndarray, index: int) -> np.ndarray:
    deviation = float(np.max(np.abs(arr - arr.conj().T))) if arr.size else 0.0
    scale = float(np.linalg.norm(arr, 2)) if arr.size else 0.0
    if deviation > HERMITIAN_TOL * scale:
        raise ConstructionError(
            f"ブロック {index} がエルミートではありません deviation={deviation:.3e}",
            reason="not_hermitian",
        )
    return 0.5 * (arr + arr.conj().T)


# =====================================================
# トレースとノルム
# =====================================================


def _require_finite(a: Element, operation: str) -> None:
    if a.has_poles():
        raise PreconditionError(
            f"極マーカーを含む元に {operation} は定義されません", reason="pole_marker"
        )


def trace(a: Element) -> complex:
    """τ(A)。ブロック順・点順の固定順序で和をとる。

    Raises:
        PreconditionError: 極マーカーを含む場合
    """
    _require_finite(a, "trace")
    alg = a.algebra
    if alg.is_block:
        total = 0j
        for block, weight in zip(a.data, alg.block_weights):
            total += weight * complex(np.trace(block))
    else:
        total = complex(np.dot(alg.weights_array, a.values))
    if a.hermitian:
        return complex(total.real, 0.0)
    return total


def operator_norm(a: Element) -> float:
    """作用素ノルム（最大特異値 / 最大絶対値）"""
    if a.algebra.is_block:
        return max(float(np.linalg.norm(block, 2)) for block in a.data)
    return float(np.max(np.abs(a.values)))


def smallest_singular_value(a: Element) -> float:
    if a.algebra.is_block:
        return min(float(np.linalg.svd(block, compute_uv=False)[-1]) for block in a.data)
    return float(np.min(np.abs(a.values)))


def _absolute_spectrum(a: Element) -> tuple[np.ndarray, np.ndarray]:
    """|A| の固有値（特異値）とトレース重み"""
    alg = a.algebra
    if alg.is_block:
        sv = [np.linalg.svd(block, compute_uv=False) for block in a.data]
        weights = [np.full(len(s), c) for s, c in zip(sv, alg.block_weights)]
        return np.concatenate(sv), np.concatenate(weights)
    return np.abs(a.values), alg.weights_array


def l1_norm(a: Element) -> float:
    """‖A‖₁ = ‖A‖ + τ(|A|)"""
    _require_finite(a, "l1_norm")
    sv, weights = _absolute_spectrum(a)
    return operator_norm(a) + float(np.dot(weights, sv))


def lp_norm(a: Element, p: float) -> float:
    """‖A‖_p = τ(|A|^p)^{1/p} + ‖A‖ (p ≥ 1)"""
    if p < 1:
        raise PreconditionError(f"p は1以上で指定してください: {p}", reason="invalid_exponent")
    _require_finite(a, "lp_norm")
    sv, weights = _absolute_spectrum(a)
    return float(np.dot(weights, sv**p)) ** (1.0 / p) + operator_norm(a)


# =====================================================
# 関数
# =====================================================


@dataclass(frozen=True, eq=False)
class FunctionSpec:
    """関数計算で使うスカラー関数

    limits は (f(-∞), f(+∞))。None はその極限が未定義であることを表す。
    fourier は g(x) = ∫ ĝ(λ) e^{iλx} dλ を満たす ĝ。
    """

    name: str
    func: Callable[[np.ndarray], np.ndarray]
    derivative: Callable[[np.ndarray], np.ndarray] | None = None
    limits: tuple[complex | None, complex | None] = (None, None)
    kind: str = "closed_form"  # closed_form | normalizing | callable
    fourier: Callable[[float], complex] | None = None
    fourier_cutoff: float | None = None
    support: tuple[float, float] | None = None
    derivative_step: float = 1e-6
    extra: dict = field(default_factory=dict)

    def __call__(self, x: np.ndarray | float) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        finite = np.isfinite(x)
        if np.all(finite):
            return self.func(x)
        out = np.empty(x.shape, dtype=complex)
        out[finite] = self.func(x[finite])
        for sign, limit in ((-1, self.limits[0]), (1, self.limits[1])):
            mask = np.isinf(x) & (np.sign(x) == sign)
            if np.any(mask):
                if limit is None:
                    raise DomainError(
                        f"関数 {self.name} は {'+' if sign > 0 else '-'}∞ で極限を持ちません"
                    )
                out[mask] = limit
        if np.all(np.imag(out) == 0):
            return out.real
        return out

    def prime(self, x: np.ndarray | float) -> np.ndarray:
        """導関数。±∞ では極限を持つ関数に限り 0 とする。"""
        x = np.asarray(x, dtype=float)
        finite = np.isfinite(x)
        out = np.zeros(x.shape, dtype=complex)
        if np.any(~finite):
            for sign, limit in ((-1, self.limits[0]), (1, self.limits[1])):
                if np.any(np.isinf(x) & (np.sign(x) == sign)) and limit is None:
                    raise DomainError(f"関数 {self.name} の導関数は ±∞ で定義されません")
        xf = x[finite]
        if self.derivative is not None:
            out[finite] = self.derivative(xf)
        else:
            h = self.derivative_step * np.maximum(1.0, np.abs(xf))
            out[finite] = (self.func(xf + h) - self.func(xf - h)) / (2 * h)
        if np.all(np.imag(out) == 0):
            return out.real
        return out

    def fourier_transform(self, lam: float) -> complex:
        """ĝ(λ)。閉じた形が無ければ台上の数値フーリエ変換を使う。"""
        if self.fourier is not None:
            return complex(self.fourier(lam))
        if self.support is None:
            raise DomainError(f"関数 {self.name} はフーリエデータを持ちません")
        cache = self.extra.setdefault("fourier_cache", {})
        lam = float(lam)
        if lam not in cache:
            cache[lam] = _numerical_fourier(self, lam)
        return cache[lam]


def _numerical_fourier(spec: FunctionSpec, lam: float) -> complex:
    lo, hi = spec.support
    if lam == 0.0:
        value, _ = sp_integrate.quad(lambda x: float(np.real(spec.func(np.asarray(x)))), lo, hi, limit=400)
        return complex(value / (2 * math.pi))
    real_part, _ = sp_integrate.quad(
        lambda x: float(np.real(spec.func(np.asarray(x)))), lo, hi,
        weight="cos", wvar=lam, limit=400, epsabs=1e-14,
    )
    imag_part, _ = sp_integrate.quad(
        lambda x: float(np.real(spec.func(np.asarray(x)))), lo, hi,
        weight="sin", wvar=lam, limit=400, epsabs=1e-14,
    )
    # ĝ(λ) = (1/2π) ∫ g(x) e^{-iλx} dx
    return complex(real_part, -imag_part) / (2 * math.pi)


def identity_function() -> FunctionSpec:
    return FunctionSpec(
        name="identity",
        func=lambda x: np.asarray(x, dtype=float).copy(),
        derivative=lambda x: np.ones_like(x, dtype=float),
    )


def polynomial_function(coefficients: Sequence[float]) -> FunctionSpec:
    """係数（低次から）で与えた多項式"""
    poly = np.polynomial.Polynomial(coefficients)
    deriv = poly.deriv()
    return FunctionSpec(
        name=f"polynomial{tuple(coefficients)}",
        func=lambda x: poly(np.asarray(x, dtype=float)),
        derivative=lambda x: deriv(np.asarray(x, dtype=float)),
        extra={"polynomial": poly},
    )


def bounded_transform_function() -> FunctionSpec:
    """x ↦ x(1+x²)^{-1/2}"""
    return FunctionSpec(
        name="bounded_transform",
        func=lambda x: x / np.sqrt(1.0 + x * x),
        derivative=lambda x: (1.0 + x * x) ** -1.5,
        limits=(-1.0, 1.0),
    )


def nonnegative_indicator() -> FunctionSpec:
    """1_{≥0}（0 は非負に数える）"""
    return FunctionSpec(
        name="indicator_nonnegative",
        func=lambda x: (np.asarray(x) >= 0).astype(float),
        derivative=lambda x: np.zeros_like(x, dtype=float),
        limits=(0.0, 1.0),
    )


def interval_indicator(eps: float) -> FunctionSpec:
    """1_{[-ε, ε]}"""
    return FunctionSpec(
        name=f"indicator[-{eps},{eps}]",
        func=lambda x: (np.abs(np.asarray(x)) <= eps).astype(float),
        derivative=lambda x: np.zeros_like(x, dtype=float),
        limits=(0.0, 0.0),
    )


def gaussian_function(sigma: float = 1.0) -> FunctionSpec:
    """g(x) = e^{-x²/(2σ²)}（フーリエデータは閉じた形）"""
    s2 = sigma * sigma

    def fourier(lam: float) -> complex:
        return sigma / math.sqrt(2 * math.pi) * math.exp(-0.5 * s2 * lam * lam)

    # |λ ĝ(λ)| < 1e-16 となる λ
    cutoff = math.sqrt(2 * math.log(1e16 * max(sigma, 1.0)) / s2) + 1.0
    return FunctionSpec(
        name=f"gaussian({sigma})",
        func=lambda x: np.exp(-0.5 * np.asarray(x) ** 2 / s2),
        derivative=lambda x: -np.asarray(x) / s2 * np.exp(-0.5 * np.asarray(x) ** 2 / s2),
        limits=(0.0, 0.0),
        fourier=fourier,
        fourier_cutoff=cutoff,
    )


def bump_function(radius: float = 6.0) -> FunctionSpec:
    """コンパクト台の滑らかなバンプ g(x) = exp(-1/(1-(x/R)²))（|x| < R）"""

    def func(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        s = 1.0 - (x / radius) ** 2
        out = np.zeros_like(x)
        inside = s > 0
        out[inside] = np.exp(-1.0 / s[inside])
        return out

    def derivative(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        s = 1.0 - (x / radius) ** 2
        out = np.zeros_like(x)
        inside = s > 0
        xi, si = x[inside], s[inside]
        out[inside] = np.exp(-1.0 / si) * (-2.0 * xi / radius**2) / si**2
        return out

    return FunctionSpec(
        name=f"bump({radius})",
        func=func,
        derivative=derivative,
        limits=(0.0, 0.0),
        support=(-radius, radius),
    )


def callable_function(
    func: Callable[[np.ndarray], np.ndarray],
    derivative: Callable[[np.ndarray], np.ndarray] | None = None,
    name: str = "user",
    limits: tuple[complex | None, complex | None] = (None, None),
) -> FunctionSpec:
    """利用者定義のスカラー関数。導関数が無ければ中心差分を使う。"""
    return FunctionSpec(name=name, func=func, derivative=derivative, limits=limits, kind="callable")


# =====================================================
# 関数計算と微分
# =====================================================


def func_calc(f: FunctionSpec, a: Element) -> Element:
    """関数計算 f(A)。

    block では各ブロックを固有分解して固有値に f を適用し、grid では各点に適用する
    （極マーカーは f(±∞) に写す）。

    Raises:
        PreconditionError: A がエルミートでない場合
        DomainError: 必要な点で f が定義されない場合
    """
    if not a.hermitian:
        raise PreconditionError("関数計算はエルミート元に限ります", reason="not_hermitian")
    alg = a.algebra
    if alg.is_block:
        blocks = []
        real = True
        for w, v in a.eigensystem:
            vals = np.asarray(f(w))
            real = real and not np.iscomplexobj(vals)
            blocks.append((v * vals) @ v.conj().T)
        return Element(alg, tuple(blocks), hermitian=real)
    vals = np.asarray(f(a.values))
    return Element(alg, (vals,), hermitian=not np.iscomplexobj(vals))


def bounded_transform(d: Element) -> Element:
    """F_D = D(1 + D²)^{-1/2}。極マーカーは ±1 に写る。"""
    return func_calc(bounded_transform_function(), d)


def divided_differences(g: FunctionSpec, eigenvalues: np.ndarray, gap: float = EIGENVALUE_GAP_TOL) -> np.ndarray:
    """第1階差分商の行列 g[λ_i, λ_j]。|λ_i − λ_j| < gap では g′ を使う。"""
    lam = np.asarray(eigenvalues, dtype=float)
    values = np.asarray(g(lam))
    diff = lam[:, None] - lam[None, :]
    close = np.abs(diff) < gap
    safe = np.where(close, 1.0, diff)
    quotient = (values[:, None] - values[None, :]) / safe
    midpoints = 0.5 * (lam[:, None] + lam[None, :])
    return np.where(close, np.asarray(g.prime(midpoints)), quotient)


def derivative_of_function(g: FunctionSpec, f: Element, fdot: Element) -> Element:
    """t ↦ g(F_t) の微分を Daleckii-Krein の差分商公式で計算する。

    F の固有基底で (i, j) 成分は g[λ_i, λ_j]·(Ḟ)_{ij}。grid では g′(F)·Ḟ
    （極マーカー上では 0）。

    Args:
        g: 微分可能な関数
        f: エルミート元 F
        fdot: 微分 Ḟ

    Returns:
        d/dt g(F_t)
    """
    alg = f.algebra
    if alg.is_block:
        blocks = []
        for (w, v), xdot in zip(f.eigensystem, fdot.data):
            local = v.conj().T @ xdot @ v
            blocks.append(v @ (divided_differences(g, w) * local) @ v.conj().T)
        hermitian = fdot.hermitian and all(
            not np.iscomplexobj(np.asarray(g(w))) for w, _ in f.eigensystem
        )
        return Element(alg, tuple(blocks), hermitian=hermitian)

    x = f.values
    xdot = fdot.values
    finite = np.isfinite(x) & np.isfinite(xdot)
    slope = np.asarray(g.prime(np.where(finite, x, 0.0)))
    out = np.where(finite, slope * np.where(finite, xdot, 0.0), 0.0)
    return Element(alg, (out,), hermitian=not np.iscomplexobj(out))


def _fourier_cutoff(g: FunctionSpec, scale: float, tol: float) -> float:
    """|λ ĝ(λ)|·scale の裾が tol を下回る λ を倍々探索で求める。"""
    if g.fourier_cutoff is not None:
        return g.fourier_cutoff
    lam = 4.0
    while lam < 4096.0:
        grid = np.linspace(lam, 2 * lam, 17)
        tail = max(abs(x * g.fourier_transform(x)) + abs(x * g.fourier_transform(-x)) for x in grid)
        if tail * lam * scale < tol:
            return lam
        lam *= 2
    logger.warning("フーリエデータの裾が十分に減衰しません function=%s", g.name)
    return lam


def duhamel_derivative(
    g: FunctionSpec,
    f: Element,
    fdot: Element,
    quad: QuadratureConfig | None = None,
) -> Element:
    """Duhamel（フーリエ）表示による d/dt g(F_t)。

    ∫∫ iλ ĝ(λ) e^{i(1−u)λF} Ḟ e^{iuλF} du dλ を、外側 λ を適応シンプソン、
    内側 u を Gauss-Legendre で計算する。

    Raises:
        PreconditionError: ‖F‖ > 1 の場合
        QuadratureError: 外側積分が収束しない場合
    """
    quad = quad or QuadratureConfig()
    if not f.hermitian:
        raise PreconditionError("F はエルミートでなければなりません", reason="not_hermitian")
    if operator_norm(f) > 1.0 + 1e-12:
        raise PreconditionError("‖F‖ ≤ 1 が必要です", reason="norm_exceeds_one")

    alg = f.algebra
    if alg.is_block:
        pieces = [(w, v, v.conj().T @ xdot @ v) for (w, v), xdot in zip(f.eigensystem, fdot.data)]
    else:
        pieces = [(f.values, None, fdot.values)]

    scale = max(float(np.max(np.abs(p[2]))) if p[2].size else 0.0 for p in pieces)
    if scale == 0.0:
        return Element(alg, tuple(np.zeros_like(x, dtype=complex) for x in fdot.data), hermitian=fdot.hermitian)

    cutoff = _fourier_cutoff(g, scale, quad.tolerance * quad.truncation_factor)

    def kernel(lam: float, w: np.ndarray, local: np.ndarray, commuting: bool) -> np.ndarray:
        if commuting:
            return np.exp(1j * lam * w) * local
        spread = float(np.max(w) - np.min(w)) if w.size else 0.0
        nodes = 16 + 2 * int(math.ceil(abs(lam) * spread))

        def inner(u: np.ndarray) -> np.ndarray:
            phase = (1.0 - u)[:, None, None] * w[None, :, None] + u[:, None, None] * w[None, None, :]
            return np.exp(1j * lam * phase)

        return gauss_legendre(inner, 0.0, 1.0, nodes) * local

    def integrand(lam: float) -> np.ndarray:
        weight = 1j * lam * g.fourier_transform(lam)
        parts = [kernel(lam, w, local, v is None).ravel() for w, v, local in pieces]
        return weight * np.concatenate(parts)

    result = adaptive_simpson(integrand, -cutoff, cutoff, quad)
    flat = result.value

    blocks = []
    offset = 0
    for w, v, local in pieces:
        size = local.size
        chunk = flat[offset:offset + size].reshape(local.shape)
        offset += size
        blocks.append(chunk if v is None else v @ chunk @ v.conj().T)
    if not alg.is_block and np.allclose(np.imag(blocks[0]), 0.0, atol=quad.tolerance):
        blocks[0] = np.real(blocks[0])
    return Element(alg, tuple(blocks), hermitian=False)


# =====================================================
# 射影と乱数生成
# =====================================================


def nonnegative_projection(a: Element) -> Element:
    """P = 1_{≥0}(A)"""
    return func_calc(nonnegative_indicator(), a)


def random_hermitian(algebra: TracialAlgebra, rng: np.random.Generator, scale: float = 1.0) -> Element:
    """ランダムなエルミート元"""
    if algebra.is_block:
        blocks = []
        for n in algebra.dims:
            z = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
            blocks.append(scale * 0.5 * (z + z.conj().T) / math.sqrt(max(n, 1)))
        return make_element(algebra, blocks, hermitian=True)
    return make_element(algebra, scale * rng.normal(size=len(algebra.points)), hermitian=True)


def random_element(algebra: TracialAlgebra, rng: np.random.Generator, scale: float = 1.0) -> Element:
    """ランダムな一般元（grid では実数値）"""
    if algebra.is_block:
        blocks = [
            scale * (rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))) / math.sqrt(n)
            for n in algebra.dims
        ]
        return make_element(algebra, blocks)
    return make_element(algebra, scale * rng.normal(size=len(algebra.points)))


def random_unitary(algebra: TracialAlgebra, rng: np.random.Generator) -> Element:
    """ランダムなユニタリ元（QR 分解による）"""
    if algebra.is_block:
        blocks = []
        for n in algebra.dims:
            z = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
            q, r = np.linalg.qr(z)
            blocks.append(q * (np.diag(r) / np.abs(np.diag(r))))
        return make_element(algebra, blocks)
    phases = np.exp(2j * math.pi * rng.random(len(algebra.points)))
    return Element(algebra, (phases,), hermitian=False)


def hermitian_with_spectrum(
    algebra: TracialAlgebra,
    rng: np.random.Generator,
    low: float = 0.3,
    high: float = 2.0,
) -> Element:
    """固有値の絶対値が [low, high] にあり符号がランダムなエルミート元（可逆）"""
    if algebra.is_block:
        blocks = []
        for n in algebra.dims:
            eigs = rng.uniform(low, high, size=n) * rng.choice([-1.0, 1.0], size=n)
            z = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
            q, _ = np.linalg.qr(z)
            blocks.append((q * eigs) @ q.conj().T)
        return make_element(algebra, blocks, hermitian=True)
    n = len(algebra.points)
    return make_element(
        algebra, rng.uniform(low, high, size=n) * rng.choice([-1.0, 1.0], size=n), hermitian=True
    )


def is_unitary(u: Element, tol: float = UNITARY_TOL) -> bool:
    """‖U*U − 1‖ ≤ tol"""
    residual = u.adjoint @ u - u.algebra.identity()
    return max(float(np.max(np.abs(x))) for x in residual.data) <= tol
