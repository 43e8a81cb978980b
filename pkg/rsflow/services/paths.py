"""作用素パスサービス

t ∈ [0, 1] ↦ エルミート元のパスと、その演算（連結・反転・ユニタリ共役・
有界変換・正の定数倍・直線ホモトピー・標本列の区分線形補間）を提供する。

grid バックエンドのパスは値が ±∞ を通過する点（ラップ）を
標本点ごとに (t, 向き) で注釈する。向き +1 は +∞ → −∞、−1 は −∞ → +∞。
"""

from collections.abc import Callable, Sequence
from dataclasses import dataclass, field, replace

import numpy as np

from rsflow.services.algebra import (
    INVERTIBILITY_TOL,
    UNITARY_TOL,
    Element,
    TracialAlgebra,
    bounded_transform,
    bounded_transform_function,
    derivative_of_function,
    is_unitary,
    operator_norm,
)
from rsflow.services.errors import ConstructionError, PreconditionError
from rsflow.services.log_manager import get_logger
from rsflow.services.winding import finite_difference

logger = get_logger("numeric")

# 連結時の端点一致の許容差
ENDPOINT_MATCH_TOL = 1e-10

Wrap = tuple[float, int]


@dataclass(frozen=True, eq=False)
class OperatorPath:
    """エルミート元のパス

    sided が True の場合、derivative は (t, side) を受け取り、区切り点では
    side = -1 で左微分、+1 で右微分を返す。
    """

    algebra: TracialAlgebra
    value: Callable[[float], Element]
    derivative: Callable | None = None
    breakpoints: tuple[float, ...] = ()
    wraps: tuple[tuple[Wrap, ...], ...] = ()
    sided: bool = False
    derivative_step: float = 1e-6
    name: str = "path"
    provenance: str = "builtin"
    metadata: dict = field(default_factory=dict, compare=False)

    def at(self, t: float) -> Element:
        return self.value(t)

    def tangent(self, t: float, side: int = 0) -> Element:
        """dD/dt（derivative が無ければ中心差分）"""
        if self.derivative is None:
            return finite_difference(self.value, t, self.derivative_step, 0.0, 1.0)
        if self.sided:
            return self.derivative(t, side)
        return self.derivative(t)

    @property
    def has_wraps(self) -> bool:
        return any(self.wraps)

    def all_wraps(self) -> list[tuple[float, int, int]]:
        """(t, 標本点番号, 向き) の列（t 順）"""
        items = [(t, i, d) for i, ws in enumerate(self.wraps) for t, d in ws]
        return sorted(items)

    def margin(self, t: float) -> float:
        """D_t のスペクトルの 0 からの距離"""
        return self.value(t).margin()

    @property
    def endpoint_margins(self) -> tuple[float, float]:
        return self.margin(0.0), self.margin(1.0)

    def endpoints_invertible(self, tol: float = INVERTIBILITY_TOL) -> tuple[bool, bool]:
        m0, m1 = self.endpoint_margins
        return m0 > tol, m1 > tol

    def check_wraps(self, delta: float = 1e-7) -> float:
        """ラップ注釈と値の符号の整合性を確認する。

        Returns:
            不整合なラップの重みの合計（0 なら整合）
        """
        mismatch = 0.0
        weights = self.algebra.weights_array
        for t, i, direction in self.all_wraps():
            before = self.value(max(t - delta, 0.0)).values[i]
            after = self.value(min(t + delta, 1.0)).values[i]
            expected = (1.0, -1.0) if direction > 0 else (-1.0, 1.0)
            if (np.sign(before), np.sign(after)) != expected:
                mismatch += float(weights[i])
        return mismatch

    def sampling_diagnostics(self, samples: int = 64) -> dict:
        """等間隔標本での連続性の診断（ラップを含む点は除外）"""
        ts = np.linspace(0.0, 1.0, samples + 1)
        values = [self.value(float(t)) for t in ts]
        jumps = []
        for left, right in zip(values[:-1], values[1:]):
            diffs = [
                np.abs(np.nan_to_num(b - a, nan=0.0, posinf=0.0, neginf=0.0))
                for a, b in zip(left.data, right.data)
                if np.all(np.isfinite(a)) and np.all(np.isfinite(b))
            ]
            jumps.append(max((float(np.max(d)) for d in diffs if d.size), default=0.0))
        return {
            "samples": samples,
            "max_step_change": max(jumps) if jumps else 0.0,
            "endpoint_margins": list(self.endpoint_margins),
        }


# =====================================================
# 生成
# =====================================================


def function_path(
    algebra: TracialAlgebra,
    value: Callable[[float], Element],
    derivative: Callable[[float], Element] | None = None,
    name: str = "path",
    breakpoints: Sequence[float] = (),
) -> OperatorPath:
    """値と導関数を与えてパスを生成する。"""
    return OperatorPath(
        algebra=algebra, value=value, derivative=derivative,
        breakpoints=tuple(breakpoints), name=name,
    )


def linear_path(start: Element, end: Element, name: str = "linear") -> OperatorPath:
    """D_t = (1−t)A + tB"""
    if start.algebra != end.algebra:
        raise ConstructionError("端点が異なる環に属しています", reason="algebra_mismatch")
    slope = end - start
    return OperatorPath(
        algebra=start.algebra,
        value=lambda t: start * (1.0 - t) + end * t,
        derivative=lambda t: slope,
        name=name,
    )


def sampled_path(samples: Sequence[tuple[float, Element]], name: str = "sampled") -> OperatorPath:
    """標本列 (t_i, D_i) の区分線形補間。t は [0, 1] に線形に正規化する。

    Raises:
        ConstructionError: 標本が2個未満、t が狭義単調増加でない場合
    """
    if len(samples) < 2:
        raise ConstructionError("標本は2個以上必要です", reason="too_few_samples")
    times = np.array([t for t, _ in samples], dtype=float)
    if np.any(np.diff(times) <= 0):
        raise ConstructionError("標本の t は狭義単調増加でなければなりません", reason="unordered_samples")
    if times[0] < 0 or times[-1] > 1:
        raise ConstructionError("標本の t は [0, 1] に含まれなければなりません", reason="samples_out_of_range")
    knots = (times - times[0]) / (times[-1] - times[0])
    elements = [e for _, e in samples]
    algebra = elements[0].algebra
    slopes = [
        (b - a) * (1.0 / (t1 - t0))
        for a, b, t0, t1 in zip(elements[:-1], elements[1:], knots[:-1], knots[1:])
    ]

    def segment(t: float, side: int = 0) -> int:
        index = int(np.searchsorted(knots, t, side="left" if side < 0 else "right")) - 1
        return min(max(index, 0), len(slopes) - 1)

    def value(t: float) -> Element:
        k = segment(t)
        frac = (t - knots[k]) / (knots[k + 1] - knots[k])
        return elements[k] * (1.0 - frac) + elements[k + 1] * frac

    def derivative(t: float, side: int = 0) -> Element:
        return slopes[segment(t, side)]

    return OperatorPath(
        algebra=algebra, value=value, derivative=derivative,
        breakpoints=tuple(float(k) for k in knots[1:-1]),
        sided=True, name=name, provenance="sampled",
    )


# =====================================================
# 演算
# =====================================================


def _max_abs(element: Element) -> float:
    return max(float(np.max(np.abs(x))) if x.size else 0.0 for x in element.data)


def concat(first: OperatorPath, second: OperatorPath) -> OperatorPath:
    """連結。前半を [0, ½]、後半を [½, 1] に再パラメータ化する。

    Raises:
        PreconditionError: first(1) ≠ second(0) の場合
    """
    if first.algebra != second.algebra:
        raise PreconditionError("異なる環のパスは連結できません", reason="algebra_mismatch")
    end, start = first.value(1.0), second.value(0.0)
    if first.has_wraps or second.has_wraps:
        finite = all(np.all(np.isfinite(x)) for x in end.data + start.data)
    else:
        finite = True
    residual = _max_abs(end - start) if finite else np.inf
    if residual > ENDPOINT_MATCH_TOL * max(1.0, operator_norm(end) if finite else 1.0):
        raise PreconditionError(
            f"連結する端点が一致しません residual={residual:.3e}", reason="endpoint_mismatch"
        )

    def value(t: float) -> Element:
        return first.value(2 * t) if t <= 0.5 else second.value(2 * t - 1)

    def derivative(t: float, side: int = 0) -> Element:
        if t < 0.5 or (t == 0.5 and side < 0):
            return first.tangent(2 * t, -1 if t == 0.5 else side) * 2.0
        return second.tangent(2 * t - 1, 1 if t == 0.5 else side) * 2.0

    wraps = _merge_wraps(
        first.algebra,
        [tuple((0.5 * t, d) for t, d in ws) for ws in first.wraps],
        [tuple((0.5 + 0.5 * t, d) for t, d in ws) for ws in second.wraps],
    )
    return OperatorPath(
        algebra=first.algebra, value=value, derivative=derivative,
        breakpoints=tuple(0.5 * b for b in first.breakpoints) + (0.5,)
        + tuple(0.5 + 0.5 * b for b in second.breakpoints),
        wraps=wraps, sided=True,
        name=f"{first.name}+{second.name}", provenance="derived",
    )


def _merge_wraps(algebra: TracialAlgebra, *parts: list) -> tuple[tuple[Wrap, ...], ...]:
    if algebra.is_block:
        return ()
    count = len(algebra.points)
    merged = []
    for i in range(count):
        ws: list[Wrap] = []
        for part in parts:
            if part:
                ws.extend(part[i])
        merged.append(tuple(sorted(ws)))
    return tuple(merged) if any(merged) else ()


def reverse(path: OperatorPath) -> OperatorPath:
    """向きの反転 t ↦ D_{1−t}"""
    return OperatorPath(
        algebra=path.algebra,
        value=lambda t: path.value(1.0 - t),
        derivative=lambda t, side=0: -path.tangent(1.0 - t, -side),
        breakpoints=tuple(sorted(1.0 - b for b in path.breakpoints)),
        wraps=tuple(tuple(sorted((1.0 - t, -d) for t, d in ws)) for ws in path.wraps),
        sided=True,
        name=f"reverse({path.name})",
        provenance="derived",
    )


def conjugate(
    path: OperatorPath,
    unitary: Callable[[float], Element],
    unitary_derivative: Callable[[float], Element] | None = None,
    check_points: Sequence[float] = (0.0, 0.5, 1.0),
) -> OperatorPath:
    """ユニタリ共役 t ↦ U_t* D_t U_t

    Raises:
        PreconditionError: U_t が許容差 1e-12 でユニタリでない場合
    """
    for t in check_points:
        if not is_unitary(unitary(t), UNITARY_TOL):
            raise PreconditionError(f"t={t} で U がユニタリではありません", reason="not_unitary")

    if not path.algebra.is_block:
        # 可換環では共役は恒等写像
        return replace(path, name=f"conj({path.name})", provenance="derived")

    def udot(t: float) -> Element:
        if unitary_derivative is not None:
            return unitary_derivative(t)
        return finite_difference(unitary, t, path.derivative_step, 0.0, 1.0)

    def value(t: float) -> Element:
        u = unitary(t)
        return _hermitian(u.adjoint @ path.value(t) @ u)

    def derivative(t: float, side: int = 0) -> Element:
        u, du, d = unitary(t), udot(t), path.value(t)
        return _hermitian(
            du.adjoint @ d @ u + u.adjoint @ path.tangent(t, side) @ u + u.adjoint @ d @ du
        )

    return OperatorPath(
        algebra=path.algebra, value=value, derivative=derivative,
        breakpoints=path.breakpoints, sided=True,
        name=f"conj({path.name})", provenance="derived",
    )


def _hermitian(element: Element) -> Element:
    data = tuple(0.5 * (x + x.conj().T) for x in element.data)
    return Element(element.algebra, data, hermitian=True)


def scaled_path(path: OperatorPath, factor: float) -> OperatorPath:
    """正の定数倍 t ↦ c·D_t"""
    if factor <= 0:
        raise PreconditionError(f"倍率は正で指定してください: {factor}", reason="nonpositive_scale")
    return OperatorPath(
        algebra=path.algebra,
        value=lambda t: path.value(t) * factor,
        derivative=lambda t, side=0: path.tangent(t, side) * factor,
        breakpoints=path.breakpoints, wraps=path.wraps, sided=True,
        name=f"{factor:g}*{path.name}", provenance="derived",
    )


def homotopy_path(first: OperatorPath, second: OperatorPath, s: float) -> OperatorPath:
    """直線ホモトピー D_{s,t} = (1−s)p(t) + s·q(t)"""
    if first.has_wraps or second.has_wraps:
        raise PreconditionError("ラップを持つパスの直線ホモトピーは定義されません", reason="wrapped_path")
    return OperatorPath(
        algebra=first.algebra,
        value=lambda t: first.value(t) * (1.0 - s) + second.value(t) * s,
        derivative=lambda t, side=0: first.tangent(t, side) * (1.0 - s) + second.tangent(t, side) * s,
        breakpoints=tuple(sorted(set(first.breakpoints) | set(second.breakpoints))),
        sided=True,
        name=f"homotopy({first.name},{second.name};{s:g})",
        provenance="derived",
    )


def bounded_transform_path(path: OperatorPath) -> OperatorPath:
    """F_t = D_t(1 + D_t²)^{-1/2}。微分は差分商公式で計算する。

    Raises:
        PreconditionError: ラップを持つパス（有界変換が不連続になる）
    """
    if path.has_wraps:
        raise PreconditionError(
            "ラップを持つパスの有界変換は連続ではありません", reason="wrapped_path"
        )
    transform = bounded_transform_function()
    return OperatorPath(
        algebra=path.algebra,
        value=lambda t: bounded_transform(path.value(t)),
        derivative=lambda t, side=0: derivative_of_function(
            transform, path.value(t), path.tangent(t, side)
        ),
        breakpoints=path.breakpoints, sided=True,
        name=f"F({path.name})", provenance="derived",
    )
