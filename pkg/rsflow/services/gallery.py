"""デモ族サービス

スペクトル流の挙動を示す三つの族を構成する。

- tan ラップループ: grid 上の f_t(x) = tan(π(t − x − offset))。±∞ を通過する非有界な族
- 被覆グラフ: 長さ m の閉路の k 重被覆上の同変な重み付きラプラシアン + ポテンシャル
- g_n 族: レゾルベントでは収束するが有界変換の一様ノルムでは収束しない族
"""

import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np

from rsflow.services.algebra import (
    Element,
    TracialAlgebra,
    bounded_transform_function,
    func_calc,
    make_block_algebra,
    make_element,
    make_grid_algebra,
    operator_norm,
)
from rsflow.services.errors import ConstructionError, PreconditionError
from rsflow.services.log_manager import get_logger
from rsflow.services.paths import OperatorPath

logger = get_logger("numeric")

# 端点が tan の零点・極に近すぎるとみなす距離（周期 ½ に対する比）
SINGULARITY_TOL = 1e-9
# 極マーカーとみなす |cos|
POLE_COS_TOL = 1e-15
# 被覆作用素の同変性の許容差
EQUIVARIANCE_TOL = 1e-12

ArrayFn = Callable[[float], np.ndarray]


# =====================================================
# tan ラップループ
# =====================================================


def _distance_to_half_integers(u: np.ndarray) -> np.ndarray:
    scaled = 2.0 * u
    return np.abs(scaled - np.round(scaled)) / 2.0


def build_tan_wrap_loop(grid: TracialAlgebra, offset: float = 0.0) -> OperatorPath:
    """f_t(x) = tan(π(t − x − offset)) の閉ループを生成する。

    各点は周期ごとに 0 を上向きに1回横断し、t ≡ x + offset + ½ (mod 1) で
    +∞ → −∞ とラップする。横断時刻は求積の区切り点に入れる。

    Args:
        grid: grid バックエンドの環
        offset: 位相のずれ

    Returns:
        ラップ注釈付きのパス

    Raises:
        ConstructionError: grid でない場合、端点で零点か極に当たる場合
    """
    if grid.is_block:
        raise ConstructionError("tan ラップループは grid バックエンド専用です", reason="unsupported_backend")
    x = grid.points_array
    shift = x + offset
    hit = _distance_to_half_integers(shift) < SINGULARITY_TOL
    if np.any(hit):
        point = float(x[np.argmax(hit)])
        raise ConstructionError(
            f"端点で x={point:g} が tan の零点または極に当たります。別の offset を指定してください",
            reason="offset_hits_singularity",
        )

    def value(t: float) -> Element:
        theta = math.pi * (t - shift)
        c = np.cos(theta)
        s = np.sin(theta)
        pole = np.abs(c) < POLE_COS_TOL
        safe = np.where(pole, 1.0, c)
        values = np.where(pole, np.copysign(np.inf, s), s / safe)
        return make_element(grid, [values], hermitian=True)

    def derivative(t: float) -> Element:
        f = value(t).values
        finite = np.isfinite(f)
        with np.errstate(over="ignore"):
            slope = np.where(finite, math.pi * (1.0 + np.where(finite, f, 0.0) ** 2), 0.0)
        return make_element(grid, [slope], hermitian=True)

    crossings = np.mod(shift, 1.0)
    wrap_times = np.mod(shift + 0.5, 1.0)
    wraps = tuple(((float(tw), 1),) for tw in wrap_times)
    breakpoints = tuple(sorted({round(float(tc), 15) for tc in crossings if 0.0 < tc < 1.0}))

    logger.debug("tan ラップループを生成しました points=%d offset=%g", len(x), offset)
    return OperatorPath(
        algebra=grid,
        value=value,
        derivative=derivative,
        breakpoints=breakpoints,
        wraps=wraps,
        name="tan_wrap",
        metadata={"offset": offset, "total_weight": grid.trace_of_identity()},
    )


# =====================================================
# 被覆グラフ
# =====================================================


def _constant(values: Sequence[float]) -> ArrayFn:
    arr = np.asarray(values, dtype=float)
    return lambda t: arr


@dataclass(frozen=True, eq=False)
class CoveringSpec:
    """閉路 ℤ/m の k 重被覆（閉路 ℤ/mk）上の同変作用素の指定

    edge_weights(t) は基底の辺 (j, j+1) の重み（長さ m）。
    potential(t) は長さ m（基底上）か長さ mk（被覆上、m 周期であること）。
    導関数を省略した場合は定数とみなす。
    """

    m: int
    k: int
    edge_weights: ArrayFn
    potential: ArrayFn
    edge_weights_derivative: ArrayFn | None = None
    potential_derivative: ArrayFn | None = None
    name: str = "covering"

    def __post_init__(self) -> None:
        if int(self.m) != self.m or self.m < 3:
            raise ConstructionError(f"基底の閉路長は3以上で指定してください: m={self.m}", reason="invalid_cycle")
        if int(self.k) != self.k or self.k < 1:
            raise ConstructionError(f"被覆の次数は1以上で指定してください: k={self.k}", reason="invalid_degree")

    @classmethod
    def linear(
        cls,
        m: int,
        k: int,
        edge_start: Sequence[float],
        edge_end: Sequence[float],
        potential_start: Sequence[float],
        potential_end: Sequence[float],
    ) -> "CoveringSpec":
        """端点の値を直線で結んだ指定"""
        a0, a1 = np.asarray(edge_start, dtype=float), np.asarray(edge_end, dtype=float)
        v0, v1 = np.asarray(potential_start, dtype=float), np.asarray(potential_end, dtype=float)
        return cls(
            m=m,
            k=k,
            edge_weights=lambda t: (1.0 - t) * a0 + t * a1,
            potential=lambda t: (1.0 - t) * v0 + t * v1,
            edge_weights_derivative=_constant(a1 - a0),
            potential_derivative=_constant(v1 - v0),
        )

    @property
    def size(self) -> int:
        return self.m * self.k


class CoveringError(PreconditionError):
    """被覆作用素の同変性違反"""


def _lift(spec: CoveringSpec, values: np.ndarray, what: str) -> np.ndarray:
    """基底上の値を被覆へ持ち上げる（被覆上の値なら m 周期性を確認する）。"""
    arr = np.asarray(values, dtype=float)
    if arr.shape == (spec.m,):
        return np.tile(arr, spec.k)
    if arr.shape == (spec.size,):
        periodic = arr.reshape(spec.k, spec.m)
        deviation = float(np.max(np.abs(periodic - periodic[0])))
        if deviation > EQUIVARIANCE_TOL:
            raise CoveringError(
                f"{what} がデッキ変換で不変ではありません deviation={deviation:.3e}",
                reason="not_equivariant",
            )
        return arr
    raise CoveringError(
        f"{what} の長さは m={spec.m} か mk={spec.size} で指定してください: {arr.shape}",
        reason="shape_mismatch",
    )


def covering_matrix(spec: CoveringSpec, edges: np.ndarray, potential: np.ndarray) -> np.ndarray:
    """被覆閉路上の L + V（(Lf)(v) = Σ_{u∼v} a_{uv}(f(v) − f(u))）"""
    n = spec.size
    a = _lift(spec, edges, "辺の重み")
    v = _lift(spec, potential, "ポテンシャル")
    matrix = np.diag(v).astype(float)
    for j in range(n):
        nxt = (j + 1) % n
        matrix[j, j] += a[j]
        matrix[nxt, nxt] += a[j]
        matrix[j, nxt] -= a[j]
        matrix[nxt, j] -= a[j]
    return matrix


def deck_rotation(spec: CoveringSpec) -> np.ndarray:
    """m だけずらす置換行列（デッキ変換の生成元）"""
    return np.roll(np.eye(spec.size), spec.m, axis=0)


def equivariance_residual(spec: CoveringSpec, matrix: np.ndarray) -> float:
    """‖RDR⁻¹ − D‖（成分の最大絶対値）"""
    r = deck_rotation(spec)
    return float(np.max(np.abs(r @ matrix @ r.T - matrix)))


@dataclass(frozen=True, eq=False)
class CoveringPath:
    """被覆上のパスと2種類のトレース

    path は Γ トレース（重み 1/k）の環、full_path は被覆全体のトレースの環に載る。
    (path, gamma_algebra, full_algebra) として展開できる。
    """

    path: OperatorPath
    full_path: OperatorPath
    gamma_algebra: TracialAlgebra
    full_algebra: TracialAlgebra
    equivariance_residual: float
    metadata: dict = field(default_factory=dict)

    def __iter__(self):
        yield self.path
        yield self.gamma_algebra
        yield self.full_algebra


def build_covering_path(spec: CoveringSpec) -> CoveringPath:
    """被覆閉路上の同変作用素のパス D_t = L_t + V_t を生成する。

    Γ トレースは基本領域上のトレースで、次元 mk・重み 1/k の1ブロックとして
    実現する（τ_Γ = τ_full / k）。

    Raises:
        CoveringError: 指定が同変でない場合
    """
    gamma_algebra = make_block_algebra([(spec.size, 1.0 / spec.k)])
    full_algebra = make_block_algebra([(spec.size, 1.0)])

    def matrix_at(t: float) -> np.ndarray:
        return covering_matrix(spec, spec.edge_weights(t), spec.potential(t))

    def derivative_at(t: float) -> np.ndarray:
        da = spec.edge_weights_derivative(t) if spec.edge_weights_derivative else np.zeros(spec.m)
        dv = spec.potential_derivative(t) if spec.potential_derivative else np.zeros(spec.m)
        return covering_matrix(spec, da, dv)

    residual = max(equivariance_residual(spec, matrix_at(t)) for t in (0.0, 0.5, 1.0))
    if residual > EQUIVARIANCE_TOL:
        raise CoveringError(
            f"被覆作用素が同変ではありません residual={residual:.3e}", reason="not_equivariant"
        )

    def make_path(algebra: TracialAlgebra, label: str) -> OperatorPath:
        return OperatorPath(
            algebra=algebra,
            value=lambda t: make_element(algebra, [matrix_at(t)], hermitian=True),
            derivative=lambda t: make_element(algebra, [derivative_at(t)], hermitian=True),
            name=f"{spec.name}[{label}]",
            metadata={"m": spec.m, "k": spec.k, "trace": label},
        )

    logger.debug("被覆パスを生成しました m=%d k=%d residual=%.3e", spec.m, spec.k, residual)
    return CoveringPath(
        path=make_path(gamma_algebra, "gamma"),
        full_path=make_path(full_algebra, "full"),
        gamma_algebra=gamma_algebra,
        full_algebra=full_algebra,
        equivariance_residual=residual,
        metadata={"m": spec.m, "k": spec.k},
    )


def default_covering_spec(m: int = 4, k: int = 3) -> CoveringSpec:
    """辺の重み 1、ポテンシャル 0.3 − 0.9t + 0.2cos(2πj/m) の族

    t = 0 では D ≥ 0.1 で可逆、t に沿って下端の固有値が 0 を下向きに横断する。
    """
    base = 0.2 * np.cos(2.0 * math.pi * np.arange(m) / m)
    return CoveringSpec.linear(
        m, k,
        edge_start=np.ones(m),
        edge_end=np.ones(m),
        potential_start=0.3 + base,
        potential_end=-0.6 + base,
    )


# =====================================================
# g_n 族
# =====================================================


def g_infinity(x: np.ndarray) -> np.ndarray:
    """g_∞: |x| ∈ ]1/(j+1), 1/j] で j 偶数なら j/2、j 奇数なら −(j+1)/2、|x| > 1 と 0 では 0"""
    x = np.abs(np.asarray(x, dtype=float))
    out = np.zeros_like(x)
    inside = (x > 0.0) & (x <= 1.0)
    j = np.floor(1.0 / x[inside])
    out[inside] = np.where(j % 2 == 0, j / 2.0, -(j + 1.0) / 2.0)
    return out


def g_n(n: int, x: np.ndarray) -> np.ndarray:
    """g_n: 0 < |x| ≤ 1/n では n、それ以外は g_∞"""
    x = np.asarray(x, dtype=float)
    near = (np.abs(x) > 0.0) & (np.abs(x) <= 1.0 / n)
    return np.where(near, float(n), g_infinity(x))


def gn_grid(max_n: int, refinement: int = 4) -> np.ndarray:
    """g_n を表現する標本点

    帯 ]1/(j+1), 1/j]（j ≤ refinement·max_n）の中点、比 ½ の幾何列 2^{-i}
    （1/(refinement·max_n) まで）、(1, 2] の点、0 とそれらの符号反転。
    """
    floor = 1.0 / (refinement * max_n)
    bands = [0.5 * (1.0 / (j + 1) + 1.0 / j) for j in range(1, refinement * max_n + 1)]
    geometric = []
    scale = 1.0
    while scale >= floor:
        geometric.append(scale)
        scale *= 0.5
    positive = sorted(set(bands) | set(geometric) | {1.5, 2.0})
    return np.array(sorted([-x for x in positive] + [0.0] + positive))


@dataclass
class GnRow:
    """n ごとの距離"""

    n: int
    resolvent_distance: float
    calculus_distance: float

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "resolvent_distance": self.resolvent_distance,
            "calculus_distance": self.calculus_distance,
        }


@dataclass
class GnReport:
    """g_n 族のデモ結果"""

    rows: list[GnRow]
    grid_size: int
    refinement: int

    @property
    def resolvent_decreasing(self) -> bool:
        d = [r.resolvent_distance for r in self.rows]
        return all(b < a for a, b in zip(d[:-1], d[1:]))

    @property
    def calculus_bounded_below(self) -> bool:
        return all(r.calculus_distance >= 0.5 for r in self.rows)

    def to_dict(self) -> dict:
        return {
            "rows": [r.to_dict() for r in self.rows],
            "grid_size": self.grid_size,
            "refinement": self.refinement,
            "resolvent_decreasing": self.resolvent_decreasing,
            "calculus_bounded_below": self.calculus_bounded_below,
        }


def build_gn_family(n_values: Sequence[int] = (1, 2, 4, 8), refinement: int = 4) -> GnReport:
    """g_n と g_∞ の距離を grid 上で計算する。

    - ‖(g_n + i)⁻¹ − (g_∞ + i)⁻¹‖: n とともに 0 へ減少
    - ‖(f∘g_n − f∘g_∞)·1_{[−1,1]}‖（f(x) = x(1+x²)^{-1/2}）: 0.5 以上に留まる

    Raises:
        PreconditionError: n が正でない場合、または grid が各 n の
            |x| ≤ 1/n に g_∞ < 0 の点を含まない場合（reason: insufficient_refinement）
    """
    ns = [int(n) for n in n_values]
    if not ns or min(ns) < 1:
        raise PreconditionError(f"n は正の整数で指定してください: {list(n_values)}", reason="invalid_parameter")
    if refinement < 1:
        raise PreconditionError(f"refinement は1以上で指定してください: {refinement}", reason="invalid_parameter")
    points = gn_grid(max(ns), refinement)
    limit = g_infinity(points)
    for n in ns:
        if not np.any((np.abs(points) <= 1.0 / n) & (points != 0.0) & (limit < 0)):
            raise PreconditionError(
                f"n={n} の振動帯を表現できません。refinement を増やしてください",
                reason="insufficient_refinement",
            )

    algebra = make_grid_algebra(points.tolist(), [1.0 / len(points)] * len(points))
    transform = bounded_transform_function()
    unit = make_element(algebra, [(np.abs(points) <= 1.0).astype(float)], hermitian=True)
    g_inf = make_element(algebra, [limit], hermitian=True)
    resolvent_inf = make_element(algebra, [1.0 / (limit + 1j)])
    calculus_inf = func_calc(transform, g_inf) @ unit

    rows = []
    for n in ns:
        values = g_n(n, points)
        g = make_element(algebra, [values], hermitian=True)
        resolvent = make_element(algebra, [1.0 / (values + 1j)])
        rows.append(
            GnRow(
                n=n,
                resolvent_distance=operator_norm(resolvent - resolvent_inf),
                calculus_distance=operator_norm(func_calc(transform, g) @ unit - calculus_inf),
            )
        )
    report = GnReport(rows=rows, grid_size=len(points), refinement=refinement)
    logger.debug(
        "g_n 族を評価しました n=%s grid=%d decreasing=%s", ns, len(points), report.resolvent_decreasing
    )
    return report
