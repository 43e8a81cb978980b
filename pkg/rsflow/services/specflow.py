"""スペクトル流サービス

エルミート元のパスのスペクトル流を三通りの独立な方法で計算する。

- sf_winding:  ループ e^{πi(χ(D_t)+1)} の巻き数
- sf_analytic: 分割点での射影 P_t = 1_{≥0}(D_t) の指数の和
- sf_crossing: 0 の横断を数える（block では端点射影のトレース差）

端点が可逆でないパスは regularize_endpoints で正則化してから渡す。
"""

import math
from collections.abc import Sequence
from dataclasses import dataclass, replace

import numpy as np

from rsflow.services.algebra import (
    INVERTIBILITY_TOL,
    RANK_TOL,
    Element,
    TracialAlgebra,
    derivative_of_function,
    func_calc,
    interval_indicator,
    nonnegative_projection,
    operator_norm,
    trace,
)
from rsflow.services.errors import PreconditionError
from rsflow.services.log_manager import get_logger
from rsflow.services.models import MethodResult, QuadratureConfig
from rsflow.services.normalizing import NormalizingFunction, smooth_gap
from rsflow.services.paths import OperatorPath
from rsflow.services.winding import UnitaryLoop, winding_number

logger = get_logger("numeric")

DEFAULT_PARTITION = 64
DEFAULT_CROSSING_SAMPLES = 2048
DEFAULT_GAP_FRACTION = 0.5
BISECTION_TOL = 1e-10
# 接触（符号変化なしの 0 への接近）とみなす相対閾値
TANGENCY_TOL = 1e-6
# 巻き数の求積で使う初期パネル数の上限
MAX_RESOLUTION_PANELS = 4096


def require_invertible_endpoints(path: OperatorPath, tol: float = INVERTIBILITY_TOL) -> tuple[float, float]:
    """端点の可逆性を確認し、端点マージンを返す。

    Raises:
        PreconditionError: 端点が可逆でない場合（reason: endpoint_not_invertible）
    """
    m0, m1 = path.endpoint_margins
    for t, margin in ((0.0, m0), (1.0, m1)):
        if margin <= tol:
            raise PreconditionError(
                f"t={t:g} の端点が可逆ではありません (margin={margin:.3e})。"
                "regularize_endpoints で正則化してください",
                reason="endpoint_not_invertible",
            )
    return m0, m1


def default_normalizing(path: OperatorPath, fraction: float = DEFAULT_GAP_FRACTION) -> NormalizingFunction:
    """ε = fraction × (端点マージンの最小値) の smooth_gap"""
    m0, m1 = require_invertible_endpoints(path)
    return smooth_gap(fraction * min(m0, m1, 1.0))


def exponential_loop(path: OperatorPath, chi: NormalizingFunction) -> UnitaryLoop:
    """u(t) = e^{πi(χ(D_t)+1)}"""
    exp_chi = chi.exponential()
    return UnitaryLoop(
        value=lambda t: func_calc(exp_chi, path.value(t)),
        derivative=lambda t, side=0: derivative_of_function(
            exp_chi, path.value(t), path.tangent(t, side)
        ),
        breakpoints=path.breakpoints,
        derivative_step=path.derivative_step,
        name=f"exp({path.name})",
        sided=True,
    )


def _resolve_panels(path: OperatorPath, radius: float, quad: QuadratureConfig) -> QuadratureConfig:
    """χ′ の台を横切る時間幅に初期パネルが2枚以上入るよう min_panels を増やす。

    固有値の速さは |λ̇| ≤ ‖Ḋ‖ を33点で見積もる。grid では |d| ≤ 1 の点だけを見る。
    """
    speed = 0.0
    for t in np.linspace(0.0, 1.0, 33):
        d = path.value(float(t))
        ddot = path.tangent(float(t))
        if path.algebra.is_block:
            if not ddot.has_poles():
                speed = max(speed, operator_norm(ddot))
            continue
        x, xdot = d.values, ddot.values
        mask = np.isfinite(x) & np.isfinite(xdot) & (np.abs(x) <= 1.0)
        if np.any(mask):
            speed = max(speed, float(np.max(np.abs(xdot[mask]))))
    panels = min(max(quad.min_panels, math.ceil(2.0 * speed / radius)), MAX_RESOLUTION_PANELS)
    if panels <= quad.min_panels:
        return quad
    logger.debug("初期パネル数を増やします path=%s panels=%d speed=%.3e", path.name, panels, speed)
    return replace(quad, min_panels=panels)


def sf_winding(
    path: OperatorPath,
    chi: NormalizingFunction | None = None,
    quad: QuadratureConfig | None = None,
    gap_fraction: float = DEFAULT_GAP_FRACTION,
) -> MethodResult:
    """巻き数によるスペクトル流 sf = w(e^{πi(χ(D_t)+1)})。

    Args:
        path: 端点が可逆なパス
        chi: 正規化関数（None なら端点マージンから smooth_gap を選ぶ）
        quad: 数値積分設定
        gap_fraction: chi 省略時の ε / (端点マージン)

    Returns:
        スペクトル流と求積の診断情報

    Raises:
        PreconditionError: 端点が可逆でない、または χ が端点で対合にならない場合
    """
    quad = quad or QuadratureConfig()
    m0, m1 = require_invertible_endpoints(path)
    if chi is None:
        chi = smooth_gap(gap_fraction * min(m0, m1, 1.0))
    radius = chi.involution_radius()
    if radius >= min(m0, m1):
        raise PreconditionError(
            f"正規化関数の幅が端点マージン以上です radius={radius:.3e} margin={min(m0, m1):.3e}",
            reason="gap_too_wide",
        )
    quad = _resolve_panels(path, radius, quad)
    result = winding_number(exponential_loop(path, chi), quad)
    return MethodResult(
        value=result.value,
        error=result.quadrature.error,
        diagnostics={
            "normalizing": chi.name,
            "imaginary": result.imaginary,
            "evaluations": result.quadrature.evaluations,
        },
    )


# =====================================================
# 解析的スペクトル流
# =====================================================


def _nonnegative_frames(d: Element) -> list[np.ndarray]:
    """ブロックごとの ran 1_{≥0}(D) の正規直交基底"""
    return [v[:, w >= 0] for w, v in d.eigensystem]


def _projection_pair_index(
    algebra: TracialAlgebra, left: list[np.ndarray], right: list[np.ndarray], tol: float
) -> tuple[float, float]:
    """ind(P_a P_b: ran P_b → ran P_a) と最小の非零特異値"""
    index = 0.0
    smallest = np.inf
    for u_a, u_b, weight in zip(left, right, algebra.block_weights):
        r_a, r_b = u_a.shape[1], u_b.shape[1]
        if r_a and r_b:
            sv = np.linalg.svd(u_a.conj().T @ u_b, compute_uv=False)
            rank = int(np.sum(sv > tol))
            if rank:
                smallest = min(smallest, float(sv[rank - 1]))
        else:
            rank = 0
        kernel = r_b - rank
        cokernel = r_a - rank
        index += weight * (kernel - cokernel)
    return index, smallest


def _avoid_wraps(partition: Sequence[float], path: OperatorPath) -> list[float]:
    wrap_times = [t for t, _, _ in path.all_wraps()]
    adjusted = []
    for t in partition:
        if 0.0 < t < 1.0 and any(abs(t - w) < 1e-12 for w in wrap_times):
            t = t + 1e-9
        adjusted.append(t)
    return adjusted


def uniform_partition(size: int = DEFAULT_PARTITION) -> list[float]:
    return [i / size for i in range(size + 1)]


def sf_analytic(
    path: OperatorPath,
    partition: Sequence[float] | None = None,
    rank_tol: float = RANK_TOL,
    require_invertible: bool = True,
) -> MethodResult:
    """分割点での射影対の指数の和による解析的スペクトル流

    ind(P_{t_i} P_{t_{i+1}}) は ran P_{t_{i+1}} → ran P_{t_i} の写像としての
    重み付き核次元 − 余核次元。grid ではラップごとに符号付き重みを加える。

    Args:
        path: パス
        partition: 0 と 1 を含む分割（None なら 64 等分）
        rank_tol: 特異値の階数判定閾値
        require_invertible: 端点の可逆性を要求するか

    Raises:
        PreconditionError: 分割が 0, 1 を含まない、または端点が可逆でない場合
    """
    if require_invertible:
        require_invertible_endpoints(path)
    points = sorted(uniform_partition() if partition is None else partition)
    if not points or points[0] != 0.0 or points[-1] != 1.0:
        raise PreconditionError("分割は 0 と 1 を含まなければなりません", reason="invalid_partition")
    points = _avoid_wraps(points, path)
    algebra = path.algebra

    total = 0.0
    smallest = np.inf
    if algebra.is_block:
        frames = [_nonnegative_frames(path.value(t)) for t in points]
        for left, right in zip(frames[:-1], frames[1:]):
            index, overlap = _projection_pair_index(algebra, left, right, rank_tol)
            total += index
            smallest = min(smallest, overlap)
    else:
        weights = algebra.weights_array
        projections = [(path.value(t).values >= 0).astype(float) for t in points]
        for pa, pb in zip(projections[:-1], projections[1:]):
            total += float(np.dot(weights, pb - pa))
        for t, i, direction in path.all_wraps():
            if points[0] < t <= points[-1]:
                total += direction * float(weights[i])

    diagnostics = {
        "partition_size": len(points) - 1,
        "min_overlap_singular_value": None if not np.isfinite(smallest) else smallest,
    }
    if np.isfinite(smallest) and smallest < 0.5:
        logger.warning(
            "分割が粗い可能性があります partition=%d min_overlap=%.3e", len(points) - 1, smallest
        )
        diagnostics["coarse_partition_suspected"] = True
    return MethodResult(value=total, diagnostics=diagnostics)


# =====================================================
# 横断オラクル
# =====================================================


def _bisect_root(func, lo: float, hi: float, tol: float) -> float:
    """1_{≥0}(func) が変化する点を二分法で求める。"""
    p_lo = func(lo) >= 0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if (func(mid) >= 0) == p_lo:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def sf_crossing(
    path: OperatorPath,
    samples: int = DEFAULT_CROSSING_SAMPLES,
    bisection_tol: float = BISECTION_TOL,
    require_invertible: bool = True,
) -> MethodResult:
    """0 の横断の数え上げによるスペクトル流

    block: τ(1_{≥0}(D_1)) − τ(1_{≥0}(D_0))。
    grid: 各点で t ↦ f_t(x_i) の 1_{≥0} の変化（上向き +1、下向き −1）を重み付きで数える。
    ラップをまたぐ符号変化は数えない。符号変化なしの接触は 0 と数えて報告する。
    """
    if require_invertible:
        require_invertible_endpoints(path)
    algebra = path.algebra
    if algebra.is_block:
        p0 = trace(nonnegative_projection(path.value(0.0))).real
        p1 = trace(nonnegative_projection(path.value(1.0))).real
        return MethodResult(value=float(p1 - p0), diagnostics={"mode": "endpoint_projections"})

    weights = algebra.weights_array
    ts = np.linspace(0.0, 1.0, samples + 1)
    table = np.array([path.value(float(t)).values for t in ts])
    scale = float(np.max(np.abs(table[np.isfinite(table)]), initial=1.0))

    total = 0.0
    crossings = 0
    tangencies: list[dict] = []
    for i in range(len(algebra.points)):
        cuts = [0.0] + [t for t, _ in path.wraps[i]] + [1.0] if path.wraps else [0.0, 1.0]

        def component(t: float, i: int = i) -> float:
            return float(path.value(t).values[i])

        for lo, hi in zip(cuts[:-1], cuts[1:]):
            inside = (ts > lo + bisection_tol) & (ts < hi - bisection_tol)
            seg_t = list(ts[inside])
            seg_v = list(table[inside, i])
            if lo == 0.0:
                seg_t.insert(0, 0.0)
                seg_v.insert(0, table[0, i])
            if hi == 1.0:
                seg_t.append(1.0)
                seg_v.append(table[-1, i])
            if len(seg_t) < 2:
                continue
            values = np.asarray(seg_v)
            signs = values >= 0
            for j in np.nonzero(signs[1:] != signs[:-1])[0]:
                root = _bisect_root(component, seg_t[j], seg_t[j + 1], bisection_tol)
                direction = 1 if signs[j + 1] else -1
                total += direction * float(weights[i])
                crossings += 1
                logger.debug("横断を検出しました point=%d t=%.10f direction=%d", i, root, direction)
            magnitude = np.abs(values)
            for j in range(1, len(values) - 1):
                if (
                    magnitude[j] <= magnitude[j - 1]
                    and magnitude[j] <= magnitude[j + 1]
                    and magnitude[j] < TANGENCY_TOL * scale
                    and signs[j - 1] == signs[j + 1]
                ):
                    tangencies.append({"point": i, "t": float(seg_t[j])})

    if tangencies:
        logger.warning("0 への接触を検出しました count=%d（横断数 0 として扱います）", len(tangencies))
    return MethodResult(
        value=total,
        diagnostics={
            "mode": "pointwise_crossings",
            "samples": samples,
            "crossings": crossings,
            "tangencies": tangencies,
        },
    )


# =====================================================
# 端点の正則化
# =====================================================


@dataclass(frozen=True)
class Regularization:
    """端点正則化の結果

    total sf = sf(path) − correction。
    """

    path: OperatorPath
    correction: float
    start_correction: float
    end_correction: float
    start_kernel_trace: float
    end_kernel_trace: float

    def __iter__(self):
        yield self.path
        yield self.correction

    def to_dict(self) -> dict:
        return {
            "correction": self.correction,
            "start_correction": self.start_correction,
            "end_correction": self.end_correction,
            "start_kernel_trace": self.start_kernel_trace,
            "end_kernel_trace": self.end_kernel_trace,
        }


def _kernel_projection(d: Element, eps: float, tol: float) -> Element | None:
    """Q = 1_{[−ε,ε]}(D)。D が可逆なら None。

    Raises:
        PreconditionError: ε が 0 と他のスペクトルを分離しない場合
    """
    eigs, _ = d.weighted_spectrum()
    magnitude = np.abs(eigs)
    if np.all(magnitude > tol):
        return None
    straddling = magnitude[(magnitude > tol) & (magnitude <= eps)]
    if straddling.size:
        raise PreconditionError(
            f"ε={eps:g} が 0 と他のスペクトルを分離しません (|λ|={float(np.min(straddling)):.3e})",
            reason="eps_not_separating",
        )
    return func_calc(interval_indicator(eps), d)


def regularize_endpoints(
    path: OperatorPath,
    eps: float,
    tol: float = INVERTIBILITY_TOL,
) -> Regularization:
    """非可逆な端点を核射影の平行移動で正則化する。

    始点: D_t + (1−t)Q₀（Q₀ = 1_{[−ε,ε]}(D_0)）、補正 sf^a(D_0 + (1−t)Q₀)。
    終点: D_t + tQ₁、補正 sf^a(D_1 + tQ₁)。全体の sf は sf(正則化パス) − 補正の和。

    Args:
        path: パス
        eps: 分離幅（0 < eps < 1）
        tol: 核とみなす |固有値| の上限

    Raises:
        PreconditionError: eps が範囲外、または 0 を分離しない場合
    """
    if not 0.0 < eps < 1.0:
        raise PreconditionError(f"eps は (0, 1) で指定してください: {eps}", reason="invalid_eps")
    if path.has_wraps:
        raise PreconditionError("ラップを持つパスの正則化は未対応です", reason="wrapped_path")
    d0, d1 = path.value(0.0), path.value(1.0)
    q0 = _kernel_projection(d0, eps, tol)
    q1 = _kernel_projection(d1, eps, tol)
    if q0 is None and q1 is None:
        return Regularization(path, 0.0, 0.0, 0.0, 0.0, 0.0)

    zero = path.algebra.zero()
    q0e = q0 if q0 is not None else zero
    q1e = q1 if q1 is not None else zero

    def value(t: float) -> Element:
        return path.value(t) + q0e * (1.0 - t) + q1e * t

    def derivative(t: float, side: int = 0) -> Element:
        return path.tangent(t, side) - q0e + q1e

    regularized = OperatorPath(
        algebra=path.algebra, value=value, derivative=derivative,
        breakpoints=path.breakpoints, sided=True,
        name=f"reg({path.name})", provenance="derived",
    )

    start_corr = 0.0
    if q0 is not None:
        segment = OperatorPath(
            algebra=path.algebra,
            value=lambda t: d0 + q0 * (1.0 - t),
            derivative=lambda t: -q0,
            name="start_segment",
        )
        start_corr = sf_analytic(segment, partition=[0.0, 1.0], require_invertible=False).value
    end_corr = 0.0
    if q1 is not None:
        segment = OperatorPath(
            algebra=path.algebra,
            value=lambda t: d1 + q1 * t,
            derivative=lambda t: q1,
            name="end_segment",
        )
        end_corr = sf_analytic(segment, partition=[0.0, 1.0], require_invertible=False).value

    result = Regularization(
        path=regularized,
        correction=start_corr + end_corr,
        start_correction=start_corr,
        end_correction=end_corr,
        start_kernel_trace=trace(q0).real if q0 is not None else 0.0,
        end_kernel_trace=trace(q1).real if q1 is not None else 0.0,
    )
    logger.info(
        "端点を正則化しました eps=%g start_kernel=%.6g end_kernel=%.6g correction=%.6g",
        eps, result.start_kernel_trace, result.end_kernel_trace, result.correction,
    )
    return result


# =====================================================
# 補助的な不変量
# =====================================================


def chi_homotopy_invariance(
    path: OperatorPath,
    chi0: NormalizingFunction,
    chi1: NormalizingFunction,
    s_values: Sequence[float] = (0.0, 0.25, 0.5, 0.75, 1.0),
    quad: QuadratureConfig | None = None,
) -> dict:
    """補間 χ_s = sχ₁ + (1−s)χ₀ に沿った sf_winding の値と最大偏差"""
    values = {float(s): sf_winding(path, chi0.blend(chi1, s), quad).value for s in s_values}
    spread = max(values.values()) - min(values.values())
    return {"values": values, "max_deviation": float(spread)}


def projection_shift_gap(involution: Element, perturbation: Element) -> float:
    """2‖A‖ − ‖1_{≥0}(F+A) − 1_{≥0}(F)‖（‖A‖ < ½ の対合 F では正）"""
    moved = nonnegative_projection(involution + perturbation)
    base = nonnegative_projection(involution)
    return 2.0 * operator_norm(perturbation) - operator_norm(moved - base)
