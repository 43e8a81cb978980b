"""数値積分サービス

適応シンプソン則（5点パネル + Richardson 補外）と、[a, ∞) の広義積分、
内側積分用の Gauss-Legendre 則を提供する。被積分関数はスカラー（実数・複素数）
でも numpy 配列でもよい。

パネルの評価順とマージ順は固定であり、workers の値にかかわらず
結果はビット単位で一致する。
"""

import math
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import Any

import numpy as np

from rsflow.services.errors import QuadratureError
from rsflow.services.log_manager import get_logger
from rsflow.services.models import QuadratureConfig

logger = get_logger("numeric")

# 端点 u = 0 を評価する代わりに使う下限
_U_FLOOR = 1e-8


@dataclass(frozen=True)
class QuadratureResult:
    """数値積分の結果"""

    value: Any
    error: float
    evaluations: int
    converged: bool

    def to_dict(self) -> dict:
        """レポート用の辞書に変換する（値そのものは含めない）"""
        return {
            "error_estimate": self.error,
            "evaluations": self.evaluations,
            "converged": self.converged,
        }


def _magnitude(value: Any) -> float:
    return float(np.max(np.abs(value)))


def _simpson_panel(
    func: Callable[[float], Any],
    a: float,
    b: float,
    ys: tuple[Any, Any, Any],
    tol: float,
    depth: int,
    max_depth: int,
) -> tuple[Any, float, int, bool]:
    """1パネルを再帰的に積分する。

    ys は (f(a), f(mid), f(b))。戻り値は (値, 誤差推定, 評価回数, 収束したか)。
    """
    mid = 0.5 * (a + b)
    f_a, f_m, f_b = ys
    f_l = func(0.5 * (a + mid))
    f_r = func(0.5 * (mid + b))
    neval = 2

    coarse = (f_a + 4 * f_m + f_b) * ((b - a) / 6.0)
    fine = (f_a + 4 * f_l + 2 * f_m + 4 * f_r + f_b) * ((b - a) / 12.0)
    err = _magnitude(fine - coarse) / 15.0

    if err <= tol or depth >= max_depth:
        converged = err <= tol
        return fine + (fine - coarse) / 15.0, err, neval, converged

    left, err_l, n_l, ok_l = _simpson_panel(
        func, a, mid, (f_a, f_l, f_m), tol / 2.0, depth + 1, max_depth
    )
    right, err_r, n_r, ok_r = _simpson_panel(
        func, mid, b, (f_m, f_r, f_b), tol / 2.0, depth + 1, max_depth
    )
    return left + right, err_l + err_r, neval + n_l + n_r, ok_l and ok_r


def _panel_edges(a: float, b: float, breakpoints: Sequence[float], min_panels: int) -> list[float]:
    """区切り点で分割したうえで、おおよそ min_panels 個の一様パネルに分ける。"""
    cuts = [a] + sorted(x for x in set(breakpoints) if a < x < b) + [b]
    total = b - a
    edges = [a]
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        count = max(1, math.ceil(min_panels * (hi - lo) / total))
        for i in range(1, count + 1):
            edges.append(lo + (hi - lo) * i / count if i < count else hi)
    return edges


def adaptive_simpson(
    func: Callable[[float], Any],
    a: float,
    b: float,
    config: QuadratureConfig | None = None,
    breakpoints: Sequence[float] = (),
    strict: bool = True,
    tolerance: float | None = None,
    one_sided: Callable[[float, int], Any] | None = None,
) -> QuadratureResult:
    """適応シンプソン則で ∫_a^b func を計算する。

    Args:
        func: 被積分関数（スカラーまたは配列を返す）
        a: 下端
        b: 上端
        config: 数値積分設定
        breakpoints: パネルをまたがせない区切り点
        strict: True の場合、未収束なら QuadratureError を送出する
        tolerance: 絶対許容誤差（None なら config.tolerance）
        one_sided: 区切り点で片側極限を返す関数 (t, side)。side は +1 で右極限、
            -1 で左極限。与えた場合はパネル端点の評価に使う。

    Returns:
        積分結果

    Raises:
        QuadratureError: strict かつ最大深さまでに収束しなかった場合
    """
    config = config or QuadratureConfig()
    tol = config.tolerance if tolerance is None else tolerance

    if a == b:
        return QuadratureResult(value=0.0, error=0.0, evaluations=0, converged=True)
    if b < a:
        flipped = adaptive_simpson(
            func, b, a, config, breakpoints, strict=strict, tolerance=tol, one_sided=one_sided
        )
        return QuadratureResult(
            value=-flipped.value,
            error=flipped.error,
            evaluations=flipped.evaluations,
            converged=flipped.converged,
        )

    edges = _panel_edges(a, b, breakpoints, config.min_panels)
    panels = list(zip(edges[:-1], edges[1:]))

    def run_panel(panel: tuple[float, float]) -> tuple[Any, float, int, bool]:
        lo, hi = panel
        if one_sided is None:
            ys = (func(lo), func(0.5 * (lo + hi)), func(hi))
        else:
            ys = (one_sided(lo, 1), func(0.5 * (lo + hi)), one_sided(hi, -1))
        share = tol * (hi - lo) / (b - a)
        value, err, neval, ok = _simpson_panel(
            func, lo, hi, ys, share, 0, config.max_depth
        )
        return value, err, neval + 3, ok

    if config.workers > 1 and len(panels) > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as executor:
            results = list(executor.map(run_panel, panels))
    else:
        results = [run_panel(panel) for panel in panels]

    # パネル順に合算する
    total: Any = 0.0
    error = 0.0
    evaluations = 0
    converged = True
    for value, err, neval, ok in results:
        total = total + value
        error += err
        evaluations += neval
        converged = converged and ok

    result = QuadratureResult(
        value=total, error=error, evaluations=evaluations, converged=converged
    )
    if not converged:
        logger.warning(
            "適応シンプソンが収束しませんでした interval=[%g, %g] estimate=%.3e tol=%.3e",
            a,
            b,
            error,
            tol,
        )
        if strict:
            raise QuadratureError(
                f"数値積分が最大深さ {config.max_depth} で収束しませんでした"
                f" (推定誤差 {error:.3e}, 許容誤差 {tol:.3e})",
                estimate=error,
            )
    return result


def integrate_to_infinity(
    func: Callable[[float], Any],
    lower: float = 1.0,
    config: QuadratureConfig | None = None,
    decay_rate: float | None = None,
    decay_scale: float = 1.0,
    strict: bool = True,
) -> QuadratureResult:
    """∫_lower^∞ func(t) dt を変数変換で計算する。

    decay_rate が与えられた場合は |func(t)| ≤ decay_scale·e^{-decay_rate·t} を仮定し、
    裾の上界が tolerance·truncation_factor を下回る点で打ち切る。

    Args:
        func: 被積分関数
        lower: 下端（> 0）
        config: 数値積分設定
        decay_rate: 指数減衰率（既知の場合）
        decay_scale: 減衰の前因子
        strict: 未収束時に例外を送出するか

    Returns:
        積分結果
    """
    config = config or QuadratureConfig()
    if lower <= 0:
        raise ValueError(f"下端は正で指定してください: {lower}")

    upper_t = math.inf
    if decay_rate is not None and decay_rate > 0:
        threshold = config.tolerance * config.truncation_factor
        cutoff = math.log(max(decay_scale, threshold) / (decay_rate * threshold)) / decay_rate
        upper_t = max(lower, cutoff) + 1.0

    if config.improper_substitution == "inverse":
        # t = 1/u, dt = du / u²
        def integrand(u: float) -> Any:
            u = max(u, _U_FLOOR)
            return func(1.0 / u) / (u * u)

        u_min = 0.0 if math.isinf(upper_t) else 1.0 / upper_t
        u_max = 1.0 / lower
    else:
        # t = 1/u², dt = 2 du / u³
        def integrand(u: float) -> Any:
            u = max(u, _U_FLOOR)
            return func(1.0 / (u * u)) * (2.0 / (u * u * u))

        u_min = 0.0 if math.isinf(upper_t) else 1.0 / math.sqrt(upper_t)
        u_max = 1.0 / math.sqrt(lower)

    return adaptive_simpson(integrand, u_min, u_max, config, strict=strict)


@lru_cache(maxsize=64)
def _legendre_nodes(n: int) -> tuple[np.ndarray, np.ndarray]:
    return np.polynomial.legendre.leggauss(n)


def gauss_legendre(
    func: Callable[[np.ndarray], np.ndarray], a: float, b: float, n: int
) -> np.ndarray:
    """n 点 Gauss-Legendre 則で ∫_a^b func を計算する。

    func はノード配列を先頭軸に受け取り、先頭軸がノードに対応する配列を返す。
    """
    nodes, weights = _legendre_nodes(n)
    x = 0.5 * (b - a) * nodes + 0.5 * (a + b)
    values = func(x)
    return 0.5 * (b - a) * np.tensordot(weights, values, axes=(0, 0))
