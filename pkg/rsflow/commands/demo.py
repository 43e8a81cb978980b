"""demo コマンド

例示用の族を構成して結果を出力する。

- tanwrap: tan ラップループ。スペクトル流は grid の総重みに等しく、
  端点射影の差（0）とは一致しない
- covering: 被覆閉路上の同変作用素。Γ トレースの値は全体の値の 1/k
- gn: g_n 族。レゾルベント距離は減少し、関数計算の距離は 0.5 以上に留まる
"""

import argparse

from rsflow.commands import EXIT_OK, EXIT_VIOLATION, emit, emit_error, to_json
from rsflow.services.algebra import nonnegative_projection, trace, uniform_grid_algebra
from rsflow.services.errors import RsflowError
from rsflow.services.gallery import (
    build_covering_path,
    build_gn_family,
    build_tan_wrap_loop,
    default_covering_spec,
)
from rsflow.services.log_manager import get_logger
from rsflow.services.models import QuadratureConfig
from rsflow.services.specflow import sf_analytic, sf_crossing, sf_winding

logger = get_logger("app")

# 各デモの合否判定の許容差
TAN_WRAP_TOL = 1e-6
COVERING_TOL = 1e-8
# 巻き数と交差数の比較
METHOD_TOL = 1e-6


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"正の整数で指定してください: {text}")
    return value


def _positive_float(text: str) -> float:
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"正の数で指定してください: {text}")
    return value


def add_arguments(parser: argparse.ArgumentParser) -> None:
    demos = parser.add_subparsers(dest="demo", required=True)

    tanwrap = demos.add_parser("tanwrap", help="tan ラップループ")
    tanwrap.add_argument("--points", type=_positive_int, default=16, help="grid の標本点数")
    tanwrap.add_argument("--total-weight", type=_positive_float, default=1.0, help="grid の総重み")
    tanwrap.add_argument("--offset", type=float, default=0.0, help="位相のずれ")
    tanwrap.add_argument("--out", default=None)
    tanwrap.set_defaults(func=handle_tanwrap)

    covering = demos.add_parser("covering", help="被覆閉路の Γ トレース")
    covering.add_argument("--m", type=int, default=4, help="基底閉路の長さ（3以上）")
    covering.add_argument("--k", type=_positive_int, default=3, help="被覆の次数")
    covering.add_argument("--out", default=None)
    covering.set_defaults(func=handle_covering)

    gn = demos.add_parser("gn", help="g_n 族")
    gn.add_argument("--n", type=_positive_int, action="append", default=None, help="n の値（複数指定可）")
    gn.add_argument("--refinement", type=_positive_int, default=4, help="grid の細分度")
    gn.add_argument("--out", default=None)
    gn.set_defaults(func=handle_gn)


def tan_wrap_demo(points: int, total_weight: float, offset: float, quad: QuadratureConfig) -> dict:
    """一様中点 grid 上の tan ラップループを3手法で計算する。"""
    grid = uniform_grid_algebra(points, total_weight=total_weight)
    loop = build_tan_wrap_loop(grid, offset)
    values = {
        "winding": sf_winding(loop, quad=quad).value,
        "crossing": sf_crossing(loop).value,
        "analytic": sf_analytic(loop).value,
    }
    telescoping = (
        trace(nonnegative_projection(loop.value(1.0))).real
        - trace(nonnegative_projection(loop.value(0.0))).real
    )
    deviation = max(abs(v - total_weight) for v in values.values())
    return {
        "demo": "tanwrap",
        "points": points,
        "offset": offset,
        "total_weight": total_weight,
        "values": values,
        "endpoint_projection_difference": telescoping,
        "max_deviation": deviation,
        "passed": deviation <= TAN_WRAP_TOL and abs(telescoping) <= TAN_WRAP_TOL,
    }


def covering_demo(m: int, k: int, quad: QuadratureConfig) -> dict:
    """Γ トレースと全体のトレースでスペクトル流を計算して比べる。"""
    covering = build_covering_path(default_covering_spec(m, k))
    gamma = sf_winding(covering.path, quad=quad).value
    full = sf_winding(covering.full_path, quad=quad).value
    gamma_crossing = sf_crossing(covering.path).value
    deviation = abs(gamma - full / k)
    return {
        "demo": "covering",
        "m": m,
        "k": k,
        "gamma_trace": {"winding": gamma, "crossing": gamma_crossing},
        "full_trace": {"winding": full},
        "ratio_deviation": deviation,
        "equivariance_residual": covering.equivariance_residual,
        "passed": deviation <= COVERING_TOL and abs(gamma - gamma_crossing) <= METHOD_TOL,
    }


def gn_demo(n_values: list[int], refinement: int) -> dict:
    report = build_gn_family(n_values, refinement)
    return {
        "demo": "gn",
        **report.to_dict(),
        "passed": report.resolvent_decreasing and report.calculus_bounded_below,
    }


def _finish(result: dict, out: str | None) -> int:
    emit(to_json(result), out)
    if not result["passed"]:
        logger.warning("デモの性質が成り立ちません demo=%s", result["demo"])
        return EXIT_VIOLATION
    return EXIT_OK


def handle_tanwrap(args: argparse.Namespace) -> int:
    try:
        result = tan_wrap_demo(args.points, args.total_weight, args.offset, args.config.quadrature)
    except RsflowError as e:
        logger.error("デモに失敗しました demo=tanwrap reason=%s", e.reason)
        return emit_error(e, args.out)
    return _finish(result, args.out)


def handle_covering(args: argparse.Namespace) -> int:
    try:
        result = covering_demo(args.m, args.k, args.config.quadrature)
    except RsflowError as e:
        logger.error("デモに失敗しました demo=covering reason=%s", e.reason)
        return emit_error(e, args.out)
    return _finish(result, args.out)


def handle_gn(args: argparse.Namespace) -> int:
    try:
        result = gn_demo(args.n or [1, 2, 4, 8], args.refinement)
    except RsflowError as e:
        logger.error("デモに失敗しました demo=gn reason=%s", e.reason)
        return emit_error(e, args.out)
    return _finish(result, args.out)
