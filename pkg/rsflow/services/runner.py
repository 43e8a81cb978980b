"""実行サービス

パスに対して選択した手法を実行し、SpectralFlowReport にまとめる。
端点正則化を指定した場合は正則化パスで計算し、補正を差し引く。
"""

from typing import Any

from rsflow import __version__
from rsflow.services.errors import ParameterError, PreconditionError
from rsflow.services.integral_formulas import sf_heat, sf_integral_chi, sf_resolvent_power
from rsflow.services.log_manager import get_logger
from rsflow.services.models import (
    METHOD_NAMES,
    CrossCheckConfig,
    MethodResult,
    QuadratureConfig,
    SpectralFlowReport,
    ToleranceConfig,
)
from rsflow.services.normalizing import make_normalizing
from rsflow.services.paths import OperatorPath
from rsflow.services.specflow import regularize_endpoints, sf_analytic, sf_crossing, sf_winding, uniform_partition

logger = get_logger("app")

# 手法ごとに受け付けるパラメータ名
METHOD_PARAMS: dict[str, tuple[str, ...]] = {
    "winding": ("chi", "eps", "p", "gap_fraction"),
    "analytic": ("partition",),
    "crossing": ("samples",),
    "integral_chi": ("chi", "eps", "p", "transform"),
    "heat": (),
    "resolvent_power": ("p",),
}


def _normalizing_from(params: dict[str, Any], default_kind: str | None):
    kind = params.get("chi", default_kind)
    if kind is None:
        return None
    try:
        return make_normalizing(kind, eps=params.get("eps"), p=params.get("p"))
    except PreconditionError as e:
        raise ParameterError(str(e), key="chi", reason=e.reason) from e


def run_method(
    method: str,
    path: OperatorPath,
    params: dict[str, Any],
    quad: QuadratureConfig,
    cross_check: CrossCheckConfig,
    tolerances: ToleranceConfig | None = None,
) -> MethodResult:
    """1手法を実行する。

    Raises:
        ParameterError: 未知の手法名（key は method）
    """
    tolerances = tolerances or ToleranceConfig()
    if method == "winding":
        chi = _normalizing_from(params, None)
        return sf_winding(path, chi, quad, gap_fraction=params.get("gap_fraction", cross_check.gap_fraction))
    if method == "analytic":
        partition = uniform_partition(int(params.get("partition", cross_check.partition)))
        return sf_analytic(path, partition, rank_tol=tolerances.rank)
    if method == "crossing":
        return sf_crossing(
            path,
            samples=int(params.get("samples", cross_check.crossing_samples)),
            bisection_tol=tolerances.bisection,
        )
    if method == "integral_chi":
        chi = _normalizing_from(params, "chi_e")
        return sf_integral_chi(path, chi, quad, transform=params.get("transform"))
    if method == "heat":
        return sf_heat(path, quad)
    if method == "resolvent_power":
        return sf_resolvent_power(path, float(params.get("p", 2.0)), quad)
    raise ParameterError(f"不明な手法です: {method}（{', '.join(METHOD_NAMES)}）", key=method, reason="unknown_method")


def check_partition(report: SpectralFlowReport, tolerance: float) -> bool:
    """analytic と winding の食い違いが tolerance を超えたら警告を記録する。

    analytic の分割が粗すぎると射影対の指数が固有値の横断を取りこぼす。

    Returns:
        警告を記録した場合 True
    """
    if "analytic" not in report.values or "winding" not in report.values:
        return False
    difference = abs(report.values["analytic"] - report.values["winding"])
    if difference <= tolerance:
        return False
    partition = report.diagnostics.get("analytic", {}).get("partition_size")
    logger.warning(
        "analytic と winding が一致しません difference=%.3e tolerance=%.1e partition=%s（分割を細かくしてください）",
        difference, tolerance, partition,
    )
    report.diagnostics.setdefault("warnings", []).append(
        {
            "kind": "coarse_partition",
            "difference": difference,
            "tolerance": tolerance,
            "partition_size": partition,
        }
    )
    return True


def run_methods(
    path: OperatorPath,
    methods: list[str],
    method_params: dict[str, dict[str, Any]] | None = None,
    quad: QuadratureConfig | None = None,
    cross_check: CrossCheckConfig | None = None,
    regularize_eps: float | None = None,
    tolerances: ToleranceConfig | None = None,
) -> SpectralFlowReport:
    """選択した手法でスペクトル流を計算する。

    Args:
        path: パス
        methods: 手法名の列（METHOD_NAMES の部分集合）
        method_params: 手法ごとのパラメータ
        quad: 数値積分設定
        cross_check: 照合設定（既定の分割数・標本数・ε の比・analytic と winding の許容差）
        regularize_eps: 指定すれば端点を正則化する
        tolerances: 階数判定・二分法・核判定の閾値

    Returns:
        手法ごとの値・食い違い・診断情報・正則化補正を持つレポート

    Raises:
        RsflowError: いずれかの手法が失敗した場合
    """
    quad = quad or QuadratureConfig()
    cross_check = cross_check or CrossCheckConfig()
    tolerances = tolerances or ToleranceConfig()
    method_params = method_params or {}
    report = SpectralFlowReport(version=__version__)

    target = path
    correction = 0.0
    if regularize_eps is not None:
        regularization = regularize_endpoints(path, regularize_eps, tol=tolerances.kernel)
        target = regularization.path
        correction = regularization.correction
        report.corrections = {"applied": True, "eps": regularize_eps, **regularization.to_dict()}

    for method in methods:
        logger.info("手法を実行します method=%s path=%s", method, path.name)
        result = run_method(method, target, method_params.get(method, {}), quad, cross_check, tolerances)
        if correction:
            result = MethodResult(
                value=result.value - correction, error=result.error, diagnostics=result.diagnostics
            )
        report.add(method, result)

    if path.metadata:
        report.diagnostics["path"] = {
            key: value for key, value in sorted(path.metadata.items()) if _is_plain(value)
        }
    check_partition(report, cross_check.tolerance)
    logger.info(
        "計算が完了しました methods=%s max_discrepancy=%.3e", ",".join(methods), report.max_discrepancy
    )
    return report


def _is_plain(value: Any) -> bool:
    if isinstance(value, (str, int, float, bool)) or value is None:
        return True
    if isinstance(value, (list, tuple)):
        return all(_is_plain(v) for v in value)
    return False
