"""型定義（dataclass）モジュール"""

from dataclasses import dataclass, field
from typing import Any, Literal

MethodName = Literal[
    "winding", "analytic", "crossing", "integral_chi", "heat", "resolvent_power"
]
METHOD_NAMES: tuple[str, ...] = (
    "winding",
    "analytic",
    "crossing",
    "integral_chi",
    "heat",
    "resolvent_power",
)


@dataclass(frozen=True)
class QuadratureConfig:
    """数値積分設定"""

    tolerance: float = 1e-8
    max_depth: int = 20
    min_panels: int = 64
    # [1, ∞) の変数変換: "inverse_square" は t = 1/u², "inverse" は t = 1/u
    improper_substitution: str = "inverse_square"
    # 指数減衰する被積分関数は上界が tolerance * truncation_factor を下回ったら打ち切る
    truncation_factor: float = 0.1
    derivative_step: float = 1e-6
    workers: int = 1


@dataclass(frozen=True)
class ToleranceConfig:
    """数値判定の閾値設定

    エルミート性・固有値の縮退判定は環の定数（algebra.HERMITIAN_TOL 等）で固定。
    """

    # analytic: 射影対の重なりの特異値の階数判定
    rank: float = 1e-8
    # crossing: 横断時刻の二分法の幅
    bisection: float = 1e-10
    # 端点正則化: 核とみなす |固有値| の上限
    kernel: float = 1e-10


@dataclass(frozen=True)
class CrossCheckConfig:
    """手法間照合の設定"""

    tolerance: float = 1e-5
    partition: int = 64
    crossing_samples: int = 2048
    gap_fraction: float = 0.5


@dataclass
class LoggingFileConfig:
    """ログファイル設定"""

    enabled: bool = False
    directory: str = "logs"
    max_size_mb: int = 10
    backup_count: int = 3


@dataclass
class LoggingConfig:
    """ログ設定"""

    level: str = "WARNING"
    console: bool = True
    file: LoggingFileConfig = field(default_factory=LoggingFileConfig)


@dataclass
class SystemConfig:
    """システム設定全体"""

    quadrature: QuadratureConfig = field(default_factory=QuadratureConfig)
    tolerances: ToleranceConfig = field(default_factory=ToleranceConfig)
    cross_check: CrossCheckConfig = field(default_factory=CrossCheckConfig)
    logging: LoggingConfig = field(default_factory=LoggingConfig)


@dataclass
class BackendSpec:
    """実行仕様: 環の記述"""

    kind: str  # "block" | "grid"
    blocks: list[tuple[int, float]] = field(default_factory=list)
    points: list[float] = field(default_factory=list)
    weights: list[float] = field(default_factory=list)


@dataclass
class PathSpec:
    """実行仕様: パスの記述（組み込みファミリまたはサンプル列）"""

    family: str | None = None
    params: dict[str, Any] = field(default_factory=dict)
    samples: list[tuple[float, Any]] = field(default_factory=list)
    regularize_eps: float | None = None


@dataclass
class OutputSpec:
    """実行仕様: 出力先"""

    path: str | None = None
    format: str = "json"  # "json" | "csv"
    tolerance: float = 1e-5


@dataclass
class RunSpec:
    """実行仕様全体"""

    backend: BackendSpec
    path: PathSpec
    methods: list[str]
    method_params: dict[str, dict[str, Any]] = field(default_factory=dict)
    quadrature: QuadratureConfig = field(default_factory=QuadratureConfig)
    output: OutputSpec = field(default_factory=OutputSpec)


@dataclass(frozen=True)
class MethodResult:
    """1手法の計算結果"""

    value: float
    error: float = 0.0
    diagnostics: dict[str, Any] = field(default_factory=dict)

    def __float__(self) -> float:
        return self.value


@dataclass
class SpectralFlowReport:
    """手法ごとのスペクトル流の値と照合結果

    discrepancies は常に values から再計算する。
    """

    values: dict[str, float] = field(default_factory=dict)
    errors: dict[str, float] = field(default_factory=dict)
    diagnostics: dict[str, Any] = field(default_factory=dict)
    corrections: dict[str, Any] = field(default_factory=dict)
    version: str = ""

    def add(self, method: str, result: MethodResult) -> None:
        self.values[method] = float(result.value)
        self.errors[method] = float(result.error)
        if result.diagnostics:
            self.diagnostics[method] = result.diagnostics

    @property
    def discrepancies(self) -> dict[str, float]:
        """手法の組ごとの絶対差（キーは "a-b"、METHOD_NAMES の順）"""
        ordered = [m for m in METHOD_NAMES if m in self.values]
        ordered += sorted(m for m in self.values if m not in METHOD_NAMES)
        return {
            f"{a}-{b}": abs(self.values[a] - self.values[b])
            for i, a in enumerate(ordered)
            for b in ordered[i + 1:]
        }

    @property
    def max_discrepancy(self) -> float:
        return max(self.discrepancies.values(), default=0.0)

    def to_dict(self) -> dict[str, Any]:
        return {
            "values": dict(self.values),
            "discrepancies": self.discrepancies,
            "diagnostics": {**self.diagnostics, "quadrature_errors": dict(self.errors)},
            "corrections": dict(self.corrections),
            "version": self.version,
        }
