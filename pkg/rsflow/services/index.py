"""指数サービス

角作用素 D = pDq（ran q → ran p）の Breuer-Fredholm 指数と、
指数をスペクトル流として実現する懸垂パス、指数のホモトピー検証を提供する。
"""

from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np

from rsflow.services.algebra import (
    RANK_TOL,
    Element,
    TracialAlgebra,
    make_block_algebra,
    make_element,
    operator_norm,
)
from rsflow.services.errors import ConstructionError
from rsflow.services.log_manager import get_logger
from rsflow.services.paths import OperatorPath

logger = get_logger("numeric")

# 射影・角条件の許容差
PROJECTION_TOL = 1e-12


def _frame(projection: np.ndarray) -> np.ndarray:
    """射影の値域の正規直交基底"""
    w, v = np.linalg.eigh(projection)
    return v[:, w > 0.5]


@dataclass(frozen=True, eq=False)
class CornerOperator:
    """角作用素（block バックエンドのみ）"""

    algebra: TracialAlgebra
    d: Element
    q: Element
    p: Element

    def __post_init__(self) -> None:
        if not self.algebra.is_block:
            raise ConstructionError("角作用素は block バックエンド専用です", reason="unsupported_backend")
        for name, proj in (("q", self.q), ("p", self.p)):
            for k, block in enumerate(proj.data):
                herm = float(np.max(np.abs(block - block.conj().T))) if block.size else 0.0
                idem = float(np.max(np.abs(block @ block - block))) if block.size else 0.0
                if max(herm, idem) > PROJECTION_TOL:
                    raise ConstructionError(
                        f"{name} のブロック {k} が射影ではありません deviation={max(herm, idem):.3e}",
                        reason="not_projection",
                    )
        residual = self.d - self.p @ self.d @ self.q
        scale = operator_norm(self.d)
        if operator_norm(residual) > PROJECTION_TOL * max(scale, 1.0):
            raise ConstructionError("D = pDq が成り立ちません", reason="not_corner")

    def compressed(self) -> list[np.ndarray]:
        """ブロックごとの圧縮行列 M_k = P_k* D_k Q_k（r_p × r_q）"""
        return [
            _frame(p).conj().T @ d @ _frame(q)
            for d, q, p in zip(self.d.data, self.q.data, self.p.data)
        ]

    def ranks(self) -> list[tuple[int, int]]:
        """ブロックごとの (rank q, rank p)"""
        return [(_frame(q).shape[1], _frame(p).shape[1]) for q, p in zip(self.q.data, self.p.data)]

    @property
    def adjoint(self) -> "CornerOperator":
        """T* = (D*, 始域 p, 終域 q)"""
        return CornerOperator(self.algebra, self.d.adjoint, q=self.p, p=self.q)


def corner_from_maps(maps: Sequence[tuple[float, np.ndarray | Sequence]]) -> CornerOperator:
    """(重み c_k, r_p × r_q 行列 M_k) の列から角作用素を生成する。

    ブロック k は次元 r_q + r_p（0 なら 1）で、q は先頭 r_q 座標、p は末尾 r_p 座標。
    r_q = 0 や r_p = 0 は shape (r_p, 0) や (0, r_q) の空行列で指定する。
    """
    blocks = []
    shapes = []
    for weight, matrix in maps:
        m = np.asarray(matrix, dtype=complex)
        if m.ndim != 2:
            raise ConstructionError("写像は2次元配列で指定してください", reason="shape_mismatch")
        r_p, r_q = m.shape
        blocks.append((max(r_q + r_p, 1), weight))
        shapes.append((m, r_q, r_p))
    algebra = make_block_algebra(blocks)

    d_blocks, q_blocks, p_blocks = [], [], []
    for (m, r_q, r_p), (n, _) in zip(shapes, blocks):
        d = np.zeros((n, n), dtype=complex)
        d[r_q:r_q + r_p, :r_q] = m
        q = np.zeros((n, n), dtype=complex)
        q[:r_q, :r_q] = np.eye(r_q)
        p = np.zeros((n, n), dtype=complex)
        p[r_q:r_q + r_p, r_q:r_q + r_p] = np.eye(r_p)
        d_blocks.append(d)
        q_blocks.append(q)
        p_blocks.append(p)
    return CornerOperator(
        algebra,
        make_element(algebra, d_blocks),
        q=make_element(algebra, q_blocks, hermitian=True),
        p=make_element(algebra, p_blocks, hermitian=True),
    )


def direct_sum(first: CornerOperator, second: CornerOperator) -> CornerOperator:
    """ブロックを並べた直和"""
    blocks = list(zip(first.algebra.dims, first.algebra.block_weights)) + list(
        zip(second.algebra.dims, second.algebra.block_weights)
    )
    algebra = make_block_algebra(blocks)

    def join(a: Element, b: Element, hermitian: bool) -> Element:
        return make_element(algebra, list(a.data) + list(b.data), hermitian=hermitian)

    return CornerOperator(
        algebra,
        join(first.d, second.d, False),
        q=join(first.q, second.q, True),
        p=join(first.p, second.p, True),
    )


@dataclass(frozen=True)
class IndexResult:
    """Breuer-Fredholm 指数"""

    value: float
    kernel_trace: float
    cokernel_trace: float
    tolerance: float
    ill_conditioned: bool
    min_singular_value: float | None = None

    def __float__(self) -> float:
        return self.value

    def to_dict(self) -> dict:
        return {
            "index": self.value,
            "kernel_trace": self.kernel_trace,
            "cokernel_trace": self.cokernel_trace,
            "rank_tolerance": self.tolerance,
            "ill_conditioned": self.ill_conditioned,
            "min_singular_value": self.min_singular_value,
        }


def breuer_index(corner: CornerOperator, tol: float = RANK_TOL) -> IndexResult:
    """ind D = τ(ker D ∩ ran q) − τ(ker D* ∩ ran p)

    核は特異値が tol 以下の方向とする。tol の10倍以内の特異値があれば
    階数判定が不安定として警告する。
    """
    kernel = 0.0
    cokernel = 0.0
    ill = False
    smallest: float | None = None
    for m, weight in zip(corner.compressed(), corner.algebra.block_weights):
        r_p, r_q = m.shape
        sv = np.linalg.svd(m, compute_uv=False) if m.size else np.zeros(0)
        rank = int(np.sum(sv > tol))
        if sv.size:
            low = float(np.min(sv))
            smallest = low if smallest is None else min(smallest, low)
        if np.any((sv > tol / 10) & (sv < tol * 10)):
            ill = True
        kernel += weight * (r_q - rank)
        cokernel += weight * (r_p - rank)
    if ill:
        logger.warning("階数判定が不安定です tol=%.1e min_singular=%.3e", tol, smallest)
    return IndexResult(
        value=kernel - cokernel,
        kernel_trace=kernel,
        cokernel_trace=cokernel,
        tolerance=tol,
        ill_conditioned=ill,
        min_singular_value=smallest,
    )


def suspension_path(corner: CornerOperator) -> OperatorPath:
    """懸垂パス D̃_t = [[(t−½)·1_q, M*], [M, (½−t)·1_p]]

    圧縮した二重化環（ブロック次元 r_q + r_p、重みは元のまま）上のパス。
    r_q + r_p = 0 のブロックは定数 +1 の1次元ブロックで埋める。
    """
    maps = corner.compressed()
    weights = corner.algebra.block_weights
    dims = [max(m.shape[0] + m.shape[1], 1) for m in maps]
    algebra = make_block_algebra(list(zip(dims, weights)))

    offdiag = []
    slopes = []
    for m, n in zip(maps, dims):
        r_p, r_q = m.shape
        if r_p + r_q == 0:
            offdiag.append(np.eye(1, dtype=complex))
            slopes.append((np.zeros((1, 1)), np.zeros((1, 1))))
            continue
        block = np.zeros((n, n), dtype=complex)
        block[:r_q, r_q:] = m.conj().T
        block[r_q:, :r_q] = m
        offdiag.append(block)
        sign = np.diag(np.concatenate([np.ones(r_q), -np.ones(r_p)]))
        slopes.append((sign, sign * -0.5))

    def value(t: float) -> Element:
        blocks = [base + slope * t + shift for base, (slope, shift) in zip(offdiag, slopes)]
        return make_element(algebra, blocks, hermitian=True)

    derivative_element = make_element(algebra, [slope for slope, _ in slopes], hermitian=True)

    return OperatorPath(
        algebra=algebra,
        value=value,
        derivative=lambda t: derivative_element,
        name="suspension",
        metadata={"ranks": corner.ranks()},
    )


@dataclass
class IndexHomotopyReport:
    """指数のホモトピー検証結果"""

    samples: list[float]
    indices: list[float]
    kernel_traces: list[float]
    max_deviation: float
    flagged: list[float] = field(default_factory=list)

    @property
    def constant(self) -> bool:
        return self.max_deviation == 0.0

    def to_dict(self) -> dict:
        return {
            "samples": self.samples,
            "indices": self.indices,
            "kernel_traces": self.kernel_traces,
            "max_deviation": self.max_deviation,
            "flagged": self.flagged,
            "constant": self.constant,
        }


def verify_index_homotopy(
    family: Callable[[float], CornerOperator],
    samples: Sequence[float] | int = 11,
    tol: float = RANK_TOL,
) -> IndexHomotopyReport:
    """s ↦ T_s に沿って指数を評価し、一定性を報告する。

    階数判定が不安定な s と、核のトレースが前の標本から変化した s は
    flagged に記録する（失敗にはしない）。
    """
    if isinstance(samples, int):
        samples = list(np.linspace(0.0, 1.0, samples))
    values: list[float] = []
    kernels: list[float] = []
    flagged: list[float] = []
    for s in samples:
        result = breuer_index(family(float(s)), tol)
        if result.ill_conditioned or (kernels and result.kernel_trace != kernels[-1]):
            flagged.append(float(s))
        values.append(result.value)
        kernels.append(result.kernel_trace)
    deviation = max(values) - min(values) if values else 0.0
    if flagged:
        logger.info("階数変化を検出しました flagged=%s", flagged)
    return IndexHomotopyReport(
        samples=[float(s) for s in samples],
        indices=values,
        kernel_traces=kernels,
        max_deviation=float(deviation),
        flagged=flagged,
    )
