"""組み込みパス族サービス

実行仕様（RunSpec）の backend / path 記述から環とパスを構成する。
族は名前で登録し、パラメータの誤りは ParameterError（key 付き）で報告する。
"""

import math
from collections.abc import Callable
from dataclasses import dataclass, replace
from typing import Any, Literal

import numpy as np

from rsflow.services.algebra import (
    Element,
    TracialAlgebra,
    hermitian_with_spectrum,
    make_block_algebra,
    make_element,
    make_grid_algebra,
    random_hermitian,
)
from rsflow.services.errors import ConstructionError, ParameterError
from rsflow.services.gallery import CoveringError, CoveringSpec, build_covering_path, build_tan_wrap_loop
from rsflow.services.index import breuer_index, corner_from_maps, suspension_path
from rsflow.services.log_manager import get_logger
from rsflow.services.models import BackendSpec, PathSpec
from rsflow.services.paths import OperatorPath, linear_path, sampled_path

logger = get_logger("app")

BackendKind = Literal["block", "grid", "any"]
Builder = Callable[[TracialAlgebra, dict[str, Any]], OperatorPath]


@dataclass(frozen=True)
class PathFamily:
    """組み込みパス族

    owns_algebra が True の族（covering, suspension）は環を自分で構成し、
    backend の blocks / points を使わない。
    """

    name: str
    description: str
    backend: BackendKind
    builder: Builder
    params: tuple[str, ...] = ()
    owns_algebra: bool = False


# =====================================================
# 値の解釈
# =====================================================


def parse_complex(value: Any, key: str) -> complex:
    """数値または [re, im] を複素数にする。"""
    if isinstance(value, bool):
        raise ParameterError(f"{key}: 数値ではありません", key=key)
    if isinstance(value, (int, float)):
        return complex(float(value), 0.0)
    if isinstance(value, (list, tuple)) and len(value) == 2 and all(
        isinstance(v, (int, float)) and not isinstance(v, bool) for v in value
    ):
        return complex(float(value[0]), float(value[1]))
    raise ParameterError(f"{key}: 数値か [re, im] で指定してください: {value!r}", key=key)


def parse_matrix(value: Any, key: str) -> np.ndarray:
    """行優先の入れ子配列を複素行列にする。"""
    if not isinstance(value, (list, tuple)) or not all(isinstance(row, (list, tuple)) for row in value):
        raise ParameterError(f"{key}: 行列は入れ子の配列で指定してください", key=key)
    widths = {len(row) for row in value}
    if len(widths) > 1:
        raise ParameterError(f"{key}: 行の長さが揃っていません", key=key)
    rows = [[parse_complex(x, f"{key}[{i}][{j}]") for j, x in enumerate(row)] for i, row in enumerate(value)]
    width = widths.pop() if widths else 0
    return np.array(rows, dtype=complex).reshape(len(rows), width)


def _is_flat(value: Any) -> bool:
    return isinstance(value, (list, tuple)) and all(
        isinstance(x, (int, float)) and not isinstance(x, bool) for x in value
    )


def parse_element(algebra: TracialAlgebra, value: Any, key: str) -> Element:
    """元の記述を解釈する。

    block: ブロックごとの行列の列。行列の代わりに実数の列を渡すと対角成分とみなす。
    grid: 値の列（エルミート元なので実数）。
    """
    if not isinstance(value, (list, tuple)):
        raise ParameterError(f"{key}: 配列で指定してください", key=key)
    try:
        if not algebra.is_block:
            if not _is_flat(value):
                raise ParameterError(f"{key}: grid の元は実数の列で指定してください", key=key)
            return make_element(algebra, [np.asarray(value, dtype=float)], hermitian=True)
        blocks_in = value
        if len(blocks_in) != len(algebra.dims):
            raise ParameterError(
                f"{key}: ブロック数が一致しません: {len(blocks_in)} != {len(algebra.dims)}", key=key
            )
        blocks = []
        for k, block in enumerate(blocks_in):
            if _is_flat(block):
                blocks.append(np.diag(np.asarray(block, dtype=complex)))
            else:
                blocks.append(parse_matrix(block, f"{key}[{k}]"))
        return make_element(algebra, blocks, hermitian=True)
    except ParameterError:
        raise
    except ConstructionError as e:
        raise ParameterError(f"{key}: {e}", key=key, reason=e.reason) from e


def _number(params: dict[str, Any], name: str, default: float | None = None) -> float:
    value = params.get(name, default)
    if value is None:
        raise ParameterError(f"パラメータ {name} が必要です", key=name, reason="missing_parameter")
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ParameterError(f"{name}: 有限の数値で指定してください: {value!r}", key=name)
    return float(value)


def _integer(params: dict[str, Any], name: str, default: int | None = None, minimum: int = 0) -> int:
    value = _number(params, name, default)
    if int(value) != value or value < minimum:
        raise ParameterError(f"{name}: {minimum} 以上の整数で指定してください: {value!r}", key=name)
    return int(value)


def _vector(params: dict[str, Any], name: str, length: int | None = None) -> np.ndarray:
    value = params.get(name)
    if value is None:
        raise ParameterError(f"パラメータ {name} が必要です", key=name, reason="missing_parameter")
    if not _is_flat(value) or (length is not None and len(value) != length):
        expected = f"長さ {length} の" if length is not None else ""
        raise ParameterError(f"{name}: {expected}実数の列で指定してください", key=name)
    return np.asarray(value, dtype=float)


# =====================================================
# 族の構成関数
# =====================================================


def _scalar_linear(algebra: TracialAlgebra, params: dict[str, Any]) -> OperatorPath:
    """D_t = ((1−t)a + tb)·1"""
    a = _number(params, "a")
    b = _number(params, "b")
    return linear_path(algebra.scalar(a), algebra.scalar(b), name="scalar_linear")


def _linear(algebra: TracialAlgebra, params: dict[str, Any]) -> OperatorPath:
    """D_t = (1−t)·start + t·end"""
    start = parse_element(algebra, params.get("start"), "start")
    end = parse_element(algebra, params.get("end"), "end")
    return linear_path(start, end, name="linear")


def random_curved_path(
    algebra: TracialAlgebra, rng: np.random.Generator, bump: float = 0.5, name: str = "random_curved"
) -> OperatorPath:
    """D_t = (1−t)A + tB + sin(πt)·C（A, B は |固有値| ∈ [0.3, 2] の可逆元）"""
    a = hermitian_with_spectrum(algebra, rng)
    b = hermitian_with_spectrum(algebra, rng)
    c = random_hermitian(algebra, rng, scale=bump)
    slope = b - a
    return OperatorPath(
        algebra=algebra,
        value=lambda t: a * (1.0 - t) + b * t + c * math.sin(math.pi * t),
        derivative=lambda t: slope + c * (math.pi * math.cos(math.pi * t)),
        name=name,
    )


def _random_block(algebra: TracialAlgebra, params: dict[str, Any]) -> OperatorPath:
    seed = _integer(params, "seed", 0)
    bump = _number(params, "bump", 0.5)
    return random_curved_path(algebra, np.random.default_rng(seed), bump, name=f"random_block(seed={seed})")


def _tan_wrap(algebra: TracialAlgebra, params: dict[str, Any]) -> OperatorPath:
    offset = _number(params, "offset", 0.0)
    try:
        return build_tan_wrap_loop(algebra, offset)
    except ParameterError:
        raise
    except ConstructionError as e:
        raise ParameterError(str(e), key="offset", reason=e.reason) from e


def _covering(algebra: TracialAlgebra, params: dict[str, Any]) -> OperatorPath:
    """params: m, k, edge_start, edge_end, potential_start, potential_end, trace ("gamma" | "full")"""
    m = _integer(params, "m", 4, minimum=3)
    k = _integer(params, "k", 3, minimum=1)
    trace = params.get("trace", "gamma")
    if trace not in ("gamma", "full"):
        raise ParameterError(f"trace は gamma か full で指定してください: {trace!r}", key="trace")
    base = 0.2 * np.cos(2.0 * math.pi * np.arange(m) / m)
    edge_start = _vector(params, "edge_start") if "edge_start" in params else np.ones(m)
    edge_end = _vector(params, "edge_end") if "edge_end" in params else edge_start
    potential_start = (
        _vector(params, "potential_start") if "potential_start" in params else 0.3 + base
    )
    potential_end = _vector(params, "potential_end") if "potential_end" in params else -0.6 + base
    for name, vec in (("edge_start", edge_start), ("edge_end", edge_end)):
        if vec.shape != (m,):
            raise ParameterError(f"{name}: 長さ m={m} で指定してください", key=name)
    try:
        covering = build_covering_path(
            CoveringSpec.linear(m, k, edge_start, edge_end, potential_start, potential_end)
        )
    except CoveringError as e:
        raise ParameterError(str(e), key="potential_start", reason=e.reason) from e
    except ConstructionError as e:
        raise ParameterError(str(e), key="m", reason=e.reason) from e
    path = covering.path if trace == "gamma" else covering.full_path
    path.metadata["equivariance_residual"] = covering.equivariance_residual
    return path


def _suspension(algebra: TracialAlgebra, params: dict[str, Any]) -> OperatorPath:
    """params: maps = [{"weight": c, "matrix": M（r_p × r_q）}, ...]"""
    maps = params.get("maps")
    if not isinstance(maps, list) or not maps:
        raise ParameterError("maps は1個以上の {weight, matrix} の列で指定してください", key="maps")
    parsed = []
    for i, item in enumerate(maps):
        if not isinstance(item, dict):
            raise ParameterError(f"maps[{i}] はオブジェクトで指定してください", key=f"maps[{i}]")
        weight = _number(item, "weight", 1.0)
        if weight <= 0:
            raise ParameterError(f"maps[{i}].weight は正で指定してください", key=f"maps[{i}].weight")
        shape = item.get("shape")
        matrix = parse_matrix(item.get("matrix", []), f"maps[{i}].matrix")
        if shape is not None:
            if not (isinstance(shape, list) and len(shape) == 2 and all(isinstance(s, int) and s >= 0 for s in shape)):
                raise ParameterError(f"maps[{i}].shape は [r_p, r_q] で指定してください", key=f"maps[{i}].shape")
            if matrix.size == 0:
                matrix = np.zeros(tuple(shape), dtype=complex)
            elif matrix.shape != tuple(shape):
                raise ParameterError(f"maps[{i}].matrix の形状が shape と一致しません", key=f"maps[{i}].matrix")
        parsed.append((weight, matrix))
    corner = corner_from_maps(parsed)
    path = suspension_path(corner)
    path.metadata["breuer_index"] = breuer_index(corner).value
    return path


FAMILIES: dict[str, PathFamily] = {
    family.name: family
    for family in (
        PathFamily("scalar_linear", "スカラーの直線パス ((1−t)a + tb)·1", "any", _scalar_linear, ("a", "b")),
        PathFamily("linear", "端点を直線で結ぶパス", "any", _linear, ("start", "end")),
        PathFamily("random_block", "シード固定のランダムな曲線パス", "any", _random_block, ("seed", "bump")),
        PathFamily("tan_wrap", "tan ラップループ", "grid", _tan_wrap, ("offset",)),
        PathFamily(
            "covering",
            "閉路の k 重被覆上の同変作用素",
            "block",
            _covering,
            ("m", "k", "edge_start", "edge_end", "potential_start", "potential_end", "trace"),
            owns_algebra=True,
        ),
        PathFamily("suspension", "角作用素の懸垂パス", "block", _suspension, ("maps",), owns_algebra=True),
    )
}
FAMILY_NAMES: tuple[str, ...] = tuple(FAMILIES)


def get_family(name: str) -> PathFamily:
    """名前から族を取得する。

    Raises:
        ParameterError: 未登録の名前（reason: unknown_family）
    """
    family = FAMILIES.get(name)
    if family is None:
        raise ParameterError(
            f"未登録のパス族です: {name}（{', '.join(FAMILY_NAMES)}）",
            key="family",
            reason="unknown_family",
        )
    return family


# =====================================================
# 実行仕様からの構成
# =====================================================


def build_algebra(backend: BackendSpec) -> TracialAlgebra:
    """backend 記述から環を生成する。"""
    if backend.kind == "block":
        return make_block_algebra(backend.blocks)
    if backend.kind == "grid":
        return make_grid_algebra(backend.points, backend.weights)
    raise ParameterError(f"backend.kind は block か grid です: {backend.kind!r}", key="kind")


def check_params(family: PathFamily, params: dict[str, Any]) -> None:
    """族が受け付けないパラメータ名を拒否する。

    Raises:
        ParameterError: 未知のパラメータ（key はその名前、reason: unknown_parameter）
    """
    unknown = sorted(set(params) - set(family.params))
    if unknown:
        raise ParameterError(
            f"族 {family.name} に不明なパラメータがあります: {unknown[0]}（{', '.join(family.params) or 'なし'}）",
            key=unknown[0],
            reason="unknown_parameter",
        )


def build_path(spec: PathSpec, backend: BackendSpec, derivative_step: float | None = None) -> OperatorPath:
    """path 記述（族または標本列）からパスを生成する。

    Args:
        spec: path 記述
        backend: 環の記述
        derivative_step: 導関数を持たないパスの中心差分の刻み（None ならパスの既定値）

    Raises:
        ParameterError: 族名・パラメータ・標本の誤り
    """
    path = _build_path(spec, backend)
    if derivative_step is not None:
        path = replace(path, derivative_step=derivative_step)
    return path


def _build_path(spec: PathSpec, backend: BackendSpec) -> OperatorPath:
    if spec.family is None:
        algebra = build_algebra(backend)
        elements = [
            (float(t), parse_element(algebra, value, f"samples[{i}][1]"))
            for i, (t, value) in enumerate(spec.samples)
        ]
        try:
            return sampled_path(elements)
        except ConstructionError as e:
            raise ParameterError(str(e), key="samples", reason=e.reason) from e

    family = get_family(spec.family)
    check_params(family, spec.params)
    if family.backend != "any" and family.backend != backend.kind:
        raise ParameterError(
            f"族 {family.name} は {family.backend} バックエンド専用です", key="family", reason="unsupported_backend"
        )
    if family.owns_algebra:
        if backend.blocks:
            logger.warning("族 %s は環を自分で構成します。backend.blocks は使いません", family.name)
        algebra = make_block_algebra([(1, 1.0)])
    else:
        algebra = build_algebra(backend)
    path = family.builder(algebra, dict(spec.params))
    logger.info("パスを構成しました family=%s name=%s", family.name, path.name)
    return path
