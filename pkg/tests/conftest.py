"""pytest fixtures"""

import json
from pathlib import Path

import numpy as np
import pytest
import yaml

from rsflow.services.algebra import TracialAlgebra, make_block_algebra, make_grid_algebra
from rsflow.services.log_manager import shutdown_logging
from rsflow.services.models import QuadratureConfig
from rsflow.services.paths import OperatorPath, linear_path


@pytest.fixture(autouse=True)
def _reset_logging():
    """テストごとにログハンドラーを閉じる。"""
    yield
    shutdown_logging()


@pytest.fixture
def rng() -> np.random.Generator:
    """固定シードの乱数生成器"""
    return np.random.default_rng(20240601)


@pytest.fixture
def quad() -> QuadratureConfig:
    """テスト用の数値積分設定"""
    return QuadratureConfig(tolerance=1e-9)


@pytest.fixture
def block_algebra() -> TracialAlgebra:
    """2ブロック（次元 2, 3、重み 0.5, 2.0）の環"""
    return make_block_algebra([(2, 0.5), (3, 2.0)])


@pytest.fixture
def grid_algebra() -> TracialAlgebra:
    """4点の grid 環（総重み 1）"""
    return make_grid_algebra([0.125, 0.375, 0.625, 0.875], [0.25, 0.25, 0.25, 0.25])


def scalar_path(start: float, end: float, weight: float = 1.0) -> OperatorPath:
    """1次元ブロックの直線パス start → end"""
    algebra = make_block_algebra([(1, weight)])
    return linear_path(algebra.scalar(start), algebra.scalar(end))


@pytest.fixture
def config_dir(tmp_path: Path) -> Path:
    """テスト用設定ディレクトリを作成する。"""
    config_yaml = {
        "quadrature": {"tolerance": 1.0e-9, "min_panels": 64},
        "cross_check": {"tolerance": 1.0e-5},
        "logging": {"level": "WARNING", "console": True, "file": {"enabled": False}},
    }
    with open(tmp_path / "config.yaml", "w", encoding="utf-8") as f:
        yaml.dump(config_yaml, f)
    return tmp_path


@pytest.fixture
def write_spec(tmp_path: Path):
    """実行仕様 JSON を書き出すヘルパー"""

    def _write(data: dict, name: str = "spec.json") -> Path:
        path = tmp_path / name
        path.write_text(json.dumps(data), encoding="utf-8")
        return path

    return _write
