"""コマンドテスト用の fixtures"""

from pathlib import Path

import pytest

from rsflow.cli import main


@pytest.fixture
def cli(config_dir: Path, capsys: pytest.CaptureFixture):
    """テスト用設定ディレクトリで CLI を実行し、(終了コード, 標準出力) を返す。"""

    def _run(*argv: str) -> tuple[int, str]:
        code = main(["--config-dir", str(config_dir), *argv])
        return code, capsys.readouterr().out

    return _run
