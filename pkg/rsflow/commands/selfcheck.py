"""selfcheck コマンド

名前付き不変量をシードから決定的に測定し、レポートを出力する。
いずれかの不変量が許容差を超えた場合は終了コード 1 を返す。
"""

import argparse

from rsflow.commands import EXIT_OK, EXIT_VIOLATION, emit, to_json
from rsflow.services.log_manager import get_logger
from rsflow.services.selfcheck import BUDGETS, INVARIANTS, run_selfcheck

logger = get_logger("check")


def add_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=0, help="乱数シード")
    parser.add_argument("--budget", choices=sorted(BUDGETS), default="small", help="検査の規模")
    parser.add_argument(
        "--only",
        action="append",
        choices=[invariant.name for invariant in INVARIANTS],
        default=None,
        metavar="NAME",
        help="測定する不変量（複数指定可）",
    )
    parser.add_argument("--out", default=None, help="レポートの出力先（省略時は標準出力）")
    parser.set_defaults(func=handle)


def handle(args: argparse.Namespace) -> int:
    report = run_selfcheck(
        seed=args.seed, budget=args.budget, quad=args.config.quadrature, names=args.only
    )
    emit(to_json(report.to_dict()), args.out)
    if not report.passed:
        logger.error("不変量の違反があります failures=%s", ",".join(report.failures))
        return EXIT_VIOLATION
    return EXIT_OK
