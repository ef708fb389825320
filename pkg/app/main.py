import argparse
import logging
import sys
from typing import List, Optional

from app.config import get_settings
from app.exceptions import WillmoreError
from app.services.harness import (
    CSV_COLUMNS,
    EXIT_INPUT,
    apply_overrides,
    cmd_equality_case,
    cmd_evaluate,
    cmd_sweep,
    cmd_verify,
    load_run_config,
)
from app.services.surfaces import FAMILY_KEYS

logger = logging.getLogger(__name__)


def _columns_help() -> str:
    lines = ["[surface] keys per family (plus curvature_sign, ambient_dim, embed_subspace):"]
    lines += [f"  {family:<24} {', '.join(keys)}" for family, keys in FAMILY_KEYS.items()]
    lines += ["", "CSV columns (UTF-8, comma-separated, header row, 12 significant digits):"]
    lines += [f"  {name:<66} {meaning}" for name, meaning in CSV_COLUMNS.items()]
    lines.append("Exit codes: 0 success, 1 mathematical violation, 2 input error.")
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="CSV destination (default: [output] path, else stdout)")
    common.add_argument("--cells", type=int, help="Base quadrature cells per parameter axis")
    common.add_argument("--gauss", type=int, help="Gauss-Legendre points per cell axis")
    common.add_argument("--tolerance", type=float, help="Relative tolerance replacing the defaults")
    common.add_argument("--threads", type=int, help="Worker threads for quadrature blocks")
    common.add_argument("--seed", type=int, help="Seed for random nodes and sample pairs")

    parser = argparse.ArgumentParser(
        prog="willmore",
        description="Willmore energies and monotonicity balances of surfaces in hyperbolic space and the sphere.",
        epilog=_columns_help(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    commands = parser.add_subparsers(dest="command", required=True)
    for name, text in (
        ("evaluate", "Evaluate one functional on the configured surface"),
        ("sweep", "Evaluate a functional along rho, sigma, t or resolution"),
        ("equality-case", "Two-point equality-case residual of a surface in H3"),
    ):
        sub = commands.add_parser(
            name, parents=[common], help=text, epilog=_columns_help(), formatter_class=argparse.RawDescriptionHelpFormatter
        )
        sub.add_argument("--config", required=True, help="INI run configuration")
    verify = commands.add_parser(
        "verify", parents=[common], help="Run the acceptance corpus", epilog=_columns_help(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    verify.add_argument("items", nargs="*", default=["all"], help="Item names or tags (default: all)")
    verify.add_argument("--refine", type=int, default=1, help="Refinement retries for failing items")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    apply_overrides(cells=args.cells, gauss=args.gauss, threads=args.threads, seed=args.seed)
    logging.basicConfig(
        level=getattr(logging, get_settings().LOG_LEVEL.upper(), logging.INFO),
        format="%(asctime)s - %(levelname)s - %(message)s",
    )

    try:
        if args.command == "verify":
            return cmd_verify(args.items, args.out, args.tolerance, args.threads, args.refine)
        config = load_run_config(args.config)
        if args.command == "evaluate":
            return cmd_evaluate(config, args.out, args.tolerance)
        if args.command == "sweep":
            return cmd_sweep(config, args.out, args.tolerance)
        return cmd_equality_case(config, args.out, args.tolerance)
    except WillmoreError as e:
        logger.error("%s: %s", type(e).__name__, e)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
