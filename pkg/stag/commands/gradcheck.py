"""``stag gradcheck``: tape gradients against central differences."""

import argparse
import logging

from ..results import write_results
from ..services.gradcheck import TOLERANCE, run_gradcheck
from . import common

logger = logging.getLogger(__name__)


def register(subparsers, parents):
    parser = subparsers.add_parser("gradcheck", parents=parents, help="finite-difference gradient check")
    parser.add_argument("--fraction", type=float, default=0.25, help="share of model coordinates checked")
    parser.add_argument("--tolerance", type=float, default=TOLERANCE)
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    if args.dry_run:
        common.print_manifest(common.flag_manifest(args))
        return 0
    results = run_gradcheck(args.seed if args.seed is not None else 0, args.fraction)
    rows = [{"case": name, "max_rel_error": err, "passed": err < args.tolerance} for name, err in results.items()]
    path = common.out_path(args, "gradcheck")
    write_results(rows, path)
    failed = [r["case"] for r in rows if not r["passed"]]
    if failed:
        logger.error(f"Gradient check failed for {', '.join(failed)} (tolerance {args.tolerance:g})")
        return 1
    logger.info(f"All {len(rows)} gradient checks within {args.tolerance:g}")
    return 0
