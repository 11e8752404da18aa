"""``stag multiset``: the aggregator distinguishability table and the toy multiset classifier."""

import argparse
import logging
from dataclasses import asdict

import numpy as np

from ..errors import ConfigError
from ..results import write_results
from ..services.multisets import (
    AGGREGATORS, SEPARATION_PATTERN, collision_bound, deterministic_features, multiset_dataset, separation_report,
    stochastic_features,
)
from ..services.train import train_multiset_classifier
from ..utils import rng_stream, run_indexed
from . import common

logger = logging.getLogger(__name__)


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise ConfigError(f"--underlying: expected comma-separated numbers, got {text!r}") from e


def register(subparsers, parents):
    parser = subparsers.add_parser("multiset", parents=parents, help="multiset distinguishability experiments")
    parser.add_argument("--samples", type=int, default=10**6, help="Monte-Carlo draws per multiset")
    parser.add_argument("--underlying", default="-4,-2,-1,1,2,4")
    parser.add_argument("--max-multiplicity", type=int, default=2)
    parser.add_argument("--steps", type=int, default=2000)
    parser.add_argument("--draws", type=int, default=16, help="stochastic aggregates per multiset")
    parser.add_argument("--runs", type=int, default=3)
    parser.add_argument("--modes", default="stochastic,mean,sum,max")
    parser.add_argument("--skip-table", action="store_true")
    parser.add_argument("--skip-classifier", action="store_true")
    parser.set_defaults(handler=run)


def _table(args, seed: int, path):
    rows = separation_report(args.samples, seed)
    write_results([asdict(r) for r in rows], path)
    mismatches = [
        (r.pair_id, r.aggregator) for r in rows
        if r.aggregator in AGGREGATORS and r.distinguished != SEPARATION_PATTERN[r.pair_id][r.aggregator]
    ]
    missed = [r.pair_id for r in rows if r.aggregator == "stochastic" and not r.distinguished]
    if mismatches:
        logger.warning(f"Deterministic aggregators deviate from the expected pattern at {mismatches}")
    if missed:
        logger.warning(f"Stochastic statistic failed to separate pair(s) {missed}")
    logger.info(f"Aggregator table: {len(rows)} rows, stochastic statistic separates "
                f"{4 - len(missed)}/4 pairs")


def _classifier(args, seed: int, path, n_workers: int):
    modes = [m.strip() for m in args.modes.split(",") if m.strip()]
    unknown = [m for m in modes if m != "stochastic" and m not in AGGREGATORS]
    if unknown:
        raise ConfigError(f"--modes: unknown feature mode(s) {unknown}")
    data = multiset_dataset(_floats(args.underlying), args.max_multiplicity, rng_stream(seed, 0),
                            mode="sum", draws=args.draws)
    classes = data.classes
    mean_bound = collision_bound(classes, "mean")
    logger.info(f"{len(classes)} multiset classes, MEAN collision bound {mean_bound:.4f}")

    jobs = [(mode, run) for mode in modes for run in range(args.runs)]

    def one(i: int) -> dict:
        mode, run = jobs[i]
        rng = rng_stream(seed + run, 1)
        if mode == "stochastic":
            fit = train_multiset_classifier(lambda r: stochastic_features(classes, args.draws, r), data.labels,
                                            len(classes), rng, steps=args.steps)
            bound = None
        else:
            fixed = deterministic_features(classes, mode)
            fit = train_multiset_classifier(lambda r: fixed, data.labels, len(classes), rng, steps=args.steps,
                                            stochastic=False)
            bound = collision_bound(classes, mode)
        return {"mode": mode, "run": run, "accuracy": fit.accuracy, "final_loss": fit.final_loss,
                "collision_bound": bound, "mean_bound": mean_bound}

    rows = run_indexed(one, len(jobs), n_workers)
    write_results(rows, path)
    for mode in modes:
        accs = [r["accuracy"] for r in rows if r["mode"] == mode]
        logger.info(f"{mode:>10}: median accuracy {np.median(accs):.4f} over {len(accs)} run(s)")


def run(args: argparse.Namespace) -> int:
    if args.dry_run:
        common.print_manifest(common.flag_manifest(args))
        return 0
    seed = args.seed if args.seed is not None else 0
    path = common.out_path(args, "multiset")
    if not args.skip_table:
        _table(args, seed, common.sibling(path, "table"))
    if not args.skip_classifier:
        _classifier(args, seed, common.sibling(path, "classifier"), common.workers(args))
    logger.info(f"Results next to {path}")
    return 0
