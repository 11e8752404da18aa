"""``stag depth-sweep``: accuracy against depth for Dropout and STAG Normal(1, 1)."""

import argparse
import logging

from ..datasets import load_dataset
from ..errors import ConfigError
from ..run_config import load_run_config, noise_spec
from . import common

logger = logging.getLogger(__name__)


def _methods(args) -> dict[str, dict[str, str]]:
    return {
        "dropout": {"noise.preset": "dropout", "noise.family": "bernoulli", "noise.p_drop": str(args.p_drop)},
        "stag": {"noise.preset": "stag_full", "noise.family": "normal", "noise.mu": "1.0",
                 "noise.sigma": str(args.sigma)},
    }


def register(subparsers, parents):
    parser = subparsers.add_parser("depth-sweep", parents=parents, help="test accuracy for depths min..max")
    parser.add_argument("--dataset", default="cora")
    parser.add_argument("--min-depth", type=int, default=2)
    parser.add_argument("--max-depth", type=int, default=8)
    parser.add_argument("--runs", type=int, default=5)
    parser.add_argument("--epochs", type=int, default=400)
    parser.add_argument("--hidden", type=int, default=16)
    parser.add_argument("--lr", type=float, default=1e-2)
    parser.add_argument("--l2", type=float, default=5e-4)
    parser.add_argument("--p-drop", type=float, default=0.5, help="dropout rate")
    parser.add_argument("--sigma", type=float, default=1.0, help="STAG Normal(1, sigma)")
    parser.set_defaults(handler=run)


def _config(args, depth: int, noise: dict[str, str]):
    keys = {
        "data.dataset": args.dataset,
        "model.depth": str(depth),
        "model.hidden": str(args.hidden),
        "train.runs": str(args.runs),
        "train.epochs": str(args.epochs),
        "train.lr": str(args.lr),
        "train.l2": str(args.l2),
        "train.patience": "0",
    }
    if args.seed is not None:
        keys["train.seed"] = str(args.seed)
    keys.update(noise)
    return load_run_config(args.config, keys)


def run(args: argparse.Namespace) -> int:
    if args.min_depth < 1 or args.max_depth < args.min_depth:
        raise ConfigError(f"invalid depth range {args.min_depth}..{args.max_depth}")
    configs = {
        (depth, method): _config(args, depth, noise)
        for depth in range(args.min_depth, args.max_depth + 1)
        for method, noise in _methods(args).items()
    }
    if args.dry_run:
        for cfg in configs.values():
            common.print_manifest(cfg.manifest())
        return 0
    path = common.out_path(args, "depth_sweep")
    g = None
    for (depth, method), cfg in configs.items():
        spec = noise_spec(cfg)
        if g is None:
            g = load_dataset(cfg.data.dataset, row_normalize_features=cfg.data.row_normalize, seed=cfg.train.seed)
        label = f"{method}_L{depth}"
        results = common.train_runs(cfg, label, lambda model, graph, rng, spec=spec: spec, common.workers(args), g=g)
        summary = common.write_runs(path, label, results, extra={"depth": depth, "method": method})
        logger.info(str(summary))
    common.finish(cfg, path)
    return 0
