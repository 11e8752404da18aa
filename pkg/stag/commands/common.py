"""Flags, config resolution and result writing shared by the subcommands."""

import argparse
import logging
import re
from collections.abc import Callable
from pathlib import Path

import numpy as np

from ..config import settings
from ..datasets import load_dataset, make_split
from ..graph import Graph
from ..models.records import RunResult, Summary
from ..models.run_config import RunConfig
from ..results import write_results
from ..run_config import load_run_config, log_manifest, write_manifest
from ..services.layers import Model, build_model, save_model
from ..services.train import train_node_classifier
from ..utils import generate_id, rng_stream, run_indexed

logger = logging.getLogger(__name__)

RUN_COLUMNS = ["label", "run", "seed", "epochs_run", "best_epoch", "best_val", "test_metric", "test_std", "seconds"]
EPOCH_COLUMNS = ["label", "run", "epoch", "train_loss", "val_metric"]


def common_parser() -> argparse.ArgumentParser:
    """Flags every subcommand accepts."""
    parser = argparse.ArgumentParser(add_help=False)
    parser.add_argument("--seed", type=int, default=None, help="base seed (run i uses seed + i)")
    parser.add_argument("--out", type=Path, default=None, help="results CSV path")
    parser.add_argument("--config", type=Path, default=None, help="key = value run configuration file")
    parser.add_argument("--dry-run", action="store_true", help="validate, print the manifest and exit")
    parser.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING or ERROR")
    parser.add_argument("--workers", type=int, default=None, help="parallel runs (default STAG_WORKERS)")
    return parser


def add_training_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--dataset", default=None, help="cora, citeseer or synthetic")
    parser.add_argument("--model", dest="kind", default=None, choices=["gcn", "sage_mean", "gin"])
    parser.add_argument("--depth", type=int, default=None)
    parser.add_argument("--hidden", type=int, default=None)
    parser.add_argument("--runs", type=int, default=None)
    parser.add_argument("--epochs", type=int, default=None)
    parser.add_argument("--lr", type=float, default=None)
    parser.add_argument("--l2", type=float, default=None)
    parser.add_argument("--patience", type=int, default=None, help="0 disables early stopping")
    parser.add_argument("--mc-samples", type=int, default=None, help="marginal samples at test time")
    parser.add_argument("--loss", default=None, choices=["cross_entropy", "poisson_nll", "mse"])
    parser.add_argument("--split-policy", default=None, choices=["planetoid_like", "random"])
    parser.add_argument("--save-model", type=Path, default=None, help="directory for per-run checkpoints")


TRAINING_KEYS = {
    "dataset": "data.dataset",
    "kind": "model.kind",
    "depth": "model.depth",
    "hidden": "model.hidden",
    "runs": "train.runs",
    "epochs": "train.epochs",
    "lr": "train.lr",
    "l2": "train.l2",
    "patience": "train.patience",
    "mc_samples": "train.mc_samples",
    "loss": "train.loss",
    "split_policy": "data.split_policy",
    "seed": "train.seed",
}


def _text(value) -> str:
    if isinstance(value, bool):
        return str(value).lower()
    return str(value)


def overrides_from_args(args: argparse.Namespace, keys: dict[str, str]) -> dict[str, str]:
    """Dotted overrides for every flag the user actually set."""
    return {key: _text(getattr(args, dest)) for dest, key in keys.items()
            if getattr(args, dest, None) is not None}


def resolve(args: argparse.Namespace, keys: dict[str, str], extra: dict[str, str] | None = None) -> RunConfig:
    flat = overrides_from_args(args, keys)
    flat.update(extra or {})
    cfg = load_run_config(args.config, flat)
    log_manifest(cfg)
    return cfg


def print_manifest(lines: list[str]):
    for line in lines:
        print(line)


def flag_manifest(args: argparse.Namespace) -> list[str]:
    skip = {"handler", "command", "dry_run", "config", "log_level"}
    return [f"{key}={'' if value is None else _text(value)}" for key, value in sorted(vars(args).items())
            if key not in skip]


def workers(args: argparse.Namespace) -> int:
    return args.workers if args.workers is not None else settings.workers


def out_path(args: argparse.Namespace, command: str) -> Path:
    if args.out is not None:
        return args.out
    return Path(settings.results_dir) / f"{command}_{generate_id()}.csv"


def sibling(path: Path, suffix: str) -> Path:
    """``results.csv`` -> ``results_<suffix>.csv``."""
    return path.with_name(f"{path.stem}_{suffix}{path.suffix or '.csv'}")


def summarize(label: str, results: list[RunResult], metric: str = "accuracy") -> Summary:
    values = np.array([r.test_metric for r in results])
    return Summary(label=label, runs=len(results), mean=float(values.mean()), std=float(values.std()), metric=metric)


def write_runs(path: Path, label: str, results: list[RunResult], extra: dict | None = None,
               metric: str = "accuracy") -> Summary:
    """Per-run rows, a summary row and a sibling per-epoch CSV."""
    extra = extra or {}
    columns = RUN_COLUMNS + list(extra)
    summary = summarize(label, results, metric)
    rows = [r.summary_row(label=label, test_std=None, **extra) for r in results]
    rows.append({"label": label, "run": "summary", "test_metric": summary.mean, "test_std": summary.std, **extra})
    write_results(rows, path, columns)
    epochs = [{"label": label, **h.model_dump()} for r in results for h in r.history]
    write_results(epochs, sibling(path, "epochs"), EPOCH_COLUMNS)
    return summary


def _safe_name(label: str) -> str:
    return re.sub(r"[^\w.-]+", "_", label)


NoiseFactory = Callable[[Model, Graph, np.random.Generator], object]


def train_runs(cfg: RunConfig, label: str, noise_factory: NoiseFactory, n_workers: int = 1,
               save_dir: Path | None = None, g: Graph | None = None) -> list[RunResult]:
    """``cfg.train.runs`` seeded runs on one dataset and split, ordered by run index."""
    g = g if g is not None else load_dataset(cfg.data.dataset, row_normalize_features=cfg.data.row_normalize,
                                             seed=cfg.train.seed)
    split = make_split(g, cfg.data.n_train, cfg.data.n_val, cfg.data.n_test, cfg.data.split_policy, cfg.train.seed)

    def one(run: int) -> RunResult:
        seed = cfg.train.seed + run
        init_rng = rng_stream(seed, 0)
        model = build_model(g.n_features, cfg.model.hidden, g.num_classes, cfg.model.depth, cfg.model.kind, init_rng)
        noise = noise_factory(model, g, init_rng)
        result = train_node_classifier(cfg.train, model, g, split, noise, rng_stream(seed, 1), run,
                                       vi_samples=cfg.vi.mc_samples, kl_scale=cfg.vi.kl_scale)
        if save_dir is not None:
            save_dir.mkdir(parents=True, exist_ok=True)
            save_model(model, save_dir / f"{_safe_name(label)}_run{run}.npz")
        return result

    logger.info(f"{label}: {cfg.train.runs} run(s) on {g.name}, split sizes {split.sizes()}")
    return run_indexed(one, cfg.train.runs, n_workers)


def finish(cfg: RunConfig, path: Path):
    manifest = path.with_suffix(".manifest")
    write_manifest(cfg, manifest)
    logger.info(f"Results in {path} (manifest {manifest.name})")
