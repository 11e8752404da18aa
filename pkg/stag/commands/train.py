"""``stag train``: node classification with a noise preset, over seeded runs."""

import argparse
import logging

from ..errors import ConfigError
from ..run_config import noise_spec
from . import common

logger = logging.getLogger(__name__)

NOISE_CHOICES = ("delta", "dropout", "fastgcn", "dropedge", "gdc", "stag_full", "normal", "uniform", "bernoulli")

NOISE_KEYS = {
    "p_drop": "noise.p_drop",
    "mu": "noise.mu",
    "sigma": "noise.sigma",
    "a": "noise.a",
    "b": "noise.b",
}


def noise_overrides(text: str | None) -> dict[str, str]:
    """Keys for ``--noise``; ``normal:0.8``, ``uniform:0.4`` and ``bernoulli:0.2`` name table cells.

    normal:s is Normal(1, s), uniform:w is Uniform(1 - w, 1 + w), bernoulli:p drops with probability p.
    """
    if text is None:
        return {}
    name, _, param = text.partition(":")
    if name not in NOISE_CHOICES:
        raise ConfigError(f"--noise: unknown noise {name!r} (expected one of {', '.join(NOISE_CHOICES)})")
    if name == "delta":
        return {"noise.family": "delta"}
    if name not in ("normal", "uniform", "bernoulli"):
        if param:
            raise ConfigError(f"--noise: preset {name} takes its parameters from --p-drop/--mu/--sigma")
        return {"noise.preset": name}
    keys = {"noise.preset": "stag_full", "noise.family": name}
    if param:
        try:
            value = float(param)
        except ValueError as e:
            raise ConfigError(f"--noise: {param!r} is not a number") from e
        if name == "normal":
            keys.update({"noise.mu": "1.0", "noise.sigma": str(value)})
        elif name == "uniform":
            keys.update({"noise.a": str(1.0 - value), "noise.b": str(1.0 + value)})
        else:
            keys["noise.p_drop"] = str(value)
    return keys


def register(subparsers, parents):
    parser = subparsers.add_parser("train", parents=parents, help="train a node classifier with stochastic aggregation")
    common.add_training_flags(parser)
    parser.add_argument("--noise", default=None,
                        help=f"one of {', '.join(NOISE_CHOICES)}; normal:S, uniform:W, bernoulli:P name table cells")
    parser.add_argument("--p-drop", type=float, default=None)
    parser.add_argument("--mu", type=float, default=None)
    parser.add_argument("--sigma", type=float, default=None)
    parser.add_argument("--a", type=float, default=None)
    parser.add_argument("--b", type=float, default=None)
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    cfg = common.resolve(args, common.TRAINING_KEYS | NOISE_KEYS, noise_overrides(args.noise))
    spec = noise_spec(cfg)
    if args.dry_run:
        common.print_manifest(cfg.manifest())
        return 0
    noise = f"{spec.preset}_{spec.label()}" if spec.preset else spec.label()
    label = f"{cfg.model.kind}_L{cfg.model.depth}_{noise}"
    results = common.train_runs(cfg, label, lambda model, g, rng: spec, common.workers(args), args.save_model)
    path = common.out_path(args, "train")
    summary = common.write_runs(path, label, results)
    logger.info(str(summary))
    common.finish(cfg, path)
    return 0
