"""``stag bench``: per-iteration wall time of deterministic vs stochastic aggregation."""

import argparse
import logging
import time

import numpy as np

from ..autodiff import Tape
from ..datasets import load_dataset
from ..graph import Graph
from ..models.noise import NoiseSpec
from ..results import write_results
from ..services.layers import build_model, forward_stochastic
from ..services.losses import loss
from ..services.noise import preset_spec
from ..services.train import Adam
from . import common

logger = logging.getLogger(__name__)


def register(subparsers, parents):
    parser = subparsers.add_parser("bench", parents=parents, help="training-step timing with and without masks")
    parser.add_argument("--dataset", default="cora")
    parser.add_argument("--depth", type=int, default=2)
    parser.add_argument("--width", type=int, default=128)
    parser.add_argument("--iters", type=int, default=20)
    parser.add_argument("--warmup", type=int, default=3)
    parser.add_argument("--sigma", type=float, default=0.8, help="stag_full Normal(1, sigma)")
    parser.set_defaults(handler=run)


def time_iterations(g: Graph, noise: NoiseSpec, depth: int, width: int, iters: int, warmup: int, seed: int) -> float:
    """Mean seconds per forward + backward + Adam step."""
    rng = np.random.default_rng(seed)
    model = build_model(g.n_features, width, g.num_classes, depth, "gcn", rng)
    optimizer = Adam(model.parameters(), lr=5e-4)
    times = []
    for i in range(warmup + iters):
        start = time.perf_counter()
        optimizer.zero_grad()
        tape = Tape()
        objective = loss("cross_entropy", forward_stochastic(model, g, noise, rng, tape), g.labels)
        tape.backward(objective)
        optimizer.step()
        if i >= warmup:
            times.append(time.perf_counter() - start)
    return float(np.mean(times))


def run(args: argparse.Namespace) -> int:
    if args.dry_run:
        common.print_manifest(common.flag_manifest(args))
        return 0
    seed = args.seed if args.seed is not None else 0
    g = load_dataset(args.dataset, seed=seed)
    stag = preset_spec("stag_full", "normal", mu=1.0, sigma=args.sigma)
    deterministic = time_iterations(g, NoiseSpec.delta(), args.depth, args.width, args.iters, args.warmup, seed)
    stochastic = time_iterations(g, stag, args.depth, args.width, args.iters, args.warmup, seed)
    ratio = stochastic / deterministic
    row = {"dataset": g.name, "depth": args.depth, "width": args.width, "iters": args.iters,
           "deterministic_ms": 1e3 * deterministic, "stag_ms": 1e3 * stochastic, "ratio": ratio}
    write_results([row], common.out_path(args, "bench"))
    logger.info(f"{g.name} L={args.depth} width={args.width}: deterministic {1e3 * deterministic:.1f} ms, "
                f"{stag.label()} {1e3 * stochastic:.1f} ms per iteration (x{ratio:.2f})")
    return 0
