"""``stag oversmooth``: Dirichlet-energy trajectories under repeated noisy smoothing."""

import argparse
import logging

from ..graph import low_frequency_signal, random_geometric_graph
from ..models.noise import NoiseSpec
from ..results import write_results
from ..services.analysis import matched_moment_specs, oversmoothing_trajectory
from ..utils import run_indexed
from . import common

logger = logging.getLogger(__name__)


def register(subparsers, parents):
    parser = subparsers.add_parser("oversmooth", parents=parents, help="energy decay on a random geometric graph")
    parser.add_argument("--nodes", type=int, default=200)
    parser.add_argument("--radius", type=float, default=0.125)
    parser.add_argument("--layers", type=int, default=64)
    parser.add_argument("--runs", type=int, default=10)
    parser.add_argument("--eigvecs", type=int, default=20, help="low-frequency eigenvectors mixed into the signal")
    parser.add_argument("--mean", type=float, default=0.5, help="noise mean shared by every family")
    parser.add_argument("--variance", type=float, default=0.25, help="noise variance shared by every family")
    parser.add_argument("--no-normalize", action="store_true", help="skip degree renormalization of noisy masks")
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    if args.dry_run:
        common.print_manifest(common.flag_manifest(args))
        return 0
    seed = args.seed if args.seed is not None else 0
    g = random_geometric_graph(args.nodes, args.radius, seed)
    signal = low_frequency_signal(g, min(args.eigvecs, g.n_nodes), seed)
    logger.info(f"Geometric graph: {g.n_nodes} nodes, {g.n_edges // 2} undirected edges")

    specs = {"deterministic": NoiseSpec.delta()}
    specs.update(matched_moment_specs(args.mean, args.variance, normalize_degree=not args.no_normalize))
    names = list(specs)
    trajectories = run_indexed(
        lambda i: oversmoothing_trajectory(g, signal, specs[names[i]], args.layers, args.runs, seed, names[i]),
        len(names), common.workers(args),
    )

    rows = []
    for layer in range(args.layers):
        row = {"layer": layer}
        for t in trajectories:
            row[f"{t.label}_mean_energy"] = float(t.mean[layer])
            row[f"{t.label}_std_energy"] = float(t.std[layer])
        rows.append(row)
    path = common.out_path(args, "oversmooth")
    write_results(rows, path)
    last = min(10, args.layers - 1)
    for t in trajectories:
        logger.info(f"{t.label:>13}: energy at layer {last} = {t.mean[last]:.4e} (layer 0: {t.mean[0]:.4e})")
    logger.info(f"Results in {path}")
    return 0
