"""``stag vi-train``: learn the aggregation-weight posterior, or the weight-space BBB baseline."""

import argparse
import logging

from ..models.vi import Granularity
from ..services.vi import build_bbb, build_posterior
from . import common

logger = logging.getLogger(__name__)

VI_KEYS = {
    "granularity": "vi.granularity",
    "mu0": "vi.mu0",
    "log_sigma0": "vi.log_sigma0",
    "sigma_prior": "vi.sigma_prior",
    "independent_draws": "vi.independent_draws",
    "kl_scale": "vi.kl_scale",
    "vi_samples": "vi.mc_samples",
    "amortizer_hidden": "vi.amortizer_hidden",
}


def register(subparsers, parents):
    parser = subparsers.add_parser("vi-train", parents=parents, help="variational inference over aggregation weights")
    common.add_training_flags(parser)
    parser.add_argument("--method", default="stag_vi", choices=["stag_vi", "bbb"])
    parser.add_argument("--granularity", default=None, choices=[g.value for g in Granularity])
    parser.add_argument("--mu0", type=float, default=None)
    parser.add_argument("--log-sigma0", type=float, default=None)
    parser.add_argument("--sigma-prior", type=float, default=None)
    parser.add_argument("--independent-draws", action="store_true", default=None,
                        help="one draw per stored entry even when parameters are shared")
    parser.add_argument("--kl-scale", type=float, default=None)
    parser.add_argument("--vi-samples", type=int, default=None, help="posterior draws per training step")
    parser.add_argument("--amortizer-hidden", type=int, default=None)
    parser.add_argument("--bbb-prior-sigma", type=float, default=1.0)
    parser.add_argument("--bbb-log-sigma0", type=float, default=-5.0)
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    cfg = common.resolve(args, common.TRAINING_KEYS | VI_KEYS)
    if args.dry_run:
        common.print_manifest(cfg.manifest())
        return 0
    vi = cfg.vi

    if args.method == "bbb":
        label = f"{cfg.model.kind}_L{cfg.model.depth}_bbb"

        def factory(model, g, rng):
            return build_bbb(model, prior_sigma=args.bbb_prior_sigma, log_sigma0=args.bbb_log_sigma0)
    else:
        label = f"{cfg.model.kind}_L{cfg.model.depth}_vi_{vi.granularity.value}"

        def factory(model, g, rng):
            return build_posterior(vi.granularity, max(model.widths), vi.mu0, vi.log_sigma0, vi.sigma_prior,
                                   g.n_features, rng, hidden=vi.amortizer_hidden,
                                   independent_draws=vi.independent_draws,
                                   resample_per_layer=cfg.noise.resample_per_layer,
                                   mask_self_loops=cfg.noise.mask_self_loops)

    logger.info(f"{label}: mu0={vi.mu0} log_sigma0={vi.log_sigma0} sigma_prior={vi.sigma_prior}")
    # BBB checkpoints would hold the posterior means, not the trained base weights
    save_dir = args.save_model if args.method != "bbb" else None
    results = common.train_runs(cfg, label, factory, common.workers(args), save_dir)
    path = common.out_path(args, "vi_train")
    summary = common.write_runs(path, label, results)
    logger.info(str(summary))
    common.finish(cfg, path)
    return 0
