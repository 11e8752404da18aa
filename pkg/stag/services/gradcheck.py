"""Finite-difference harness over every primitive and two end-to-end objectives."""

import logging
from collections.abc import Callable

import numpy as np

from ..autodiff import (
    Node, Param, Tape, add, col_sum, concat, exp, finite_difference_check, gather_rows, log, log_softmax, matmul,
    mean, mul, relu, row_sum, scale, scatter_rows, sigmoid, spmm, sub, take_cols, total_sum,
)
from ..graph import Graph, planted_partition_graph
from ..models.noise import NoiseSpec
from ..models.vi import Granularity
from .layers import build_model, forward
from .losses import LossKind, loss
from .noise import sample_mask
from .vi import build_posterior, elbo

logger = logging.getLogger(__name__)

TOLERANCE = 1e-4


def _away_from_zero(rng: np.random.Generator, shape) -> np.ndarray:
    return rng.uniform(0.2, 1.0, size=shape) * rng.choice([-1.0, 1.0], size=shape)


def toy_graph(seed: int = 0) -> Graph:
    return planted_partition_graph(12, 3, p_in=0.6, p_out=0.1, n_features=4, seed=seed)


def primitive_cases(seed: int = 0) -> dict[str, tuple[Callable[[Tape], Node], list[Param]]]:
    """name -> (loss_fn, params) for every differentiable primitive."""
    rng = np.random.default_rng(seed)
    a = Param("a", _away_from_zero(rng, (4, 3)))
    b = Param("b", _away_from_zero(rng, (4, 3)))
    w = Param("w", _away_from_zero(rng, (3, 2)))
    row = Param("row", _away_from_zero(rng, (1, 3)))
    pos = Param("pos", rng.uniform(0.5, 2.0, size=(4, 3)))
    g = toy_graph(seed)
    h = Param("h", rng.normal(size=(g.n_nodes, 3)))
    e = g.augmented.nnz
    mask1 = Param("mask1", rng.normal(1.0, 0.3, size=(e, 1)))
    mask_c = Param("mask_c", rng.normal(1.0, 0.3, size=(e, 3)))
    op = g.operators["gcn"]
    weight = {shape: rng.normal(size=shape) for shape in [(4, 3), (4, 2), (4, 1), (1, 3), (8, 3), (4, 6),
                                                          (6, 3), (3, 1), (g.n_nodes, 3)]}

    def project(node: Node) -> Node:
        return total_sum(mul(node, weight[node.shape]))

    def case(fn, *params):
        return (lambda tape: project(fn(tape, *[tape.param(p) for p in params])), list(params))

    return {
        "matmul": case(lambda t, x, y: matmul(x, y), a, w),
        "add": case(lambda t, x, y: add(x, y), a, b),
        "add_row": case(lambda t, x, r: add(x, r), a, row),
        "sub": case(lambda t, x, y: sub(x, y), a, b),
        "sub_row": case(lambda t, r, x: sub(r, x), row, a),
        "mul": case(lambda t, x, y: mul(x, y), a, b),
        "scale": case(lambda t, x: scale(x, -1.7), a),
        "relu": case(lambda t, x: relu(x), a),
        "exp": case(lambda t, x: exp(x), a),
        "sigmoid": case(lambda t, x: sigmoid(x), a),
        "log": case(lambda t, x: log(x), pos),
        "row_sum": case(lambda t, x: row_sum(x), a),
        "col_sum": case(lambda t, x: col_sum(x), a),
        "total_sum": (lambda tape: scale(total_sum(mul(tape.param(a), tape.param(b))), 0.5), [a, b]),
        "mean": (lambda tape: mean(mul(tape.param(a), tape.param(a))), [a]),
        "log_softmax": case(lambda t, x: log_softmax(x), a),
        "concat_rows": case(lambda t, x, y: concat([x, y], axis=0), a, b),
        "concat_cols": case(lambda t, x, y: concat([x, y], axis=1), a, b),
        "gather_rows": case(lambda t, x: gather_rows(x, np.array([0, 2, 2, 3, 1, 0, 3, 3])), a),
        "scatter_rows": case(lambda t, x: scatter_rows(x, np.array([1, 1, 0, 5]), 6), a),
        "take_cols": case(lambda t, x: take_cols(x, 1), w),
        "spmm": case(lambda t, x: spmm(op, x), h),
        "spmm_mask_shared": case(lambda t, x, m: spmm(op, x, m), h, mask1),
        "spmm_mask_channel": case(lambda t, x, m: spmm(op, x, m), h, mask_c),
    }


def gcn_case(seed: int = 0) -> tuple[Callable[[Tape], Node], list[Param]]:
    """2-layer GCN with a frozen stag_full Normal mask under cross-entropy."""
    g = toy_graph(seed)
    rng = np.random.default_rng(seed)
    model = build_model(g.n_features, 5, g.num_classes, 2, "gcn", rng)
    spec = NoiseSpec.normal(1.0, 0.4)
    mask = sample_mask(spec, g, model.depth, model.widths, rng)
    return (lambda tape: loss(LossKind.cross_entropy, forward(model, g, mask, tape), g.labels)), model.parameters()


def elbo_case(seed: int = 0, granularity: Granularity | str = Granularity.per_edge_per_channel):
    """ELBO with every reparameterization draw frozen by reseeding inside the loss."""
    g = toy_graph(seed)
    rng = np.random.default_rng(seed)
    model = build_model(g.n_features, 5, g.num_classes, 2, "gcn", rng)
    q = build_posterior(granularity, max(model.widths), 1.0, -1.0, 0.5, g.n_features, rng, hidden=6)

    def loss_fn(tape):
        value = elbo(model, q, g, g.labels, np.random.default_rng(seed + 1), tape=tape)
        return scale(value, -1.0 / g.n_nodes)

    return loss_fn, model.parameters() + q.parameters()


def run_gradcheck(seed: int = 0, fraction: float = 0.25) -> dict[str, float]:
    """Max relative error per case."""
    results = {}
    for name, (fn, params) in primitive_cases(seed).items():
        results[name] = finite_difference_check(fn, params, fraction=1.0, seed=seed)
    for name, (fn, params) in {"gcn_frozen_mask": gcn_case(seed), "elbo_frozen_draws": elbo_case(seed)}.items():
        results[name] = finite_difference_check(fn, params, fraction=fraction, seed=seed)
    for name, err in results.items():
        level = logging.INFO if err < TOLERANCE else logging.WARNING
        logger.log(level, f"{name:>20}: max relative error {err:.2e}")
    return results
