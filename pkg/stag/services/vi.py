"""Variational posteriors over aggregation weights, and the weight-space baseline.

Posterior draws are reparameterized (z = mu + exp(log_sigma) * eps), so
gradients reach mu, log_sigma and, for edge granularities, the amortizing
encoder that predicts them.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from ..autodiff import (
    Node, Param, Tape, add, concat, exp, gather_rows, matmul, mul, relu, scale, spmm, sub, take_cols, total_sum,
)
from ..graph import Graph
from ..models.vi import Granularity
from .layers import Model, average_predictions, forward
from .losses import LossKind, loss
from .noise import MaskSample

logger = logging.getLogger(__name__)

PRIOR_MEAN = 1.0
AMORTIZER_HIDDEN = 32


def reparameterize(mu: Node, log_sigma: Node, eps: np.ndarray) -> Node:
    return add(mu, mul(exp(log_sigma), eps))


def kl_normal(mu: Node, log_sigma: Node, prior_mu: float, prior_sigma: float) -> Node:
    """Closed-form KL(N(mu, sigma^2) || N(prior_mu, prior_sigma^2)) summed over coordinates.

    Written in terms of log(sigma / prior_sigma) so that q = prior gives exactly 0.
    """
    if prior_sigma <= 0:
        raise ValueError(f"prior sigma must be positive, got {prior_sigma}")
    n = mu.value.size
    log_ratio = sub(log_sigma, np.full(log_sigma.shape, np.log(prior_sigma)))
    z = scale(sub(mu, np.full(mu.shape, prior_mu)), 1.0 / prior_sigma)
    quad = scale(add(exp(scale(log_ratio, 2.0)), mul(z, z)), 0.5)
    return sub(total_sum(sub(quad, log_ratio)), np.array([[0.5 * n]]))


@dataclass
class VariationalPosterior:
    """Factorized Normal q(Z) at one granularity.

    ``channels`` is the widest layer input; narrower layers use the leading columns.
    """

    granularity: Granularity
    channels: int
    mu0: float
    log_sigma0: float
    sigma_prior: float
    params: dict[str, Param] = field(default_factory=dict)
    independent_draws: bool = False
    resample_per_layer: bool = True
    mask_self_loops: bool = True

    @property
    def width(self) -> int:
        return self.channels if self.granularity.per_channel_values else 1

    def parameters(self) -> list[Param]:
        return list(self.params.values())

    def draw(self, g: Graph, depth: int, widths, rng: np.random.Generator, tape: Tape | None = None) -> MaskSample:
        return sample_posterior(self, g, depth, widths, rng, tape).mask


def build_posterior(
    granularity: Granularity | str,
    channels: int,
    mu0: float,
    log_sigma0: float,
    sigma_prior: float,
    in_features: int | None = None,
    rng: np.random.Generator | None = None,
    hidden: int = AMORTIZER_HIDDEN,
    independent_draws: bool = False,
    resample_per_layer: bool = True,
    mask_self_loops: bool = True,
) -> VariationalPosterior:
    granularity = Granularity(granularity)
    rng = rng or np.random.default_rng(0)
    q = VariationalPosterior(granularity, channels, mu0, log_sigma0, sigma_prior,
                             independent_draws=independent_draws, resample_per_layer=resample_per_layer,
                             mask_self_loops=mask_self_loops)
    width = q.width
    if not granularity.amortized:
        q.params["q.mu"] = Param("q.mu", np.full((1, width), mu0))
        q.params["q.log_sigma"] = Param("q.log_sigma", np.full((1, width), log_sigma0))
        return q
    if in_features is None:
        raise ValueError(f"{granularity.value} posterior needs in_features for its encoder")

    def glorot(fan_in, fan_out):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-limit, limit, size=(fan_in, fan_out))

    shapes = {
        "amortizer.enc0.weight": glorot(in_features, hidden),
        "amortizer.enc1.weight": glorot(hidden, hidden),
        "amortizer.head.weight": glorot(2 * hidden, hidden),
        "amortizer.head.bias": np.zeros((1, hidden)),
        "amortizer.mu.weight": rng.normal(0.0, 0.01, size=(hidden, width)),
        "amortizer.mu.bias": np.full((1, width), mu0),
        "amortizer.log_sigma.weight": rng.normal(0.0, 0.001, size=(hidden, width)),
        "amortizer.log_sigma.bias": np.full((1, width), log_sigma0),
    }
    q.params.update({name: Param(name, value) for name, value in shapes.items()})
    return q


def amortize(q: VariationalPosterior, g: Graph, tape: Tape | None = None,
             include_self_loops: bool = False) -> tuple[Node, Node]:
    """Per-edge (mu, log_sigma) from a two-layer GCN encoder and an edge MLP head.

    Rows follow the stored edge order, or Ã's order with ``include_self_loops``.
    """
    if not q.granularity.amortized:
        raise ValueError(f"{q.granularity.value} posterior has no amortizer")
    tape = tape if tape is not None else Tape()
    p = {name.removeprefix("amortizer."): tape.param(param)
         for name, param in q.params.items() if name.startswith("amortizer.")}
    op = g.operators["gcn"]
    x = tape.constant(g.features)
    f = relu(spmm(op, matmul(x, p["enc0.weight"])))
    f = spmm(op, matmul(f, p["enc1.weight"]))
    if include_self_loops:
        src, dst = g.augmented.row_ids, g.augmented.indices
    else:
        src, dst = g.adjacency.row_ids, g.indices
    pair = concat([gather_rows(f, src), gather_rows(f, dst)], axis=1)
    hidden = relu(add(matmul(pair, p["head.weight"]), p["head.bias"]))
    mu = add(matmul(hidden, p["mu.weight"]), p["mu.bias"])
    log_sigma = add(matmul(hidden, p["log_sigma.weight"]), p["log_sigma.bias"])
    return mu, log_sigma


@dataclass
class PosteriorDraw:
    mask: MaskSample
    mu: Node
    log_sigma: Node


def sample_posterior(
    q: VariationalPosterior, g: Graph, depth: int, widths, rng: np.random.Generator, tape: Tape | None = None,
) -> PosteriorDraw:
    """One reparameterized mask for every layer, on Ã's entries.

    Self-loop weights are pinned to 1 unless ``q.mask_self_loops``.
    """
    tape = tape if tape is not None else Tape()
    widths = tuple(int(w) for w in widths)
    if q.granularity.amortized:
        mu, log_sigma = amortize(q, g, tape, include_self_loops=True)
    else:
        mu, log_sigma = tape.param(q.params["q.mu"]), tape.param(q.params["q.log_sigma"])
    e = g.augmented.nnz
    broadcast_rows = mu.shape[0] == 1
    first_row = np.zeros(e, dtype=np.int64)
    # independent_draws: one eps per stored entry even when parameters are shared
    eps_rows = e if (q.independent_draws or not broadcast_rows) else 1
    eps_cols = q.width
    shared_eps = None if q.resample_per_layer else rng.standard_normal((eps_rows, eps_cols))
    unmasked = (~g.augmented.self_loop).astype(np.float64)[:, None]

    weights = []
    for l in range(depth):
        k = widths[l] if q.granularity.per_channel_values else 1
        if k > q.width:
            raise ValueError(f"layer {l} has {k} input channels, posterior holds {q.width}")
        mu_l = take_cols(mu, k) if k < q.width else mu
        ls_l = take_cols(log_sigma, k) if k < q.width else log_sigma
        eps = shared_eps if shared_eps is not None else rng.standard_normal((eps_rows, eps_cols))
        eps = eps[:, :k]
        if broadcast_rows and q.independent_draws:
            z = reparameterize(gather_rows(mu_l, first_row), gather_rows(ls_l, first_row), eps)
        elif broadcast_rows:
            z = gather_rows(reparameterize(mu_l, ls_l, eps), first_row)
        else:
            z = reparameterize(mu_l, ls_l, eps)
        if not q.mask_self_loops:
            keep = np.repeat(unmasked, k, axis=1)
            z = add(mul(z, keep), 1.0 - keep)
        weights.append(z)
    return PosteriorDraw(MaskSample(weights, widths), mu, log_sigma)


def _posterior_kl(q: VariationalPosterior, g: Graph | None, mu: Node, log_sigma: Node) -> Node:
    if q.granularity.amortized and not q.mask_self_loops:
        # pinned self-loop entries carry no posterior
        sampled = np.flatnonzero(~g.augmented.self_loop)
        mu, log_sigma = gather_rows(mu, sampled), gather_rows(log_sigma, sampled)
    return kl_normal(mu, log_sigma, PRIOR_MEAN, q.sigma_prior)


def kl_divergence(q: VariationalPosterior, g: Graph | None = None, tape: Tape | None = None) -> Node:
    """KL(q || prior), each parameterized coordinate counted once."""
    tape = tape if tape is not None else Tape()
    if q.granularity.amortized:
        if g is None:
            raise ValueError("amortized posteriors need the graph to evaluate KL")
        mu, log_sigma = amortize(q, g, tape, include_self_loops=True)
    else:
        mu, log_sigma = tape.param(q.params["q.mu"]), tape.param(q.params["q.log_sigma"])
    return _posterior_kl(q, g, mu, log_sigma)


@dataclass
class ElboTerms:
    elbo: Node
    log_likelihood: Node
    kl: Node


def elbo_terms(
    model: Model,
    q: VariationalPosterior,
    g: Graph,
    targets: np.ndarray,
    rng: np.random.Generator,
    mc_samples: int = 1,
    index=None,
    loss_kind: LossKind | str = LossKind.cross_entropy,
    kl_scale: float = 1.0,
    tape: Tape | None = None,
) -> ElboTerms:
    """MC log-likelihood over ``mc_samples`` posterior draws minus the scaled KL.

    Hidden representations are deterministic given Z, so only the likelihood
    and KL(q(Z) || p(Z)) enter the bound.
    """
    tape = tape if tape is not None else Tape()
    log_lik, kl = None, None
    for _ in range(mc_samples):
        draw = sample_posterior(q, g, model.depth, model.widths, rng, tape)
        if kl is None:
            kl = _posterior_kl(q, g, draw.mu, draw.log_sigma)
        nll = loss(loss_kind, forward(model, g, draw.mask, tape), targets, index, reduction="sum")
        log_lik = scale(nll, -1.0) if log_lik is None else sub(log_lik, nll)
    log_lik = scale(log_lik, 1.0 / mc_samples)
    return ElboTerms(sub(log_lik, scale(kl, kl_scale)), log_lik, kl)


def elbo(model: Model, q: VariationalPosterior, g: Graph, targets: np.ndarray, rng: np.random.Generator,
         mc_samples: int = 1, **kwargs) -> Node:
    return elbo_terms(model, q, g, targets, rng, mc_samples, **kwargs).elbo


@dataclass
class BBBModel:
    """Mean-field Normal posterior over every weight of ``base``."""

    base: Model
    mu: dict[str, Param]
    log_sigma: dict[str, Param]
    prior_sigma: float = 1.0

    def parameters(self) -> list[Param]:
        return list(self.mu.values()) + list(self.log_sigma.values())

    def parameter_count(self) -> int:
        return sum(p.size for p in self.parameters())


def build_bbb(base: Model, prior_sigma: float = 1.0, log_sigma0: float = -5.0) -> BBBModel:
    mu = {name: Param(f"{name}.mu", p.value.copy()) for name, p in base.params.items()}
    log_sigma = {name: Param(f"{name}.log_sigma", np.full(p.shape, log_sigma0)) for name, p in base.params.items()}
    return BBBModel(base, mu, log_sigma, prior_sigma)


def _sample_weights(bbb: BBBModel, rng: np.random.Generator, tape: Tape) -> tuple[dict[str, Node], Node]:
    weights, kl = {}, None
    for name in bbb.base.params:
        mu, log_sigma = tape.param(bbb.mu[name]), tape.param(bbb.log_sigma[name])
        weights[name] = reparameterize(mu, log_sigma, rng.standard_normal(mu.shape))
        term = kl_normal(mu, log_sigma, 0.0, bbb.prior_sigma)
        kl = term if kl is None else add(kl, term)
    return weights, kl


def bbb_forward(bbb: BBBModel, g: Graph, rng: np.random.Generator, tape: Tape | None = None) -> Node:
    """One weight draw shared by every message-passing round; aggregation is unmasked."""
    tape = tape if tape is not None else Tape()
    weights, _ = _sample_weights(bbb, rng, tape)
    return forward(bbb.base, g, None, tape, weights)


def bbb_kl(bbb: BBBModel, tape: Tape | None = None) -> Node:
    tape = tape if tape is not None else Tape()
    total = None
    for name in bbb.base.params:
        term = kl_normal(tape.param(bbb.mu[name]), tape.param(bbb.log_sigma[name]), 0.0, bbb.prior_sigma)
        total = term if total is None else add(total, term)
    return total


def bbb_elbo(
    bbb: BBBModel,
    g: Graph,
    targets: np.ndarray,
    rng: np.random.Generator,
    index=None,
    loss_kind: LossKind | str = LossKind.cross_entropy,
    kl_scale: float = 1.0,
    tape: Tape | None = None,
) -> Node:
    tape = tape if tape is not None else Tape()
    weights, kl = _sample_weights(bbb, rng, tape)
    nll = loss(loss_kind, forward(bbb.base, g, None, tape, weights), targets, index, reduction="sum")
    return sub(scale(nll, -1.0), scale(kl, kl_scale))


def bbb_predict(bbb: BBBModel, g: Graph, samples: int, rng: np.random.Generator, task: str = "classification") -> np.ndarray:
    """Marginal prediction over ``samples`` weight draws."""
    return average_predictions([bbb_forward(bbb, g, rng).value for _ in range(samples)], task)
