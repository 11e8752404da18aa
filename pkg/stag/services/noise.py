"""Mask sampling for stochastic aggregation.

A mask holds one weight per stored entry of Ã (self loops included), in the
augmented CSR order, per layer and optionally per input channel. Presets name
the sharing patterns of the classic regularizers.
"""

import logging
from dataclasses import dataclass

import numpy as np

from ..autodiff import Node
from ..graph import Graph, SparseMatrix
from ..models.noise import NoiseFamily, NoiseSpec, Sharing
from ..utils import segment_sum

logger = logging.getLogger(__name__)

PRESETS = ("dropout", "fastgcn", "dropedge", "gdc", "stag_full")

# Smallest |masked row sum| / masked absolute row sum that is still renormalized
RENORMALIZE_FLOOR = 0.5

_PRESET_SHARING = {
    # one draw per (layer, channel, row node), covering the node's whole row
    "dropout": Sharing(share_layers=False, share_channels=False, share_src_dst_as_edge=False),
    # one node draw shared by every layer and channel, applied to the node's column
    "fastgcn": Sharing(share_layers=True, share_channels=True, share_src_dst_as_edge=False, diag_only=True),
    "dropedge": Sharing(share_layers=True, share_channels=True, share_src_dst_as_edge=True),
    "gdc": Sharing(share_layers=False, share_channels=False, share_src_dst_as_edge=True),
    "stag_full": Sharing(share_layers=False, share_channels=False, share_src_dst_as_edge=True),
}


def _infer_family(p_drop, mu, sigma, a, b) -> NoiseFamily:
    if p_drop is not None:
        return NoiseFamily.bernoulli
    if mu is not None or sigma is not None:
        return NoiseFamily.normal
    if a is not None or b is not None:
        return NoiseFamily.uniform
    return NoiseFamily.delta


def preset_spec(
    name: str,
    family: NoiseFamily | str | None = None,
    p_drop: float | None = None,
    mu: float | None = None,
    sigma: float | None = None,
    a: float | None = None,
    b: float | None = None,
    **overrides,
) -> NoiseSpec:
    """NoiseSpec for a named regularizer.

    dropout, fastgcn, dropedge and gdc default to the Bernoulli family; dropout
    also accepts Normal. stag_full takes any family, inferred from the given
    parameters when ``family`` is omitted. ``overrides`` replace NoiseSpec fields
    (e.g. sharing, resample_per_layer, mask_self_loops).
    """
    if name not in _PRESET_SHARING:
        raise ValueError(f"unknown noise preset: {name!r} (expected one of {', '.join(PRESETS)})")
    if family is None:
        family = NoiseFamily.bernoulli if name != "stag_full" else _infer_family(p_drop, mu, sigma, a, b)
    family = NoiseFamily(family)
    if name in ("fastgcn", "dropedge", "gdc") and family != NoiseFamily.bernoulli:
        raise ValueError(f"preset {name} uses the bernoulli family, got {family.value}")
    if name == "dropout" and family not in (NoiseFamily.bernoulli, NoiseFamily.normal):
        raise ValueError(f"preset dropout uses the bernoulli or normal family, got {family.value}")
    fields = dict(
        family=family, p_drop=p_drop, mu=mu, sigma=sigma, a=a, b=b,
        sharing=_PRESET_SHARING[name], preset=name, normalize_degree=(name == "gdc"),
    )
    fields.update(overrides)
    return NoiseSpec(**fields)


@dataclass
class MaskSample:
    """Realized weights for one forward pass.

    ``weights[l]`` is (E_aug, 1) when shared over channels, else (E_aug, widths[l]).
    Entries are Nodes when the mask is differentiable (variational posteriors).
    """

    weights: list
    widths: tuple[int, ...]
    spec: NoiseSpec | None = None

    @property
    def depth(self) -> int:
        return len(self.weights)

    def layer(self, l: int) -> np.ndarray | Node:
        return self.weights[l]

    def values(self, l: int) -> np.ndarray:
        w = self.weights[l]
        return w.value if isinstance(w, Node) else w


def draw_values(spec: NoiseSpec, shape: tuple[int, ...], rng: np.random.Generator) -> np.ndarray:
    if spec.family == NoiseFamily.bernoulli:
        return (rng.random(shape) >= spec.p_drop).astype(np.float64)
    if spec.family == NoiseFamily.normal:
        return rng.normal(spec.mu, spec.sigma, size=shape)
    if spec.family == NoiseFamily.uniform:
        return rng.uniform(spec.a, spec.b, size=shape)
    return np.ones(shape)


def unit_index(g: Graph, sharing: Sharing) -> tuple[np.ndarray, int]:
    """Map from augmented entries to sampling units, and the unit count."""
    s = g.augmented
    if sharing.share_src_dst_as_edge:
        return np.arange(s.nnz), s.nnz
    if sharing.diag_only:
        return s.indices, g.n_nodes
    return s.row_ids, g.n_nodes


def sample_mask(spec: NoiseSpec, g: Graph, depth: int, widths, rng: np.random.Generator) -> MaskSample:
    """Draw one mask for a ``depth``-layer model whose layer inputs have ``widths`` channels."""
    widths = tuple(int(w) for w in widths)
    if len(widths) != depth or any(w < 1 for w in widths):
        raise ValueError(f"need {depth} positive layer widths, got {widths}")
    e = g.augmented.nnz
    if spec.is_deterministic:
        return MaskSample([np.ones((e, 1)) for _ in range(depth)], widths, spec)

    sharing = spec.sharing
    n_layer = 1 if (sharing.share_layers or not spec.resample_per_layer) else depth
    n_chan = 1 if sharing.share_channels else max(widths)
    units, n_units = unit_index(g, sharing)
    draws = draw_values(spec, (n_layer, n_units, n_chan), rng)

    loops = g.augmented.self_loop
    weights = []
    for l in range(depth):
        w = draws[min(l, n_layer - 1)][units]
        if n_chan > 1:
            w = w[:, :widths[l]]
        if not spec.mask_self_loops:
            w = w.copy()
            w[loops] = 1.0
        weights.append(w)
    return MaskSample(weights, widths, spec)


def renormalization_factors(g: Graph, w: np.ndarray, spec: NoiseSpec, kind: str = "gcn") -> np.ndarray:
    """Row (per channel) multipliers that restore the unmasked row sums.

    A row is rescaled to its unmasked sum when its masked sum has the same sign
    and is at least RENORMALIZE_FLOOR of the masked absolute sum. Nonnegative
    masks always qualify. Cancelling rows of signed noise get 1/E[z] instead,
    and rows with no surviving entry stay zero.
    """
    base = g.operators[kind]
    unmasked = segment_sum(base.values, base.indptr)[:, None]
    masked = segment_sum(base.values[:, None] * w, base.indptr)
    magnitude = segment_sum(np.abs(base.values)[:, None] * np.abs(w), base.indptr)
    stable = (masked * unmasked > 0) & (np.abs(masked) >= RENORMALIZE_FLOOR * magnitude)
    mean, _ = spec.moments()
    fallback = 1.0 / mean if mean != 0 else 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        factor = np.where(stable, unmasked / masked, fallback)
    return np.where(magnitude == 0, 0.0, factor)


def masked_weights(g: Graph, mask: MaskSample, l: int, kind: str = "gcn") -> np.ndarray:
    """Per-entry multipliers of layer ``l`` after optional degree normalization."""
    w = mask.values(l)
    if mask.spec is None or not mask.spec.normalize_degree:
        return w
    factor = renormalization_factors(g, w, mask.spec, kind)
    return w * factor[g.operators[kind].row_ids]


def effective_adjacency(g: Graph, mask: MaskSample, l: int, c: int, kind: str = "gcn") -> SparseMatrix:
    """Â for layer l and input channel c: the aggregation operator times the mask."""
    if not 0 <= l < mask.depth:
        raise ValueError(f"layer {l} out of range for a {mask.depth}-layer mask")
    if not 0 <= c < mask.widths[l]:
        raise ValueError(f"channel {c} out of range for layer {l} width {mask.widths[l]}")
    w = masked_weights(g, mask, l, kind)
    col = 0 if w.shape[1] == 1 else c
    base = g.operators[kind]
    return base.with_values(base.values * w[:, col])
