"""GCN / GraphSAGE-mean / GIN stacks with masked aggregation."""

import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional

import numpy as np
from pydantic import BaseModel

from ..autodiff import Node, Param, Tape, col_sum, concat, relu, spmm
from ..errors import ShapeError
from ..graph import Graph
from ..models.noise import NoiseSpec
from .noise import MaskSample, masked_weights, sample_mask

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT_VERSION = 1
READOUT_HIDDEN = 128


class LayerKind(str, Enum):
    gcn = "gcn"
    sage_mean = "sage_mean"
    gin = "gin"


_AGGREGATION = {LayerKind.gcn: "gcn", LayerKind.sage_mean: "mean", LayerKind.gin: "sum"}


@dataclass
class Layer:
    kind: LayerKind
    in_dim: int
    out_dim: int
    activation: str = "relu"


@dataclass
class Model:
    layers: list[Layer]
    params: dict[str, Param] = field(default_factory=dict)
    readout_dim: Optional[int] = None

    def __post_init__(self):
        if not self.layers:
            raise ValueError("a model needs at least one layer")
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.out_dim != nxt.in_dim:
                raise ShapeError(f"layer widths {prev.out_dim} and {nxt.in_dim} do not chain")

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def widths(self) -> tuple[int, ...]:
        """Input channel count of every layer."""
        return tuple(layer.in_dim for layer in self.layers)

    @property
    def kind(self) -> LayerKind:
        return self.layers[0].kind

    def parameters(self) -> list[Param]:
        return list(self.params.values())

    def parameter_count(self) -> int:
        return sum(p.size for p in self.params.values())

    def snapshot(self) -> dict[str, np.ndarray]:
        return {name: p.value.copy() for name, p in self.params.items()}

    def restore(self, snapshot: dict[str, np.ndarray]):
        for name, value in snapshot.items():
            self.params[name].value = value.copy()


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def build_model(
    in_dim: int,
    hidden: int,
    out_dim: int,
    depth: int,
    kind: LayerKind | str = LayerKind.gcn,
    rng: np.random.Generator | None = None,
    readout_dim: int | None = None,
) -> Model:
    """Glorot-initialized stack; hidden layers use ReLU, the last layer is linear.

    With ``readout_dim`` the node outputs are sum-pooled and fed through a
    two-layer ReLU MLP of width 128.
    """
    if depth < 1:
        raise ValueError(f"depth must be >= 1, got {depth}")
    kind = LayerKind(kind)
    rng = rng or np.random.default_rng(0)
    dims = [in_dim] + [hidden] * (depth - 1) + [out_dim]
    layers, params = [], {}
    for l in range(depth):
        last = l == depth - 1
        layers.append(Layer(kind, dims[l], dims[l + 1], "identity" if last else "relu"))
        fan_in = 2 * dims[l] if kind == LayerKind.sage_mean else dims[l]
        params[f"layer{l}.weight"] = Param(f"layer{l}.weight", _glorot(rng, fan_in, dims[l + 1]))
        if kind == LayerKind.gin:
            params[f"layer{l}.bias"] = Param(f"layer{l}.bias", np.zeros((1, dims[l + 1])))
    if readout_dim is not None:
        params["readout.hidden.weight"] = Param("readout.hidden.weight", _glorot(rng, out_dim, READOUT_HIDDEN))
        params["readout.hidden.bias"] = Param("readout.hidden.bias", np.zeros((1, READOUT_HIDDEN)))
        params["readout.out.weight"] = Param("readout.out.weight", _glorot(rng, READOUT_HIDDEN, readout_dim))
        params["readout.out.bias"] = Param("readout.out.bias", np.zeros((1, readout_dim)))
    return Model(layers, params, readout_dim)


def _mask_weights(g: Graph, mask: MaskSample | None, l: int, kind: LayerKind):
    if mask is None:
        return None
    w = mask.layer(l)
    if isinstance(w, Node):
        return w
    return masked_weights(g, mask, l, _AGGREGATION[kind])


def _activate(h: Node, activation: str) -> Node:
    return relu(h) if activation == "relu" else h


def gcn_layer(h: Node, g: Graph, mask: MaskSample | None, l: int, weight: Node, activation: str = "relu") -> Node:
    if h.shape[1] != weight.shape[0]:
        raise ShapeError(f"gcn layer {l}: input {h.shape} does not match weight {weight.shape}")
    op = g.operators["gcn"]
    w = _mask_weights(g, mask, l, LayerKind.gcn)
    if w is None or w.shape[1] == 1:
        # channel-shared weights commute with W
        out = spmm(op, h @ weight, w)
    else:
        out = spmm(op, h, w) @ weight
    return _activate(out, activation)


def sage_or_gin_layer(
    kind: LayerKind, h: Node, g: Graph, mask: MaskSample | None, l: int,
    params: dict[str, Node], activation: str = "relu",
) -> Node:
    weight = params["weight"]
    kind = LayerKind(kind)
    w = _mask_weights(g, mask, l, kind)
    if kind == LayerKind.sage_mean:
        if 2 * h.shape[1] != weight.shape[0]:
            raise ShapeError(f"sage layer {l}: input {h.shape} does not match weight {weight.shape}")
        agg = spmm(g.operators["mean"], h, w)
        return _activate(concat([h, agg], axis=1) @ weight, activation)
    if h.shape[1] != weight.shape[0]:
        raise ShapeError(f"gin layer {l}: input {h.shape} does not match weight {weight.shape}")
    agg = spmm(g.operators["sum"], h, w)
    return _activate((h + agg) @ weight + params["bias"], activation)


def readout_graph(model: Model, h: Node, weights: dict[str, Node] | None = None) -> Node:
    """Sum-pool node rows, then the two-layer ReLU MLP."""
    p = {name: _weight(model, h.tape, f"readout.{name}", weights)
         for name in ("hidden.weight", "hidden.bias", "out.weight", "out.bias")}
    pooled = col_sum(h)
    hidden = relu(pooled @ p["hidden.weight"] + p["hidden.bias"])
    return hidden @ p["out.weight"] + p["out.bias"]


def _weight(model: Model, tape: Tape, name: str, weights: dict[str, Node] | None) -> Node:
    if weights is not None and name in weights:
        return weights[name]
    return tape.param(model.params[name])


def forward(
    model: Model,
    g: Graph,
    mask: MaskSample | None = None,
    tape: Tape | None = None,
    weights: dict[str, Node] | None = None,
) -> Node:
    """Propagate g's features through the stack; returns the output node.

    ``weights`` replaces named params with sampled nodes (weight-space posteriors).
    """
    tape = tape if tape is not None else Tape()
    if mask is not None and mask.depth != model.depth:
        raise ShapeError(f"mask has {mask.depth} layers, model has {model.depth}")
    h = tape.constant(g.features)
    for l, layer in enumerate(model.layers):
        weight = _weight(model, tape, f"layer{l}.weight", weights)
        if layer.kind == LayerKind.gcn:
            h = gcn_layer(h, g, mask, l, weight, layer.activation)
        else:
            params = {"weight": weight}
            if layer.kind == LayerKind.gin:
                params["bias"] = _weight(model, tape, f"layer{l}.bias", weights)
            h = sage_or_gin_layer(layer.kind, h, g, mask, l, params, layer.activation)
    if model.readout_dim is not None:
        h = readout_graph(model, h, weights)
    return h


def draw_mask(source, g: Graph, model: Model, rng: np.random.Generator, tape: Tape | None = None):
    """One mask from a NoiseSpec or from any object with a ``draw`` method (posteriors)."""
    if source is None:
        return None
    if isinstance(source, NoiseSpec):
        if source.is_deterministic:
            return None
        return sample_mask(source, g, model.depth, model.widths, rng)
    return source.draw(g, model.depth, model.widths, rng, tape)


def forward_stochastic(model: Model, g: Graph, noise, rng: np.random.Generator, tape: Tape | None = None) -> Node:
    """One joint mask draw, then layer-by-layer propagation."""
    tape = tape if tape is not None else Tape()
    return forward(model, g, draw_mask(noise, g, model, rng, tape), tape)


def _is_deterministic(noise) -> bool:
    return noise is None or (isinstance(noise, NoiseSpec) and noise.is_deterministic)


def _row_log_softmax(out: np.ndarray) -> np.ndarray:
    shifted = out - out.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def average_predictions(outputs: list[np.ndarray], task: str = "classification") -> np.ndarray:
    """Combine per-sample raw outputs.

    classification: log of the sample-averaged class probabilities (N x K);
    a single sample returns its row log-softmax unchanged.
    regression: mean of the sample outputs.
    """
    if task != "classification":
        return outputs[0] if len(outputs) == 1 else np.stack(outputs).mean(axis=0)
    log_probs = [_row_log_softmax(out) for out in outputs]
    if len(log_probs) == 1:
        return log_probs[0]
    stacked = np.stack(log_probs)
    top = stacked.max(axis=0)
    return top + np.log(np.exp(stacked - top).mean(axis=0))


def predict_marginal(
    model: Model,
    g: Graph,
    noise,
    samples: int = 32,
    rng: np.random.Generator | None = None,
    task: str = "classification",
) -> np.ndarray:
    """Monte-Carlo marginal prediction over ``samples`` mask draws (one pass for Delta noise)."""
    if samples < 1:
        raise ValueError(f"samples must be >= 1, got {samples}")
    rng = rng or np.random.default_rng(0)
    if _is_deterministic(noise):
        samples = 1
    outputs = [forward_stochastic(model, g, noise, rng).value for _ in range(samples)]
    return average_predictions(outputs, task)


class CheckpointHeader(BaseModel):
    format_version: int = CHECKPOINT_FORMAT_VERSION
    kind: LayerKind
    dims: list[int]
    readout_dim: Optional[int] = None


def save_model(model: Model, path: str | Path):
    header = CheckpointHeader(
        kind=model.kind,
        dims=[model.layers[0].in_dim] + [layer.out_dim for layer in model.layers],
        readout_dim=model.readout_dim,
    )
    arrays = {name: p.value for name, p in model.params.items()}
    np.savez(Path(path), __header__=np.array(header.model_dump_json()), **arrays)
    logger.info(f"Saved checkpoint {path} ({model.parameter_count()} parameters)")


def load_model(path: str | Path) -> Model:
    with np.load(Path(path)) as data:
        header = CheckpointHeader.model_validate_json(str(data["__header__"]))
        if header.format_version != CHECKPOINT_FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint format {header.format_version}")
        arrays = {name: data[name] for name in data.files if name != "__header__"}
    dims = header.dims
    layers = [
        Layer(header.kind, dims[l], dims[l + 1], "identity" if l == len(dims) - 2 else "relu")
        for l in range(len(dims) - 1)
    ]
    params = {name: Param(name, value) for name, value in arrays.items()}
    return Model(layers, params, header.readout_dim)
