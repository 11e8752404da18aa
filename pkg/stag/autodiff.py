"""Minimal reverse-mode differentiation over dense 2-D float64 matrices.

A ``Tape`` records primitive calls in execution order, which is already a
topological order. ``Tape.backward`` walks the records in reverse, accumulates
adjoints and adds the result into every registered ``Param.grad``.

    tape = Tape()
    w = tape.param(weight)
    loss = total_sum(relu(x @ w))
    tape.backward(loss)

Every value is a 2-D matrix. Broadcasting is limited to adding a (1, C) row
bias to an (N, C) matrix.
"""

import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np

from .errors import BackwardError, ShapeError
from .graph import SparseMatrix
from .utils import segment_sum

logger = logging.getLogger(__name__)

BackwardFn = Callable[[np.ndarray], Sequence[np.ndarray | None]]


@dataclass
class Param:
    name: str
    value: np.ndarray
    grad: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.value = np.atleast_2d(np.asarray(self.value, dtype=np.float64))
        if self.grad is None:
            self.grad = np.zeros_like(self.value)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def size(self) -> int:
        return self.value.size

    def zero_grad(self):
        self.grad = np.zeros_like(self.value)


@dataclass
class _Record:
    op: str
    inputs: tuple[int, ...]
    output: int
    backward: BackwardFn


class Node:
    """Handle to a value stored on a tape."""

    __slots__ = ("tape", "id")

    def __init__(self, tape: "Tape", node_id: int):
        self.tape = tape
        self.id = node_id

    @property
    def value(self) -> np.ndarray:
        return self.tape.values[self.id]

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def requires_grad(self) -> bool:
        return self.tape.requires_grad[self.id]

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, other)
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __repr__(self):
        return f"Node(id={self.id}, shape={self.shape})"


class Tape:
    def __init__(self):
        self.values: list[np.ndarray] = []
        self.requires_grad: list[bool] = []
        self._records: list[_Record] = []
        self._params: dict[int, Param] = {}
        self._param_nodes: dict[int, Node] = {}
        self._grads: dict[int, np.ndarray] | None = None

    def _push(self, value: np.ndarray, requires_grad: bool) -> Node:
        value = np.asarray(value, dtype=np.float64)
        if value.ndim != 2:
            raise ShapeError(f"tape values must be 2-D, got shape {value.shape}")
        self.values.append(value)
        self.requires_grad.append(requires_grad)
        return Node(self, len(self.values) - 1)

    def constant(self, value) -> Node:
        return self._push(np.atleast_2d(np.asarray(value, dtype=np.float64)), False)

    def watch(self, value) -> Node:
        """Differentiable input whose gradient is read back with ``grad``."""
        return self._push(np.atleast_2d(np.asarray(value, dtype=np.float64)), True)

    def param(self, p: Param) -> Node:
        """Register a Param; the same Param maps to the same node on one tape."""
        key = id(p)
        if key not in self._param_nodes:
            node = self._push(p.value, True)
            self._params[node.id] = p
            self._param_nodes[key] = node
        return self._param_nodes[key]

    def record(self, op: str, inputs: Sequence[Node], value: np.ndarray, backward: BackwardFn) -> Node:
        needs = any(n.requires_grad for n in inputs)
        out = self._push(value, needs)
        if needs:
            self._records.append(_Record(op, tuple(n.id for n in inputs), out.id, backward))
        return out

    def backward(self, loss: Node):
        if loss.tape is not self:
            raise BackwardError("loss node belongs to a different tape")
        if self._grads is not None:
            raise BackwardError("backward already ran on this tape; call reset() first")
        if loss.shape != (1, 1):
            raise BackwardError(f"loss must be a 1x1 scalar, got shape {loss.shape}")
        grads: dict[int, np.ndarray] = {loss.id: np.ones((1, 1))}
        for rec in reversed(self._records):
            g = grads.get(rec.output)
            if g is None:
                continue
            for input_id, ig in zip(rec.inputs, rec.backward(g)):
                if ig is None or not self.requires_grad[input_id]:
                    continue
                if input_id in grads:
                    grads[input_id] = grads[input_id] + ig
                else:
                    grads[input_id] = ig
        for node_id, p in self._params.items():
            if node_id in grads:
                p.grad += grads[node_id]
        self._grads = grads

    def grad(self, node: Node) -> np.ndarray:
        if self._grads is None:
            raise BackwardError("no gradients yet; call backward() first")
        return self._grads.get(node.id, np.zeros_like(node.value))

    def reset(self):
        self.__init__()


def _tape_of(*args) -> Tape:
    for a in args:
        if isinstance(a, Node):
            return a.tape
    raise TypeError("at least one argument must be a Node")


def _lift(tape: Tape, x) -> Node:
    return x if isinstance(x, Node) else tape.constant(x)


def matmul(a, b) -> Node:
    tape = _tape_of(a, b)
    a, b = _lift(tape, a), _lift(tape, b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} are incompatible")
    av, bv = a.value, b.value
    return tape.record("matmul", (a, b), av @ bv, lambda g: (g @ bv.T, av.T @ g))


def _add_like(op: str, a, b, sign: float) -> Node:
    tape = _tape_of(a, b)
    a, b = _lift(tape, a), _lift(tape, b)
    if a.shape == b.shape:
        return tape.record(op, (a, b), a.value + sign * b.value, lambda g: (g, sign * g))
    if b.shape == (1, a.shape[1]):
        return tape.record(op, (a, b), a.value + sign * b.value,
                           lambda g: (g, sign * g.sum(axis=0, keepdims=True)))
    if a.shape == (1, b.shape[1]):
        return tape.record(op, (a, b), a.value + sign * b.value,
                           lambda g: (g.sum(axis=0, keepdims=True), sign * g))
    raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} are incompatible")


def add(a, b) -> Node:
    return _add_like("add", a, b, 1.0)


def sub(a, b) -> Node:
    return _add_like("sub", a, b, -1.0)


def mul(a, b) -> Node:
    tape = _tape_of(a, b)
    a, b = _lift(tape, a), _lift(tape, b)
    if a.shape != b.shape:
        raise ShapeError(f"mul: shapes {a.shape} and {b.shape} are incompatible")
    av, bv = a.value, b.value
    return tape.record("mul", (a, b), av * bv, lambda g: (g * bv, g * av))


def scale(a: Node, s: float) -> Node:
    s = float(s)
    return a.tape.record("scale", (a,), s * a.value, lambda g: (s * g,))


def relu(a: Node) -> Node:
    # gradient is 0 at exactly 0
    active = a.value > 0
    return a.tape.record("relu", (a,), np.where(active, a.value, 0.0), lambda g: (g * active,))


def exp(a: Node) -> Node:
    out = np.exp(a.value)
    return a.tape.record("exp", (a,), out, lambda g: (g * out,))


def sigmoid(a: Node) -> Node:
    out = 0.5 * (1.0 + np.tanh(0.5 * a.value))
    return a.tape.record("sigmoid", (a,), out, lambda g: (g * out * (1.0 - out),))


def log(a: Node) -> Node:
    # out-of-domain inputs give NaN/-inf, caught by the optimizer's finiteness check
    av = a.value
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(av)
    return a.tape.record("log", (a,), out, lambda g: (g / av,))


def row_sum(a: Node) -> Node:
    n_cols = a.shape[1]
    return a.tape.record("row_sum", (a,), a.value.sum(axis=1, keepdims=True),
                         lambda g: (np.repeat(g, n_cols, axis=1),))


def col_sum(a: Node) -> Node:
    n_rows = a.shape[0]
    return a.tape.record("col_sum", (a,), a.value.sum(axis=0, keepdims=True),
                         lambda g: (np.repeat(g, n_rows, axis=0),))


def total_sum(a: Node) -> Node:
    shape = a.shape
    return a.tape.record("total_sum", (a,), np.array([[a.value.sum()]]),
                         lambda g: (np.full(shape, g[0, 0]),))


def mean(a: Node) -> Node:
    shape, count = a.shape, a.value.size
    return a.tape.record("mean", (a,), np.array([[a.value.sum() / count]]),
                         lambda g: (np.full(shape, g[0, 0] / count),))


def log_softmax(a: Node) -> Node:
    shifted = a.value - a.value.max(axis=1, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    probs = np.exp(out)
    return a.tape.record("log_softmax", (a,), out,
                         lambda g: (g - probs * g.sum(axis=1, keepdims=True),))


def concat(nodes: Sequence[Node], axis: int = 0) -> Node:
    tape = _tape_of(*nodes)
    nodes = [_lift(tape, n) for n in nodes]
    other = 1 - axis
    widths = {n.shape[other] for n in nodes}
    if len(widths) > 1:
        raise ShapeError(f"concat(axis={axis}): shapes {[n.shape for n in nodes]} are incompatible")
    bounds = np.cumsum([0] + [n.shape[axis] for n in nodes])
    out = np.concatenate([n.value for n in nodes], axis=axis)

    def backward(g):
        if axis == 0:
            return [g[lo:hi] for lo, hi in zip(bounds[:-1], bounds[1:])]
        return [g[:, lo:hi] for lo, hi in zip(bounds[:-1], bounds[1:])]

    return tape.record("concat", tuple(nodes), out, backward)


def gather_rows(a: Node, index: np.ndarray) -> Node:
    """out[i] = a[index[i]]; repeated indices accumulate in the adjoint."""
    index = np.asarray(index, dtype=np.int64)
    shape = a.shape

    def backward(g):
        out = np.zeros(shape)
        np.add.at(out, index, g)
        return (out,)

    return a.tape.record("gather_rows", (a,), a.value[index], backward)


def scatter_rows(a: Node, index: np.ndarray, n_rows: int) -> Node:
    """out[index[i]] += a[i] into an n_rows-row zero matrix."""
    index = np.asarray(index, dtype=np.int64)
    if len(index) != a.shape[0]:
        raise ShapeError(f"scatter_rows: index length {len(index)} vs input shape {a.shape}")
    out = np.zeros((n_rows, a.shape[1]))
    np.add.at(out, index, a.value)
    return a.tape.record("scatter_rows", (a,), out, lambda g: (g[index],))


def take_cols(a: Node, stop: int) -> Node:
    """Leading ``stop`` columns."""
    shape = a.shape
    if stop > shape[1]:
        raise ShapeError(f"take_cols: cannot take {stop} columns from shape {shape}")

    def backward(g):
        out = np.zeros(shape)
        out[:, :stop] = g
        return (out,)

    return a.tape.record("take_cols", (a,), a.value[:, :stop], backward)


def spmm(structure: SparseMatrix, h, mask=None) -> Node | np.ndarray:
    """Edge-weighted sparse-dense product.

    out[r] = sum over stored entries e=(r, c) of values[e] * mask[e] * h[c], in CSR order.
    ``mask`` is None, an (E, 1) per-entry weight or an (E, C) per-entry-per-channel
    weight, either constant or a Node. With no Node argument a plain array is returned.
    """
    e = structure.nnz
    hv = h.value if isinstance(h, Node) else np.asarray(h, dtype=np.float64)
    if hv.shape[0] != structure.n_cols:
        raise ShapeError(f"spmm: sparse shape {(structure.n_rows, structure.n_cols)} and dense {hv.shape}")
    base = structure.values[:, None]
    mv = None
    if mask is not None:
        mv = mask.value if isinstance(mask, Node) else np.asarray(mask, dtype=np.float64)
        if mv.shape not in ((e, 1), (e, hv.shape[1])):
            raise ShapeError(f"spmm: mask shape {mv.shape} and dense {hv.shape} over {e} entries")
    w = base if mv is None else base * mv
    rows, cols = structure.row_ids, structure.indices
    gathered = hv[cols]
    out = segment_sum(w * gathered, structure.indptr)

    inputs = [x for x in (h, mask) if isinstance(x, Node)]
    if not inputs:
        return out
    tape = inputs[0].tape
    order, t_indptr = structure.transpose_order

    def backward(g):
        g_rows = g[rows]
        grads = []
        if isinstance(h, Node):
            grads.append(segment_sum((w * g_rows)[order], t_indptr))
        if isinstance(mask, Node):
            dm = base * g_rows * gathered
            grads.append(dm.sum(axis=1, keepdims=True) if mv.shape[1] == 1 else dm)
        return grads

    return tape.record("spmm", inputs, out, backward)


def finite_difference_check(
    loss_fn: Callable[[Tape], Node],
    params: Sequence[Param],
    eps: float = 1e-5,
    fraction: float = 0.05,
    seed: int = 0,
    floor: float = 1e-8,
) -> float:
    """Max relative error between tape gradients and central differences.

    ``loss_fn`` builds the loss on the tape it is given and must be
    deterministic (freeze any noise draws outside it). A seeded ``fraction``
    of each param's coordinates is checked, at least one per param. Errors are
    relative to max(|analytic|, |numeric|, floor).
    """
    for p in params:
        p.zero_grad()
    tape = Tape()
    tape.backward(loss_fn(tape))
    rng = np.random.default_rng(seed)
    worst = 0.0
    for p in params:
        count = max(1, int(np.ceil(fraction * p.size)))
        for flat in rng.choice(p.size, size=count, replace=False):
            idx = np.unravel_index(flat, p.shape)
            original = p.value[idx]
            p.value[idx] = original + eps
            plus = loss_fn(Tape()).value[0, 0]
            p.value[idx] = original - eps
            minus = loss_fn(Tape()).value[0, 0]
            p.value[idx] = original
            numeric = (plus - minus) / (2.0 * eps)
            analytic = p.grad[idx]
            err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)
            if err > worst:
                logger.debug(f"{p.name}{idx}: analytic {analytic:.6e} numeric {numeric:.6e}")
            worst = max(worst, err)
    return worst
