from enum import Enum

import numpy as np

from ..autodiff import Node, exp, gather_rows, log_softmax, mul, scale, sub, total_sum
from ..errors import ShapeError


class LossKind(str, Enum):
    cross_entropy = "cross_entropy"
    poisson_nll = "poisson_nll"
    mse = "mse"


def one_hot(labels: np.ndarray, n_classes: int) -> np.ndarray:
    out = np.zeros((len(labels), n_classes))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def loss(kind: LossKind | str, predictions: Node, targets: np.ndarray, index=None, reduction: str = "mean") -> Node:
    """Scalar loss over the rows in ``index`` (all rows when None).

    cross_entropy and poisson_nll take logits and integer labels; mse takes
    outputs and real targets of matching shape. ``reduction`` is mean or sum
    over examples.
    """
    kind = LossKind(kind)
    targets = np.asarray(targets)
    if index is not None:
        index = np.asarray(index, dtype=np.int64)
        predictions = gather_rows(predictions, index)
        targets = targets[index]
    n = predictions.shape[0]
    if len(targets) != n:
        raise ShapeError(f"{kind.value}: predictions {predictions.shape} vs targets {targets.shape}")
    if kind == LossKind.mse:
        targets = targets.reshape(n, -1).astype(np.float64)
        if targets.shape != predictions.shape:
            raise ShapeError(f"mse: predictions {predictions.shape} vs targets {targets.shape}")
        diff = sub(predictions, targets)
        total = total_sum(mul(diff, diff))
    else:
        y = one_hot(targets.astype(np.int64), predictions.shape[1])
        lp = log_softmax(predictions)
        picked = total_sum(mul(lp, y))
        if kind == LossKind.cross_entropy:
            total = scale(picked, -1.0)
        else:
            total = sub(total_sum(exp(lp)), picked)
    return total if reduction == "sum" else scale(total, 1.0 / max(n, 1))
