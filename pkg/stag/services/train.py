"""Adam, node-classification training with early stopping, evaluation metrics."""

import logging
import math
import time
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass, field

import numpy as np

from ..autodiff import Param, Tape, relu, scale
from ..errors import ShapeError, TrainingDivergedError
from ..graph import Graph
from ..models.records import EpochRecord, RunResult
from ..models.run_config import TrainSection
from ..models.split import Split
from ..utils import rng_stream
from .layers import Model, average_predictions, forward_stochastic, predict_marginal
from .losses import LossKind, loss
from .vi import BBBModel, VariationalPosterior, bbb_elbo, bbb_predict, elbo_terms

logger = logging.getLogger(__name__)


@dataclass
class AdamState:
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def _check_finite(p: Param, step: int):
    if not np.all(np.isfinite(p.grad)):
        bad = int(np.size(p.grad) - np.isfinite(p.grad).sum())
        logger.error(f"Non-finite gradient in {p.name} at step {step} ({bad} of {p.size} entries)")
        raise TrainingDivergedError(f"non-finite gradient in {p.name} at step {step}")


def decays(name: str, l2_names) -> bool:
    """Whether L2 applies to ``name``: a listed weight or the posterior mean of one."""
    return name in l2_names or (name.endswith(".mu") and name[:-3] in l2_names)


def adam_step(
    params: Sequence[Param],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    l2: float = 0.0,
    l2_names: Iterable[str] = (),
) -> AdamState:
    """One bias-corrected Adam update of every param from its ``grad``.

    L2 is added to the gradient of the params named in ``l2_names`` only, or to
    ``<name>.mu`` when the weight is replaced by a Bayes-by-Backprop posterior.
    """
    l2_names = set(l2_names)
    state.t += 1
    for p in params:
        _check_finite(p, state.t)
        grad = p.grad + l2 * p.value if (l2 and decays(p.name, l2_names)) else p.grad
        m = state.m.get(p.name)
        if m is None:
            m = np.zeros_like(p.value)
            state.v[p.name] = np.zeros_like(p.value)
        elif m.shape != p.shape:
            raise ShapeError(f"adam state for {p.name} has shape {m.shape}, param has {p.shape}")
        m = beta1 * m + (1 - beta1) * grad
        v = beta2 * state.v[p.name] + (1 - beta2) * grad**2
        state.m[p.name], state.v[p.name] = m, v
        m_hat = m / (1 - beta1**state.t)
        v_hat = v / (1 - beta2**state.t)
        p.value = p.value - lr * m_hat / (np.sqrt(v_hat) + eps)
    return state


class Adam:
    def __init__(self, params: Sequence[Param], lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8, l2: float = 0.0, l2_names: Iterable[str] = ()):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.l2 = l2
        self.l2_names = tuple(l2_names)
        self.state = AdamState()
        if l2 and not any(decays(p.name, self.l2_names) for p in self.params):
            logger.warning(f"L2 of {l2:g} set but no optimized param matches {list(self.l2_names)}")

    def step(self):
        adam_step(self.params, self.state, self.lr, self.beta1, self.beta2, self.eps, self.l2, self.l2_names)

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()


# --- Metrics ---


def accuracy(predictions: np.ndarray, labels: np.ndarray, index=None) -> float:
    if index is not None:
        index = np.asarray(index, dtype=np.int64)
        predictions, labels = predictions[index], np.asarray(labels)[index]
    if len(labels) == 0:
        return 0.0
    return float(np.mean(np.argmax(predictions, axis=1) == np.asarray(labels)))


def rmse(predictions: np.ndarray, targets: np.ndarray, index=None) -> float:
    targets = np.asarray(targets, dtype=np.float64).reshape(len(targets), -1)
    if index is not None:
        index = np.asarray(index, dtype=np.int64)
        predictions, targets = predictions[index], targets[index]
    return float(np.sqrt(np.mean((predictions - targets) ** 2)))


def task_of(loss_kind: LossKind | str) -> str:
    return "regression" if LossKind(loss_kind) == LossKind.mse else "classification"


def evaluate(
    model: Model | BBBModel,
    g: Graph,
    index,
    noise=None,
    samples: int = 32,
    rng: np.random.Generator | None = None,
    task: str = "classification",
    targets: np.ndarray | None = None,
) -> float:
    """Accuracy (classification) or RMSE (regression) of the marginal prediction on ``index``."""
    rng = rng if rng is not None else np.random.default_rng(0)
    targets = g.labels if targets is None else targets
    if targets is None:
        raise ValueError(f"graph {g.name} has no labels to evaluate against")
    if isinstance(model, BBBModel):
        out = bbb_predict(model, g, samples, rng, task)
    else:
        out = predict_marginal(model, g, noise, samples, rng, task)
    if task == "classification":
        return accuracy(out, targets, index)
    return rmse(out, targets, index)


# --- Node classification ---


def _objective(cfg: TrainSection, model: Model, g: Graph, train_idx: np.ndarray, noise, rng, tape: Tape,
               vi_samples: int, kl_scale: float):
    if isinstance(noise, VariationalPosterior):
        terms = elbo_terms(model, noise, g, g.labels, rng, vi_samples, index=train_idx, loss_kind=cfg.loss,
                           kl_scale=kl_scale, tape=tape)
        return scale(terms.elbo, -1.0)
    if isinstance(noise, BBBModel):
        return scale(bbb_elbo(noise, g, g.labels, rng, index=train_idx, loss_kind=cfg.loss,
                              kl_scale=kl_scale, tape=tape), -1.0)
    out = forward_stochastic(model, g, noise, rng, tape)
    return loss(cfg.loss, out, g.labels, train_idx)


def train_node_classifier(
    cfg: TrainSection,
    model: Model,
    g: Graph,
    split: Split,
    noise=None,
    rng: np.random.Generator | None = None,
    run: int = 0,
    vi_samples: int = 1,
    kl_scale: float = 1.0,
) -> RunResult:
    """Train ``model`` on ``split.train`` with one noise draw per step.

    ``noise`` is a NoiseSpec (or None), a VariationalPosterior (the ELBO is
    maximized jointly over model and posterior) or a BBBModel wrapping
    ``model``. The best-validation parameters are restored before the test
    metric is computed with ``cfg.mc_samples`` marginal samples.
    """
    if g.labels is None:
        raise ValueError(f"graph {g.name} has no labels")
    rng = rng if rng is not None else rng_stream(cfg.seed, run)
    task = task_of(cfg.loss)
    train_idx = np.asarray(split.train, dtype=np.int64)

    if isinstance(noise, BBBModel):
        params, predictor, eval_noise = noise.parameters(), noise, None
    else:
        params = model.parameters()
        if isinstance(noise, VariationalPosterior):
            params = params + noise.parameters()
        predictor, eval_noise = model, noise
    optimizer = Adam(params, lr=cfg.lr, l2=cfg.l2, l2_names=cfg.l2_params)

    history: list[EpochRecord] = []
    best_score, best_val, best_epoch = -math.inf, math.nan, 0
    best_state = [p.value.copy() for p in params]
    start = time.time()
    epoch = 0
    for epoch in range(1, cfg.epochs + 1):
        optimizer.zero_grad()
        tape = Tape()
        objective = _objective(cfg, model, g, train_idx, noise, rng, tape, vi_samples, kl_scale)
        train_loss = float(objective.value[0, 0])
        if not math.isfinite(train_loss):
            logger.error(f"Run {run}: training loss is {train_loss} at epoch {epoch}")
            raise TrainingDivergedError(f"training loss became {train_loss} at epoch {epoch}")
        tape.backward(objective)
        optimizer.step()

        val = evaluate(predictor, g, split.val, eval_noise, cfg.val_samples, rng, task)
        history.append(EpochRecord(run=run, epoch=epoch, train_loss=train_loss, val_metric=val))
        score = val if task == "classification" else -val
        if score > best_score:
            best_score, best_val, best_epoch = score, val, epoch
            best_state = [p.value.copy() for p in params]
        elif cfg.patience and epoch - best_epoch >= cfg.patience:
            logger.info(f"Run {run}: early stop at epoch {epoch}, best epoch {best_epoch} (val {best_val:.4f})")
            break

        if cfg.log_every and epoch % cfg.log_every == 0:
            logger.info(f"Run {run} epoch {epoch}: loss {train_loss:.4f}, val {val:.4f}")
        else:
            logger.debug(f"Run {run} epoch {epoch}: loss {train_loss:.4f}, val {val:.4f}")

    for p, value in zip(params, best_state):
        p.value = value
    test = evaluate(predictor, g, split.test, eval_noise, cfg.mc_samples, rng, task)
    elapsed = time.time() - start
    logger.info(f"Run {run}: test {test:.4f} (best val {best_val:.4f} at epoch {best_epoch}, {elapsed:.1f}s)")
    return RunResult(run=run, seed=cfg.seed + run, epochs_run=epoch, best_epoch=best_epoch, best_val=best_val,
                     test_metric=test, seconds=elapsed, history=history)


# --- Multiset classification ---


@dataclass
class MLP:
    params: dict[str, Param]

    def parameters(self) -> list[Param]:
        return list(self.params.values())


def build_mlp(in_dim: int, hidden: int, out_dim: int, rng: np.random.Generator) -> MLP:
    def glorot(fan_in, fan_out):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-limit, limit, size=(fan_in, fan_out))

    shapes = {
        "mlp.hidden.weight": glorot(in_dim, hidden),
        "mlp.hidden.bias": np.zeros((1, hidden)),
        "mlp.out.weight": glorot(hidden, out_dim),
        "mlp.out.bias": np.zeros((1, out_dim)),
    }
    return MLP({name: Param(name, value) for name, value in shapes.items()})


def mlp_forward(mlp: MLP, x: np.ndarray, tape: Tape):
    p = {name.removeprefix("mlp."): tape.param(param) for name, param in mlp.params.items()}
    h = relu(tape.constant(x) @ p["hidden.weight"] + p["hidden.bias"])
    return h @ p["out.weight"] + p["out.bias"]


@dataclass
class MultisetRun:
    accuracy: float
    final_loss: float


def train_multiset_classifier(
    features: Callable[[np.random.Generator], np.ndarray],
    labels: np.ndarray,
    n_classes: int,
    rng: np.random.Generator,
    steps: int = 2000,
    hidden: int = 128,
    lr: float = 1e-2,
    eval_draws: int = 8,
    stochastic: bool = True,
) -> MultisetRun:
    """Fit a two-layer ReLU MLP on multiset features and report its accuracy.

    ``features(rng)`` returns one feature matrix; stochastic features are
    redrawn every step and predictions are averaged over ``eval_draws`` fresh
    draws. Inputs are standardized with the statistics of the first draw.
    """
    first = np.asarray(features(rng), dtype=np.float64)
    center = first.mean(axis=0, keepdims=True)
    spread = first.std(axis=0, keepdims=True)
    spread[spread < 1e-8] = 1.0

    def standardized(x):
        return (x - center) / spread

    mlp = build_mlp(first.shape[1], hidden, n_classes, rng)
    optimizer = Adam(mlp.parameters(), lr=lr)
    x = first
    last = math.nan
    for step in range(1, steps + 1):
        if stochastic and step > 1:
            x = features(rng)
        optimizer.zero_grad()
        tape = Tape()
        objective = loss(LossKind.cross_entropy, mlp_forward(mlp, standardized(x), tape), labels)
        last = float(objective.value[0, 0])
        tape.backward(objective)
        optimizer.step()
        if step % 500 == 0:
            logger.debug(f"multiset step {step}: loss {last:.4f}")

    draws = eval_draws if stochastic else 1
    outputs = [mlp_forward(mlp, standardized(features(rng) if stochastic else first), Tape()).value
               for _ in range(draws)]
    return MultisetRun(accuracy(average_predictions(outputs), labels), last)
