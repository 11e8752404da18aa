"""Dirichlet energy and over-smoothing under stochastic aggregation."""

import logging
from dataclasses import dataclass

import numpy as np

from ..graph import Graph, normalized_laplacian
from ..models.noise import NoiseSpec
from ..utils import rng_stream, segment_sum
from .noise import draw_values, masked_weights, sample_mask

logger = logging.getLogger(__name__)


def _as_matrix(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return x[:, None] if x.ndim == 1 else x


def dirichlet_energy(g: Graph, x: np.ndarray) -> float:
    """tr(Xᵀ Δ̃ X)."""
    x = _as_matrix(x)
    if x.shape[0] != g.n_nodes:
        raise ValueError(f"signal has {x.shape[0]} rows, graph has {g.n_nodes} nodes")
    return float(np.sum(x * normalized_laplacian(g).matmul(x)))


def dirichlet_energy_pairwise(g: Graph, f: np.ndarray) -> float:
    """½ Σ A_ij (f_i/√(1+d_i) − f_j/√(1+d_j))² for a scalar field."""
    f = np.asarray(f, dtype=np.float64).reshape(-1)
    scaled = f / np.sqrt(1.0 + g.degrees)
    rows = g.adjacency.row_ids
    return float(0.5 * np.sum((scaled[rows] - scaled[g.indices]) ** 2))


def matched_moment_specs(mean: float = 0.5, variance: float = 0.25, normalize_degree: bool = True) -> dict[str, NoiseSpec]:
    """Normal, Uniform and (when the moments allow it) Bernoulli noise sharing one mean and variance."""
    half_width = np.sqrt(3.0 * variance)
    specs = {
        "normal": NoiseSpec.normal(mean, np.sqrt(variance), normalize_degree=normalize_degree),
        "uniform": NoiseSpec.uniform(mean - half_width, mean + half_width, normalize_degree=normalize_degree),
    }
    if 0.0 <= mean <= 1.0 and np.isclose(mean * (1.0 - mean), variance):
        specs["bernoulli"] = NoiseSpec.bernoulli(1.0 - mean, normalize_degree=normalize_degree)
    else:
        logger.warning(f"No Bernoulli distribution has mean {mean} and variance {variance}; skipped")
    return specs


@dataclass
class EnergyTrajectory:
    label: str
    energies: np.ndarray  # runs x layers

    @property
    def mean(self) -> np.ndarray:
        return self.energies.mean(axis=0)

    @property
    def std(self) -> np.ndarray:
        return self.energies.std(axis=0)

    def __len__(self) -> int:
        return self.energies.shape[1]


def smoothing_step(g: Graph, x: np.ndarray, spec: NoiseSpec, rng: np.random.Generator) -> np.ndarray:
    """One application of P = I − Δ̃ with a freshly drawn mask."""
    op = g.operators["gcn"]
    if spec.is_deterministic:
        return op.matmul(x)
    mask = sample_mask(spec, g, 1, (x.shape[1],), rng)
    w = masked_weights(g, mask, 0, "gcn")
    return segment_sum(op.values[:, None] * w * x[op.indices], op.indptr)


def oversmoothing_trajectory(
    g: Graph, signal: np.ndarray, spec: NoiseSpec, layers: int, runs: int, seed: int = 0, label: str | None = None,
) -> EnergyTrajectory:
    """Energy of the signal after 0..layers-1 smoothing steps, over ``runs`` seeded runs."""
    if layers < 1 or runs < 1:
        raise ValueError(f"layers and runs must be >= 1, got {layers} and {runs}")
    x0 = _as_matrix(signal)
    energies = np.zeros((runs, layers))
    for run in range(runs):
        rng = rng_stream(seed, run)
        x = x0
        energies[run, 0] = dirichlet_energy(g, x)
        for t in range(1, layers):
            x = smoothing_step(g, x, spec, rng)
            energies[run, t] = dirichlet_energy(g, x)
    trajectory = EnergyTrajectory(label or spec.label(), energies)
    logger.debug(f"{trajectory.label}: energy {trajectory.mean[0]:.4e} -> {trajectory.mean[-1]:.4e}")
    return trajectory


@dataclass
class EnergyComparison:
    expected: float
    stderr: float
    deterministic: float

    @property
    def holds(self) -> bool:
        """Perturbed energy is at least the deterministic one, up to 3 standard errors."""
        return self.expected >= self.deterministic - 3.0 * self.stderr


def perturbed_aggregation_energy(
    g: Graph,
    x: np.ndarray,
    spec: NoiseSpec,
    aggregator: str,
    draws: int,
    rng: np.random.Generator,
    chunk: int = 2000,
) -> EnergyComparison:
    """MC estimate of E_q[ℰ(ρ(ξ_q(X)))] against ℰ(ρ(X)).

    ρ is the neighbor SUM or MEAN; every (edge, channel) message gets its own draw.
    """
    if aggregator not in ("sum", "mean"):
        raise ValueError(f"aggregator must be sum or mean, got {aggregator}")
    x = _as_matrix(x)
    op = g.operators[aggregator]
    lap = normalized_laplacian(g)
    deterministic = dirichlet_energy(g, op.matmul(x))
    messages = (op.values[:, None] * x[op.indices])[:, None, :]
    samples = []
    remaining = draws
    while remaining > 0:
        size = min(chunk, remaining)
        z = draw_values(spec, (op.nnz, size, x.shape[1]), rng)
        h = segment_sum(messages * z, op.indptr)
        lh = segment_sum(lap.values[:, None, None] * h[lap.indices], lap.indptr)
        samples.append(np.sum(h * lh, axis=(0, 2)))
        remaining -= size
    values = np.concatenate(samples)
    return EnergyComparison(float(values.mean()), float(values.std(ddof=1) / np.sqrt(len(values))), deterministic)
