"""Multiset perturbation, aggregators and distinguishability oracles."""

import itertools
import logging
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from ..models.noise import NoiseSpec
from .noise import draw_values

logger = logging.getLogger(__name__)

UNIFORM_01 = NoiseSpec.uniform(0.0, 1.0)


@dataclass(frozen=True)
class Multiset:
    elements: tuple[float, ...]

    @classmethod
    def of(cls, *values: float) -> "Multiset":
        return cls(tuple(values))

    @classmethod
    def from_counts(cls, underlying, counts) -> "Multiset":
        return cls(tuple(v for v, c in zip(underlying, counts) for _ in range(c)))

    def __len__(self) -> int:
        return len(self.elements)

    def array(self) -> np.ndarray:
        return np.asarray(self.elements, dtype=np.float64)

    def canonical(self) -> tuple[float, ...]:
        return tuple(sorted(self.elements))

    def has_zero(self) -> bool:
        return any(v == 0 for v in self.elements)

    def __str__(self) -> str:
        return "{" + ", ".join(f"{v:g}" for v in self.elements) + "}"


def _std(x: np.ndarray, axis: int = -1) -> np.ndarray:
    return np.std(x, axis=axis)


AGGREGATORS = {
    "sum": np.sum,
    "mean": np.mean,
    "max": np.max,
    "min": np.min,
    # population standard deviation
    "std": _std,
}

ACTIVATIONS = {
    "exp": np.exp,
    "relu": lambda v: np.maximum(v, 0.0),
    "identity": lambda v: v,
}


def aggregate(x: Multiset, rho: str) -> float:
    return float(AGGREGATORS[rho](x.array(), axis=-1))


def perturb_multiset(x: Multiset, spec: NoiseSpec, rng: np.random.Generator) -> Multiset:
    """ξ_q(X): every element times an i.i.d. draw."""
    values = x.array()
    return Multiset(tuple((values * draw_values(spec, values.shape, rng)).tolist()))


def shift_positive(x: Multiset) -> Multiset:
    """Injective map onto the positive reals, so zeros become countable."""
    return Multiset(tuple(math.exp(v) for v in x.elements))


@dataclass
class MonteCarloEstimate:
    mean: float
    stderr: float
    samples: int

    def separated_from(self, other: "MonteCarloEstimate", n_sigma: float = 5.0) -> bool:
        return abs(self.mean - other.mean) > n_sigma * math.hypot(self.stderr, other.stderr)


def expected_stochastic_aggregate(
    x: Multiset,
    rho: str = "sum",
    sigma: str = "exp",
    spec: NoiseSpec = UNIFORM_01,
    samples: int = 10**6,
    rng: np.random.Generator | None = None,
    chunk: int = 250_000,
) -> MonteCarloEstimate:
    """Unbiased MC estimate of E_q[σ(ρ(ξ_q(X)))] with its standard error."""
    if samples < 1:
        raise ValueError(f"samples must be >= 1, got {samples}")
    rng = rng or np.random.default_rng(0)
    values = x.array()
    total, total_sq, remaining = 0.0, 0.0, samples
    while remaining > 0:
        size = min(chunk, remaining)
        z = draw_values(spec, (size, len(values)), rng)
        out = ACTIVATIONS[sigma](AGGREGATORS[rho](z * values, axis=1))
        total += float(out.sum())
        total_sq += float(np.square(out).sum())
        remaining -= size
    mean = total / samples
    variance = max(total_sq / samples - mean * mean, 0.0) * samples / max(samples - 1, 1)
    return MonteCarloEstimate(mean, math.sqrt(variance / samples), samples)


def closed_form_exp_sum_uniform(x: Multiset) -> float:
    """E[exp(SUM(ξ(X)))] under Uniform(0, 1) noise: ∏ (e^x − 1)/x."""
    if x.has_zero():
        raise ValueError(
            f"closed form undefined for {x} (zero element); use the Monte-Carlo estimate "
            "or shift_positive first"
        )
    return math.prod(math.expm1(v) / v for v in x.elements)


def numerator_form(x: Multiset) -> float:
    """∏ (e^x − 1) over the nonzero elements, the MGF without its ∏ x denominator."""
    return math.prod(math.expm1(v) for v in x.elements if v != 0)


SEPARATION_PAIRS: list[tuple[Multiset, Multiset]] = [
    (Multiset.of(2, 2), Multiset.of(0, 4)),
    (Multiset.of(0, 2, 2), Multiset.of(0, 0, 2)),
    (Multiset.of(0, 2, 2, 4), Multiset.of(0, 0, 4, 4)),
    (Multiset.of(1, 1, 4), Multiset.of(0, 3, 3)),
]

# True where the aggregator tells the pair apart
SEPARATION_PATTERN: list[dict[str, bool]] = [
    {"sum": False, "mean": False, "max": True, "min": True, "std": True},
    {"sum": True, "mean": True, "max": False, "min": False, "std": False},
    {"sum": False, "mean": False, "max": False, "min": False, "std": True},
    {"sum": False, "mean": False, "max": True, "min": True, "std": False},
]


@dataclass
class SeparationRow:
    pair_id: int
    aggregator: str
    value_x: float
    value_y: float
    distinguished: bool
    stderr_x: float = 0.0
    stderr_y: float = 0.0


def separation_report(samples: int = 10**6, seed: int = 0, n_sigma: float = 5.0) -> list[SeparationRow]:
    """Deterministic aggregators and the stochastic statistic on every example pair."""
    rows = []
    for pair_id, (x, y) in enumerate(SEPARATION_PAIRS):
        for rho in AGGREGATORS:
            vx, vy = aggregate(x, rho), aggregate(y, rho)
            rows.append(SeparationRow(pair_id, rho, vx, vy, not math.isclose(vx, vy, rel_tol=1e-12, abs_tol=1e-12)))
        ex = expected_stochastic_aggregate(x, samples=samples, rng=np.random.default_rng([seed, pair_id, 0]))
        ey = expected_stochastic_aggregate(y, samples=samples, rng=np.random.default_rng([seed, pair_id, 1]))
        rows.append(SeparationRow(pair_id, "stochastic", ex.mean, ey.mean, ex.separated_from(ey, n_sigma),
                                  ex.stderr, ey.stderr))
        nx, ny = numerator_form(x), numerator_form(y)
        rows.append(SeparationRow(pair_id, "stochastic_numerator", nx, ny, not math.isclose(nx, ny)))
    return rows


def _exact(v):
    return int(v) if float(v).is_integer() else v


def power_sum_equal(x: Multiset, y: Multiset, n_max: int | None = None) -> bool:
    """Σ xᵢⁿ == Σ yⱼⁿ for n = 1..n_max (exact for integers, rel tol 1e-9 otherwise)."""
    if x.has_zero() or y.has_zero():
        raise ValueError("power-sum oracle needs nonzero elements")
    need = max(len(x), len(y))
    n_max = need if n_max is None else n_max
    if n_max < need:
        raise ValueError(f"n_max must be >= {need}, got {n_max}")
    xs = [_exact(v) for v in x.elements]
    ys = [_exact(v) for v in y.elements]
    for n in range(1, n_max + 1):
        px, py = sum(v ** n for v in xs), sum(v ** n for v in ys)
        if isinstance(px, int) and isinstance(py, int):
            if px != py:
                return False
        elif not math.isclose(px, py, rel_tol=1e-9):
            return False
    return True


def multiset_classes(underlying, max_multiplicity: int) -> list[Multiset]:
    """Every nonempty multiset over ``underlying`` with multiplicities 0..max_multiplicity."""
    counts = itertools.product(range(max_multiplicity + 1), repeat=len(underlying))
    return [Multiset.from_counts(underlying, c) for c in counts if any(c)]


def _bucket_key(value: float, x: Multiset, rho: str):
    if rho == "mean" and all(float(v).is_integer() for v in x.elements):
        return Fraction(int(sum(x.elements)), len(x))
    return round(value, 12)


def collision_bound(classes: list[Multiset], rho: str = "mean") -> float:
    """Best achievable accuracy from the deterministic ρ feature: distinct values / classes."""
    keys = {_bucket_key(aggregate(x, rho), x, rho) for x in classes}
    return len(keys) / len(classes)


def mean_collision_bound(classes: list[Multiset]) -> float:
    return collision_bound(classes, "mean")


def _padded(classes: list[Multiset]) -> tuple[np.ndarray, np.ndarray]:
    width = max(len(x) for x in classes)
    values = np.zeros((len(classes), width))
    present = np.zeros((len(classes), width), dtype=bool)
    for i, x in enumerate(classes):
        values[i, :len(x)] = x.elements
        present[i, :len(x)] = True
    return values, present


def stochastic_features(
    classes: list[Multiset],
    draws: int,
    rng: np.random.Generator,
    spec: NoiseSpec = UNIFORM_01,
    sigma: str = "identity",
) -> np.ndarray:
    """``draws`` independent σ(SUM(ξ_q(X))) values per class, sorted (classes x draws)."""
    values, present = _padded(classes)
    z = draw_values(spec, (len(classes), draws, values.shape[1]), rng)
    sums = np.sum(z * (values * present)[:, None, :], axis=2)
    return np.sort(ACTIVATIONS[sigma](sums), axis=1)


def deterministic_features(classes: list[Multiset], rho: str) -> np.ndarray:
    return np.array([[aggregate(x, rho)] for x in classes])


@dataclass
class MultisetDataset:
    classes: list[Multiset]
    features: np.ndarray
    labels: np.ndarray

    @property
    def num_classes(self) -> int:
        return len(self.classes)


def multiset_dataset(
    underlying,
    max_multiplicity: int,
    rng: np.random.Generator,
    mode: str = "stochastic",
    draws: int = 16,
    spec: NoiseSpec = UNIFORM_01,
) -> MultisetDataset:
    """One labeled example per class; ``mode`` is stochastic or a deterministic aggregator name."""
    classes = multiset_classes(underlying, max_multiplicity)
    if mode == "stochastic":
        features = stochastic_features(classes, draws, rng, spec)
    elif mode in AGGREGATORS:
        features = deterministic_features(classes, mode)
    else:
        raise ValueError(f"unknown multiset feature mode: {mode}")
    return MultisetDataset(classes, features, np.arange(len(classes)))
