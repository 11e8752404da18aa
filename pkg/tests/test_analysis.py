import numpy as np
import pytest

from stag.graph import low_frequency_signal, planted_partition_graph, random_geometric_graph
from stag.models.noise import NoiseSpec
from stag.services.analysis import (
    dirichlet_energy, dirichlet_energy_pairwise, matched_moment_specs, oversmoothing_trajectory,
    perturbed_aggregation_energy, smoothing_step,
)


# ==============================
# Dirichlet energy
# ==============================


def test_pairwise_energy_equals_trace_energy(toy_graph, rng):
    for _ in range(5):
        f = rng.normal(size=toy_graph.n_nodes)
        assert dirichlet_energy_pairwise(toy_graph, f) == pytest.approx(dirichlet_energy(toy_graph, f), rel=1e-10)


def test_energy_of_nullspace_signal_is_zero(path_graph):
    assert dirichlet_energy(path_graph, np.sqrt(1.0 + path_graph.degrees)) == pytest.approx(0.0, abs=1e-12)


def test_energy_sums_over_columns(toy_graph, rng):
    x = rng.normal(size=(toy_graph.n_nodes, 3))
    total = sum(dirichlet_energy(toy_graph, x[:, c]) for c in range(3))
    assert dirichlet_energy(toy_graph, x) == pytest.approx(total)


def test_energy_rejects_wrong_row_count(toy_graph):
    with pytest.raises(ValueError, match="rows"):
        dirichlet_energy(toy_graph, np.ones(toy_graph.n_nodes + 1))


# ==============================
# Perturbed aggregation
# ==============================


@pytest.mark.parametrize("aggregator", ["sum", "mean"])
@pytest.mark.parametrize("spec", [NoiseSpec.normal(1.0, 0.5), NoiseSpec.uniform(0.5, 1.5)], ids=["normal", "uniform"])
def test_unit_mean_noise_never_lowers_expected_energy(aggregator, spec):
    for seed in range(20):
        g = planted_partition_graph(15, 3, p_in=0.4, p_out=0.1, n_features=2, seed=seed)
        x = np.random.default_rng(seed).normal(size=(g.n_nodes, 2))
        result = perturbed_aggregation_energy(g, x, spec, aggregator, draws=10**5, rng=np.random.default_rng(seed))
        assert result.holds, f"graph seed {seed}: {result}"


def test_delta_noise_reproduces_deterministic_energy(toy_graph, rng):
    x = rng.normal(size=(toy_graph.n_nodes, 2))
    result = perturbed_aggregation_energy(toy_graph, x, NoiseSpec.delta(), "sum", draws=10, rng=rng)
    assert result.expected == pytest.approx(result.deterministic)
    assert result.stderr == pytest.approx(0.0, abs=1e-9)


def test_unknown_aggregator(toy_graph, rng):
    with pytest.raises(ValueError, match="sum or mean"):
        perturbed_aggregation_energy(toy_graph, np.ones(30), NoiseSpec.normal(1, 0.1), "max", 10, rng)


# ==============================
# Over-smoothing
# ==============================


@pytest.fixture(scope="module")
def geometric_setup():
    g = random_geometric_graph(200, 0.125, seed=0)
    return g, low_frequency_signal(g, 20, seed=0)


def test_matched_moments():
    specs = matched_moment_specs(0.5, 0.25)
    assert set(specs) == {"normal", "uniform", "bernoulli"}
    for spec in specs.values():
        assert spec.moments() == pytest.approx((0.5, 0.25))


def test_bernoulli_skipped_when_moments_impossible():
    assert "bernoulli" not in matched_moment_specs(1.0, 0.25)


def test_delta_step_is_normalized_adjacency(toy_graph, rng):
    x = rng.normal(size=(toy_graph.n_nodes, 2))
    expected = toy_graph.operators["gcn"].to_dense() @ x
    np.testing.assert_allclose(smoothing_step(toy_graph, x, NoiseSpec.delta(), rng), expected, atol=1e-12)


def test_deterministic_energy_never_increases():
    g = random_geometric_graph(80, 0.25, seed=1)
    signal = low_frequency_signal(g, 10, seed=1)
    trajectory = oversmoothing_trajectory(g, signal, NoiseSpec.delta(), layers=16, runs=1)
    assert len(trajectory) == 16
    assert trajectory.energies[0, 0] == pytest.approx(dirichlet_energy(g, signal))
    assert np.all(np.diff(trajectory.mean) <= 1e-12)


def test_stochastic_smoothing_keeps_more_energy_at_layer_ten(geometric_setup):
    g, signal = geometric_setup
    deterministic = oversmoothing_trajectory(g, signal, NoiseSpec.delta(), layers=11, runs=1)
    assert np.all(np.diff(deterministic.mean) <= 1e-12)
    for label, spec in matched_moment_specs(0.5, 0.25).items():
        noisy = oversmoothing_trajectory(g, signal, spec, layers=11, runs=10, seed=0, label=label)
        assert noisy.mean[10] > deterministic.mean[10], label


def test_normalized_noise_keeps_every_run_bounded(geometric_setup):
    g, signal = geometric_setup
    start = dirichlet_energy(g, signal)
    for label, spec in matched_moment_specs(0.5, 0.25).items():
        trajectory = oversmoothing_trajectory(g, signal, spec, layers=11, runs=10, seed=0, label=label)
        worst = trajectory.energies.max()
        assert worst <= 10.0 * start, f"{label}: a run reached {worst:.3e} from {start:.3e}"


def test_trajectory_reproducible():
    g = random_geometric_graph(40, 0.3, seed=2)
    signal = low_frequency_signal(g, 4, seed=2)
    spec = NoiseSpec.normal(0.5, 0.5, normalize_degree=True)
    a = oversmoothing_trajectory(g, signal, spec, layers=8, runs=2, seed=5)
    b = oversmoothing_trajectory(g, signal, spec, layers=8, runs=2, seed=5)
    np.testing.assert_array_equal(a.energies, b.energies)


def test_trajectory_needs_layers_and_runs(toy_graph):
    with pytest.raises(ValueError):
        oversmoothing_trajectory(toy_graph, np.ones(30), NoiseSpec.delta(), layers=0, runs=1)
