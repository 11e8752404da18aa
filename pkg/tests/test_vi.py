import numpy as np
import pytest

from stag.autodiff import Param, Tape, gather_rows, total_sum
from stag.models.vi import Granularity, vi_defaults
from stag.services.layers import average_predictions, build_model, forward
from stag.services.train import Adam
from stag.services.vi import (
    amortize, bbb_elbo, bbb_kl, bbb_predict, build_bbb, build_posterior, elbo_terms, kl_divergence, kl_normal,
    reparameterize, sample_posterior,
)


def _posterior(g, granularity, rng, channels=8, **kwargs):
    return build_posterior(granularity, channels, 1.0, -1.0, 0.5, in_features=g.n_features, rng=rng, **kwargs)


# ==============================
# KL
# ==============================


def test_kl_zero_when_q_equals_prior():
    tape = Tape()
    mu = tape.constant(np.full((3, 2), 1.0))
    log_sigma = tape.constant(np.full((3, 2), np.log(0.5)))
    assert kl_normal(mu, log_sigma, 1.0, 0.5).value[0, 0] == 0.0


def test_kl_nonnegative(rng):
    tape = Tape()
    for _ in range(20):
        mu = tape.constant(rng.normal(size=(4, 3)))
        log_sigma = tape.constant(rng.normal(size=(4, 3)))
        assert kl_normal(mu, log_sigma, 1.0, 0.7).value[0, 0] >= 0.0


def test_kl_closed_form_scalar():
    tape = Tape()
    kl = kl_normal(tape.constant([[2.0]]), tape.constant([[0.0]]), 1.0, 2.0).value[0, 0]
    expected = np.log(2.0) + (1.0 + 1.0) / (2 * 4.0) - 0.5
    assert kl == pytest.approx(expected, abs=1e-12)


def test_kl_needs_positive_prior_sigma():
    tape = Tape()
    with pytest.raises(ValueError, match="prior sigma"):
        kl_normal(tape.constant([[0.0]]), tape.constant([[0.0]]), 1.0, 0.0)


def test_amortized_kl_needs_graph(toy_graph, rng):
    q = _posterior(toy_graph, "per_edge", rng)
    with pytest.raises(ValueError, match="graph"):
        kl_divergence(q)


# ==============================
# Reparameterization
# ==============================


def test_reparameterized_square_gradient(rng):
    # d/dmu E[z^2] = 2 mu
    mu, log_sigma = Param("mu", np.array([[0.7]])), Param("log_sigma", np.array([[np.log(0.3)]]))
    draws = 20000
    tape = Tape()
    eps = rng.standard_normal((draws, 1))
    rows = np.zeros(draws, dtype=np.int64)
    z = reparameterize(gather_rows(tape.param(mu), rows), gather_rows(tape.param(log_sigma), rows), eps)
    tape.backward(total_sum(z * z) * (1.0 / draws))
    assert mu.grad[0, 0] == pytest.approx(1.4, abs=0.05)
    # d/dsigma E[z^2] = 2 sigma, so d/dlog_sigma = 2 sigma^2
    assert log_sigma.grad[0, 0] == pytest.approx(2 * 0.09, abs=0.02)


@pytest.mark.parametrize("granularity", list(Granularity))
def test_mask_shapes(granularity, toy_graph, rng):
    q = _posterior(toy_graph, granularity, rng)
    draw = sample_posterior(q, toy_graph, 2, (5, 8), rng)
    e = toy_graph.augmented.nnz
    per_channel = Granularity(granularity).per_channel_values
    assert draw.mask.values(0).shape == (e, 5 if per_channel else 1)
    assert draw.mask.values(1).shape == (e, 8 if per_channel else 1)


def test_scalar_posterior_shares_one_draw(toy_graph, rng):
    q = _posterior(toy_graph, "scalar", rng)
    w = sample_posterior(q, toy_graph, 1, (5,), rng).mask.values(0)
    assert np.all(w == w[0, 0])


def test_independent_draws_vary_per_entry(toy_graph, rng):
    q = _posterior(toy_graph, "scalar", rng, independent_draws=True)
    w = sample_posterior(q, toy_graph, 1, (5,), rng).mask.values(0)
    assert len(np.unique(w)) > 1


@pytest.mark.parametrize("granularity", list(Granularity))
def test_unmasked_self_loops_stay_at_one(granularity, toy_graph, rng):
    q = _posterior(toy_graph, granularity, rng, mask_self_loops=False)
    loops = toy_graph.augmented.self_loop
    mask = sample_posterior(q, toy_graph, 2, (5, 8), rng).mask
    for l in range(2):
        w = mask.values(l)
        np.testing.assert_array_equal(w[loops], 1.0)
        assert np.all(w[~loops] != 1.0)


def test_pinned_self_loops_get_no_gradient(toy_graph, rng):
    q = _posterior(toy_graph, "per_edge_per_channel", rng, mask_self_loops=False)
    tape = Tape()
    draw = sample_posterior(q, toy_graph, 1, (5,), rng, tape)
    tape.backward(total_sum(gather_rows(draw.mask.layer(0), np.flatnonzero(toy_graph.augmented.self_loop))))
    grad = q.params["amortizer.mu.bias"].grad
    assert grad is None or not np.any(grad)


def test_amortized_kl_skips_pinned_self_loops(toy_graph):
    masked = _posterior(toy_graph, "per_edge_per_channel", np.random.default_rng(0))
    pinned = _posterior(toy_graph, "per_edge_per_channel", np.random.default_rng(0), mask_self_loops=False)
    mu, log_sigma = amortize(masked, toy_graph, include_self_loops=True)
    off_diagonal = np.flatnonzero(~toy_graph.augmented.self_loop)
    expected = kl_normal(gather_rows(mu, off_diagonal), gather_rows(log_sigma, off_diagonal), 1.0, 0.5)
    assert kl_divergence(pinned, toy_graph).value[0, 0] == pytest.approx(expected.value[0, 0], rel=1e-12)
    assert kl_divergence(pinned, toy_graph).value[0, 0] < kl_divergence(masked, toy_graph).value[0, 0]


def test_posterior_too_narrow(toy_graph, rng):
    q = _posterior(toy_graph, "per_channel", rng, channels=4)
    with pytest.raises(ValueError, match="posterior holds 4"):
        sample_posterior(q, toy_graph, 1, (5,), rng)


def test_amortized_posterior_needs_features():
    with pytest.raises(ValueError, match="in_features"):
        build_posterior("per_edge", 4, 1.0, -1.0, 0.5)


def test_fallback_defaults_for_unknown_dataset():
    assert vi_defaults("synthetic", "scalar") == (1.0, -1.0, 0.5)
    assert vi_defaults("Cora", "per_edge_per_channel") == (0.5, 1.0, 0.5)


# ==============================
# ELBO training
# ==============================


@pytest.mark.parametrize("granularity", list(Granularity))
def test_negative_elbo_decreases(granularity, toy_graph):
    rng = np.random.default_rng(0)
    model = build_model(toy_graph.n_features, 8, 3, 2, "gcn", rng)
    q = _posterior(toy_graph, granularity, rng)
    optimizer = Adam(model.parameters() + q.parameters(), lr=1e-2)
    history = []
    for _ in range(50):
        optimizer.zero_grad()
        tape = Tape()
        terms = elbo_terms(model, q, toy_graph, toy_graph.labels, rng, tape=tape)
        objective = -terms.elbo
        tape.backward(objective)
        optimizer.step()
        history.append(objective.value[0, 0])
    assert np.median(history[-10:]) < np.median(history[:10])


def test_elbo_is_likelihood_minus_kl(toy_graph, rng):
    model = build_model(toy_graph.n_features, 8, 3, 2, "gcn", rng)
    q = _posterior(toy_graph, "per_channel", rng)
    terms = elbo_terms(model, q, toy_graph, toy_graph.labels, rng, mc_samples=3, kl_scale=0.5)
    expected = terms.log_likelihood.value - 0.5 * terms.kl.value
    np.testing.assert_allclose(terms.elbo.value, expected, atol=1e-12)


# ==============================
# Weight-space baseline
# ==============================


def test_bbb_starts_near_base_model(toy_graph, rng):
    base = build_model(toy_graph.n_features, 8, 3, 2, "gcn", rng)
    bbb = build_bbb(base, log_sigma0=-10.0)
    assert bbb.parameter_count() == 2 * base.parameter_count()
    probs = np.exp(bbb_predict(bbb, toy_graph, 4, rng))
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)


def test_bbb_kl_zero_at_prior(toy_graph, rng):
    base = build_model(toy_graph.n_features, 8, 3, 2, "gcn", rng)
    bbb = build_bbb(base, prior_sigma=1.0, log_sigma0=0.0)
    for p in bbb.mu.values():
        p.value = np.zeros_like(p.value)
    assert bbb_kl(bbb).value[0, 0] == 0.0


def test_bbb_elbo_gradients_reach_sigmas(toy_graph, rng):
    base = build_model(toy_graph.n_features, 8, 3, 2, "gcn", rng)
    bbb = build_bbb(base)
    tape = Tape()
    tape.backward(bbb_elbo(bbb, toy_graph, toy_graph.labels, rng, tape=tape) * -1.0)
    assert all(np.any(p.grad != 0) for p in bbb.log_sigma.values())


# ==============================
# Limits and invariants
# ==============================


def test_amortizer_with_zero_head_returns_initial_values(toy_graph, rng):
    q = build_posterior("per_edge_per_channel", 4, 0.5, 1.0, 0.5, in_features=toy_graph.n_features, rng=rng)
    q.params["amortizer.mu.weight"].value[:] = 0.0
    q.params["amortizer.log_sigma.weight"].value[:] = 0.0
    mu, log_sigma = amortize(q, toy_graph)
    assert mu.shape == log_sigma.shape == (toy_graph.n_edges, 4)
    np.testing.assert_array_equal(mu.value, 0.5)
    np.testing.assert_array_equal(log_sigma.value, 1.0)


def test_collapsed_posterior_reproduces_deterministic_forward(toy_graph, rng):
    model = build_model(toy_graph.n_features, 8, 3, 2, "gcn", rng)
    q = build_posterior("scalar", 8, 1.0, -60.0, 0.5)
    draw = sample_posterior(q, toy_graph, model.depth, model.widths, rng)
    np.testing.assert_allclose(forward(model, toy_graph, draw.mask).value, forward(model, toy_graph).value,
                               atol=1e-12)


def test_mean_mask_moves_one_for_one_with_mu(toy_graph, rng):
    q = build_posterior("scalar", 8, 1.0, -60.0, 0.5)
    tape = Tape()
    draw = sample_posterior(q, toy_graph, 1, (5,), rng, tape)
    weights = draw.mask.layer(0)
    tape.backward(total_sum(weights) * (1.0 / weights.shape[0]))
    assert q.params["q.mu"].grad[0, 0] == pytest.approx(1.0, abs=1e-12)


def test_bbb_with_tiny_sigma_matches_base_model(toy_graph, rng):
    base = build_model(toy_graph.n_features, 8, 3, 2, "gcn", rng)
    bbb = build_bbb(base, log_sigma0=-30.0)
    expected = average_predictions([forward(base, toy_graph).value])
    np.testing.assert_allclose(bbb_predict(bbb, toy_graph, 4, rng), expected, atol=1e-8)


@pytest.mark.parametrize("granularity", list(Granularity))
def test_kl_does_not_depend_on_model_depth(granularity, toy_graph):
    q = _posterior(toy_graph, granularity, np.random.default_rng(0))
    kls = []
    for depth in (2, 4):
        model = build_model(toy_graph.n_features, 8, 3, depth, "gcn", np.random.default_rng(1))
        terms = elbo_terms(model, q, toy_graph, toy_graph.labels, np.random.default_rng(2))
        kls.append(terms.kl.value[0, 0])
    assert kls[0] == kls[1]
    assert kls[0] == kl_divergence(q, toy_graph).value[0, 0]
