import numpy as np
import pytest

from stag.autodiff import (
    Param, Tape, add, finite_difference_check, matmul, mul, relu, scale, spmm, total_sum,
)
from stag.errors import BackwardError, ShapeError
from stag.graph import SparseMatrix, build_graph, sym_normalized_adjacency
from stag.services.gradcheck import elbo_case, gcn_case, primitive_cases


# ==============================
# Recording
# ==============================


def test_matmul_shape():
    tape = Tape()
    out = matmul(tape.constant(np.ones((2, 3))), tape.constant(np.ones((3, 4))))
    assert out.shape == (2, 4)


def test_shape_mismatch_names_both_shapes():
    tape = Tape()
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
        matmul(tape.constant(np.ones((2, 3))), tape.constant(np.ones((2, 3))))


def test_add_only_broadcasts_row_vectors():
    tape = Tape()
    a = tape.constant(np.ones((3, 2)))
    assert add(a, tape.constant(np.ones((1, 2)))).shape == (3, 2)
    with pytest.raises(ShapeError):
        add(a, tape.constant(np.ones((3, 1))))


def test_relu_gradient_zero_for_negative_and_zero():
    tape = Tape()
    x = tape.watch(np.array([[-1.0, 0.0, 2.0]]))
    tape.backward(total_sum(relu(x)))
    assert tape.grad(x).tolist() == [[0.0, 0.0, 1.0]]


def test_spmm_identity_gives_row_sums():
    g = build_graph([(0, 1), (1, 2), (0, 2)], np.zeros((3, 1)), symmetrize=True)
    s = g.augmented
    ones = SparseMatrix(3, 3, s.indptr, s.indices, np.ones(s.nnz))
    out = spmm(ones, np.eye(3))
    np.testing.assert_array_equal(out.sum(axis=1), [3.0, 3.0, 3.0])


def test_spmm_matches_dense_reference(toy_graph, rng):
    op = sym_normalized_adjacency(toy_graph)
    h = rng.normal(size=(toy_graph.n_nodes, 3))
    mask = rng.normal(1.0, 0.5, size=(op.nnz, 3))
    out = spmm(op, h, mask)
    for c in range(3):
        dense = op.with_values(op.values * mask[:, c]).to_dense()
        np.testing.assert_allclose(out[:, c], dense @ h[:, c], atol=1e-12)


# ==============================
# Backward
# ==============================


def test_sum_gradient_is_ones():
    w = Param("w", np.array([[1.0, -2.0], [3.0, 0.5]]))
    tape = Tape()
    tape.backward(total_sum(tape.param(w)))
    np.testing.assert_array_equal(w.grad, np.ones((2, 2)))


def test_square_gradient_is_twice_value():
    w = Param("w", np.array([[1.0, -2.0], [3.0, 0.5]]))
    tape = Tape()
    node = tape.param(w)
    tape.backward(total_sum(mul(node, node)))
    np.testing.assert_allclose(w.grad, 2 * w.value)


def test_unused_param_gets_zero_gradient():
    used, unused = Param("used", np.ones((1, 2))), Param("unused", np.ones((1, 2)))
    tape = Tape()
    tape.param(unused)
    tape.backward(total_sum(tape.param(used)))
    np.testing.assert_array_equal(unused.grad, np.zeros((1, 2)))


def test_backward_twice_is_an_error():
    tape = Tape()
    loss = total_sum(tape.watch(np.ones((2, 2))))
    tape.backward(loss)
    with pytest.raises(BackwardError, match="already"):
        tape.backward(loss)


def test_non_scalar_loss_rejected():
    tape = Tape()
    with pytest.raises(BackwardError, match="1x1"):
        tape.backward(tape.watch(np.ones((2, 1))))


def test_backward_is_linear(rng):
    w = Param("w", rng.normal(size=(3, 2)))
    x = rng.normal(size=(4, 3))

    def l1(tape):
        return total_sum(relu(matmul(x, tape.param(w))))

    def l2(tape):
        node = tape.param(w)
        return total_sum(mul(node, node))

    grads = []
    for fn in (l1, l2, lambda t: add(scale(l1(t), 2.0), scale(l2(t), -3.0))):
        w.zero_grad()
        tape = Tape()
        tape.backward(fn(tape))
        grads.append(w.grad.copy())
    np.testing.assert_allclose(grads[2], 2.0 * grads[0] - 3.0 * grads[1], atol=1e-12)


# ==============================
# Finite differences
# ==============================


def test_quadratic_finite_difference_error_tiny(rng):
    w = Param("w", rng.normal(size=(3, 3)))

    def loss(tape):
        node = tape.param(w)
        return total_sum(mul(node, node))

    assert finite_difference_check(loss, [w], fraction=1.0) < 1e-7


@pytest.mark.parametrize("name", list(primitive_cases()))
def test_primitive_gradients(name):
    fn, params = primitive_cases()[name]
    assert finite_difference_check(fn, params, fraction=1.0) < 1e-6


def test_frozen_mask_gcn_gradients():
    fn, params = gcn_case()
    assert finite_difference_check(fn, params, fraction=0.5) < 1e-4


@pytest.mark.parametrize("granularity", ["scalar", "per_channel", "per_edge", "per_edge_per_channel"])
def test_frozen_draw_elbo_gradients(granularity):
    fn, params = elbo_case(granularity=granularity)
    assert finite_difference_check(fn, params, fraction=0.25) < 1e-4
