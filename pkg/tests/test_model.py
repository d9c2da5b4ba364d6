import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gnn_tracin.graph_data import Dataset, EventGraph, role_mask
from gnn_tracin.model import (
    PARAM_NAMES,
    ModelParams,
    PackedGraphs,
    backward,
    batch_logits,
    batch_loss_and_grads,
    forward,
    init_params,
    last_layer_gradient,
    loss,
)
from gnn_tracin.numerics import ShapeError
from helpers import random_graph, random_params


def zero_graph(n=6, label=0):
    return EventGraph(0, np.zeros((n, 6)), role_mask(n), label)


def finite_difference(params, graph, label, eps=1e-5):
    grads = {}
    for name, tensor in params.items():
        g = np.zeros_like(tensor)
        for idx in np.ndindex(tensor.shape):
            plus, minus = params.copy(), params.copy()
            getattr(plus, name)[idx] += eps
            getattr(minus, name)[idx] -= eps
            g[idx] = (loss(forward(plus, graph)[0], label) - loss(forward(minus, graph)[0], label)) / (2 * eps)
        grads[name] = g
    return grads


def test_zero_params_give_zero_logits():
    rng = np.random.default_rng(0)
    for n in (6, 7):
        logits, _ = forward(ModelParams.zeros(5), random_graph(rng, n))
        assert np.array_equal(logits, [0.0, 0.0])


def test_zero_features_hand_evaluation():
    rng = np.random.default_rng(1)
    params = ModelParams(
        rng.normal(size=(6, 2)),  # irrelevant: X = 0
        [1.0, -2.0],
        [[2.0, 1.0], [0.5, -1.0]],
        [-1.0, 0.5],
        [[1.0, -1.0], [2.0, 0.5]],
        [0.5, -0.5],
    )
    # H1 rows = relu(b1) = [1, 0]; H2 rows = relu([1, 0] W2 + b2) = [1, 1.5]
    # logits = [1, 1.5] W3 + b3 = [4, -0.25] + [0.5, -0.5]
    for n in (6, 7):
        logits, cache = forward(params, zero_graph(n))
        np.testing.assert_allclose(cache.pooled, [1.0, 1.5], rtol=0, atol=1e-15)
        np.testing.assert_allclose(logits, [4.5, -0.75], rtol=0, atol=1e-14)


@pytest.mark.parametrize("seed", range(20))
def test_node_permutation_invariance(seed):
    rng = np.random.default_rng(seed)
    n = 6 + seed % 2
    params, g = random_params(rng, 8), random_graph(rng, n)
    perm = rng.permutation(n)
    logits, _ = forward(params, g)
    logits_p, _ = forward(params, g.features[perm])
    assert np.max(np.abs(logits - logits_p)) < 1e-12


def test_forward_rejects_wrong_width():
    with pytest.raises(ShapeError):
        forward(ModelParams.zeros(3), np.zeros((6, 5)))


def test_params_shape_check():
    with pytest.raises(ShapeError):
        ModelParams(np.zeros((6, 3)), np.zeros(3), np.zeros((3, 3)), np.zeros(4), np.zeros((3, 2)), np.zeros(2))


# --- loss ---


def test_loss_at_zero_logits():
    assert loss([0.0, 0.0], 0) == math.log(2)
    assert loss([0.0, 0.0], 1) == math.log(2)


def test_loss_confidently_wrong():
    assert abs(loss([10.0, -10.0], 1) - (20 + math.log1p(math.exp(-20)))) <= 1e-6


@given(st.floats(-50, 50), st.floats(-50, 50), st.floats(0.01, 10), st.integers(0, 1))
def test_loss_decreases_with_true_logit(other, true, step, label):
    def at(t):
        z = [0.0, 0.0]
        z[label], z[1 - label] = t, other
        return loss(z, label)

    assert at(true + step) <= at(true)
    assert at(true) >= 0


# --- gradients ---


@pytest.mark.parametrize("hidden", [2, 4])
@pytest.mark.parametrize("n", [6, 7])
@pytest.mark.parametrize("seed", range(3))
def test_backward_matches_finite_differences(hidden, n, seed):
    rng = np.random.default_rng(100 * hidden + 10 * n + seed)
    params, g = random_params(rng, hidden), random_graph(rng, n)
    _, grads = backward(params, g, g.label)
    fd = finite_difference(params, g, g.label)
    for name in PARAM_NAMES:
        an = getattr(grads, name)
        assert an.shape == getattr(params, name).shape
        err = np.abs(an - fd[name])
        assert np.all(err <= 1e-5 * np.maximum(np.abs(an), np.abs(fd[name])) + 1e-9), name


def test_zero_features_give_zero_first_layer_gradient():
    rng = np.random.default_rng(3)
    _, grads = backward(random_params(rng, 4), zero_graph(7, 1), 1)
    assert np.array_equal(grads.W1, np.zeros((6, 4)))
    assert np.any(grads.b1 != 0)


def test_backward_loss_matches_forward():
    rng = np.random.default_rng(5)
    params, g = random_params(rng, 4), random_graph(rng, 7)
    value, _ = backward(params, g, 1)
    assert value == loss(forward(params, g)[0], 1)


@pytest.mark.parametrize("seed", range(10))
def test_last_layer_matches_backward_slices(seed):
    rng = np.random.default_rng(seed)
    params, g = random_params(rng, 4), random_graph(rng, 6 + seed % 2)
    _, grads = backward(params, g, g.label)
    g_w3, g_b3 = last_layer_gradient(params, g, g.label)
    assert np.max(np.abs(g_w3 - grads.W3)) <= 1e-12
    assert np.max(np.abs(g_b3 - grads.b3)) <= 1e-12


def test_last_layer_vanishes_when_confidently_right():
    rng = np.random.default_rng(2)
    params = random_params(rng, 4)
    params.b3 = np.array([0.0, 80.0])
    g_w3, g_b3 = last_layer_gradient(params, random_graph(rng, 6), 1)
    assert np.linalg.norm(g_w3) < 1e-20 and np.linalg.norm(g_b3) < 1e-20


def test_last_layer_hand_evaluation():
    rng = np.random.default_rng(9)
    params = random_params(rng, 3)
    params.W3 = np.zeros((3, 2))
    params.b3 = np.zeros(2)
    g = random_graph(rng, 7)
    pooled = forward(params, g)[1].pooled
    g_w3, g_b3 = last_layer_gradient(params, g, 0)
    np.testing.assert_array_equal(g_b3, [-0.5, 0.5])
    np.testing.assert_array_equal(g_w3, np.outer(pooled, [-0.5, 0.5]))


# --- batched path ---


def mixed_dataset(rng, count=9):
    return Dataset(tuple(random_graph(rng, 6 + (i % 3 == 0), gid=i) for i in range(count)), None)


def test_batched_logits_match_reference():
    rng = np.random.default_rng(11)
    ds = mixed_dataset(rng)
    params = random_params(rng, 5)
    packed = PackedGraphs(ds)
    order = [4, 0, 8, 3, 1]
    got = batch_logits(params, packed, order)
    want = np.array([forward(params, ds.graphs[i])[0] for i in order])
    np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-12)


def test_batched_gradients_are_mean_of_per_sample():
    rng = np.random.default_rng(12)
    ds = mixed_dataset(rng)
    params = random_params(rng, 5)
    order = [7, 2, 5, 0, 3, 6]
    batch_loss, grads = batch_loss_and_grads(params, PackedGraphs(ds), order)
    per = [backward(params, ds.graphs[i], ds.graphs[i].label) for i in order]
    assert batch_loss == pytest.approx(np.mean([p[0] for p in per]), abs=1e-12)
    for name in PARAM_NAMES:
        want = np.mean([getattr(p[1], name) for p in per], axis=0)
        np.testing.assert_allclose(getattr(grads, name), want, rtol=1e-10, atol=1e-12)


def test_init_is_seeded_glorot():
    a, b = init_params(64, 3), init_params(64, 3)
    assert a == b and a != init_params(64, 4)
    assert np.max(np.abs(a.W1)) <= math.sqrt(6 / 70)
    assert np.max(np.abs(a.W2)) <= math.sqrt(6 / 128)
    assert not a.b1.any() and not a.b3.any()
