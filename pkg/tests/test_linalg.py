import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tristream.linalg import ShapeError, concat, glorot_uniform, matmul, relu, sigmoid, softmax, split, tanh

finite = st.floats(-1e3, 1e3, allow_nan=False)


def triple_loop(a, b):
    m, k = a.shape
    n = b.shape[1]
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            s = 0.0
            for t in range(k):
                s += a[i, t] * b[t, j]
            out[i, j] = s
    return out


def test_matmul_identity_and_worked_example():
    b = np.array([[5.0, 6], [7, 8]])
    assert np.array_equal(matmul(np.eye(2), b), b)
    assert np.array_equal(matmul(np.array([[1.0, 2], [3, 4]]), b), [[19, 22], [43, 50]])
    assert not matmul(np.zeros((2, 2)), np.ones((2, 5))).any()


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
        matmul(np.ones((2, 3)), np.ones((2, 3)))


@given(st.integers(1, 16), st.integers(1, 16), st.integers(1, 16), st.integers(0, 2**31))
def test_matmul_matches_triple_loop(m, k, n, seed):
    r = np.random.default_rng(seed)
    a, b = r.normal(size=(m, k)), r.normal(size=(k, n))
    np.testing.assert_allclose(matmul(a, b), triple_loop(a, b), rtol=0, atol=1e-12)


def test_activation_values():
    assert sigmoid(np.array(0.0)) == 0.5
    assert tanh(np.array(0.0)) == 0.0
    assert abs(sigmoid(np.array(0.5)) - 1 / (1 + math.exp(-0.5))) < 1e-9
    assert abs(sigmoid(np.array(0.5)) - 0.62246) < 1e-5
    assert np.array_equal(relu(np.array([-1.0, 0.0, 2.0])), [0, 0, 2])


@given(arrays(np.float64, st.integers(1, 50), elements=finite))
def test_sigmoid_symmetry_and_ranges(x):
    np.testing.assert_allclose(sigmoid(x) + sigmoid(-x), 1.0, atol=1e-12)
    s = sigmoid(np.clip(x, -30, 30))
    assert np.all((s > 0) & (s < 1))
    t = tanh(np.clip(x, -15, 15))
    assert np.all((t > -1) & (t < 1))
    assert np.all(relu(x) >= 0)


def test_softmax_examples():
    np.testing.assert_array_equal(softmax(np.zeros(2)), [0.5, 0.5])
    np.testing.assert_array_equal(softmax(np.array([1000.0, 1000.0])), [0.5, 0.5])
    np.testing.assert_allclose(softmax(np.array([math.log(2), 0.0])), [2 / 3, 1 / 3], atol=1e-9)


@given(arrays(np.float64, st.integers(1, 40), elements=finite))
def test_softmax_is_a_distribution(x):
    p = softmax(x)
    assert np.all(p >= 0) and np.all(np.isfinite(p))
    assert abs(p.sum() - 1) < 1e-12


def test_concat_examples_and_errors():
    assert concat([np.ones(2), np.zeros(3)]).shape == (5,)
    a = np.arange(4.0)
    assert np.array_equal(concat([a]), a)
    assert concat([np.ones(2048), np.ones(2048), np.ones(64)]).shape == (2048 + 2048 + 64,)
    with pytest.raises(ShapeError):
        concat([np.ones((2, 3)), np.ones((3, 3))], axis=1)


@given(st.lists(st.integers(1, 5), min_size=1, max_size=4), st.integers(1, 4), st.integers(0, 2**31))
def test_concat_then_split_roundtrip(widths, rows, seed):
    r = np.random.default_rng(seed)
    parts = [r.normal(size=(rows, w)) for w in widths]
    back = split(concat(parts, axis=1), widths, axis=1)
    for p, q in zip(parts, back):
        assert np.array_equal(p, q)


def test_glorot_bounds(rng):
    w = glorot_uniform(rng, (30, 50))
    assert w.shape == (30, 50)
    assert np.abs(w).max() <= math.sqrt(6 / 80)
