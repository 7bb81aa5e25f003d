import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from esacl.nn import (Batch, ConfigurationError, NetworkSpec, batch_loss, finite_diff,
                      finite_diff_grad, forward, grad, init_params, loss, max_relative_error,
                      per_example_losses)
from conftest import random_net


def test_identity_layer_logits():
    spec = NetworkSpec((2, 2))
    params = np.array([1.0, 0.0, 0.0, 1.0, 0.0, 0.0])  # W row-major (in x out), then b
    out = forward(spec, params, np.ones(6, bool), Batch([[1.0, 0.0]], [0]))
    assert out.tolist() == [[1.0, 0.0]]


def test_masked_first_column_gives_zero_logits():
    spec = NetworkSpec((2, 2))
    params = np.array([1.0, 0.0, 0.0, 1.0, 0.0, 0.0])
    mask = np.ones(6, bool)
    mask[[0, 2]] = False  # column 0 of W
    out = forward(spec, params, mask, Batch([[1.0, 0.0]], [0]))
    assert out.tolist() == [[0.0, 0.0]]


def _reference_logits(dims, vec, x, heads, head):
    # straight-line slicing of the flat layout, independent of NetworkSpec.unpack
    pos = 0
    layers = []
    n_layers = len(dims) - 1
    for i in range(n_layers - 1):
        fi, fo = dims[i], dims[i + 1]
        W = vec[pos:pos + fi * fo].reshape(fi, fo)
        b = vec[pos + fi * fo:pos + fi * fo + fo]
        layers.append((W, b))
        pos += fi * fo + fo
    fi, fo = dims[-2], dims[-1]
    pos += head * (fi * fo + fo)
    W_out = vec[pos:pos + fi * fo].reshape(fi, fo)
    b_out = vec[pos + fi * fo:pos + fi * fo + fo]
    h = x
    for W, b in layers:
        h = np.maximum(h @ W + b, 0.0)
    return h @ W_out + b_out


def test_forward_matches_handrolled_reference():
    rng = np.random.default_rng(11)
    dims = (4, 5, 3)
    spec = NetworkSpec(dims, "relu", heads=2)
    params = rng.standard_normal(spec.size)
    x = rng.standard_normal((3, 4))
    for head in (0, 1):
        got = forward(spec, params, np.ones(spec.size, bool), Batch(x, [0, 1, 2], head))
        np.testing.assert_allclose(got, _reference_logits(dims, params, x, 2, head), rtol=0, atol=1e-14)


def test_dimension_mismatch_is_configuration_error():
    spec = NetworkSpec((3, 2))
    with pytest.raises(ConfigurationError):
        forward(spec, np.zeros(spec.size), np.ones(spec.size - 1, bool), Batch(np.zeros((1, 3)), [0]))
    with pytest.raises(ConfigurationError):
        forward(spec, np.zeros(spec.size), np.ones(spec.size, bool), Batch(np.zeros((1, 4)), [0]))
    with pytest.raises(ConfigurationError):
        NetworkSpec((3,))
    with pytest.raises(ConfigurationError):
        NetworkSpec((3, 0))


def test_loss_uniform_and_saturated():
    assert loss([[0.0, 0.0]], [0]) == pytest.approx(np.log(2), abs=1e-12)
    assert loss([[1000.0, 0.0]], [0]) == pytest.approx(0.0, abs=1e-12)
    big = per_example_losses([[1e4, -1e4], [-1e4, 1e4]], [1, 1])
    assert np.all(np.isfinite(big))
    assert big[0] == pytest.approx(2e4)


def test_loss_matches_explicit_softmax_oracle():
    rng = np.random.default_rng(3)
    logits = rng.standard_normal((4, 3))
    labels = np.array([0, 2, 1, 2])
    p = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)
    oracle = -np.log(p[np.arange(4), labels])
    np.testing.assert_allclose(per_example_losses(logits, labels), oracle, rtol=1e-13)
    assert abs(per_example_losses(logits, labels).mean() - loss(logits, labels)) < 1e-12


def test_empty_batch_errors():
    with pytest.raises(ValueError):
        per_example_losses(np.zeros((0, 2)), [])


def test_symmetric_batch_gives_zero_bias_gradient():
    spec = NetworkSpec((2, 2))
    params = np.zeros(spec.size)
    b = Batch([[1.0, 1.0], [-1.0, -1.0]], [0, 1])
    g = grad(spec, params, np.ones(spec.size, bool), b)
    assert np.all(g[4:] == 0.0)


def test_finite_diff_of_quadratic():
    g = finite_diff(lambda t: float(t[0] ** 2), [3.0], h=1e-5)
    assert abs(g[0] - 6.0) < 1e-6
    with pytest.raises(ValueError):
        finite_diff(lambda t: 0.0, [1.0], h=0.0)


@pytest.mark.parametrize("seed", range(100))
def test_gradient_matches_finite_differences(seed):
    act = "tanh" if seed % 2 else "relu"
    spec, params, batch, rng = random_net(seed, activation=act, heads=1 + seed % 3)
    mask = rng.random(spec.size) > 0.2
    g = grad(spec, params, mask, batch)
    fd = finite_diff_grad(spec, params, mask, batch, h=1e-5)
    assert max_relative_error(g, fd) < 1e-5
    assert np.all(g[~mask] == 0.0) and np.all(fd[~mask] == 0.0)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**31), coord=st.integers(0, 10**6), delta=st.floats(-1e3, 1e3))
def test_masked_weights_are_neutral(seed, coord, delta):
    spec, params, batch, rng = random_net(seed)
    mask = rng.random(spec.size) > 0.5
    masked = np.flatnonzero(~mask)
    if masked.size == 0:
        return
    i = masked[coord % masked.size]
    bumped = params.copy()
    bumped[i] += delta
    assert np.array_equal(forward(spec, params, mask, batch), forward(spec, bumped, mask, batch))
    assert batch_loss(spec, params, mask, batch) == batch_loss(spec, bumped, mask, batch)


def test_off_path_heads_get_zero_gradient():
    spec, params, _, rng = random_net(5, dims=(3, 4, 2), heads=3)
    b = Batch(rng.standard_normal((5, 3)), rng.integers(0, 2, 5), task_id=1)
    g = grad(spec, params, np.ones(spec.size, bool), b)
    lay = spec.layer_of_coordinate()
    assert np.all(g[(lay == 1) | (lay == 3)] == 0.0)
    assert np.any(g[lay == 2] != 0.0)


def test_init_params_respects_fan_in_bounds():
    spec = NetworkSpec((9, 4, 3), heads=2)
    rng = np.random.default_rng(0)
    for _ in range(100):
        p = init_params(spec, rng)
        for (fi, fo), (w, b) in zip(spec.layer_shapes(), spec.unpack(p)):
            assert np.all(np.abs(w) <= 1 / np.sqrt(fi)) and np.all(np.abs(b) <= 1 / np.sqrt(fi))


def test_forward_is_deterministic(small_net):
    spec, params, batch, _ = small_net
    m = np.ones(spec.size, bool)
    assert forward(spec, params, m, batch).tobytes() == forward(spec, params, m, batch).tobytes()
