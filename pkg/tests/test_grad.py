import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from blnm.errors import NumericFault, StructuralError, ValidationError
from blnm.grad import as_batch, backprop, grad_check, loss_only
from blnm.net import ArchitectureSpec, ModelWeights, build, forward_batch

from conftest import random_batch


def test_zero_residual_gives_zero_gradient(reference_spec, rng):
    w = build(reference_spec, 0)
    t, theta, _ = random_batch(reference_spec, 6, rng)
    y = forward_batch(w, t, theta)[:, :9]
    loss, grad = backprop(w, t, theta, y)
    assert loss == 0.0
    assert np.all(grad.flat == 0.0)
    assert grad_check(w, t, theta, y, 1e-6) < 1e-9


def test_toy_net_closed_form():
    # z = v1 tanh(a t + bt) + v2 tanh(c th + bp) + b0, loss = (z - y)^2
    spec = ArchitectureSpec(n_par=1, n_layers=1, n_neurons=2, n_states=1, n_physical=1,
                            disentanglement=1)
    a, bt, c, bp, v1, v2, b0 = 0.7, -0.2, -1.3, 0.4, 0.9, -0.6, 0.05
    w = ModelWeights(spec, np.array([a, bt, c, bp, v1, v2, b0]))
    t, th, y = 0.35, -0.8, 0.1
    h1, h2 = math.tanh(a * t + bt), math.tanh(c * th + bp)
    r = v1 * h1 + v2 * h2 + b0 - y
    expected = np.array([
        2 * r * v1 * (1 - h1 ** 2) * t,
        2 * r * v1 * (1 - h1 ** 2),
        2 * r * v2 * (1 - h2 ** 2) * th,
        2 * r * v2 * (1 - h2 ** 2),
        2 * r * h1,
        2 * r * h2,
        2 * r,
    ])
    loss, grad = backprop(w, *as_batch([(t, th, y)]))
    assert loss == pytest.approx(r * r, rel=1e-14)
    np.testing.assert_allclose(grad.flat, expected, rtol=1e-13, atol=1e-15)


def test_small_random_net_against_central_differences(rng):
    spec = ArchitectureSpec(n_par=3, n_layers=2, n_neurons=4, n_states=3, n_physical=2,
                            disentanglement=1)
    w = build(spec, 11)
    w.flat[:] += rng.normal(0, 0.1, w.flat.size)
    t, theta, y = random_batch(spec, 3, rng)
    assert grad_check(w, t, theta, y, 1e-6) < 1e-6


def test_reference_scale_net(reference_spec, rng):
    w = build(reference_spec, 3)
    t, theta, y = random_batch(reference_spec, 5, rng)
    assert grad_check(w, t, theta, y, 1e-6) < 1e-5


@pytest.mark.parametrize("level", [0, 1, 3, 4])
def test_every_merge_depth(level, rng):
    spec = ArchitectureSpec(n_par=2, n_layers=4, n_neurons=5, n_states=4, n_physical=2,
                            disentanglement=level)
    w = build(spec, level)
    t, theta, y = random_batch(spec, 4, rng)
    assert grad_check(w, t, theta, y, 1e-6) < 1e-6


def test_step_must_be_positive(small_net, small_spec, rng):
    with pytest.raises(ValidationError):
        grad_check(small_net, *random_batch(small_spec, 2, rng), step=0.0)


def test_latent_outputs_do_not_enter_loss(reference_spec, rng):
    w = build(reference_spec, 4)
    t, theta, y = random_batch(reference_spec, 8, rng)
    loss, grad = backprop(w, t, theta, y)
    shifted = w.copy()
    shifted.layers[-1]["b"][9:] += 3.7
    shifted.layers[-1]["W"][9:] *= -2.0
    loss2, grad2 = backprop(shifted, t, theta, y)
    assert loss2 == loss
    assert np.all(grad.layers[-1]["b"][9:] == 0)
    assert np.all(grad.layers[-1]["W"][9:] == 0)
    assert np.array_equal(grad.flat, grad2.flat)


def test_gradient_has_no_cross_branch_blocks(reference_spec):
    _, grad = backprop(build(reference_spec, 0), [0.5], np.zeros((1, 7)), np.zeros((1, 9)))
    assert grad.layers[0]["W_t"].shape == (9, 1)
    assert grad.layers[0]["W_p"].shape == (10, 7)
    assert grad.layers[1]["W_t"].shape == (9, 9)
    assert grad.layers[1]["W_p"].shape == (10, 10)


def test_loss_is_mean_over_points_and_physical_channels(small_net, small_spec, rng):
    t, theta, y = random_batch(small_spec, 7, rng)
    z = forward_batch(small_net, t, theta)
    expected = sum((z[i, c] - y[i, c]) ** 2 for i in range(7) for c in range(2)) / 14
    assert loss_only(small_net, t, theta, y) == pytest.approx(expected, rel=1e-14)


def test_deterministic(reference_spec, rng):
    w = build(reference_spec, 0)
    batch = random_batch(reference_spec, 40, rng)
    a = backprop(w, *batch)[1].flat
    b = backprop(w, *batch)[1].flat
    assert a.tobytes() == b.tobytes()


def test_non_finite_weight_named(small_net, small_spec, rng):
    w = small_net.copy()
    w.layers[1]["b"][0] = np.nan
    with pytest.raises(NumericFault) as info:
        backprop(w, *random_batch(small_spec, 2, rng))
    assert info.value.block == (1, "b")


def test_non_finite_input(small_net, small_spec, rng):
    t, theta, y = random_batch(small_spec, 2, rng)
    theta[0, 0] = np.inf
    with pytest.raises(NumericFault):
        backprop(small_net, t, theta, y)


def test_bad_target_shape(small_net, small_spec, rng):
    t, theta, y = random_batch(small_spec, 2, rng)
    with pytest.raises(StructuralError):
        backprop(small_net, t, theta, y[:, :1])


def test_empty_batch():
    with pytest.raises(ValidationError):
        as_batch([])


@settings(max_examples=15, deadline=None)
@given(layers=st.integers(1, 8), neurons=st.integers(10, 30), states=st.integers(9, 12),
       data=st.data())
def test_search_space_architectures(layers, neurons, states, data):
    level = data.draw(st.integers(1, layers))
    seed = data.draw(st.integers(0, 1000))
    spec = ArchitectureSpec(7, layers, neurons, states, 9, level)
    rng = np.random.default_rng(seed)
    w = build(spec, seed)
    assert grad_check(w, *random_batch(spec, 3, rng), step=1e-6) < 1e-5


def test_latent_target_columns_ignored(reference_spec, rng):
    w = build(reference_spec, 6)
    t, theta, y = random_batch(reference_spec, 5, rng)
    full = np.column_stack([y, rng.normal(size=5)])
    other = full.copy()
    other[:, 9] = 1e3
    base = backprop(w, t, theta, y)
    for targets in (full, other):
        loss, grad = backprop(w, t, theta, targets)
        assert loss == base[0]
        assert np.array_equal(grad.flat, base[1].flat)
        assert loss_only(w, t, theta, targets) == loss_only(w, t, theta, y)
