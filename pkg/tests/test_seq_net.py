from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import lstm_forward_scalar
from streamids.seq_net import (
    LstmParams,
    TrainingError,
    fit,
    forward,
    init_params,
    loss_and_grads,
    lstm_cell,
    make_window,
    softmax,
    train,
)


def _as_lists(params):
    return {k: v.tolist() for k, v in params.tensors().items()}


def _random_params(seed, f=2, h=3, k=2, scale=0.8):
    p = init_params(f, h, k, seed=seed, scale=scale)
    r = np.random.default_rng(seed + 1)
    biases = {name: r.uniform(-scale, scale, size=getattr(p, name).shape)
              for name in ("b_i", "b_f", "b_o", "b_g", "b_y")}
    return replace(p, **biases)


def test_init_shapes_and_forget_bias():
    p = init_params(5, 4, 3, seed=0)
    assert p.W_i.shape == (4, 9) and p.W_y.shape == (3, 4)
    np.testing.assert_array_equal(p.b_f, np.ones(4))
    for name in ("b_i", "b_o", "b_g", "b_y"):
        np.testing.assert_array_equal(getattr(p, name), 0.0)
    assert np.abs(p.W_g).max() <= 0.1
    with pytest.raises(ValueError):
        replace(p, W_i=np.zeros((4, 8)))


def test_cell_at_zero():
    p = init_params(2, 3, 2, scale=0.0)
    p = replace(p, b_f=np.zeros(3))
    h, c = lstm_cell(np.zeros(2), np.zeros(3), np.zeros(3), p)
    np.testing.assert_array_equal(h, 0.0)
    np.testing.assert_array_equal(c, 0.0)


def test_cell_memory_carry_limit():
    p = init_params(2, 3, 2, scale=0.0)
    p = replace(p, b_f=np.full(3, 50.0), b_i=np.full(3, -50.0))
    v = np.array([0.3, -1.2, 2.0])
    _, c = lstm_cell(np.ones(2), np.zeros(3), v, p)
    np.testing.assert_allclose(c, v, atol=1e-12)


def test_cell_shape_mismatch():
    p = init_params(2, 3, 2)
    with pytest.raises(ValueError):
        lstm_cell(np.zeros(3), np.zeros(3), np.zeros(3), p)


@given(st.integers(0, 10_000), st.integers(1, 6))
def test_forward_matches_scalar_oracle(seed, steps):
    p = _random_params(seed)
    window = np.random.default_rng(seed).normal(size=(steps, 2))
    got = forward(window, p)
    want = lstm_forward_scalar(window.tolist(), _as_lists(p))
    np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-14)
    assert got.sum() == pytest.approx(1.0, abs=1e-9)


def test_batched_forward_equals_single():
    p = _random_params(3, f=4, h=5, k=3)
    windows = np.random.default_rng(0).normal(size=(6, 8, 4))
    batch = forward(windows, p)
    for w, row in zip(windows, batch):
        np.testing.assert_allclose(forward(w, p), row, rtol=1e-13)


def test_zero_output_layer_is_uniform():
    p = replace(init_params(3, 4, 2, seed=1), W_y=np.zeros((2, 4)))
    np.testing.assert_allclose(forward(np.ones((8, 3)), p), [0.5, 0.5])


@given(st.lists(st.floats(-1e4, 1e4), min_size=2, max_size=6))
def test_softmax_extreme_logits(logits):
    out = softmax(np.array(logits))
    assert np.isfinite(out).all() and (out >= 0).all()
    assert out.sum() == pytest.approx(1.0, abs=1e-9)


def test_gradients_match_finite_differences():
    f, h, k, t = 2, 3, 2, 4
    p = _random_params(42, f, h, k)
    rng = np.random.default_rng(7)
    windows = rng.normal(size=(3, t, f))
    labels = np.array([0, 1, 1])
    _, grads = loss_and_grads(windows, labels, p)
    step = 1e-5
    worst = 0.0
    for name in LstmParams.TENSORS:
        base = getattr(p, name)
        for idx in np.ndindex(base.shape):
            plus, minus = base.copy(), base.copy()
            plus[idx] += step
            minus[idx] -= step
            lp, _ = loss_and_grads(windows, labels, replace(p, **{name: plus}))
            lm, _ = loss_and_grads(windows, labels, replace(p, **{name: minus}))
            numeric = (lp - lm) / (2 * step)
            analytic = grads[name][idx]
            denom = max(abs(numeric), abs(analytic), 1e-6)
            worst = max(worst, abs(numeric - analytic) / denom)
    assert worst <= 1e-4


def test_overfit_single_sample_loss_decreases():
    p = init_params(3, 8, 3, seed=5, learning_rate=0.1)
    window = np.random.default_rng(5).random((8, 3))
    losses = []
    for _ in range(200):
        p, loss = train([(window, 2)], p)
        losses.append(loss)
    assert all(b < a for a, b in zip(losses, losses[1:]))
    assert losses[-1] < 0.05


def test_zero_learning_rate_changes_nothing():
    p = init_params(3, 4, 2, seed=2, learning_rate=0.0)
    window = np.random.default_rng(2).random((8, 3))
    new, loss = train([(window, 1)], p)
    for name in LstmParams.TENSORS:
        np.testing.assert_array_equal(getattr(new, name), getattr(p, name))
    assert loss == pytest.approx(-np.log(forward(window, p)[1]))


def test_empty_batch_and_non_finite_loss():
    p = init_params(2, 3, 2)
    with pytest.raises(ValueError):
        train([], p)
    bad = replace(p, b_y=np.array([np.nan, 0.0]))
    with pytest.raises(TrainingError):
        train([(np.zeros((4, 2)), 0)], bad)


@given(st.integers(0, 1000), st.permutations(range(3)))
def test_relabeling_equivariance(seed, perm):
    p = _random_params(seed, f=2, h=3, k=3)
    perm = np.array(perm)
    q = replace(p, W_y=p.W_y[perm], b_y=p.b_y[perm])
    window = np.random.default_rng(seed).normal(size=(5, 2))
    np.testing.assert_allclose(forward(window, q), forward(window, p)[perm], rtol=1e-12)


def test_forward_is_pure():
    p = _random_params(1)
    before = {k: v.copy() for k, v in p.tensors().items()}
    window = np.ones((4, 2))
    a = forward(window, p)
    b = forward(window, p)
    np.testing.assert_array_equal(a, b)
    for k, v in p.tensors().items():
        np.testing.assert_array_equal(v, before[k])


def test_fit_is_deterministic_and_learns():
    rng = np.random.default_rng(0)
    windows = rng.random((200, 4, 2))
    labels = (windows[:, -1, 0] > 0.5).astype(int)
    runs = [fit(init_params(2, 6, 2, seed=1, learning_rate=0.5), windows, labels,
                epochs=15, batch_size=8, seed=3) for _ in range(2)]
    assert runs[0][1] == runs[1][1]
    losses = runs[0][1]
    assert losses[-1] < losses[0]
    acc = np.mean(forward(windows, runs[0][0]).argmax(axis=1) == labels)
    assert acc >= 0.9


def test_make_window_pads_at_front():
    hist = [np.array([1.0, 2.0, 3.0]), np.array([4.0, 5.0, 6.0])]
    w = make_window(hist, 4, columns=np.array([0, 2]))
    np.testing.assert_array_equal(w, [[0, 0], [0, 0], [1, 3], [4, 6]])
    full = make_window([np.full(2, i) for i in range(10)], 3)
    np.testing.assert_array_equal(full[:, 0], [7, 8, 9])
    with pytest.raises(ValueError):
        make_window([], 4)
