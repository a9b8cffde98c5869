import numpy as np
import pytest
from hypothesis import given, strategies as st

from qtomo.errors import InvalidDistribution, ShapeMismatch
from qtomo.nn import (
    AdamMoments,
    LstmState,
    ModelWeights,
    TrainConfig,
    adam_step,
    cross_entropy,
    init_lstm,
    init_mlp,
    lstm_shapes,
    lstm_step,
    lstm_step_backward,
    masked_softmax,
    mlp_backward,
    mlp_forward,
    mlp_shapes,
    reconstruction_loss,
    softmax_cross_entropy_grad,
)
from qtomo.states import make_rng

FD_STEP = 1e-5


def rel_err(a, b, noise=0.0):
    """Relative error; ``noise`` is the absolute roundoff of the difference quotient itself."""
    return max(abs(a - b) - noise, 0.0) / max(abs(a) + abs(b), 1e-8)


def fd_noise(loss_value):
    # cancellation error of (f(w+h) - f(w-h)) / 2h in double precision
    return 4 * np.finfo(float).eps * abs(loss_value) / FD_STEP


def fd_check(weights, loss_fn, grads, rng, n=64):
    """Largest relative error between analytic and central-difference gradients."""
    worst = 0.0
    noise = fd_noise(loss_fn())
    idx = rng.choice(len(weights), min(n, len(weights)), replace=False)
    for i in idx:
        w0 = weights.flat[i]
        weights.flat[i] = w0 + FD_STEP
        up = loss_fn()
        weights.flat[i] = w0 - FD_STEP
        down = loss_fn()
        weights.flat[i] = w0
        worst = max(worst, rel_err((up - down) / (2 * FD_STEP), grads.flat[i], noise))
    return worst


def test_flatten_round_trip(rng):
    w = ModelWeights(mlp_shapes([3, 5, 2]))
    vec = rng.normal(size=len(w))
    w.unflatten(vec)
    assert np.array_equal(w.flatten(), vec)
    assert np.array_equal(w["W0"].ravel(), vec[:15])
    with pytest.raises(ShapeMismatch):
        w.unflatten(vec[:-1])


def test_mlp_trivial_cases(rng):
    w = ModelWeights(mlp_shapes([4, 6, 3]))
    assert np.array_equal(mlp_forward(w, rng.normal(size=4))[0], np.zeros(3))
    ident = ModelWeights(mlp_shapes([4, 4]))
    ident["W0"] = np.eye(4)
    x = rng.normal(size=4)
    assert np.array_equal(mlp_forward(ident, x)[0], x)
    with pytest.raises(ShapeMismatch):
        mlp_forward(w, np.zeros(5))


def test_mlp_zero_weights_zero_gradient(rng):
    w = ModelWeights(mlp_shapes([4, 6, 3]))
    out, cache = mlp_forward(w, rng.normal(size=(5, 4)))
    grads, _ = mlp_backward(w, cache, out)  # d/d out of 0.5 |out|^2
    assert np.all(grads.flat == 0)


def test_mlp_deterministic_init():
    sizes = [5, 8, 8, 2]
    outs = []
    for _ in range(2):
        w = ModelWeights(mlp_shapes(sizes))
        init_mlp(w, sizes, make_rng(3))
        outs.append(mlp_forward(w, np.ones(5))[0])
    assert np.array_equal(*outs)


def test_relu_dead_unit_blocks_gradient():
    w = ModelWeights(mlp_shapes([1, 1, 1]))
    w["W0"] = [[1.0]]
    w["b0"] = [-5.0]
    w["W1"] = [[2.0]]
    _, cache = mlp_forward(w, np.array([1.0]))
    grads, dx = mlp_backward(w, cache, np.array([1.0]))
    assert grads["W0"][0, 0] == 0 and dx[0] == 0


@given(st.integers(0, 2**32 - 1), st.lists(st.integers(1, 7), min_size=2, max_size=4))
def test_mlp_gradients_match_finite_differences(seed, sizes):
    rng = make_rng(seed)
    w = ModelWeights(mlp_shapes(sizes))
    init_mlp(w, sizes, rng)
    w.flat += 0.1 * rng.normal(size=len(w))
    x = rng.normal(size=(3, sizes[0]))
    target = rng.normal(size=(3, sizes[-1]))

    def loss():
        out = mlp_forward(w, x)[0]
        return 0.5 * np.sum((out - target) ** 2)

    out, cache = mlp_forward(w, x)
    grads, dx = mlp_backward(w, cache, out - target)
    assert fd_check(w, loss, grads, rng) < 1e-5
    # input gradient
    x0 = x.copy()
    x[0, 0] += FD_STEP
    up = loss()
    x[0, 0] -= 2 * FD_STEP
    down = loss()
    x[:] = x0
    assert rel_err((up - down) / (2 * FD_STEP), dx[0, 0]) < 1e-5


def test_lstm_zero_everything():
    w = ModelWeights(lstm_shapes(3, 4))
    state, _ = lstm_step(w, LstmState.zeros(2, 4), np.zeros((2, 3)))
    assert np.all(state.hidden[0] == 0) and np.all(state.cell[0] == 0)


def test_lstm_saturated_forget_gate_keeps_cell(rng):
    hs = 4
    w = ModelWeights(lstm_shapes(3, hs))
    w["bg0"][hs : 2 * hs] = 50.0
    w["bg0"][:hs] = -50.0  # input gate closed
    c0 = rng.normal(size=(1, hs))
    state = LstmState((np.zeros((1, hs)),), (c0,))
    new, _ = lstm_step(w, state, rng.normal(size=(1, 3)))
    assert np.allclose(new.cell[0], c0, atol=1e-10)


def test_lstm_shape_checks():
    w = ModelWeights(lstm_shapes(3, 4, n_layers=2))
    with pytest.raises(ShapeMismatch):
        lstm_step(w, LstmState.zeros(1, 4, 1), np.zeros((1, 3)))
    with pytest.raises(ShapeMismatch):
        lstm_step(w, LstmState.zeros(1, 4, 2), np.zeros((1, 5)))


@given(st.integers(0, 2**32 - 1), st.integers(1, 2), st.integers(1, 6))
def test_lstm_bptt_matches_finite_differences(seed, n_layers, hs):
    rng = make_rng(seed)
    n_in, steps, batch = 3, 5, 2
    w = ModelWeights(lstm_shapes(n_in, hs, n_layers))
    init_lstm(w, n_in, hs, n_layers, rng)
    w.flat += 0.2 * rng.normal(size=len(w))
    xs = rng.normal(size=(steps, batch, n_in))
    targets = rng.normal(size=(steps, batch, hs))

    def run():
        state = LstmState.zeros(batch, hs, n_layers)
        caches, outs = [], []
        for t in range(steps):
            state, cache = lstm_step(w, state, xs[t])
            caches.append(cache)
            outs.append(state.hidden[-1])
        return caches, outs

    def loss():
        _, outs = run()
        return sum(0.5 * np.sum((o - y) ** 2) for o, y in zip(outs, targets))

    caches, outs = run()
    grads = w.zeros_like()
    dnext = None
    dxs = [None] * steps
    for t in range(steps - 1, -1, -1):
        dxs[t], dnext = lstm_step_backward(w, caches[t], outs[t] - targets[t], dnext, grads)
    assert fd_check(w, loss, grads, rng) < 1e-5
    x0 = xs.copy()
    xs[1, 0, 2] += FD_STEP
    up = loss()
    xs[1, 0, 2] -= 2 * FD_STEP
    down = loss()
    xs[:] = x0
    assert rel_err((up - down) / (2 * FD_STEP), dxs[1][0, 2]) < 1e-5


def test_adam_zero_gradient_and_sign_limit():
    cfg = TrainConfig(learning_rate=0.01)
    w = ModelWeights({"a": (3,)})
    w["a"] = [1.0, 2.0, 3.0]
    m = AdamMoments.zeros(w)
    adam_step(w, np.zeros(3), m, cfg)
    assert np.array_equal(w["a"], [1.0, 2.0, 3.0])
    g = np.array([0.5, -2.0, 1e-3])
    m = AdamMoments.zeros(w)
    for _ in range(200):
        before = w.flatten()
        adam_step(w, g, m, cfg)
    assert np.allclose(w.flatten() - before, -0.01 * np.sign(g), rtol=1e-3)


def test_adam_trajectories_are_bit_identical(rng):
    grads = rng.normal(size=(20, 5))
    finals = []
    for _ in range(2):
        w = ModelWeights({"a": (5,)})
        m = AdamMoments.zeros(w)
        for g in grads:
            adam_step(w, g, m, TrainConfig())
        finals.append(w.flatten())
    assert finals[0].tobytes() == finals[1].tobytes()


def test_reconstruction_loss_examples(rng):
    rho = rng.normal(size=(3, 4, 4)) + 1j * rng.normal(size=(3, 4, 4))
    assert reconstruction_loss(rho, rho)[0] == 0
    assert np.all(reconstruction_loss(rho, rho)[1] == 0)
    other = rho[:1].copy()
    other[0, 1, 2] += 0.3
    assert abs(reconstruction_loss(rho[:1], other)[0] - 0.3) < 1e-12
    a = np.zeros((2, 2, 2))
    b = a.copy()
    b[0, 0, 0], b[1, 0, 0] = 0.1, 0.3
    assert abs(reconstruction_loss(a, b)[0] - 0.2) < 1e-12
    with pytest.raises(ShapeMismatch):
        reconstruction_loss(a, b[:1])


def test_reconstruction_loss_gradient(rng):
    t = rng.normal(size=(2, 2, 2)) + 1j * rng.normal(size=(2, 2, 2))
    p = rng.normal(size=(2, 2, 2)) + 1j * rng.normal(size=(2, 2, 2))
    _, g = reconstruction_loss(t, p)
    for part in (1, 1j):
        q = p.copy()
        q[1, 0, 1] += part * FD_STEP
        up = reconstruction_loss(t, q)[0]
        q[1, 0, 1] -= 2 * part * FD_STEP
        down = reconstruction_loss(t, q)[0]
        comp = g[1, 0, 1].real if part == 1 else g[1, 0, 1].imag
        assert rel_err((up - down) / (2 * FD_STEP), comp) < 1e-6


def test_cross_entropy_examples():
    assert cross_entropy(np.eye(4)[2], 2) == 0
    assert abs(cross_entropy(np.full(16, 1 / 16), 3) - np.log(16)) < 1e-12
    p = np.r_[1e-20, 1 - 1e-20]
    assert abs(cross_entropy(p, 0) + np.log(1e-12)) < 1e-9
    with pytest.raises(InvalidDistribution):
        cross_entropy(np.array([0.5, 0.6]), 0)


def test_masked_softmax_and_gradient(rng):
    logits = rng.normal(size=(3, 5))
    used = np.zeros((3, 5), dtype=bool)
    used[:, 1] = True
    p = masked_softmax(logits, used)
    assert np.all(p[:, 1] == 0) and np.allclose(p.sum(axis=1), 1)
    targets = np.array([0, 2, 4])
    g = softmax_cross_entropy_grad(p, targets)

    def loss(z):
        q = masked_softmax(z, used)
        return np.mean(-np.log(q[np.arange(3), targets]))

    z = logits.copy()
    z[1, 3] += FD_STEP
    up = loss(z)
    z[1, 3] -= 2 * FD_STEP
    assert rel_err((up - loss(z)) / (2 * FD_STEP), g[1, 3]) < 1e-6
