"""A small numpy neural-network toolkit with hand-written backward passes.

Everything is batched along the first axis. Parameters live in
:class:`ModelWeights`, whose named tensors are views into a single flat
float64 vector; gradients use the same container so the optimizer works on
flat arrays.
"""

from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from .errors import InvalidDistribution, ShapeMismatch

CE_FLOOR = 1e-12


class ModelWeights:
    """Named parameter tensors backed by one contiguous vector.

    The flat order is the insertion order of ``shapes``, each tensor
    row-major.
    """

    def __init__(self, shapes):
        self.shapes = OrderedDict((k, tuple(int(s) for s in v)) for k, v in shapes.items())
        sizes = [int(np.prod(s)) for s in self.shapes.values()]
        self.flat = np.zeros(sum(sizes))
        self._views = OrderedDict()
        offset = 0
        for (name, shape), size in zip(self.shapes.items(), sizes):
            self._views[name] = self.flat[offset : offset + size].reshape(shape)
            offset += size

    def __getitem__(self, name):
        return self._views[name]

    def __setitem__(self, name, value):
        view = self._views[name]
        if value is not view:
            view[...] = value

    def __contains__(self, name):
        return name in self._views

    def __iter__(self):
        return iter(self._views)

    def items(self):
        return self._views.items()

    def __len__(self):
        return self.flat.size

    def flatten(self):
        return self.flat.copy()

    def unflatten(self, vec):
        vec = np.asarray(vec, dtype=float)
        if vec.shape != self.flat.shape:
            raise ShapeMismatch(f"expected {self.flat.size} values, got {vec.size}")
        self.flat[:] = vec

    def zeros_like(self):
        return ModelWeights(self.shapes)

    def copy(self):
        out = ModelWeights(self.shapes)
        out.flat[:] = self.flat
        return out

    def merged(self, other):
        """New container holding this model's tensors followed by ``other``'s."""
        shapes = OrderedDict(self.shapes)
        shapes.update(other.shapes)
        out = ModelWeights(shapes)
        for name, arr in list(self.items()) + list(other.items()):
            out[name][...] = arr
        return out


def glorot(rng, fan_in, fan_out, shape=None):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape or (fan_in, fan_out))


# --------------------------------------------------------------------- MLP


def mlp_shapes(sizes, prefix=""):
    shapes = OrderedDict()
    for k, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
        shapes[f"{prefix}W{k}"] = (a, b)
        shapes[f"{prefix}b{k}"] = (b,)
    return shapes


def init_mlp(weights, sizes, rng, prefix="", zero_last=False):
    n = len(sizes) - 1
    for k, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
        if zero_last and k == n - 1:
            weights[f"{prefix}W{k}"][...] = 0.0
        else:
            weights[f"{prefix}W{k}"][...] = glorot(rng, a, b)
        weights[f"{prefix}b{k}"][...] = 0.0


def _n_dense(weights, prefix):
    n = 0
    while f"{prefix}W{n}" in weights:
        n += 1
    return n


def mlp_forward(weights, x, prefix=""):
    """Affine + ReLU for every hidden layer, affine output. Returns ``(out, cache)``."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    h = x[None, :] if single else x
    n = _n_dense(weights, prefix)
    if h.shape[-1] != weights[f"{prefix}W0"].shape[0]:
        raise ShapeMismatch(f"input width {h.shape[-1]} != {weights[f'{prefix}W0'].shape[0]}")
    cache = []
    for k in range(n):
        z = h @ weights[f"{prefix}W{k}"] + weights[f"{prefix}b{k}"]
        cache.append((h, z))
        h = np.maximum(z, 0.0) if k < n - 1 else z
    return (h[0] if single else h), (cache, single)


def mlp_backward(weights, cache, output_grad, grads=None, prefix=""):
    """Reverse pass of :func:`mlp_forward`; accumulates into ``grads`` and returns ``(grads, input_grad)``."""
    layers, single = cache
    g = np.asarray(output_grad, dtype=float)
    g = g[None, :] if single else g
    if grads is None:
        grads = weights.zeros_like()
    n = len(layers)
    if g.shape != layers[-1][1].shape:
        raise ShapeMismatch(f"output grad {g.shape} != {layers[-1][1].shape}")
    for k in range(n - 1, -1, -1):
        h, z = layers[k]
        if k < n - 1:
            g = g * (z > 0)
        grads[f"{prefix}W{k}"] += h.T @ g
        grads[f"{prefix}b{k}"] += g.sum(axis=0)
        g = g @ weights[f"{prefix}W{k}"].T
    return grads, (g[0] if single else g)


# -------------------------------------------------------------------- LSTM


@dataclass
class LstmState:
    """Per-layer hidden and cell vectors (tuples, bottom layer first)."""

    hidden: tuple
    cell: tuple

    @classmethod
    def zeros(cls, batch, hidden_size, n_layers=1):
        z = tuple(np.zeros((batch, hidden_size)) for _ in range(n_layers))
        return cls(z, tuple(np.zeros((batch, hidden_size)) for _ in range(n_layers)))


def lstm_shapes(input_size, hidden_size, n_layers=1, prefix=""):
    shapes = OrderedDict()
    for k in range(n_layers):
        width = input_size if k == 0 else hidden_size
        shapes[f"{prefix}Wx{k}"] = (width, 4 * hidden_size)
        shapes[f"{prefix}Wh{k}"] = (hidden_size, 4 * hidden_size)
        shapes[f"{prefix}bg{k}"] = (4 * hidden_size,)
    return shapes


def init_lstm(weights, input_size, hidden_size, n_layers, rng, prefix="", forget_bias=1.0):
    hs = hidden_size
    for k in range(n_layers):
        width = input_size if k == 0 else hs
        weights[f"{prefix}Wx{k}"][...] = glorot(rng, width, hs, (width, 4 * hs))
        weights[f"{prefix}Wh{k}"][...] = glorot(rng, hs, hs, (hs, 4 * hs))
        b = weights[f"{prefix}bg{k}"]
        b[...] = 0.0
        b[hs : 2 * hs] = forget_bias


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _n_lstm_layers(weights, prefix):
    n = 0
    while f"{prefix}Wx{n}" in weights:
        n += 1
    return n


def lstm_step(weights, state: LstmState, x, prefix=""):
    """One time step of a stacked LSTM (gate order: input, forget, candidate, output).

    Returns ``(new_state, cache)``; the top layer's hidden vector is the output.
    """
    x = np.asarray(x, dtype=float)
    n_layers = _n_lstm_layers(weights, prefix)
    if len(state.hidden) != n_layers:
        raise ShapeMismatch(f"state has {len(state.hidden)} layers, weights have {n_layers}")
    if x.shape[-1] != weights[f"{prefix}Wx0"].shape[0]:
        raise ShapeMismatch(f"input width {x.shape[-1]} != {weights[f'{prefix}Wx0'].shape[0]}")
    hs = weights[f"{prefix}Wh0"].shape[0]
    inp = x
    hidden, cell, cache = [], [], []
    for k in range(n_layers):
        h_prev, c_prev = state.hidden[k], state.cell[k]
        a = inp @ weights[f"{prefix}Wx{k}"] + h_prev @ weights[f"{prefix}Wh{k}"] + weights[f"{prefix}bg{k}"]
        i = _sigmoid(a[:, :hs])
        f = _sigmoid(a[:, hs : 2 * hs])
        g = np.tanh(a[:, 2 * hs : 3 * hs])
        o = _sigmoid(a[:, 3 * hs :])
        c = f * c_prev + i * g
        tc = np.tanh(c)
        h = o * tc
        cache.append((inp, h_prev, c_prev, i, f, g, o, tc))
        hidden.append(h)
        cell.append(c)
        inp = h
    return LstmState(tuple(hidden), tuple(cell)), cache


def lstm_step_backward(weights, cache, dh_top, dnext: LstmState, grads, prefix=""):
    """Backward through one :func:`lstm_step`.

    ``dh_top`` is the loss gradient on the top hidden output at this step and
    ``dnext`` the gradient flowing back from the following step (or ``None``).
    Returns ``(dx, dstate_prev)`` and accumulates parameter gradients.
    """
    n_layers = len(cache)
    hs = weights[f"{prefix}Wh0"].shape[0]
    dh_prev_all, dc_prev_all = [None] * n_layers, [None] * n_layers
    dh_from_above = dh_top
    for k in range(n_layers - 1, -1, -1):
        inp, h_prev, c_prev, i, f, g, o, tc = cache[k]
        dh = dh_from_above if dnext is None else dh_from_above + dnext.hidden[k]
        dc = dh * o * (1.0 - tc * tc)
        if dnext is not None:
            dc = dc + dnext.cell[k]
        da = np.empty((dh.shape[0], 4 * hs))
        da[:, :hs] = dc * g * i * (1.0 - i)
        da[:, hs : 2 * hs] = dc * c_prev * f * (1.0 - f)
        da[:, 2 * hs : 3 * hs] = dc * i * (1.0 - g * g)
        da[:, 3 * hs :] = dh * tc * o * (1.0 - o)
        grads[f"{prefix}Wx{k}"] += inp.T @ da
        grads[f"{prefix}Wh{k}"] += h_prev.T @ da
        grads[f"{prefix}bg{k}"] += da.sum(axis=0)
        dh_prev_all[k] = da @ weights[f"{prefix}Wh{k}"].T
        dc_prev_all[k] = dc * f
        dh_from_above = da @ weights[f"{prefix}Wx{k}"].T
    return dh_from_above, LstmState(tuple(dh_prev_all), tuple(dc_prev_all))


# -------------------------------------------------------------------- Adam


@dataclass
class TrainConfig:
    batch_size: int = 64
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    epochs: int = 20
    seed: int = 0
    ortho_weight: float = 0.1

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.ortho_weight < 0:
            raise ValueError("ortho_weight must be >= 0")


@dataclass
class AdamMoments:
    first: np.ndarray
    second: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, weights):
        return cls(np.zeros(len(weights)), np.zeros(len(weights)), 0)


def adam_step(weights, grads, moments: AdamMoments, cfg: TrainConfig, t=None, lr=None):
    """Bias-corrected Adam update applied in place to ``weights.flat``."""
    t = moments.t + 1 if t is None else t
    lr = cfg.learning_rate if lr is None else lr
    g = grads.flat if isinstance(grads, ModelWeights) else np.asarray(grads)
    if g.shape != weights.flat.shape:
        raise ShapeMismatch("gradient and weights differ in size")
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    moments.first *= b1
    moments.first += (1 - b1) * g
    moments.second *= b2
    moments.second += (1 - b2) * g * g
    m_hat = moments.first / (1 - b1**t)
    v_hat = moments.second / (1 - b2**t)
    weights.flat -= lr * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)
    moments.t = t
    return weights, moments


# ------------------------------------------------------------------ losses


def reconstruction_loss(rho_true, rho_pred):
    """Batch mean of Frobenius distances; returns ``(loss, grad)``.

    ``grad`` is complex: its real (imaginary) part is the derivative with
    respect to the real (imaginary) part of ``rho_pred``. At zero distance
    the gradient is taken to be zero.
    """
    rho_true = np.asarray(rho_true)
    rho_pred = np.asarray(rho_pred)
    if rho_true.shape != rho_pred.shape:
        raise ShapeMismatch(f"{rho_true.shape} vs {rho_pred.shape}")
    if rho_true.ndim == 2:
        rho_true, rho_pred = rho_true[None], rho_pred[None]
    diff = rho_pred - rho_true
    norms = np.sqrt(np.sum(diff.real**2 + diff.imag**2, axis=(-2, -1)))
    n_b = len(norms)
    safe = np.where(norms > 0, norms, 1.0)
    grad = np.where((norms > 0)[:, None, None], diff / safe[:, None, None], 0.0) / n_b
    return float(norms.mean()), grad


def cross_entropy(p, target):
    """``-log p[target]`` with ``p[target]`` floored at 1e-12."""
    p = np.asarray(p, dtype=float)
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-6:
        raise InvalidDistribution("probabilities must be nonnegative and sum to one")
    return float(-np.log(max(p[target], CE_FLOOR)))


def masked_softmax(logits, used=None):
    """Softmax over the last axis with ``used`` entries forced to probability zero."""
    z = np.asarray(logits, dtype=float)
    if used is not None:
        z = np.where(used, -np.inf, z)
    z = z - np.max(z, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy_grad(probs, targets):
    """Gradient of mean cross entropy w.r.t. the logits of a (masked) softmax."""
    g = probs.copy()
    g[np.arange(len(targets)), targets] -= 1.0
    return g / len(targets)
