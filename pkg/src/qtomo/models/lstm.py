"""Sequential tomography with a recurrent reconstructor and measurement selector.

The reconstructor LSTM consumes one ``(operator, outcome)`` pair per step and
emits a Hermitian estimate after every step. The selector LSTM sees the same
pair and proposes the next operator:

* ``random``: no selector; a seeded random non-repeating stream of basis labels.
* ``predefined``: softmax over the unused product-basis labels; the most likely
  one is taken. Trained with per-step cross-entropy towards the candidate
  that most reduces the batch reconstruction loss.
* ``custom``: per qubit, four reals ``(Re a, Im a, Re b, Im b)`` define a
  single-qubit state ``a|0> + b|1>``; the product projector of the normalised
  states is measured. Trained end to end through the projector.

Every episode starts with the all-zeros projector (label 1).
"""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from ..errors import AllUsed, ShapeMismatch
from ..measurement import projector_set
from ..nn import (
    AdamMoments,
    LstmState,
    ModelWeights,
    TrainConfig,
    adam_step,
    glorot,
    init_lstm,
    lstm_shapes,
    lstm_step,
    lstm_step_backward,
    masked_softmax,
    reconstruction_loss,
    softmax_cross_entropy_grad,
)
from ..states import make_rng

NORM_FLOOR = 1e-9


class SelectionMode(str, Enum):
    RANDOM = "random"
    PREDEFINED = "predefined"
    CUSTOM = "custom"


CHECKPOINT_KIND = {
    SelectionMode.RANDOM: "LSTM_RND",
    SelectionMode.PREDEFINED: "LSTM_PRE",
    SelectionMode.CUSTOM: "LSTM_CUS",
}


def default_layers(n_qubits):
    return 1 if n_qubits <= 2 else 2


def encode_pair(projectors, m):
    """``(B, d, d)`` operators and ``(B,)`` outcomes -> ``(B, 2 d^2 + 1)`` inputs."""
    flat = projectors.reshape(len(projectors), -1)
    return np.concatenate([flat.real, flat.imag, np.asarray(m, dtype=float)[:, None]], axis=1)


def decode_state(y, d):
    """Two real channels -> Hermitian matrix ``(A + A^dagger) / 2``."""
    a = (y[:, : d * d] + 1j * y[:, d * d :]).reshape(-1, d, d)
    return 0.5 * (a + np.swapaxes(a, 1, 2).conj())


def decode_state_grad(g, d):
    gr, gi = g.real, g.imag
    dre = 0.5 * (gr + np.swapaxes(gr, 1, 2))
    dim = 0.5 * (gi - np.swapaxes(gi, 1, 2))
    return np.concatenate([dre.reshape(len(g), -1), dim.reshape(len(g), -1)], axis=1)


# ------------------------------------------------------------ custom operators


def custom_projector(u, n_qubits):
    """Selector output ``(B, 4 N)`` -> product states, projectors and a backward cache."""
    u = np.asarray(u, dtype=float).reshape(len(u), n_qubits, 4)
    amp = u[..., 0::2] + 1j * u[..., 1::2]  # (B, N, 2)
    norm = np.linalg.norm(u, axis=-1)
    ok = norm >= NORM_FLOOR
    phi = np.where(ok[..., None], amp / np.where(ok, norm, 1.0)[..., None], np.array([1.0, 0.0]))
    psi = phi[:, 0]
    for k in range(1, n_qubits):
        psi = np.einsum("bi,bj->bij", psi, phi[:, k]).reshape(len(u), -1)
    proj = np.einsum("bi,bj->bij", psi, psi.conj())
    return psi, proj, (amp, norm, ok, phi, psi)


def custom_projector_backward(cache, g_psi, n_qubits):
    """Gradient w.r.t. the raw selector outputs given ``g_psi`` (complex gradient on the product state)."""
    amp, norm, ok, phi, psi = cache
    n_batch = len(psi)
    g_t = g_psi.reshape((n_batch,) + (2,) * n_qubits)
    du = np.zeros((n_batch, n_qubits, 4))
    letters = "ijklmnop"[:n_qubits]
    for k in range(n_qubits):
        operands, subs = [g_t], ["b" + letters]
        for j in range(n_qubits):
            if j != k:
                operands.append(phi[:, j].conj())
                subs.append("b" + letters[j])
        g_phi = np.einsum(",".join(subs) + "->b" + letters[k], *operands)
        n = np.where(ok[:, k], norm[:, k], 1.0)[:, None]
        a = amp[:, k]
        proj_part = np.real(np.sum(a.conj() * g_phi, axis=1))[:, None]
        g_amp = g_phi / n - a * proj_part / n**3
        g_amp = np.where(ok[:, k][:, None], g_amp, 0.0)
        du[:, k, 0::2] = g_amp.real
        du[:, k, 1::2] = g_amp.imag
    return du.reshape(n_batch, -1)


def choose_predefined(logits, used):
    """Masked softmax and argmax (lowest index wins ties); ``used`` entries get probability 0."""
    used = np.asarray(used, dtype=bool)
    if np.any(used.all(axis=-1)):
        raise AllUsed("no unused measurement left")
    p = masked_softmax(logits, used)
    return p, np.argmax(p, axis=-1)


# ------------------------------------------------------------------- model


@dataclass(eq=False)
class SelectorReconstructor:
    mode: SelectionMode
    n_qubits: int
    weights: ModelWeights
    hidden_size: int = 256
    n_layers: int = 1
    step: int = 0

    def __post_init__(self):
        self.mode = SelectionMode(self.mode)

    @classmethod
    def create(cls, mode, n_qubits, hidden_size=256, n_layers=None, seed=0):
        mode = SelectionMode(mode)
        n_layers = default_layers(n_qubits) if n_layers is None else n_layers
        d, k = 2**n_qubits, 4**n_qubits
        n_in = 2 * k + 1
        shapes = lstm_shapes(n_in, hidden_size, n_layers, prefix="r_")
        shapes["r_Wo"] = (hidden_size, 2 * d * d)
        shapes["r_bo"] = (2 * d * d,)
        if mode is not SelectionMode.RANDOM:
            n_sel = k if mode is SelectionMode.PREDEFINED else 4 * n_qubits
            shapes.update(lstm_shapes(n_in, hidden_size, n_layers, prefix="s_"))
            shapes["s_Wo"] = (hidden_size, n_sel)
            shapes["s_bo"] = (n_sel,)
        weights = ModelWeights(shapes)
        rng = make_rng(seed)
        init_lstm(weights, n_in, hidden_size, n_layers, rng, prefix="r_")
        weights["r_Wo"] = glorot(rng, hidden_size, 2 * d * d)
        if mode is not SelectionMode.RANDOM:
            init_lstm(weights, n_in, hidden_size, n_layers, rng, prefix="s_")
            n_sel = weights["s_Wo"].shape[1]
            weights["s_Wo"] = glorot(rng, hidden_size, n_sel)
        return cls(mode, n_qubits, weights, hidden_size, n_layers)

    @property
    def kind(self):
        return CHECKPOINT_KIND[self.mode]

    @property
    def dim(self):
        return 2**self.n_qubits

    def zero_state(self, batch):
        return LstmState.zeros(batch, self.hidden_size, self.n_layers)

    # single steps -------------------------------------------------------

    def r_step(self, state, x):
        state, cache = lstm_step(self.weights, state, x, prefix="r_")
        h = state.hidden[-1]
        y = h @ self.weights["r_Wo"] + self.weights["r_bo"]
        return state, decode_state(y, self.dim), (cache, h)

    def r_step_backward(self, cache, g_rho, dnext, grads):
        lstm_cache, h = cache
        dy = decode_state_grad(g_rho, self.dim)
        grads["r_Wo"] += h.T @ dy
        grads["r_bo"] += dy.sum(axis=0)
        dh = dy @ self.weights["r_Wo"].T
        return lstm_step_backward(self.weights, lstm_cache, dh, dnext, grads, prefix="r_")

    def s_step(self, state, x):
        state, cache = lstm_step(self.weights, state, x, prefix="s_")
        h = state.hidden[-1]
        z = h @ self.weights["s_Wo"] + self.weights["s_bo"]
        return state, z, (cache, h)

    def s_step_backward(self, cache, dz, dnext, grads):
        lstm_cache, h = cache
        grads["s_Wo"] += h.T @ dz
        grads["s_bo"] += dz.sum(axis=0)
        dh = dz @ self.weights["s_Wo"].T
        return lstm_step_backward(self.weights, lstm_cache, dh, dnext, grads, prefix="s_")


def select_next_predefined(model, state, prev_op, prev_m, used):
    """Feed the previous pair to the selector; returns ``(P, nu, new_state)`` with 1-based ``nu``."""
    prev_op, prev_m, used = np.atleast_3d(prev_op), np.atleast_1d(prev_m), np.atleast_2d(used)
    state, z, _ = model.s_step(state, encode_pair(prev_op.reshape(-1, model.dim, model.dim), prev_m))
    p, nu = choose_predefined(z, used)
    return p, nu + 1, state


def select_next_custom(model, state, prev_op, prev_m):
    """Feed the previous pair to the selector; returns ``(projectors, new_state)``."""
    prev_op, prev_m = np.atleast_3d(prev_op), np.atleast_1d(prev_m)
    state, z, _ = model.s_step(state, encode_pair(prev_op.reshape(-1, model.dim, model.dim), prev_m))
    _, proj, _ = custom_projector(z, model.n_qubits)
    return proj, state


# ------------------------------------------------------------------ episodes


@dataclass
class Episode:
    """Batched episode record; axis 0 is the state, axis 1 the step."""

    operators: np.ndarray  # (B, M, d, d)
    outcomes: np.ndarray  # (B, M)
    reconstructions: np.ndarray  # (B, M, d, d)
    indices: np.ndarray = None  # (B, M) 1-based labels, None for custom operators
    probabilities: list = field(default_factory=list)  # per selection step, (B, K)


def random_orders(rng, n_batch, total):
    """Per-sample label orders starting with label 1, remaining labels shuffled (0-based)."""
    rest = np.argsort(rng.random((n_batch, total - 1)), axis=1) + 1
    return np.concatenate([np.zeros((n_batch, 1), dtype=int), rest], axis=1)


def run_episodes(model: SelectorReconstructor, states, steps=None, rng=None, keep_cache=False):
    """Run ``steps`` selection/reconstruction steps on a batch of true states.

    Outcomes are computed in the loop from ``states``. Returns an
    :class:`Episode` (and the caches needed for backpropagation when
    ``keep_cache`` is set).
    """
    states = np.asarray(states)
    n_batch, d = len(states), model.dim
    k = 4**model.n_qubits
    steps = k if steps is None else steps
    if not 1 <= steps <= k and model.mode is not SelectionMode.CUSTOM:
        raise ShapeMismatch(f"steps must lie in 1..{k}")
    pset = projector_set(model.n_qubits)
    s_r = model.zero_state(n_batch)
    s_s = model.zero_state(n_batch) if model.mode is not SelectionMode.RANDOM else None
    used = np.zeros((n_batch, k), dtype=bool)
    nu = np.zeros(n_batch, dtype=int)
    orders = random_orders(rng if rng is not None else make_rng(0), n_batch, k) if model.mode is SelectionMode.RANDOM else None
    proj = np.broadcast_to(pset.projectors[0], (n_batch, d, d))
    ops, ms, rhos, idx, probs = [], [], [], [], []
    caches = {"r": [], "s": [], "custom": [], "x": [], "psi": []}
    for l in range(steps):
        m = np.einsum("bij,bji->b", proj, states).real
        x = encode_pair(proj, m)
        s_r, rho, c_r = model.r_step(s_r, x)
        ops.append(proj)
        ms.append(m)
        rhos.append(rho)
        if model.mode is not SelectionMode.CUSTOM:
            idx.append(nu + 1)
            used[np.arange(n_batch), nu] = True
        if keep_cache:
            caches["r"].append(c_r)
            caches["x"].append(x)
        if l == steps - 1:
            break
        if model.mode is SelectionMode.RANDOM:
            nu = orders[:, l + 1]
            proj = pset.projectors[nu]
            continue
        s_s, z, c_s = model.s_step(s_s, x)
        if keep_cache:
            caches["s"].append(c_s)
        if model.mode is SelectionMode.PREDEFINED:
            p, nu = choose_predefined(z, used)
            probs.append(p)
            proj = pset.projectors[nu]
        else:
            psi, proj, c_c = custom_projector(z, model.n_qubits)
            if keep_cache:
                caches["custom"].append(c_c)
                caches["psi"].append(psi)
    episode = Episode(
        np.stack(ops, axis=1),
        np.stack(ms, axis=1),
        np.stack(rhos, axis=1),
        None if model.mode is SelectionMode.CUSTOM else np.stack(idx, axis=1),
        probs,
    )
    return (episode, caches) if keep_cache else episode


def lstm_reconstruct_episode(model, rho, steps, rng=None):
    """Single-state episode as a list of ``(operator, outcome, reconstruction)`` per step."""
    ep = run_episodes(model, np.asarray(rho)[None], steps, rng)
    return [(ep.operators[0, l], float(ep.outcomes[0, l]), ep.reconstructions[0, l]) for l in range(steps)]


# ------------------------------------------------------------------ training


@dataclass
class LstmTrainingLog:
    rows: list = field(default_factory=list)  # epoch, step, loss, selector_loss

    def append(self, **row):
        self.rows.append(row)

    @property
    def losses(self):
        return [r["loss"] for r in self.rows]


def _episode_loss_grads(model, states, episode, caches):
    """Step-summed reconstruction loss and gradients for all reconstructor steps."""
    total, g_rhos = 0.0, []
    for l in range(episode.reconstructions.shape[1]):
        loss, g = reconstruction_loss(states, episode.reconstructions[:, l])
        total += loss
        g_rhos.append(g)
    return total, g_rhos


def episode_loss_and_grads(model: SelectorReconstructor, states, steps=None, rng=None):
    """Loss ``sum_l mean_i ||rho_i - rho_il||`` and its gradient by backpropagation through time.

    For ``custom`` mode the gradient flows through the selected projectors
    and their outcomes into the selector. For ``predefined`` mode only the
    reconstructor receives gradient here (selection is discrete).
    """
    episode, caches = run_episodes(model, states, steps, rng, keep_cache=True)
    loss, g_rhos = _episode_loss_grads(model, states, episode, caches)
    grads = model.weights.zeros_like()
    n_steps = len(g_rhos)
    d = model.dim
    dnext_r, dnext_s = None, None
    dx_next = None  # total gradient on x_{l+1}
    for l in range(n_steps - 1, -1, -1):
        dx, dnext_r = model.r_step_backward(caches["r"][l], g_rhos[l], dnext_r, grads)
        if model.mode is SelectionMode.CUSTOM and l < n_steps - 1:
            # x_{l+1} was built from the projector the selector emitted at step l
            du = _x_to_selector_grad(dx_next, caches["psi"][l], states, caches["custom"][l], model.n_qubits, d)
            dx_s, dnext_s = model.s_step_backward(caches["s"][l], du, dnext_s, grads)
            dx = dx + dx_s
        dx_next = dx
    return loss, grads, episode


def _x_to_selector_grad(dx, psi, states, custom_cache, n_qubits, d):
    dd = d * d
    g_proj = (dx[:, :dd] + 1j * dx[:, dd : 2 * dd]).reshape(-1, d, d)
    dm = dx[:, 2 * dd]
    g_psi = np.einsum("bij,bj->bi", g_proj + np.swapaxes(g_proj, 1, 2).conj(), psi)
    g_psi = g_psi + 2.0 * dm[:, None] * np.einsum("bij,bj->bi", states, psi)
    return custom_projector_backward(custom_cache, g_psi, n_qubits)


def _candidate_losses(model, s_r, states, used):
    """Per-sample loss of every candidate label pushed through one reconstructor step.

    Returns ``(B, K)``; evaluated in float32 since only the ranking matters.
    """
    pset = projector_set(model.n_qubits)
    n_batch, k, d = len(states), 4**model.n_qubits, model.dim
    hs = model.hidden_size
    w = model.weights
    f32 = lambda a: np.asarray(a, dtype=np.float32)
    m_all = np.einsum("kij,bji->bk", pset.projectors, states).real  # (B, K)
    enc = encode_pair(pset.projectors, np.zeros(k))[:, :-1]  # operator part, (K, 2dd)
    wx = w["r_Wx0"]
    a = (
        f32(s_r.hidden[0] @ w["r_Wh0"] + w["r_bg0"])[:, None, :]
        + f32(enc @ wx[:-1])[None, :, :]
        + f32(m_all)[:, :, None] * f32(wx[-1])[None, None, :]
    )  # (B, K, 4hs)
    h, c = _gates(a, f32(s_r.cell[0])[:, None, :], hs)
    for layer in range(1, model.n_layers):
        a = h @ f32(w[f"r_Wx{layer}"]) + f32(s_r.hidden[layer] @ w[f"r_Wh{layer}"] + w[f"r_bg{layer}"])[:, None, :]
        h, c = _gates(a, f32(s_r.cell[layer])[:, None, :], hs)
    y = (h @ f32(w["r_Wo"]) + f32(w["r_bo"])).astype(float)
    rho = decode_state(y.reshape(n_batch * k, -1), d).reshape(n_batch, k, d, d)
    diff = rho - states[:, None]
    return np.sqrt(np.sum(diff.real**2 + diff.imag**2, axis=(-2, -1)))


def _gates(a, c_prev, hs):
    i = 0.5 * (1.0 + np.tanh(0.5 * a[..., :hs]))
    f = 0.5 * (1.0 + np.tanh(0.5 * a[..., hs : 2 * hs]))
    g = np.tanh(a[..., 2 * hs : 3 * hs])
    o = 0.5 * (1.0 + np.tanh(0.5 * a[..., 3 * hs :]))
    c = f * c_prev + i * g
    return o * np.tanh(c), c


def candidate_targets(cand, used, rows_used):
    """Per-sample argmin, over the sample's unused labels, of batch-mean candidate losses.

    ``cand`` holds losses for a subsample of rows whose used masks are
    ``rows_used``; a label used in every subsampled row falls back to its
    mean over all of them.
    """
    free = ~rows_used
    counts = free.sum(axis=0)
    mean_free = np.where(free, cand, 0.0).sum(axis=0) / np.maximum(counts, 1)
    batch_mean = np.where(counts > 0, mean_free, cand.mean(axis=0))
    return np.argmin(np.where(used, np.inf, batch_mean[None, :]), axis=1)


def predefined_loss_and_grads(model: SelectorReconstructor, states, steps=None, rng=None, sweep_rows=16):
    """Training signal for the predefined-basis selector.

    At every selection step each unused label is tried through the
    reconstructor; the label with the lowest batch-mean loss (among the
    sample's unused labels) becomes the cross-entropy target for the
    selector's distribution. The episode itself continues with the
    selector's own argmax choice, and the reconstructor is trained on the
    step-summed loss along that path. The batch means are estimated on
    ``sweep_rows`` randomly chosen rows of the batch.
    """
    rng = rng if rng is not None else make_rng(0)
    states = np.asarray(states)
    n_batch, k, d = len(states), 4**model.n_qubits, model.dim
    steps = k if steps is None else steps
    pset = projector_set(model.n_qubits)
    s_r, s_s = model.zero_state(n_batch), model.zero_state(n_batch)
    used = np.zeros((n_batch, k), dtype=bool)
    nu = np.zeros(n_batch, dtype=int)
    rows = np.arange(n_batch)
    r_caches, s_caches, g_rhos, dzs = [], [], [], []
    loss_r, loss_s = 0.0, 0.0
    probs = []
    for l in range(steps):
        proj = pset.projectors[nu]
        m = np.einsum("bij,bji->b", proj, states).real
        x = encode_pair(proj, m)
        s_r, rho, c_r = model.r_step(s_r, x)
        loss, g = reconstruction_loss(states, rho)
        loss_r += loss
        r_caches.append(c_r)
        g_rhos.append(g)
        used[rows, nu] = True
        if l == steps - 1:
            break
        s_s, z, c_s = model.s_step(s_s, x)
        p, nu = choose_predefined(z, used)
        probs.append(p)
        sub = rng.choice(n_batch, min(sweep_rows, n_batch), replace=False)
        sub_state = LstmState(tuple(h[sub] for h in s_r.hidden), tuple(c[sub] for c in s_r.cell))
        cand = _candidate_losses(model, sub_state, states[sub], used[sub])
        target = candidate_targets(cand, used, used[sub])
        loss_s += float(np.mean(-np.log(np.maximum(p[rows, target], 1e-12))))
        s_caches.append(c_s)
        dzs.append(softmax_cross_entropy_grad(p, target))
    grads = model.weights.zeros_like()
    dnext = None
    for l in range(len(r_caches) - 1, -1, -1):
        _, dnext = model.r_step_backward(r_caches[l], g_rhos[l], dnext, grads)
    dnext = None
    for l in range(len(s_caches) - 1, -1, -1):
        _, dnext = model.s_step_backward(s_caches[l], dzs[l], dnext, grads)
    return loss_r, loss_s, grads, probs


def train_selector_reconstructor(states, mode, cfg: TrainConfig = None, model=None, steps=None,
                                 hidden_size=256, n_layers=None, lr_schedule=None, clip_norm=None,
                                 log_every=None, warmup_epochs=0):
    """Train an LSTM pair on density matrices ``states``; returns ``(model, LstmTrainingLog)``.

    ``steps`` is the training episode length (default ``4**N``). In
    predefined mode the first ``warmup_epochs`` epochs train only the
    reconstructor, on random measurement orders, so that the candidate
    sweep ranks labels with a reconstructor that has seen all of them.
    """
    cfg = cfg or TrainConfig()
    states = np.asarray(states)
    n_qubits = int(round(np.log2(states.shape[-1])))
    if model is None:
        model = SelectorReconstructor.create(mode, n_qubits, hidden_size, n_layers, seed=cfg.seed)
    elif model.n_qubits != n_qubits:
        raise ShapeMismatch(f"model is for {model.n_qubits} qubits, data for {n_qubits}")
    rng = make_rng(cfg.seed + 1)
    moments = AdamMoments.zeros(model.weights)
    log = LstmTrainingLog()
    n = len(states)
    for epoch in range(cfg.epochs):
        lr = cfg.learning_rate * (lr_schedule(epoch) if lr_schedule else 1.0)
        order = rng.permutation(n)
        losses, sel_losses = [], []
        for start in range(0, n, cfg.batch_size):
            batch = states[order[start : start + cfg.batch_size]]
            if model.mode is SelectionMode.PREDEFINED and epoch < warmup_epochs:
                view = SelectorReconstructor(SelectionMode.RANDOM, n_qubits, model.weights, model.hidden_size, model.n_layers)
                loss, grads, _ = episode_loss_and_grads(view, batch, steps, rng)
            elif model.mode is SelectionMode.PREDEFINED:
                loss, sel_loss, grads, _ = predefined_loss_and_grads(model, batch, steps, rng)
                sel_losses.append(sel_loss)
            else:
                loss, grads, _ = episode_loss_and_grads(model, batch, steps, rng)
            if clip_norm is not None:
                norm = np.linalg.norm(grads.flat)
                if norm > clip_norm:
                    grads.flat *= clip_norm / norm
            adam_step(model.weights, grads, moments, cfg, lr=lr)
            model.step += 1
            losses.append(loss)
        log.append(epoch=epoch, step=model.step, loss=float(np.mean(losses)),
                   selector_loss=float(np.mean(sel_losses)) if sel_losses else float("nan"))
        if log_every and (epoch + 1) % log_every == 0:
            print(f"epoch {epoch + 1}: loss {log.rows[-1]['loss']:.5f} selector {log.rows[-1]['selector_loss']:.4f}")
    return model, log
