"""Corrector networks: an MLP predicts additive terms on top of the
pseudoinverse reconstructor,

    rho = Gamma_mu ((B+ + b)_{mu nu} m_nu + c_mu [+ S_{mu nu nu'} m_nu m_nu'])

from the measured operators (and, for the ``full_m`` variant, the outcomes).
"""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from ..errors import ShapeMismatch
from ..linalg import pseudoinverse
from ..measurement import MeasurementRecord, b_matrix, outcomes, pauli_basis, projector_set
from ..nn import AdamMoments, ModelWeights, TrainConfig, adam_step, init_mlp, mlp_backward, mlp_forward, mlp_shapes, reconstruction_loss
from ..reconstruct import CorrectionTerms, apply_corrector, pauli_expand, record_b
from ..states import make_rng


class CorrectorVariant(str, Enum):
    FULL_M = "full_m"
    PI_ONLY = "pi_only"
    QUADRATIC = "quadratic"


CHECKPOINT_KIND = {
    CorrectorVariant.FULL_M: "CORR_M",
    CorrectorVariant.PI_ONLY: "CORR_PI",
    CorrectorVariant.QUADRATIC: "CORR_Q",
}


def slot_width(n_qubits, variant):
    return 2 * 4**n_qubits + (1 if CorrectorVariant(variant) is CorrectorVariant.FULL_M else 0)


def encode_batch(projectors, m, variant):
    """Encode ``(B, M, d, d)`` operators and ``(B, M)`` outcomes as ``(B, M * slot)`` rows.

    Each slot holds the operator's real parts then imaginary parts (row-major),
    followed by the outcome for ``full_m``.
    """
    projectors = np.asarray(projectors)
    n_batch, n_meas = projectors.shape[:2]
    flat = projectors.reshape(n_batch, n_meas, -1)
    parts = [flat.real, flat.imag]
    if CorrectorVariant(variant) is CorrectorVariant.FULL_M:
        parts.append(np.asarray(m, dtype=float)[..., None])
    return np.concatenate(parts, axis=-1).reshape(n_batch, -1)


def encode_input(record: MeasurementRecord, variant):
    return encode_batch(record.operators[None], record.outcomes[None], variant)[0]


@dataclass
class TrainingLog:
    rows: list = field(default_factory=list)  # dicts: epoch, step, loss, ortho_residual

    def append(self, **row):
        self.rows.append(row)

    @property
    def losses(self):
        return [r["loss"] for r in self.rows]


@dataclass(eq=False)
class CorrectorModel:
    variant: CorrectorVariant
    n_qubits: int
    m: int
    weights: ModelWeights
    hidden: tuple = (64,) * 6
    subset: tuple = None  # fixed collection (per-collection mode) or None (amortised)
    step: int = 0

    @classmethod
    def create(cls, variant, n_qubits, m, seed=0, hidden=(64,) * 6, subset=None):
        variant = CorrectorVariant(variant)
        sizes = cls._sizes(variant, n_qubits, m, hidden)
        weights = ModelWeights(mlp_shapes(sizes))
        # zero output layer: an untrained corrector is exactly the pseudoinverse
        init_mlp(weights, sizes, make_rng(seed), zero_last=True)
        subset = None if subset is None else tuple(int(s) for s in subset)
        if subset is not None and len(subset) != m:
            raise ShapeMismatch(f"subset of size {len(subset)} for M={m}")
        return cls(variant, n_qubits, m, weights, tuple(hidden), subset)

    @staticmethod
    def _sizes(variant, n_qubits, m, hidden):
        k = 4**n_qubits
        n_out = k * m + k + (k * m * m if variant is CorrectorVariant.QUADRATIC else 0)
        return [m * slot_width(n_qubits, variant), *hidden, n_out]

    @property
    def sizes(self):
        return self._sizes(self.variant, self.n_qubits, self.m, self.hidden)

    @property
    def kind(self):
        return CHECKPOINT_KIND[self.variant]

    def forward(self, projectors, m):
        """Terms for a batch: returns ``(b, c, s, cache)`` with ``s`` None unless quadratic."""
        if projectors.shape[1] != self.m:
            raise ShapeMismatch(f"model expects M={self.m}, got {projectors.shape[1]}")
        k, n_meas = 4**self.n_qubits, self.m
        out, cache = mlp_forward(self.weights, encode_batch(projectors, m, self.variant))
        b = out[:, : k * n_meas].reshape(-1, k, n_meas)
        c = out[:, k * n_meas : k * n_meas + k]
        s = None
        if self.variant is CorrectorVariant.QUADRATIC:
            raw = out[:, k * n_meas + k :].reshape(-1, k, n_meas, n_meas)
            s = 0.5 * (raw + np.swapaxes(raw, 2, 3))
        return b, c, s, cache


def corrector_predict(model: CorrectorModel, record: MeasurementRecord) -> CorrectionTerms:
    if len(record) != model.m:
        raise ShapeMismatch(f"model expects M={model.m}, record has {len(record)}")
    b, c, s, _ = model.forward(record.operators[None], record.outcomes[None])
    return CorrectionTerms(b[0], c[0], None if s is None else s[0])


def corrector_reconstruct(model: CorrectorModel, record: MeasurementRecord):
    return apply_corrector(record, corrector_predict(model, record), model.n_qubits)


def _coefficients(model, projectors, m, b_sub):
    b_plus = pseudoinverse(b_sub)
    b, c, s, cache = model.forward(projectors, m)
    x = np.einsum("bkn,bn->bk", b_plus + b, m) + c
    if s is not None:
        x = x + np.einsum("bkpq,bp,bq->bk", s, m, m)
    return x, b, c, s, cache


def reconstruct_batch(model: CorrectorModel, states, subset):
    """Raw reconstructions of ``states`` measured on one 1-based ``subset``."""
    states = np.asarray(states)
    pset = projector_set(model.n_qubits)
    rows = np.asarray(subset) - 1
    projs = np.broadcast_to(pset.projectors[rows], (len(states),) + pset.projectors[rows].shape)
    m = outcomes(states, pset, subset)
    b_sub = np.broadcast_to(b_matrix(pset, subset), (len(states), len(rows), 4**model.n_qubits))
    x = _coefficients(model, projs, m, b_sub)[0]
    return pauli_expand(x, model.n_qubits)


def sample_subsets(rng, n_batch, total, m):
    """``n_batch`` sorted 1-based collections of ``m`` distinct labels out of ``total``."""
    keys = rng.random((n_batch, total))
    return np.sort(np.argsort(keys, axis=1)[:, :m], axis=1) + 1


def _loss_and_grad(model, states, subsets, ortho_weight):
    n_qubits = model.n_qubits
    pset = projector_set(n_qubits)
    gammas = pauli_basis(n_qubits).gammas
    rows = subsets - 1
    projs = pset.projectors[rows]
    m = np.einsum("bnij,bji->bn", projs, states).real
    b_sub = b_matrix(pset)[rows]
    x, b, c, s, cache = _coefficients(model, projs, m, b_sub)
    rho = pauli_expand(x, n_qubits)
    loss, g_rho = reconstruction_loss(states, rho)
    dx = np.einsum("bij,kij->bk", g_rho.conj(), gammas).real

    v = np.einsum("bkn,bn->bk", b, m) + c
    r = np.einsum("bnk,bk->bn", b_sub, v)
    worst = np.argmax(np.abs(r), axis=1)
    r_worst = r[np.arange(len(r)), worst]
    residual = np.abs(r_worst)
    dv = np.zeros_like(v)
    if ortho_weight > 0:
        dv = (2.0 * ortho_weight / len(r)) * r_worst[:, None] * b_sub[np.arange(len(r)), worst]
    dlin = dx + dv
    grads = [np.einsum("bk,bn->bkn", dlin, m).reshape(len(m), -1), dlin]
    if s is not None:
        grads.append(np.einsum("bk,bp,bq->bkpq", dx, m, m).reshape(len(m), -1))
    dout = np.concatenate(grads, axis=1)
    wgrads, _ = mlp_backward(model.weights, cache, dout)
    total = loss + ortho_weight * float(np.mean(residual**2))
    return total, loss, float(residual.mean()), wgrads


def train_corrector(states, m, variant=CorrectorVariant.FULL_M, cfg: TrainConfig = None, subset=None,
                    model: CorrectorModel = None, hidden=(64,) * 6, lr_schedule=None, log_every=None):
    """Fit a corrector on a training set of density matrices.

    With ``subset`` fixed the model specialises to that collection; otherwise
    every sample draws a fresh random collection of size ``m`` (amortised
    over collections). ``lr_schedule(epoch) -> factor`` rescales the learning
    rate per epoch. Returns ``(model, TrainingLog)``; the log has one row per
    epoch (mean loss, mean orthogonality residual).
    """
    cfg = cfg or TrainConfig()
    states = np.asarray(states)
    n_qubits = int(round(np.log2(states.shape[-1])))
    if model is None:
        model = CorrectorModel.create(variant, n_qubits, m, seed=cfg.seed, hidden=hidden, subset=subset)
    elif model.n_qubits != n_qubits:
        raise ShapeMismatch(f"model is for {model.n_qubits} qubits, data for {n_qubits}")
    rng = make_rng(cfg.seed + 1)
    moments = AdamMoments.zeros(model.weights)
    total = 4**n_qubits
    log = TrainingLog()
    n = len(states)
    for epoch in range(cfg.epochs):
        lr = cfg.learning_rate * (lr_schedule(epoch) if lr_schedule else 1.0)
        order = rng.permutation(n)
        losses, residuals = [], []
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            if model.subset is not None:
                subsets = np.broadcast_to(np.array(model.subset), (len(idx), model.m))
            else:
                subsets = sample_subsets(rng, len(idx), total, model.m)
            _, loss, resid, grads = _loss_and_grad(model, states[idx], subsets, cfg.ortho_weight)
            adam_step(model.weights, grads, moments, cfg, lr=lr)
            model.step += 1
            losses.append(loss)
            residuals.append(resid)
        log.append(epoch=epoch, step=model.step, loss=float(np.mean(losses)),
                   ortho_residual=float(np.mean(residuals)))
        if log_every and (epoch + 1) % log_every == 0:
            print(f"epoch {epoch + 1}: loss {log.rows[-1]['loss']:.5f} ortho {log.rows[-1]['ortho_residual']:.2e}")
    return model, log

