"""Iterative maximum-likelihood reconstruction (diluted R rho R).

Each measured projector ``Pi`` is treated as a two-outcome measurement
``{Pi, 1 - Pi}`` with exact frequency ``m``, so the log-likelihood

    L(rho) = sum_nu m_nu log p_nu + (1 - m_nu) log(1 - p_nu),   p_nu = Tr(Pi_nu rho)

peaks at ``p_nu = m_nu`` whenever some state reproduces the data. Only
measured operators enter, so absent settings carry no weight.
"""

from dataclasses import dataclass

import numpy as np

from .errors import Divergence, InvalidSpec
from .measurement import MeasurementRecord

P_FLOOR = 1e-15
DIVERGENCE_STREAK = 10


@dataclass(frozen=True)
class MleConfig:
    max_iters: int = 2000
    tol: float = 1e-14
    dilution: float = 0.5

    def __post_init__(self):
        if not self.tol > 0:
            raise InvalidSpec("tol must be positive")
        if not 0 < self.dilution <= 1:
            raise InvalidSpec("dilution must lie in (0, 1]")
        if self.max_iters < 1:
            raise InvalidSpec("max_iters must be at least 1")


@dataclass
class MleTrace:
    log_likelihood: list
    trace: list
    iterations: int
    converged: bool


def _probs(projs, rho):
    p = np.einsum("kij,bji->bk", projs, rho).real
    return np.clip(p, P_FLOOR, 1 - P_FLOOR)


def log_likelihood(p, m):
    p = np.clip(p, P_FLOOR, 1 - P_FLOOR)
    pos = np.where(m > 0, m * np.log(p), 0.0)
    neg = np.where(m < 1, (1 - m) * np.log1p(-p), 0.0)
    return (pos + neg).sum(axis=-1)


def _r_operator(projs, p, m):
    d = projs.shape[-1]
    n_meas = projs.shape[0]
    w_pos = np.where(m > 0, m / p, 0.0)
    w_neg = np.where(m < 1, (1 - m) / (1 - p), 0.0)
    r = np.einsum("bk,kij->bij", w_pos - w_neg, projs)
    r = r + w_neg.sum(axis=-1)[:, None, None] * np.eye(d)
    return r / n_meas


def mle_batch(projectors, m, cfg: MleConfig = MleConfig(), history=False):
    """Run the iteration for a batch of states measured with the same operators.

    ``projectors`` is ``(M, d, d)`` and ``m`` is ``(B, M)``. Returns the
    ``(B, d, d)`` estimates (and per-iteration diagnostics of the first
    sample when ``history`` is set).
    """
    projs = np.asarray(projectors, dtype=complex)
    m = np.atleast_2d(np.asarray(m, dtype=float))
    n_batch, d = m.shape[0], projs.shape[-1]
    rho = np.broadcast_to(np.eye(d, dtype=complex) / d, (n_batch, d, d)).copy()
    eps = np.full(n_batch, cfg.dilution)
    ll = log_likelihood(_probs(projs, rho), m)
    active = np.ones(n_batch, dtype=bool)
    streak = np.zeros(n_batch, dtype=int)
    log = MleTrace([float(ll[0])], [float(np.trace(rho[0]).real)], 0, False)
    it = 0
    while it < cfg.max_iters and active.any():
        it += 1
        idx = np.flatnonzero(active)
        cur = rho[idx]
        p = _probs(projs, cur)
        r = _r_operator(projs, p, m[idx])
        step = r @ cur @ r
        step /= np.trace(step, axis1=1, axis2=2).real[:, None, None]
        e = eps[idx][:, None, None]
        cand = (1 - e) * cur + e * step
        cand = 0.5 * (cand + np.swapaxes(cand, 1, 2).conj())
        cand /= np.trace(cand, axis1=1, axis2=2).real[:, None, None]
        ll_new = log_likelihood(_probs(projs, cand), m[idx])
        slack = 1e-12 * np.maximum(1.0, np.abs(ll[idx]))
        ok = ll_new >= ll[idx] - slack
        gain = ll_new - ll[idx]
        acc = idx[ok]
        rho[acc] = cand[ok]
        ll[acc] = ll_new[ok]
        streak[acc] = 0
        rej = idx[~ok]
        streak[rej] += 1
        eps[rej] *= 0.5
        if np.any(streak >= DIVERGENCE_STREAK):
            raise Divergence(f"log-likelihood decreased {DIVERGENCE_STREAK} times in a row")
        done = acc[np.abs(gain[ok]) < cfg.tol]
        active[done] = False
        if history:
            log.log_likelihood.append(float(ll[0]))
            log.trace.append(float(np.trace(rho[0]).real))
    log.iterations = it
    log.converged = not active.any()
    if history:
        return rho, log
    return rho


def mle_reconstruct(record: MeasurementRecord, n_qubits=None, cfg: MleConfig = MleConfig()):
    """Maximum-likelihood state for one record; always PSD with unit trace."""
    if len(record) < 1:
        raise InvalidSpec("at least one measurement is required")
    return mle_batch(record.operators, record.outcomes[None, :], cfg)[0]
