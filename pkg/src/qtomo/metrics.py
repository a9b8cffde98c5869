"""State-comparison metrics and reconstruction diagnostics.

Fidelity and Bures distance need PSD arguments. Raw reconstructions
(pseudoinverse, correctors, LSTM outputs) are passed through
:func:`repair_psd` first; the eigenvalue statistics of :func:`psd_stats`
always look at the unrepaired matrices.
"""

import numpy as np

from .errors import DimensionMismatch, NotPSD

PSD_TOL = 1e-9
FIDELITY_SLACK = 1e-8
EIG_NOISE = 1e-14


def _herm(a):
    return 0.5 * (a + np.swapaxes(a, -1, -2).conj())


def repair_psd(rho):
    """Clip negative eigenvalues and renormalise the trace (works on stacks).

    A matrix with no positive eigenvalue is replaced by the maximally mixed state.
    """
    rho = _herm(np.asarray(rho, dtype=complex))
    w, v = np.linalg.eigh(rho)
    w = np.clip(w, 0.0, None)
    tot = w.sum(axis=-1, keepdims=True)
    d = rho.shape[-1]
    w = np.where(tot > 0, w / np.where(tot > 0, tot, 1.0), 1.0 / d)
    return (v * w[..., None, :]) @ np.swapaxes(v, -1, -2).conj()


def _sqrtm_psd(a, tol):
    w, v = np.linalg.eigh(_herm(a))
    if np.any(w < -tol):
        raise NotPSD(f"lowest eigenvalue {np.min(w):.3e} below -{tol:g}")
    # eigenvalues at rounding level would turn into 1e-8 noise under the square root
    w = np.where(w > EIG_NOISE * np.max(np.abs(w), axis=-1, keepdims=True), w, 0.0)
    return (v * np.sqrt(w)[..., None, :]) @ np.swapaxes(v, -1, -2).conj()


def fidelity(r1, r2, tol=PSD_TOL):
    """Uhlmann fidelity ``(Tr sqrt(sqrt(r1) r2 sqrt(r1)))**2``; stacks allowed.

    Arguments must be PSD up to ``tol``; use :func:`repair_psd` on raw
    reconstructions first.
    """
    r1 = np.asarray(r1, dtype=complex)
    r2 = np.asarray(r2, dtype=complex)
    if r1.shape[-2:] != r2.shape[-2:]:
        raise DimensionMismatch(f"{r1.shape} vs {r2.shape}")
    # F = ||sqrt(r1) sqrt(r2)||_tr^2: singular values avoid square roots of
    # eigenvalue noise that the sqrt(s r2 s) form picks up on near-pure states
    prod = _sqrtm_psd(r1, tol) @ _sqrtm_psd(r2, tol)
    f = np.linalg.svd(prod, compute_uv=False).sum(axis=-1) ** 2
    if np.any(f > 1 + FIDELITY_SLACK) or np.any(f < -FIDELITY_SLACK):
        raise NotPSD(f"fidelity {np.max(f):.12f} outside [0, 1]; inputs are not normalised states")
    f = np.clip(f, 0.0, 1.0)
    return float(f) if f.ndim == 0 else f


def bures(r1, r2, tol=PSD_TOL):
    """Bures distance ``sqrt(2 - 2 sqrt(F))``."""
    f = fidelity(r1, r2, tol)
    return np.sqrt(np.clip(2.0 - 2.0 * np.sqrt(f), 0.0, None))


def bures_raw(reconstructed, target):
    """Bures distance of raw reconstructions after PSD repair."""
    return bures(repair_psd(reconstructed), target)


def error_map(targets, reconstructions):
    """Mean absolute element-wise error ``mean_i |rho_i - rho_rec_i|`` (a ``d x d`` real matrix)."""
    targets = np.asarray(targets)
    reconstructions = np.asarray(reconstructions)
    if targets.shape != reconstructions.shape:
        raise DimensionMismatch(f"{targets.shape} vs {reconstructions.shape}")
    return np.abs(targets - reconstructions).mean(axis=0)


def lowest_eigenvalues(reconstructions, k=2):
    w = np.linalg.eigvalsh(_herm(np.asarray(reconstructions, dtype=complex)))
    return w[..., :k]


def psd_stats(reconstructions):
    """Mean and standard deviation of the two lowest eigenvalues of raw matrices.

    Returns a dict with keys ``lowest_mean``, ``lowest_std``, ``second_mean``,
    ``second_std``.
    """
    w = lowest_eigenvalues(reconstructions, 2)
    out = {"lowest_mean": float(w[:, 0].mean()), "lowest_std": float(w[:, 0].std())}
    if w.shape[1] > 1:
        out["second_mean"] = float(w[:, 1].mean())
        out["second_std"] = float(w[:, 1].std())
    return out
