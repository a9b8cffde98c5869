"""Dense complex linear algebra used throughout the package.

Matrices are plain ``numpy`` arrays (complex128 unless stated otherwise).
Functions that make sense on stacks accept arrays of shape ``(..., n, n)``.
"""

from typing import NamedTuple

import numpy as np

from .errors import ConvergenceFailure, NotHermitian, NotPSD

HERMITIAN_RTOL = 1e-8
PSD_TOL = 1e-9
PINV_RCOND = 1e-12


class HermitianEig(NamedTuple):
    eigenvalues: np.ndarray  # ascending, real
    eigenvectors: np.ndarray  # columns


def kron(a, b):
    """Kronecker product; entry ``(ia*rb + ib, ja*cb + jb)`` is ``a[ia, ja] * b[ib, jb]``."""
    return np.kron(np.asarray(a), np.asarray(b))


def kron_all(mats):
    out = np.ones((1, 1), dtype=complex)
    for m in mats:
        out = np.kron(out, m)
    return out


def hermiticity_error(h):
    h = np.asarray(h)
    return np.linalg.norm(h - np.swapaxes(h, -1, -2).conj(), axis=(-2, -1))


def check_hermitian(h, rtol=HERMITIAN_RTOL):
    h = np.asarray(h)
    if h.ndim < 2 or h.shape[-1] != h.shape[-2]:
        raise NotHermitian(f"expected a square matrix, got shape {h.shape}")
    err = hermiticity_error(h)
    scale = np.linalg.norm(h, axis=(-2, -1))
    if np.any(err > rtol * scale):
        raise NotHermitian(
            f"||h - h^dagger||_F = {np.max(err):.3e} exceeds {rtol:g} * ||h||_F"
        )


def hermitian_eig(h) -> HermitianEig:
    """Eigendecomposition of a Hermitian matrix (or stack), eigenvalues ascending.

    Backed by LAPACK ``heevd`` via :func:`numpy.linalg.eigh`, which is
    deterministic for a fixed input on a fixed platform.
    """
    h = np.asarray(h)
    check_hermitian(h)
    h = 0.5 * (h + np.swapaxes(h, -1, -2).conj())
    try:
        w, v = np.linalg.eigh(h)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailure(str(exc)) from exc
    return HermitianEig(w, v)


def matrix_sqrt_psd(h, tol=PSD_TOL):
    """Principal square root ``V diag(sqrt(max(w, 0))) V^dagger`` of a PSD matrix.

    Raises :class:`NotPSD` when an eigenvalue is below ``-tol``.
    """
    w, v = hermitian_eig(h)
    if np.any(w < -tol):
        raise NotPSD(f"lowest eigenvalue {np.min(w):.3e} < -{tol:g}")
    s = np.sqrt(np.clip(w, 0.0, None))
    return (v * s[..., None, :]) @ np.swapaxes(v, -1, -2).conj()


def pseudoinverse(b, rcond=PINV_RCOND):
    """Moore-Penrose pseudoinverse through the SVD.

    Singular values below ``rcond * sigma_max`` are treated as zero, so the
    cutoff scales with the matrix. Works on stacks.
    """
    b = np.asarray(b)
    if b.size == 0:
        return np.zeros(b.shape[:-2] + (b.shape[-1], b.shape[-2]), dtype=b.dtype)
    u, s, vh = np.linalg.svd(b, full_matrices=False)
    cutoff = rcond * np.max(s, axis=-1, keepdims=True)
    s_inv = np.where(s > cutoff, 1.0 / np.where(s > cutoff, s, 1.0), 0.0)
    return (np.swapaxes(vh, -1, -2).conj() * s_inv[..., None, :]) @ np.swapaxes(u, -1, -2).conj()
