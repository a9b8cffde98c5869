"""Linear reconstructors: full inversion, pseudoinverse, additive corrections and
the closed-form optimal single-qubit estimators for two measurements."""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidPair, NotInvertible, ShapeMismatch
from .linalg import pseudoinverse
from .measurement import (
    MeasurementRecord,
    b_matrix,
    b_rows_for_projectors,
    pauli_basis,
    projector_set,
)


def pauli_expand(x, n_qubits):
    """``sum_mu x[..., mu] Gamma_mu`` for real coefficient vectors (or stacks)."""
    return np.tensordot(np.asarray(x, dtype=float), pauli_basis(n_qubits).gammas, axes=(-1, 0))


def pauli_coefficients(rho, n_qubits):
    """Inverse of :func:`pauli_expand` for Hermitian input: ``x_mu = Tr(Gamma_mu rho) / d``."""
    gammas = pauli_basis(n_qubits).gammas
    x = np.einsum("mij,...ji->...m", gammas, rho) / 2**n_qubits
    return x.real


def record_b(record: MeasurementRecord, n_qubits):
    if record.subset is not None:
        return b_matrix(projector_set(n_qubits), record.subset)
    return b_rows_for_projectors(record.operators, n_qubits)


def full_linear(m, n_qubits):
    """Exact reconstruction from all ``4**N`` outcomes by inverting ``B``."""
    m = np.asarray(m, dtype=float)
    b = b_matrix(projector_set(n_qubits))
    if m.shape[-1] != len(b):
        raise ShapeMismatch(f"expected {len(b)} outcomes, got {m.shape[-1]}")
    if abs(np.linalg.det(b)) < 1e-12:
        raise NotInvertible("measurement matrix is singular")
    x = np.linalg.solve(b, m.T).T
    return pauli_expand(x, n_qubits)


def pinv_reconstruct(record: MeasurementRecord, n_qubits):
    """Least-norm estimate ``Gamma_mu B+_{mu nu} m_nu``; not projected onto valid states."""
    b_plus = pseudoinverse(record_b(record, n_qubits))
    return pauli_expand(b_plus @ record.outcomes, n_qubits)


@dataclass(frozen=True, eq=False)
class CorrectionTerms:
    """Additive corrector terms: ``b`` (4**N x M), ``c`` (4**N) and optional symmetric ``s`` (4**N x M x M)."""

    b: np.ndarray
    c: np.ndarray
    s: np.ndarray = None

    def __post_init__(self):
        if self.s is not None and not np.array_equal(self.s, np.swapaxes(self.s, 1, 2)):
            raise ShapeMismatch("quadratic term must be symmetric in its last two indices")

    @classmethod
    def zeros(cls, n_qubits, m, quadratic=False):
        k = 4**n_qubits
        return cls(np.zeros((k, m)), np.zeros(k), np.zeros((k, m, m)) if quadratic else None)

    def check(self, m, n_qubits):
        k = 4**n_qubits
        if self.b.shape != (k, m) or self.c.shape != (k,):
            raise ShapeMismatch(f"terms {self.b.shape}, {self.c.shape} do not match M={m}, 4^N={k}")
        if self.s is not None and self.s.shape != (k, m, m):
            raise ShapeMismatch(f"quadratic term {self.s.shape} does not match ({k}, {m}, {m})")


def correction_vector(record, terms: CorrectionTerms, n_qubits):
    """``v = b m + c`` (+ ``s m m``): everything added on top of the pseudoinverse coefficients."""
    m = record.outcomes
    terms.check(len(m), n_qubits)
    v = terms.b @ m + terms.c
    if terms.s is not None:
        v = v + np.einsum("kab,a,b->k", terms.s, m, m)
    return v


def apply_corrector(record: MeasurementRecord, terms: CorrectionTerms, n_qubits):
    b_plus = pseudoinverse(record_b(record, n_qubits))
    x = b_plus @ record.outcomes + correction_vector(record, terms, n_qubits)
    return pauli_expand(x, n_qubits)


def orthogonality_residual(record, terms, n_qubits):
    """Largest ``|B_nu' . v|`` over measured rows; zero means the correction keeps the data fit."""
    if len(record) == 0:
        return 0.0
    v = terms.b @ record.outcomes + terms.c
    return float(np.max(np.abs(record_b(record, n_qubits) @ v)))


def analytic_1q(pair, m):
    """Optimal one-qubit estimate from the two outcomes of measurement ``pair``.

    ``m`` is either the two outcomes ``(m_nu, m_nu')`` or all four outcomes.
    Populations come from ``m1`` or ``1 - m2``, ``Re b`` from ``m3 - 1/2`` and
    ``Im b`` from ``m4 - 1/2``; anything not measured takes its ensemble-
    symmetric value (populations 1/2, coherence 0).
    """
    nu, nu2 = (int(p) for p in pair)
    if not 1 <= nu < nu2 <= 4:
        raise InvalidPair(f"pair must satisfy 1 <= nu < nu' <= 4, got {pair}")
    m = np.asarray(m, dtype=float)
    if m.shape == (4,):
        got = {nu: m[nu - 1], nu2: m[nu2 - 1]}
    elif m.shape == (2,):
        got = {nu: m[0], nu2: m[1]}
    else:
        raise ShapeMismatch(f"expected 2 or 4 outcomes, got shape {m.shape}")
    if 1 in got:
        a = got[1]
    elif 2 in got:
        a = 1.0 - got[2]
    else:
        a = 0.5
    re_b = got[3] - 0.5 if 3 in got else 0.0
    im_b = got[4] - 0.5 if 4 in got else 0.0
    coh = re_b + 1j * im_b
    return np.array([[a, coh], [np.conj(coh), 1.0 - a]], dtype=complex)
