"""James-type product projectors, the Pauli operator basis and the outcome map.

Measurement labels ``nu`` are 1-based and enumerate the multi-index
``(i_1, ..., i_N)`` row-major with ``i_1`` most significant, so for two
qubits ``nu = 2`` is ``|0><0| x |1><1|`` and ``nu = 6`` is ``|1><1| x |1><1|``.
Pauli labels use the single-qubit order ``(I, X, Y, Z)`` with the same
row-major convention.
"""

from dataclasses import dataclass
from functools import lru_cache
from itertools import product

import numpy as np

from .errors import DimensionMismatch, IndexOutOfRange, InvalidSpec

IMAG_TOL = 1e-12

_JAMES_STATES = np.array(
    [[1, 0], [0, 1], [1 / np.sqrt(2), 1 / np.sqrt(2)], [1 / np.sqrt(2), -1j / np.sqrt(2)]],
    dtype=complex,
)

PAULI = np.array(
    [[[1, 0], [0, 1]], [[0, 1], [1, 0]], [[0, -1j], [1j, 0]], [[1, 0], [0, -1]]],
    dtype=complex,
)


def james_states():
    return _JAMES_STATES.copy()


def james_basis():
    """The four single-qubit projectors onto |0>, |1>, |+> and (|0> - i|1>)/sqrt(2)."""
    s = _JAMES_STATES
    return np.einsum("ki,kj->kij", s, s.conj())


def _check_n(n_qubits):
    if n_qubits not in (1, 2, 3, 4):
        raise InvalidSpec(f"n_qubits must be in 1..4, got {n_qubits}")


def multi_index(nu, n_qubits):
    """1-based ``nu`` -> tuple ``(i_1, ..., i_N)`` with each ``i_k`` in 0..3."""
    k = nu - 1
    if not 0 <= k < 4**n_qubits:
        raise IndexOutOfRange(f"nu={nu} outside 1..{4**n_qubits}")
    return tuple((k // 4 ** (n_qubits - 1 - q)) % 4 for q in range(n_qubits))


def nu_of(indices):
    k = 0
    for i in indices:
        k = 4 * k + int(i)
    return k + 1


@dataclass(frozen=True, eq=False)
class ProjectorSet:
    n_qubits: int
    states: np.ndarray  # (4**N, d) product vectors |psi_nu>
    projectors: np.ndarray  # (4**N, d, d)
    indices: tuple  # multi-indices, position nu-1

    @property
    def dim(self):
        return 2**self.n_qubits

    def __len__(self):
        return len(self.indices)


@dataclass(frozen=True, eq=False)
class PauliBasis:
    n_qubits: int
    gammas: np.ndarray  # (4**N, d, d)
    indices: tuple


def _product_vectors(single, n_qubits):
    out = []
    for idx in product(range(4), repeat=n_qubits):
        v = np.ones(1, dtype=complex)
        for i in idx:
            v = np.kron(v, single[i])
        out.append(v)
    return np.array(out), tuple(product(range(4), repeat=n_qubits))


@lru_cache(maxsize=None)
def projector_set(n_qubits) -> ProjectorSet:
    _check_n(n_qubits)
    states, indices = _product_vectors(_JAMES_STATES, n_qubits)
    projectors = np.einsum("ki,kj->kij", states, states.conj())
    states.setflags(write=False)
    projectors.setflags(write=False)
    return ProjectorSet(n_qubits, states, projectors, indices)


@lru_cache(maxsize=None)
def pauli_basis(n_qubits) -> PauliBasis:
    _check_n(n_qubits)
    indices = tuple(product(range(4), repeat=n_qubits))
    gammas = []
    for idx in indices:
        g = np.ones((1, 1), dtype=complex)
        for j in idx:
            g = np.kron(g, PAULI[j])
        gammas.append(g)
    gammas = np.array(gammas)
    gammas.setflags(write=False)
    return PauliBasis(n_qubits, gammas, indices)


def _real_checked(values, what):
    imag = np.max(np.abs(values.imag)) if values.size else 0.0
    if imag > IMAG_TOL * max(1.0, np.max(np.abs(values.real), initial=0.0)):
        raise ValueError(f"{what} has imaginary residue {imag:.3e}")
    return np.ascontiguousarray(values.real)


def outcomes(rho, pset_or_projectors, subset=None):
    """Exact outcomes ``m_nu = Tr(Pi_nu rho)``.

    ``rho`` may be a single ``(d, d)`` matrix or a stack ``(B, d, d)``;
    ``subset`` selects 1-based labels when a :class:`ProjectorSet` is given.
    """
    rho = np.asarray(rho)
    if isinstance(pset_or_projectors, ProjectorSet):
        projs = pset_or_projectors.projectors
        if subset is not None:
            projs = projs[_subset_rows(subset, len(projs))]
    else:
        projs = np.asarray(pset_or_projectors)
    if projs.shape[-1] != rho.shape[-1]:
        raise DimensionMismatch(f"projectors act on dim {projs.shape[-1]}, state has dim {rho.shape[-1]}")
    # Tr(P rho) = sum_ij P_ij rho_ji
    m = np.einsum("kij,...ji->...k", projs, rho)
    return _real_checked(m, "outcome")


def _subset_rows(subset, total):
    rows = np.asarray(subset, dtype=int).reshape(-1) - 1
    if rows.size and (rows.min() < 0 or rows.max() >= total):
        raise IndexOutOfRange(f"measurement labels must lie in 1..{total}, got {list(subset)}")
    if len(set(rows.tolist())) != rows.size:
        raise IndexOutOfRange(f"measurement labels must be distinct, got {list(subset)}")
    return rows


@lru_cache(maxsize=None)
def _full_b(n_qubits):
    pset, basis = projector_set(n_qubits), pauli_basis(n_qubits)
    b = np.einsum("nij,mji->nm", pset.projectors, basis.gammas)
    b = _real_checked(b, "B matrix")
    b.setflags(write=False)
    return b


def b_matrix(pset: ProjectorSet, subset=None):
    """Real ``M x 4**N`` matrix ``B[nu, mu] = Tr(Pi_nu Gamma_mu)``, rows in ``subset`` order."""
    full = _full_b(pset.n_qubits)
    if subset is None:
        return full.copy()
    return full[_subset_rows(subset, len(full))]


def b_rows_for_projectors(projectors, n_qubits):
    """``B`` rows for arbitrary operators (e.g. custom projectors), shape ``(..., 4**N)``."""
    gammas = pauli_basis(n_qubits).gammas
    return _real_checked(np.einsum("...ij,mji->...m", projectors, gammas), "B row")


def gramian(pset: ProjectorSet):
    """Overlap matrix ``G[nu, nu'] = Tr(Pi_nu Pi_nu')``."""
    p = pset.projectors
    return _real_checked(np.einsum("aij,bji->ab", p, p), "Gramian")


@dataclass(frozen=True, eq=False)
class MeasurementRecord:
    """Measured operators and their exact outcomes.

    ``subset`` holds the 1-based labels when the operators come from the
    predefined product basis and is ``None`` for custom operators.
    """

    operators: np.ndarray  # (M, d, d)
    outcomes: np.ndarray  # (M,)
    subset: tuple = None

    def __post_init__(self):
        if len(self.operators) != len(self.outcomes):
            raise DimensionMismatch("one outcome per operator is required")
        if self.subset is not None and len(set(self.subset)) != len(self.subset):
            raise IndexOutOfRange("measurement labels must be distinct")

    def __len__(self):
        return len(self.outcomes)

    @property
    def n_qubits(self):
        return int(round(np.log2(self.operators.shape[-1])))


def measure(rho, subset, n_qubits=None):
    """Build a :class:`MeasurementRecord` of ``rho`` for the 1-based ``subset``."""
    rho = np.asarray(rho)
    n_qubits = n_qubits or int(round(np.log2(rho.shape[-1])))
    pset = projector_set(n_qubits)
    subset = tuple(int(s) for s in subset)
    rows = _subset_rows(subset, len(pset))
    return MeasurementRecord(pset.projectors[rows], outcomes(rho, pset, subset), subset)
