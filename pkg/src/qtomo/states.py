"""Density matrices: validation and random ensembles.

Density matrices are complex ``(d, d)`` arrays with ``d = 2**n_qubits``.
All samplers take an explicit :class:`numpy.random.Generator`; use
:func:`make_rng` to get the counter-based generator used for datasets.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import InvalidSpec, NotHermitian, NotPSD, TraceNotOne
from .linalg import hermiticity_error

HERMITIAN_TOL = 1e-10
TRACE_TOL = 1e-10
PSD_TOL = 1e-9


class StateMethod(str, Enum):
    HAAR_PURE = "haar_pure"
    GINIBRE_MIXED = "ginibre_mixed"
    PURIFIED_MIXED = "purified_mixed"
    X_STATE = "x_state"
    MAX_ENTANGLED = "max_entangled"


def make_rng(seed):
    """Philox (counter-based, 64-bit keyed) generator for a given seed."""
    return np.random.Generator(np.random.Philox(int(seed)))


def n_qubits_of(rho):
    d = np.asarray(rho).shape[-1]
    n = int(round(np.log2(d)))
    if d < 1 or 2**n != d:
        raise InvalidSpec(f"dimension {d} is not a power of two")
    return n


def validate(rho):
    """Check Hermiticity, unit trace and positivity; return ``rho`` as a complex array.

    Raises
    ------
    NotHermitian, TraceNotOne, NotPSD
        Naming the first violated property, checked in that order.
    """
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise NotHermitian(f"density matrix must be square, got {rho.shape}")
    n_qubits_of(rho)
    herm = hermiticity_error(rho)
    if herm > HERMITIAN_TOL:
        raise NotHermitian(f"||rho - rho^dagger||_F = {herm:.3e}")
    tr = np.trace(rho).real
    if abs(tr - 1.0) > TRACE_TOL:
        raise TraceNotOne(f"trace = {tr!r}")
    lo = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0]
    if lo < -PSD_TOL:
        raise NotPSD(f"lowest eigenvalue {lo:.3e}")
    return rho


def is_valid(rho):
    try:
        validate(rho)
    except (NotHermitian, TraceNotOne, NotPSD):
        return False
    return True


def ginibre(d, rng, cols=None):
    cols = d if cols is None else cols
    return (rng.standard_normal((d, cols)) + 1j * rng.standard_normal((d, cols))) / np.sqrt(2)


def haar_unitary(d, rng):
    """Haar-random unitary from the QR decomposition of a Ginibre matrix.

    The phases of ``diag(R)`` are moved into ``Q`` so the distribution is
    exactly Haar (Mezzadri's correction).
    """
    q, r = np.linalg.qr(ginibre(d, rng))
    diag = np.diag(r)
    return q * (diag / np.abs(diag))


def random_haar_pure(n_qubits, rng):
    d = 2**n_qubits
    psi = haar_unitary(d, rng)[:, 0]
    return np.outer(psi, psi.conj())


def random_mixed(n_qubits, rng, method=StateMethod.GINIBRE_MIXED):
    d = 2**n_qubits
    method = StateMethod(method)
    if method is StateMethod.GINIBRE_MIXED:
        g = ginibre(d, rng)
        rho = g @ g.conj().T
        return rho / np.trace(rho).real
    if method is StateMethod.PURIFIED_MIXED:
        # system qubits first, ancilla second; trace out the ancilla
        psi = random_haar_pure(2 * n_qubits, rng)
        rho = np.trace(psi.reshape(d, d, d, d), axis1=1, axis2=3)
        return 0.5 * (rho + rho.conj().T) / np.trace(rho).real
    raise InvalidSpec(f"random_mixed does not support {method.value}")


@dataclass(frozen=True)
class XStateParams:
    """Populations ``a, b, c, d`` and coherences ``z`` (|01><10|), ``w`` (|00><11|)."""

    a: float
    b: float
    c: float
    d: float
    z: complex = 0j
    w: complex = 0j

    def check(self, tol=1e-12):
        pops = np.array([self.a, self.b, self.c, self.d])
        if np.any(pops < -tol) or abs(pops.sum() - 1.0) > tol:
            raise InvalidSpec("X-state populations must be nonnegative and sum to one")
        if abs(self.z) > np.sqrt(max(self.b * self.c, 0.0)) + tol:
            raise InvalidSpec("|z| exceeds sqrt(bc)")
        if abs(self.w) > np.sqrt(max(self.a * self.d, 0.0)) + tol:
            raise InvalidSpec("|w| exceeds sqrt(ad)")

    def to_matrix(self):
        x = np.zeros((4, 4), dtype=complex)
        x[0, 0], x[1, 1], x[2, 2], x[3, 3] = self.a, self.b, self.c, self.d
        x[1, 2], x[2, 1] = self.z, np.conj(self.z)
        x[0, 3], x[3, 0] = self.w, np.conj(self.w)
        return x

    @classmethod
    def from_matrix(cls, x):
        x = np.asarray(x)
        return cls(x[0, 0].real, x[1, 1].real, x[2, 2].real, x[3, 3].real, x[1, 2], x[0, 3])


def random_x_state_params(rng):
    a, b, c, d = rng.dirichlet(np.ones(4))
    r_z, r_w = rng.uniform(0.0, 1.0, size=2)
    phi_z, phi_w = rng.uniform(0.0, 2 * np.pi, size=2)
    z = r_z * np.sqrt(b * c) * np.exp(1j * phi_z)
    w = r_w * np.sqrt(a * d) * np.exp(1j * phi_w)
    return XStateParams(a, b, c, d, z, w)


def random_x_state(rng):
    return random_x_state_params(rng).to_matrix()


_BELL = {
    "phi+": np.array([1, 0, 0, 1]) / np.sqrt(2),
    "phi-": np.array([1, 0, 0, -1]) / np.sqrt(2),
    "psi+": np.array([0, 1, 1, 0]) / np.sqrt(2),
    "psi-": np.array([0, 1, -1, 0]) / np.sqrt(2),
}


def maximally_entangled(kind="phi+"):
    """Bell-state density matrix; ``kind`` is one of phi+, phi-, psi+, psi-."""
    key = kind.lower().replace("φ", "phi").replace("ψ", "psi").replace("−", "-")
    if key not in _BELL:
        raise InvalidSpec(f"unknown Bell state {kind!r}")
    psi = _BELL[key].astype(complex)
    return np.outer(psi, psi.conj())


def random_max_entangled(rng):
    """Uniformly random maximally entangled 2-qubit state ``(U x 1)|phi+>``."""
    psi = np.kron(haar_unitary(2, rng), np.eye(2)) @ _BELL["phi+"]
    return np.outer(psi, psi.conj())


def sample_state(method, n_qubits, rng):
    method = StateMethod(method)
    if method is StateMethod.HAAR_PURE:
        return random_haar_pure(n_qubits, rng)
    if method in (StateMethod.GINIBRE_MIXED, StateMethod.PURIFIED_MIXED):
        return random_mixed(n_qubits, rng, method)
    if method is StateMethod.X_STATE:
        if n_qubits != 2:
            raise InvalidSpec("X states are defined for two qubits only")
        return random_x_state(rng)
    if n_qubits != 2:
        raise InvalidSpec("maximally entangled states are sampled for two qubits only")
    return random_max_entangled(rng)


@dataclass(frozen=True)
class RandomStateConfig:
    """Ensemble recipe. ``proportions`` maps method names to weights."""

    n_qubits: int
    seed: int = 0
    proportions: tuple = (
        (StateMethod.GINIBRE_MIXED, 0.4),
        (StateMethod.PURIFIED_MIXED, 0.4),
        (StateMethod.MAX_ENTANGLED, 0.2),
    )

    def __post_init__(self):
        if self.n_qubits not in (1, 2, 3, 4):
            raise InvalidSpec(f"n_qubits must be in 1..4, got {self.n_qubits}")


def _resolve_proportions(n_qubits, proportions):
    methods, weights = [], []
    for method, weight in proportions:
        method = StateMethod(method)
        # no Bell pairs outside two qubits: fall back to Haar pure states
        if method is StateMethod.MAX_ENTANGLED and n_qubits != 2:
            method = StateMethod.HAAR_PURE
        if method is StateMethod.X_STATE and n_qubits != 2:
            raise InvalidSpec("X states are defined for two qubits only")
        methods.append(method)
        weights.append(float(weight))
    weights = np.array(weights)
    if np.any(weights < 0) or weights.sum() <= 0:
        raise InvalidSpec("proportions must be nonnegative with a positive sum")
    return methods, weights / weights.sum()


def generate_dataset(config: RandomStateConfig, count: int):
    """Draw ``count`` states; method counts follow the proportions exactly (largest remainder)."""
    d = 2**config.n_qubits
    methods, weights = _resolve_proportions(config.n_qubits, config.proportions)
    raw = weights * count
    counts = np.floor(raw).astype(int)
    for i in np.argsort(-(raw - counts), kind="stable")[: count - counts.sum()]:
        counts[i] += 1
    rng = make_rng(config.seed)
    labels = np.repeat(np.arange(len(methods)), counts)
    labels = labels[rng.permutation(count)] if count else labels
    out = np.empty((count, d, d), dtype=complex)
    for i, label in enumerate(labels):
        out[i] = sample_state(methods[label], config.n_qubits, rng)
    return out


def x_state_dataset(count, seed):
    rng = make_rng(seed)
    out = np.empty((count, 4, 4), dtype=complex)
    for i in range(count):
        out[i] = random_x_state(rng)
    return out


def partial_trace(rho, keep, n_qubits):
    """Reduced state on the qubits listed in ``keep`` (qubit 0 is most significant)."""
    keep = sorted(keep)
    t = np.asarray(rho).reshape([2] * (2 * n_qubits))
    traced = [q for q in range(n_qubits) if q not in keep]
    for offset, q in enumerate(traced):
        axis = q - offset
        t = np.trace(t, axis1=axis, axis2=axis + t.ndim // 2)
    k = 2 ** len(keep)
    return t.reshape(k, k)
