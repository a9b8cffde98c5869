import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_hermitian
from qtomo.errors import NotHermitian, NotPSD
from qtomo.linalg import hermitian_eig, kron, matrix_sqrt_psd, pseudoinverse
from qtomo.measurement import PAULI, b_matrix, projector_set
from qtomo.states import make_rng

I2, X, Y, Z = PAULI
MU0 = np.diag([1.0, 0.0])


def test_kron_examples():
    assert np.array_equal(kron(I2, I2), np.eye(4))
    assert np.array_equal(kron(MU0, MU0), np.diag([1.0, 0, 0, 0]))
    expected = np.block([[np.zeros((2, 2)), Z], [Z, np.zeros((2, 2))]])
    assert np.array_equal(kron(X, Z), expected)


def test_kron_index_convention(rng):
    a, b = rng.normal(size=(2, 3)), rng.normal(size=(4, 5))
    k = kron(a, b)
    assert k.shape == (8, 15)
    assert k[1 * 4 + 3, 2 * 5 + 1] == a[1, 2] * b[3, 1]


@given(st.integers(0, 2**32 - 1))
def test_kron_associativity_and_trace(seed):
    r = make_rng(seed)
    a, b, c = (r.normal(size=(2, 2)) + 1j * r.normal(size=(2, 2)) for _ in range(3))
    assert np.allclose(kron(kron(a, b), c), kron(a, kron(b, c)), atol=1e-14)
    assert abs(np.trace(kron(a, b)) - np.trace(a) * np.trace(b)) < 1e-12


def test_hermitian_eig_examples():
    assert np.allclose(hermitian_eig(np.diag([0.3, 0.7])).eigenvalues, [0.3, 0.7])
    assert np.allclose(hermitian_eig(X).eigenvalues, [-1, 1])
    assert np.allclose(hermitian_eig(np.full((2, 2), 0.5)).eigenvalues, [0, 1], atol=1e-15)


def test_hermitian_eig_rejects_non_hermitian():
    with pytest.raises(NotHermitian):
        hermitian_eig(np.array([[0.5, 1.0], [0.0, 0.5]]))


@given(st.integers(0, 2**32 - 1), st.sampled_from([1, 2, 3, 5, 8]))
def test_eig_round_trip(seed, d):
    h = random_hermitian(make_rng(seed), d)
    w, v = hermitian_eig(h)
    assert np.all(np.diff(w) >= 0)
    assert np.linalg.norm(v @ np.diag(w) @ v.conj().T - h) <= 1e-10 * np.linalg.norm(h)
    assert np.allclose(v.conj().T @ v, np.eye(d), atol=1e-10)


def test_eig_is_deterministic(rng):
    h = random_hermitian(rng, 6)
    a, b = hermitian_eig(h), hermitian_eig(h.copy())
    assert np.array_equal(a.eigenvalues, b.eigenvalues) and np.array_equal(a.eigenvectors, b.eigenvectors)


def test_matrix_sqrt_examples():
    assert np.allclose(matrix_sqrt_psd(np.eye(3)), np.eye(3))
    assert np.allclose(matrix_sqrt_psd(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]))
    p = np.full((2, 2), 0.5)
    assert np.allclose(matrix_sqrt_psd(p), p, atol=1e-8)
    with pytest.raises(NotPSD):
        matrix_sqrt_psd(np.diag([1.0, -1e-6]))


@given(st.integers(0, 2**32 - 1))
def test_matrix_sqrt_squares_back(seed):
    r = make_rng(seed)
    g = r.normal(size=(4, 4)) + 1j * r.normal(size=(4, 4))
    h = g @ g.conj().T
    s = matrix_sqrt_psd(h)
    assert np.allclose(s @ s, h, atol=1e-8)


def test_pseudoinverse_paper_rows():
    b = b_matrix(projector_set(1))
    assert np.allclose(pseudoinverse(b[[0, 1]]), 0.5 * np.array([[1, 0, 0, 1], [1, 0, 0, -1]]).T, atol=1e-12)
    assert np.allclose(pseudoinverse(b[[0, 2]]), np.array([[1, -1, 0, 2], [1, 2, 0, -1]]).T / 3, atol=1e-12)
    assert np.allclose(pseudoinverse(np.eye(5)), np.eye(5))


@given(st.integers(0, 2**32 - 1), st.integers(1, 16), st.integers(1, 16), st.booleans())
def test_penrose_conditions(seed, rows, cols, low_rank):
    r = make_rng(seed)
    b = r.normal(size=(rows, cols)) + 1j * r.normal(size=(rows, cols))
    if low_rank and min(rows, cols) > 1:
        b = b[:, :1] @ b[:1, :]
    p = pseudoinverse(b)
    tol = 1e-9 * max(1.0, np.linalg.norm(b)) * max(1.0, np.linalg.norm(p))
    assert np.linalg.norm(b @ p @ b - b) < tol
    assert np.linalg.norm(p @ b @ p - p) < tol
    assert np.linalg.norm((b @ p).conj().T - b @ p) < tol
    assert np.linalg.norm((p @ b).conj().T - p @ b) < tol


def test_full_row_rank_formula(rng):
    b = rng.normal(size=(3, 6))
    assert np.allclose(pseudoinverse(b), b.T @ np.linalg.inv(b @ b.T))
