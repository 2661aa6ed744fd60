import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hameng import ops


def rand_herm(rng, d):
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return a + a.conj().T


def test_build_pauli_qubit_one_is_leftmost():
    expected = np.kron(ops.PAULI_MATRICES["X"], ops.PAULI_MATRICES["Z"])
    assert np.array_equal(ops.build_pauli("XZ"), expected)


def test_build_pauli_rejects_bad_letters_and_length():
    with pytest.raises(ops.OperatorError):
        ops.build_pauli("XQ")
    with pytest.raises(ops.OperatorError):
        ops.build_pauli("XZ", 3)


def test_single_site_and_collective():
    n = 3
    sx = ops.collective("x", n)
    assert np.allclose(sx, sum(ops.single_site("X", i, n) for i in (1, 2, 3)))
    with pytest.raises(ValueError):
        sx[0, 0] = 1.0  # cached array is read-only
    with pytest.raises(ops.OperatorError):
        ops.single_site("X", 4, 3)


def test_commutator_and_inner_dimension_checks():
    with pytest.raises(ops.OperatorError):
        ops.commutator(np.eye(2), np.eye(4))
    x, y, z = (ops.PAULI_MATRICES[c] for c in "XYZ")
    assert np.allclose(ops.commutator(x, y), 2j * z)
    assert ops.hs_inner(x, x) == pytest.approx(1.0)
    assert ops.hs_inner(x, y) == pytest.approx(0.0)


def test_n_qubits_rejects_non_power_of_two():
    with pytest.raises(ops.OperatorError):
        ops.n_qubits(np.eye(3))
    assert ops.n_qubits(np.eye(8)) == 3


def test_expm_skew_matches_scipy(rng):
    import scipy.linalg

    h = rand_herm(rng, 4)
    assert np.allclose(ops.expm_skew(h, 0.7), scipy.linalg.expm(-0.7j * h), atol=1e-12)
    with pytest.raises(ops.OperatorError):
        ops.expm_skew(h + 1j * np.eye(4))


def test_logm_unitary_round_trip(rng):
    h = rand_herm(rng, 8)
    h *= 2.0 / np.linalg.norm(h, 2)  # eigenvalues well inside (-pi, pi)
    u = ops.expm_skew(h)
    assert np.allclose(ops.logm_unitary(u), h, atol=1e-11)


def test_logm_unitary_branch_guard():
    u = np.diag([np.exp(1j * (np.pi - 1e-8)), 1.0])
    with pytest.raises(ops.BranchAmbiguityError):
        ops.logm_unitary(u)
    with pytest.raises(ops.OperatorError):
        ops.logm_unitary(2 * np.eye(2))


def test_pauli_coefficients_single_string():
    a = ops.build_pauli("XZY")
    c = ops.pauli_coefficients(a)
    assert c[ops.pauli_index("XZY")] == pytest.approx(1.0)
    assert np.count_nonzero(np.abs(c) > 1e-14) == 1


def test_pauli_coefficients_batched(rng):
    a = rng.normal(size=(3, 2, 4, 4)) + 1j * rng.normal(size=(3, 2, 4, 4))
    b = ops.pauli_coefficients(a)
    assert b.shape == (3, 2, 16)
    assert np.allclose(b[2, 1], ops.pauli_coefficients(a[2, 1]))


@settings(max_examples=30, deadline=None)
@given(st.dictionaries(st.text("IXYZ", min_size=2, max_size=2),
                       st.floats(-3, 3, allow_nan=False), min_size=1, max_size=6))
def test_pauli_map_round_trip(terms):
    a = ops.from_pauli_map(terms, 2)
    back = ops.to_pauli_map(a)
    for k, v in terms.items():
        assert back.get(k, 0.0) == pytest.approx(v, abs=1e-12)


def test_pauli_label_index_inverse():
    for k in range(64):
        assert ops.pauli_index(ops.pauli_label(k, 3)) == k
    assert ops.pauli_label(ops.pauli_index("ZIX"), 3) == "ZIX"


def test_hermitian_checks(rng):
    h = rand_herm(rng, 4)
    assert ops.is_hermitian(h)
    assert not ops.is_hermitian(h + 1j * np.eye(4))
    assert ops.is_hermitian(ops.hermitian_part(h + 0.3j * np.eye(4)))
