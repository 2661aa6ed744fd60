"""Dense operator algebra on small qubit networks.

Operators are plain ``numpy`` complex arrays of shape ``(2**n, 2**n)``.
Qubit 1 is the most significant tensor factor, so ``build_pauli("XZ")``
is ``kron(X, Z)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg

HERMITIAN_RTOL = 1e-12
UNITARY_TOL = 1e-8
BRANCH_TOL = 1e-6

PAULI_LETTERS = "IXYZ"

_I2 = np.eye(2, dtype=complex)
_X = np.array([[0, 1], [1, 0]], dtype=complex)
_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI_MATRICES = {"I": _I2, "X": _X, "Y": _Y, "Z": _Z}
# _PT[p] is the p-th single-qubit Pauli in IXYZ order
_PT = np.stack([_I2, _X, _Y, _Z])


class OperatorError(ValueError):
    """Raised when an operator fails a structural precondition."""


class BranchAmbiguityError(OperatorError):
    """Raised by :func:`logm_unitary` when an eigenphase sits near +-pi."""


@dataclass(frozen=True)
class PauliString:
    letters: str
    coefficient: complex = 1.0

    def __post_init__(self):
        letters = self.letters.upper()
        bad = set(letters) - set(PAULI_LETTERS)
        if bad:
            raise OperatorError(f"invalid Pauli letters {sorted(bad)} in {self.letters!r}")
        object.__setattr__(self, "letters", letters)

    @property
    def n(self) -> int:
        return len(self.letters)


def build_pauli(p: PauliString | str, n: int | None = None) -> np.ndarray:
    """Return ``coefficient * P_1 (x) P_2 (x) ... (x) P_n``."""
    if isinstance(p, str):
        p = PauliString(p)
    if n is None:
        n = p.n
    if n < 1:
        raise OperatorError("qubit count must be >= 1")
    if p.n != n:
        raise OperatorError(f"Pauli string length mismatch: expected {n} letters, got {p.n}")
    out = np.ones((1, 1), dtype=complex)
    for letter in p.letters:
        out = np.kron(out, PAULI_MATRICES[letter])
    return p.coefficient * out


def single_site(letter: str, site: int, n: int) -> np.ndarray:
    """Pauli ``letter`` acting on qubit ``site`` (1-based) of an ``n``-qubit register."""
    if not 1 <= site <= n:
        raise OperatorError(f"site {site} outside 1..{n}")
    letters = ["I"] * n
    letters[site - 1] = letter
    return build_pauli("".join(letters), n)


@lru_cache(maxsize=None)
def _collective(letter: str, n: int) -> np.ndarray:
    out = sum(single_site(letter, i, n) for i in range(1, n + 1))
    out.setflags(write=False)
    return out


def collective(letter: str, n: int) -> np.ndarray:
    """Sum over all qubits of the Pauli ``letter`` (read-only cached array)."""
    return _collective(letter.upper(), n)


def n_qubits(a: np.ndarray) -> int:
    dim = a.shape[0]
    if a.ndim != 2 or a.shape[1] != dim:
        raise OperatorError(f"operator must be square, got shape {a.shape}")
    n = dim.bit_length() - 1
    if dim < 2 or 1 << n != dim:
        raise OperatorError(f"dimension {dim} is not a power of two")
    return n


def _check_dims(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise OperatorError(f"dimension mismatch: {a.shape} vs {b.shape}")


def commutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    _check_dims(a, b)
    return a @ b - b @ a


def hs_inner(a: np.ndarray, b: np.ndarray) -> complex:
    """Hilbert-Schmidt inner product ``Tr(a^dagger b) / 2**n``."""
    _check_dims(a, b)
    return complex(np.vdot(a, b)) / a.shape[0]


def is_hermitian(a: np.ndarray, rtol: float = HERMITIAN_RTOL) -> bool:
    scale = np.abs(a).max(initial=0.0)
    return np.abs(a - a.conj().T).max(initial=0.0) <= rtol * max(scale, 1e-300)


def hermitian_part(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.conj().T)


def expm_skew(h: np.ndarray, t: float = 1.0) -> np.ndarray:
    """``exp(-i h t)`` for Hermitian ``h``, via eigendecomposition."""
    if not is_hermitian(h):
        raise OperatorError("expm_skew requires a Hermitian generator")
    w, v = np.linalg.eigh(hermitian_part(h))
    return (v * np.exp(-1j * w * t)) @ v.conj().T


def unitarity_defect(u: np.ndarray) -> float:
    return float(np.abs(u.conj().T @ u - np.eye(u.shape[0])).max())


def logm_unitary(u: np.ndarray) -> np.ndarray:
    """Hermitian ``H`` with ``exp(-iH) = u`` and eigenvalues in ``(-pi, pi)``.

    Raises
    ------
    BranchAmbiguityError
        If an eigenphase of ``u`` lies within ``BRANCH_TOL`` of ``+-pi``; the
        principal logarithm is then ill-conditioned. Evaluate over a shorter
        time so that the accumulated phases stay away from the branch cut.
    """
    n_qubits(u)
    if unitarity_defect(u) > UNITARY_TOL:
        raise OperatorError("logm_unitary requires a unitary input")
    t, z = scipy.linalg.schur(u, output="complex")
    phases = np.angle(np.diag(t))
    if np.any(np.pi - np.abs(phases) < BRANCH_TOL):
        raise BranchAmbiguityError(
            "eigenphase within 1e-6 of +-pi; use a shorter evaluation time"
        )
    return hermitian_part((z * -phases) @ z.conj().T)


def pauli_coefficients(a: np.ndarray) -> np.ndarray:
    """Coefficients ``Tr(P a) / 2**n`` over all Pauli strings, IXYZ-lexicographic.

    Index ``k`` corresponds to the string whose base-4 digits (qubit 1 most
    significant) select letters from ``"IXYZ"``. Leading axes of ``a`` are
    treated as a batch.
    """
    n = n_qubits(a[(0,) * (a.ndim - 2)] if a.ndim > 2 else a)
    batch = a.shape[:-2]
    nb = len(batch)
    t = a.reshape(batch + (2,) * (2 * n))
    for k in range(n):
        # remaining row axes sit at nb..nb+n-k-1, column axes right after
        t = np.tensordot(t, _PT, axes=([nb, nb + n - k], [2, 1]))
    return t.reshape(batch + (-1,)) / (1 << n)


def pauli_label(index: int, n: int) -> str:
    letters = []
    for _ in range(n):
        index, digit = divmod(index, 4)
        letters.append(PAULI_LETTERS[digit])
    return "".join(reversed(letters))


def pauli_index(letters: str) -> int:
    idx = 0
    for ch in letters.upper():
        idx = 4 * idx + PAULI_LETTERS.index(ch)
    return idx


def from_pauli_map(terms: dict[str, complex], n: int) -> np.ndarray:
    """Assemble ``sum coeff * P`` from a ``{"XYZ": coeff}`` mapping."""
    out = np.zeros((1 << n, 1 << n), dtype=complex)
    for letters, coeff in terms.items():
        out += build_pauli(PauliString(letters, coeff), n)
    return out


def to_pauli_map(a: np.ndarray, tol: float = 1e-12) -> dict[str, complex]:
    n = n_qubits(a)
    coeffs = pauli_coefficients(a)
    out = {}
    for k in np.flatnonzero(np.abs(coeffs) > tol):
        c = coeffs[k]
        out[pauli_label(int(k), n)] = float(c.real) if abs(c.imag) <= tol else complex(c)
    return out
