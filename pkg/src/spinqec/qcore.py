"""Dense complex linear algebra for few-qubit operators.

Operators are plain ``numpy`` complex arrays of shape ``(d, d)`` with
``d = 2**n``.  Qubit 1 is the leftmost tensor factor throughout the package.
"""

from __future__ import annotations

from functools import reduce

import numpy as np

HERMITIAN_TOL = 1e-12
UNITARY_TOL = 1e-10
MAX_DIM = 2**20

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI = {"I": I2, "X": X, "Y": Y, "Z": Z}

KET0 = np.array([[1, 0], [0, 0]], dtype=complex)  # |0><0|


class ContractError(ValueError):
    """An operator violates a role it was declared to have."""


def _check_square(a: np.ndarray, name: str = "operator") -> None:
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be square, got shape {a.shape}")
    d = a.shape[0]
    if d < 1 or d & (d - 1):
        raise ValueError(f"{name} dimension {d} is not a power of two")


def is_hermitian(a: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    return bool(np.max(np.abs(a - a.conj().T), initial=0.0) <= tol)


def is_unitary(a: np.ndarray, tol: float = UNITARY_TOL) -> bool:
    eye = np.eye(a.shape[0])
    return bool(np.max(np.abs(a.conj().T @ a - eye), initial=0.0) <= tol)


def kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product with a guard against runaway dimensions."""
    if a.shape[0] * b.shape[0] > MAX_DIM:
        raise OverflowError(
            f"kron result dimension {a.shape[0] * b.shape[0]} exceeds {MAX_DIM}"
        )
    return np.kron(a, b)


def kron_all(*ops: np.ndarray) -> np.ndarray:
    return reduce(kron, ops)


def pauli_embed(n: int, i: int, p: str) -> np.ndarray:
    """Pauli ``p`` acting on qubit ``i`` (1-based) of an ``n``-qubit register."""
    if n < 1:
        raise ValueError(f"qubit count must be positive, got {n}")
    if not 1 <= i <= n:
        raise IndexError(f"qubit index {i} out of range 1..{n}")
    try:
        single = PAULI[p.upper()]
    except KeyError:
        raise ValueError(f"unknown Pauli label {p!r}") from None
    return kron_all(*(single if k == i else I2 for k in range(1, n + 1)))


def embed(n: int, i: int, op: np.ndarray) -> np.ndarray:
    """Arbitrary single-qubit ``op`` on qubit ``i`` of ``n``."""
    if not 1 <= i <= n:
        raise IndexError(f"qubit index {i} out of range 1..{n}")
    return kron_all(*(op if k == i else I2 for k in range(1, n + 1)))


def pauli_string(label: str) -> np.ndarray:
    """Tensor product for a label such as ``"IXZ"`` (qubit 1 first)."""
    return kron_all(*(PAULI[c] for c in label.upper()))


def eigh_hermitian(h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    _check_square(h, "Hamiltonian")
    if not is_hermitian(h):
        raise ContractError("matrix is not Hermitian within tolerance")
    return np.linalg.eigh(h)


def expm_hermitian(h: np.ndarray, t: float) -> np.ndarray:
    """Propagator ``exp(-i h t)`` via eigendecomposition of ``h``."""
    w, v = eigh_hermitian(h)
    return (v * np.exp(-1j * w * t)) @ v.conj().T


def unitary_fidelity(u: np.ndarray, v: np.ndarray) -> float:
    """Phase-insensitive overlap ``|Tr(u^dagger v)| / d``."""
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    # Tr(u^dagger v) == sum(conj(u) * v)
    return float(abs(np.vdot(u, v)) / u.shape[0])


def expect(observable: np.ndarray, state: np.ndarray) -> float:
    """``Re Tr(observable @ state)``."""
    if observable.shape != state.shape:
        raise ValueError(f"dimension mismatch: {observable.shape} vs {state.shape}")
    return float(np.real(np.sum(observable.T * state)))


def conjugate(u: np.ndarray, rho: np.ndarray) -> np.ndarray:
    return u @ rho @ u.conj().T


def qubit_count(d: int) -> int:
    n = d.bit_length() - 1
    if 1 << n != d:
        raise ValueError(f"dimension {d} is not a power of two")
    return n
