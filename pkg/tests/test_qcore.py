import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spinqec.qcore import (
    I2, X, Y, Z, ContractError, expect, expm_hermitian, is_hermitian, is_unitary,
    kron, pauli_embed, unitary_fidelity,
)
from conftest import random_hermitian, random_unitary


def test_pauli_embed_single_qubit():
    np.testing.assert_array_equal(pauli_embed(1, 1, "Z"), np.diag([1, -1]))


def test_pauli_embed_middle_qubit():
    expected = np.kron(np.kron(I2, X), I2)
    np.testing.assert_array_equal(pauli_embed(3, 2, "X"), expected)


def test_zz_product_by_hand():
    # Z (x) I = diag(1,1,-1,-1), I (x) Z = diag(1,-1,1,-1)
    zz = pauli_embed(2, 1, "Z") @ pauli_embed(2, 2, "Z")
    np.testing.assert_array_equal(zz, np.diag([1, -1, -1, 1]))


@pytest.mark.parametrize("i", [0, 4, -1])
def test_pauli_embed_index_out_of_range(i):
    with pytest.raises(IndexError):
        pauli_embed(3, i, "X")


def test_kron_identity():
    np.testing.assert_array_equal(kron(I2, I2), np.eye(4))


def test_kron_xx_maps_00_to_11():
    e0 = np.zeros(4)
    e0[0] = 1
    out = kron(X, X) @ e0
    assert out[3] == 1 and np.count_nonzero(out) == 1


def test_kron_zx_block_diagonal():
    expected = np.zeros((4, 4), dtype=complex)
    expected[:2, :2] = X
    expected[2:, 2:] = -X
    np.testing.assert_array_equal(kron(Z, X), expected)


def test_kron_size_guard():
    big = np.eye(2**11)
    with pytest.raises(OverflowError):
        kron(big, big)


def test_expm_zero_time_is_identity(rng):
    h = random_hermitian(rng, 8)
    np.testing.assert_allclose(expm_hermitian(h, 0.0), np.eye(8), atol=1e-14)


def test_expm_half_pi_x():
    # exp(-i theta X) = cos(theta) I - i sin(theta) X with theta = pi/2
    np.testing.assert_allclose(expm_hermitian(0.5 * math.pi * X, 1.0), -1j * X, atol=1e-10)


def test_expm_diagonal():
    u = expm_hermitian(math.pi * Z, 0.5)
    np.testing.assert_allclose(u, np.diag([np.exp(-0.5j * math.pi), np.exp(0.5j * math.pi)]),
                               atol=1e-12)


def test_expm_rejects_non_hermitian():
    with pytest.raises(ContractError):
        expm_hermitian(np.array([[0, 1], [0, 0]], dtype=complex), 1.0)


def test_expm_unitary_and_group_law(rng):
    h = random_hermitian(rng, 8)
    u1, u2 = expm_hermitian(h, 0.3), expm_hermitian(h, 0.45)
    assert is_unitary(u1)
    np.testing.assert_allclose(u1 @ u2, expm_hermitian(h, 0.75), atol=1e-9)


def test_unitary_fidelity_examples(rng):
    u = random_unitary(rng, 8)
    assert unitary_fidelity(u, u) == pytest.approx(1.0, abs=1e-12)
    assert unitary_fidelity(np.eye(8), pauli_embed(3, 1, "Z")) == pytest.approx(0.0, abs=1e-15)
    assert unitary_fidelity(u, np.exp(0.37j) * u) == pytest.approx(1.0, abs=1e-12)


def test_unitary_fidelity_dim_mismatch():
    with pytest.raises(ValueError):
        unitary_fidelity(np.eye(2), np.eye(4))


def test_expect_examples():
    assert expect(X, X) == pytest.approx(2.0)
    assert expect(Z, X) == pytest.approx(0.0)
    x2 = pauli_embed(3, 2, "X")
    assert expect(x2, x2 / 4) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        expect(X, np.eye(4))


@pytest.mark.parametrize("n", [1, 2, 3])
def test_pauli_embed_properties(n):
    for i in range(1, n + 1):
        for p in "XYZ":
            op = pauli_embed(n, i, p)
            assert is_hermitian(op) and is_unitary(op)
            assert abs(np.trace(op)) < 1e-15
            np.testing.assert_allclose(op @ op, np.eye(2**n))


def test_pauli_commutation_pattern():
    for i in range(1, 4):
        for j in range(1, 4):
            for p in "XYZ":
                for q in "XYZ":
                    a, b = pauli_embed(3, i, p), pauli_embed(3, j, q)
                    if i != j or p == q:
                        np.testing.assert_allclose(a @ b, b @ a)
                    else:
                        np.testing.assert_allclose(a @ b, -b @ a)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), phase=st.floats(-10, 10))
def test_fidelity_symmetry_and_left_invariance(seed, phase):
    rng = np.random.default_rng(seed)
    u, v, w = (random_unitary(rng, 8) for _ in range(3))
    f = unitary_fidelity(u, v)
    assert 0.0 <= f <= 1.0 + 1e-12
    assert unitary_fidelity(v, u) == pytest.approx(f, abs=1e-12)
    assert unitary_fidelity(w @ u, w @ v) == pytest.approx(f, abs=1e-12)
    assert unitary_fidelity(u, np.exp(1j * phase) * v) == pytest.approx(f, abs=1e-12)
