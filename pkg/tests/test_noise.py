import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spinqec.noise import (
    DephasingChannel, apply_channel, apply_channel_pauli, make_channel, p_from_delay,
)
from spinqec.qcore import kron_all, pauli_embed, pauli_string, PAULI
from conftest import random_hermitian


def test_p_from_delay_values():
    assert p_from_delay(0.0, 2.0) == 0.0
    assert p_from_delay(1e6 * 0.7, 0.7) == pytest.approx(0.5, abs=1e-12)
    assert p_from_delay(1.3, 1.3) == pytest.approx((1 - math.exp(-1)) / 2, rel=1e-14)
    assert p_from_delay(1.3, 1.3) == pytest.approx(0.31606027941427883, rel=1e-14)
    with pytest.raises(ValueError):
        p_from_delay(-1e-3, 1.0)


def test_make_channel_zero_delay(tce):
    ch = make_channel(0.0, tce)
    assert ch.p == (0.0, 0.0, 0.0)
    np.testing.assert_array_equal(ch.kraus[0], np.eye(8))
    assert all(np.count_nonzero(k) == 0 for k in ch.kraus[1:])


def test_make_channel_tce_probabilities(tce):
    ch = make_channel(0.1, tce)
    # (1 - exp(-0.1/T2))/2 for T2 = 3.0, 1.1, 0.6
    expected = [0.5 * (1 - math.exp(-0.1 / t2)) for t2 in (3.0, 1.1, 0.6)]
    np.testing.assert_allclose(ch.p, expected, rtol=1e-14)
    np.testing.assert_allclose(ch.p, [0.016392, 0.043450, 0.076759], atol=1e-6)


@settings(max_examples=25, deadline=None)
@given(t=st.floats(0, 5))
def test_cptp_and_unital(t, tce):
    ch = make_channel(t, tce)
    comp = sum(k.conj().T @ k for k in ch.kraus)
    unital = sum(k @ k.conj().T for k in ch.kraus)
    assert np.max(np.abs(comp - np.eye(8))) <= 1e-12
    assert np.max(np.abs(unital - np.eye(8))) <= 1e-12


def test_identity_channel_leaves_state():
    ch = DephasingChannel((0.0, 0.0, 0.0))
    x2 = pauli_embed(3, 2, "X")
    np.testing.assert_array_equal(apply_channel(ch, x2), x2)


def test_single_qubit_scaling():
    ch = DephasingChannel((0.0, 0.25, 0.0))
    x2 = pauli_embed(3, 2, "X")
    np.testing.assert_allclose(apply_channel(ch, x2), 0.5 * x2, atol=1e-15)
    z2 = pauli_embed(3, 2, "Z")
    np.testing.assert_allclose(apply_channel(DephasingChannel((0.3, 0.4, 0.1)), z2), z2,
                               atol=1e-15)


def test_semigroup(tce, rng):
    rho = random_hermitian(rng, 8)
    a = apply_channel(make_channel(0.07, tce), apply_channel(make_channel(0.11, tce), rho))
    b = apply_channel(make_channel(0.18, tce), rho)
    assert np.max(np.abs(a - b)) <= 1e-10


def test_kraus_and_pauli_paths_agree(tce, rng):
    for _ in range(20):
        ch = make_channel(rng.uniform(0, 2), tce)
        rho = random_hermitian(rng, 8)
        assert np.max(np.abs(apply_channel(ch, rho) - apply_channel_pauli(ch, rho))) <= 1e-12


def test_pauli_string_scaling(tce):
    ch = make_channel(0.2, tce)
    c = ch.coherence_factors
    for label in ("ZIZ", "XIZ", "IYX", "YXY"):
        factor = np.prod([c[i] for i, ch_ in enumerate(label) if ch_ in "XY"])
        op = pauli_string(label)
        np.testing.assert_allclose(apply_channel(ch, op), factor * op, atol=1e-14)


def test_out_of_range_probability():
    with pytest.raises(ValueError):
        DephasingChannel((0.6, 0.0, 0.0))


def test_dim_mismatch():
    with pytest.raises(ValueError):
        apply_channel(DephasingChannel((0.1, 0.1, 0.1)), np.eye(4))
