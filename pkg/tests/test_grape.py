import math

import mpmath as mp
import numpy as np
import pytest

from spinqec import control
from spinqec.grape import (
    ControlPulse, control_operators, grape_fidelity, grape_gradient, grape_optimize,
    pi_rotation_target, pulse_propagator, random_pulse, read_pulse, selective_pi_pulse,
    write_pulse,
)
from spinqec.qcore import X, pauli_embed, unitary_fidelity
from spinqec.qecexp import encode_unitary
from spinqec.spinsys import SpinSystem, build_hamiltonian
from conftest import random_unitary


def free_system(n):
    return SpinSystem.from_arrays([0.0] * n, np.zeros((n, n)), [1.0] * n)


def _mp_expm(h, dt):
    return mp.expm(-1j * h * dt)


def fd_gradient(p: ControlPulse, s, target, step=1e-6):
    """Central differences of |Tr(T^dagger U)|/d evaluated at 35 digits."""
    d = s.dim
    with mp.workdps(35):
        h0 = mp.matrix(build_hamiltonian(s).tolist())
        ctrl = [mp.matrix(c.tolist()) for c in control_operators(p.channels, s.n)]
        dt = mp.mpf(p.dt)
        tgt = mp.matrix(target.tolist())

        def slice_h(row):
            h = h0.copy()
            for a, c in zip(row, ctrl):
                h += a * c
            return h

        rows = [[mp.mpf(float(a)) for a in r] for r in p.amps]
        cache = [_mp_expm(slice_h(r), dt) for r in rows]

        def fid(k, uk):
            u = mp.eye(d)
            for kk in range(p.n_slices):
                u = (uk if kk == k else cache[kk]) * u
            tr = sum(mp.conj(tgt[i, j]) * u[i, j] for i in range(d) for j in range(d))
            return abs(tr) / d

        grad = np.zeros(p.amps.shape)
        for k, row in enumerate(rows):
            for c in range(len(row)):
                vals = []
                for sign in (1, -1):
                    shifted = list(row)
                    shifted[c] += sign * mp.mpf(step)
                    vals.append(fid(k, _mp_expm(slice_h(shifted), dt)))
                grad[k, c] = float((vals[0] - vals[1]) / (2 * mp.mpf(step)))
    return grad


def test_zero_pulse_fidelities():
    s = free_system(3)
    p = ControlPulse(np.zeros((4, 6)), 1e-4, ("X1", "Y1", "X2", "Y2", "X3", "Y3"))
    assert grape_fidelity(p, s, np.eye(8)) == pytest.approx(1.0, abs=1e-14)
    assert grape_fidelity(p, s, pauli_embed(3, 1, "X")) == pytest.approx(0.0, abs=1e-14)


def test_single_slice_pi_rotation():
    s = free_system(1)
    dt = 1e-5
    p = ControlPulse([[math.pi / dt]], dt, ("X1",))
    assert grape_fidelity(p, s, X) == pytest.approx(1.0, abs=1e-12)


def test_self_target_fidelity_is_one(tce):
    p = random_pulse(3, 25, seed=3)
    assert grape_fidelity(p, tce, pulse_propagator(p, tce)) == pytest.approx(1.0, abs=1e-10)


def test_gradient_vanishes_at_maximum(tce):
    p = random_pulse(3, 10, seed=4)
    g = grape_gradient(p, tce, pulse_propagator(p, tce))
    assert np.linalg.norm(g) <= 1e-8


def test_gradient_phase_invariant(tce, rng):
    p = random_pulse(3, 10, seed=5)
    t = random_unitary(rng, 8)
    g1 = grape_gradient(p, tce, t)
    g2 = grape_gradient(p, tce, np.exp(0.81j) * t)
    assert np.max(np.abs(g1 - g2)) <= 1e-12 * max(1.0, np.max(np.abs(g1)))


@pytest.mark.parametrize("seed", range(5))
def test_gradient_matches_extended_precision_fd(tce, seed):
    rng = np.random.default_rng(100 + seed)
    p = random_pulse(3, 3, scale=2 * math.pi * 2e3, seed=200 + seed)
    target = random_unitary(rng, 8) if seed % 2 else encode_unitary()
    g = grape_gradient(p, tce, target)
    fd = fd_gradient(p, tce, target)
    assert np.max(np.abs(g - fd)) / np.max(np.abs(fd)) <= 1e-6


def test_optimize_trivial_target_converges_immediately():
    s = free_system(3)
    init = ControlPulse(np.zeros((5, 6)), 1e-4, ("X1", "Y1", "X2", "Y2", "X3", "Y3"))
    pulse, rep = grape_optimize(init, s, np.eye(8), goal=0.999)
    assert rep.iterations == 0 and rep.exit_reason == "converged"
    assert rep.final_fidelity == pytest.approx(1.0)


def test_optimize_trace_monotone_and_capped(tce):
    cap = 2 * math.pi * 1e3
    init = random_pulse(3, 40, scale=cap, seed=9)
    pulse, rep = grape_optimize(init, tce, pi_rotation_target(3, 1), goal=0.9999999,
                                max_iter=60, cap=cap)
    trace = np.array(rep.fidelity_trace)
    assert np.all(np.diff(trace) >= 0)
    assert np.max(np.abs(pulse.amps)) <= cap
    assert rep.exit_reason in ("max_iter", "stalled", "converged")
    assert pulse.fidelity == rep.final_fidelity == trace[-1]


def test_optimize_rejects_bad_goal(tce):
    with pytest.raises(ValueError):
        grape_optimize(random_pulse(3, 5), tce, np.eye(8), goal=1.1)


def test_selective_pulse_bad_spin(tce):
    with pytest.raises(IndexError):
        selective_pi_pulse(tce, 4)


@pytest.mark.slow
def test_selective_pulse_quality_and_segment_consistency(tce):
    pulses = control.selective_pulses(tce)
    for spin, p in pulses.items():
        target = pi_rotation_target(3, spin)
        assert p.duration == pytest.approx(2e-3)
        assert p.fidelity >= 0.999
        seg = control.shaped_pulse(p, (spin,))
        u = control.segment_propagator(seg, tce, control.TIMED)
        assert unitary_fidelity(target, u) == pytest.approx(p.fidelity, abs=1e-9)


def test_phase_shift_rotates_propagator(tce):
    p = control.selective_pulses(tce)[2]
    u0 = pulse_propagator(p, tce)
    for phi in (0.5 * math.pi, math.pi, 0.3):
        rz = np.diag(np.exp(-0.5j * phi * np.array(
            [sum(1 - 2 * ((i >> b) & 1) for b in range(3)) for i in range(8)])))
        np.testing.assert_allclose(pulse_propagator(p.phase_shifted(phi), tce),
                                   rz @ u0 @ rz.conj().T, atol=1e-10)


def test_pulse_file_round_trip_bit_exact(tmp_path):
    p = random_pulse(3, 17, seed=11)
    p.target, p.fidelity = "encode", 0.99912345678901234
    path = tmp_path / "x.pulse"
    write_pulse(p, path)
    back = read_pulse(path)
    np.testing.assert_array_equal(back.amps, p.amps)
    assert back.dt == p.dt and back.channels == p.channels
    assert back.target == "encode" and back.fidelity == p.fidelity
    write_pulse(back, tmp_path / "y.pulse")
    assert (tmp_path / "y.pulse").read_bytes() == path.read_bytes()


def test_pulse_file_rejects_truncation(tmp_path):
    p = random_pulse(3, 4)
    path = tmp_path / "x.pulse"
    write_pulse(p, path)
    path.write_text("\n".join(path.read_text().splitlines()[:-1]) + "\n")
    with pytest.raises(ValueError):
        read_pulse(path)
