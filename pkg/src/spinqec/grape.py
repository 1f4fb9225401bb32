"""Gradient ascent pulse engineering (GRAPE) for unitary targets.

A :class:`ControlPulse` is a piecewise-constant waveform on a list of control
channels.  Channel ``"X2"`` means the operator ``X/2`` on spin 2, so an
amplitude of ``pi/dt`` held for one slice is a pi rotation.  Amplitudes are
in rad/s.
"""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .qcore import pauli_embed, expm_hermitian, unitary_fidelity
from .spinsys import SpinSystem, build_hamiltonian

log = logging.getLogger(__name__)

DEFAULT_DT = 40e-6
DEFAULT_CAP = 2 * math.pi * 10e3
DEFAULT_SEED = 20100101
_CHANNEL_RE = re.compile(r"^([XY])(\d+)$")


def xy_channels(n: int) -> tuple[str, ...]:
    return tuple(f"{p}{i}" for i in range(1, n + 1) for p in "XY")


def control_operators(channels: Sequence[str], n: int) -> np.ndarray:
    """Stack of control Hamiltonians (spin-1/2 operators) for ``channels``."""
    ops = []
    for name in channels:
        m = _CHANNEL_RE.match(name)
        if not m:
            raise ValueError(f"unrecognized control channel {name!r}")
        spin = int(m.group(2))
        if not 1 <= spin <= n:
            raise ValueError(f"channel {name!r} addresses spin outside 1..{n}")
        ops.append(0.5 * pauli_embed(n, spin, m.group(1)))
    return np.array(ops)


@dataclass
class ControlPulse:
    amps: np.ndarray  # (n_slices, n_channels), rad/s
    dt: float
    channels: tuple[str, ...]
    target: str = ""
    fidelity: float = float("nan")

    def __post_init__(self):
        self.amps = np.array(self.amps, dtype=float, ndmin=2)
        self.channels = tuple(self.channels)
        if self.amps.shape[0] < 1:
            raise ValueError("pulse needs at least one slice")
        if self.amps.shape[1] != len(self.channels):
            raise ValueError(
                f"{self.amps.shape[1]} amplitude columns for {len(self.channels)} channels"
            )
        if not self.dt > 0:
            raise ValueError(f"slice duration must be positive, got {self.dt}")

    @property
    def n_slices(self) -> int:
        return self.amps.shape[0]

    @property
    def duration(self) -> float:
        return self.n_slices * self.dt

    def copy(self) -> "ControlPulse":
        return replace(self, amps=self.amps.copy())

    def phase_shifted(self, phi: float) -> "ControlPulse":
        """Rotate every (X_k, Y_k) amplitude pair by ``phi``.

        The resulting propagator is ``R U R^dagger`` with ``R`` a collective
        z rotation by ``phi``, provided the free Hamiltonian conserves total
        Z (true for chemical shifts plus weak or isotropic couplings).
        """
        if phi == 0:
            return self.copy()
        c, s = math.cos(phi), math.sin(phi)
        # exact values at multiples of pi/2 keep amplitudes bit-clean
        if abs(c) < 1e-15:
            c = 0.0
        if abs(s) < 1e-15:
            s = 0.0
        amps = self.amps.copy()
        index = {name: k for k, name in enumerate(self.channels)}
        for name, kx in index.items():
            if not name.startswith("X"):
                continue
            ky = index.get("Y" + name[1:])
            if ky is None:
                raise ValueError(f"channel {name} has no Y partner for phase shift")
            ax, ay = self.amps[:, kx], self.amps[:, ky]
            amps[:, kx] = c * ax - s * ay
            amps[:, ky] = s * ax + c * ay
        return replace(self, amps=amps)


@dataclass
class GrapeReport:
    iterations: int
    fidelity_trace: list[float]
    final_fidelity: float
    gradient_norm: float
    exit_reason: str  # converged | max_iter | stalled


def _slice_eig(p: ControlPulse, h0: np.ndarray, ctrl: np.ndarray):
    hs = h0[None] + np.einsum("kc,cij->kij", p.amps, ctrl)
    w, v = np.linalg.eigh(hs)
    return w, v


def _slice_unitaries(w: np.ndarray, v: np.ndarray, dt: float) -> np.ndarray:
    return np.einsum("kij,kj,klj->kil", v, np.exp(-1j * w * dt), v.conj())


def _check_dims(p: ControlPulse, s: SpinSystem, target: np.ndarray) -> None:
    if target.shape != (s.dim, s.dim):
        raise ValueError(f"target shape {target.shape} does not match {s.dim}x{s.dim}")


def pulse_propagator(p: ControlPulse, s: SpinSystem) -> np.ndarray:
    """Time-ordered product of the slice propagators (last slice leftmost)."""
    w, v = _slice_eig(p, build_hamiltonian(s), control_operators(p.channels, s.n))
    us = _slice_unitaries(w, v, p.dt)
    u = np.eye(s.dim, dtype=complex)
    for uk in us:
        u = uk @ u
    return u


def grape_fidelity(p: ControlPulse, s: SpinSystem, target: np.ndarray) -> float:
    _check_dims(p, s, target)
    return unitary_fidelity(target, pulse_propagator(p, s))


def _fidelity_and_gradient(
    amps: np.ndarray, dt: float, h0: np.ndarray, ctrl: np.ndarray, target: np.ndarray
) -> tuple[float, np.ndarray]:
    d = h0.shape[0]
    hs = h0[None] + np.einsum("kc,cij->kij", amps, ctrl)
    w, v = np.linalg.eigh(hs)
    us = _slice_unitaries(w, v, dt)
    n = len(us)

    # fwd[k] = U_{k-1}...U_0 ; bwd[k] = U_{n-1}...U_{k+1}
    fwd = np.empty_like(us)
    bwd = np.empty_like(us)
    acc = np.eye(d, dtype=complex)
    for k in range(n):
        fwd[k] = acc
        acc = us[k] @ acc
    total = acc
    acc = np.eye(d, dtype=complex)
    for k in range(n - 1, -1, -1):
        bwd[k] = acc
        acc = acc @ us[k]

    g = np.vdot(target, total)  # Tr(T^dagger U)
    fid = abs(g) / d
    if abs(g) == 0:
        return 0.0, np.zeros_like(amps)

    # d/du Tr(T^dagger B dU A) = Tr(M dU), M = A T^dagger B
    m = fwd @ target.conj().T[None] @ bwd
    vh = np.conj(np.swapaxes(v, 1, 2))
    m_eig = vh @ m @ v
    c_eig = np.einsum("kai,cij,kjb->kcab", vh, ctrl, v)
    wa = w[:, :, None]
    wb = w[:, None, :]
    # divided difference of exp(-i w dt), stable for degenerate eigenvalues
    gamma = -1j * dt * np.exp(-0.5j * dt * (wa + wb)) * np.sinc(dt * (wa - wb) / (2 * np.pi))
    dg = np.einsum("kba,kab,kcab->kc", m_eig, gamma, c_eig)
    grad = np.real(np.conj(g) * dg) / (abs(g) * d)
    return fid, grad


def grape_gradient(p: ControlPulse, s: SpinSystem, target: np.ndarray) -> np.ndarray:
    """Exact gradient of the fidelity with respect to every amplitude."""
    _check_dims(p, s, target)
    _, grad = _fidelity_and_gradient(
        p.amps, p.dt, build_hamiltonian(s), control_operators(p.channels, s.n), target
    )
    return grad


def random_pulse(
    n: int,
    n_slices: int,
    dt: float = DEFAULT_DT,
    scale: float = 0.05 * DEFAULT_CAP,
    seed: int = DEFAULT_SEED,
    channels: Optional[Sequence[str]] = None,
) -> ControlPulse:
    rng = np.random.default_rng(seed)
    channels = xy_channels(n) if channels is None else tuple(channels)
    amps = scale * rng.uniform(-1.0, 1.0, size=(n_slices, len(channels)))
    return ControlPulse(amps=amps, dt=dt, channels=channels)


def _lbfgs_direction(grad, s_hist, y_hist):
    """Two-loop recursion for an ascent direction (curvature of -fidelity)."""
    q = grad.copy()
    alphas = []
    for s_k, y_k in zip(reversed(s_hist), reversed(y_hist)):
        rho = 1.0 / np.vdot(y_k, s_k)
        a = rho * np.vdot(s_k, q)
        q -= a * y_k
        alphas.append((rho, a))
    if s_hist:
        q *= np.vdot(s_hist[-1], y_hist[-1]) / np.vdot(y_hist[-1], y_hist[-1])
    for (s_k, y_k), (rho, a) in zip(zip(s_hist, y_hist), reversed(alphas)):
        b = rho * np.vdot(y_k, q)
        q += (a - b) * s_k
    return q


def grape_optimize(
    init: ControlPulse,
    s: SpinSystem,
    target: np.ndarray,
    goal: float = 0.999,
    max_iter: int = 2000,
    cap: float = DEFAULT_CAP,
    step: float = 1.0,
    memory: int = 20,
    stall_window: int = 20,
    stall_tol: float = 1e-12,
    target_name: str = "",
) -> tuple[ControlPulse, GrapeReport]:
    """Maximize ``|Tr(target^dagger U)|/d`` over the pulse amplitudes.

    Ascent directions come from the exact gradient, preconditioned by a
    limited-memory BFGS estimate of the curvature.  Each iteration tries
    ``clip(amps + step * direction)`` and halves ``step`` until the fidelity
    improves, so the fidelity trace never decreases.  Stops at ``goal``,
    after ``max_iter`` iterations, or when the relative gain over
    ``stall_window`` iterations falls below ``stall_tol``.
    """
    if not 0 < goal < 1:
        raise ValueError(f"goal must lie in (0, 1), got {goal}")
    _check_dims(init, s, target)
    h0 = build_hamiltonian(s)
    ctrl = control_operators(init.channels, s.n)
    shape = init.amps.shape
    amps = np.clip(init.amps, -cap, cap).ravel()

    def evaluate(x):
        f, g = _fidelity_and_gradient(x.reshape(shape), init.dt, h0, ctrl, target)
        return f, g.ravel()

    fid, grad = evaluate(amps)
    trace = [fid]
    s_hist: list[np.ndarray] = []
    y_hist: list[np.ndarray] = []
    it = 0
    while True:
        if fid >= goal:
            reason = "converged"
            break
        if it >= max_iter:
            reason = "max_iter"
            break
        if len(trace) > stall_window and (
            trace[-1] - trace[-1 - stall_window] < stall_tol * trace[-1]
        ):
            reason = "stalled"
            break
        it += 1
        direction = _lbfgs_direction(grad, s_hist, y_hist)
        if np.vdot(direction, grad) <= 0:
            s_hist.clear()
            y_hist.clear()
            direction = grad
        if not s_hist:
            # first step: move the largest amplitude by ~1% of the cap
            direction = direction * (0.01 * cap / max(np.max(np.abs(direction)), 1e-300))
        trial_step = step
        for _ in range(60):
            trial = np.clip(amps + trial_step * direction, -cap, cap)
            f_trial, g_trial = evaluate(trial)
            if f_trial > fid:
                break
            trial_step *= 0.5
        else:
            trace.append(fid)
            reason = "stalled"
            break
        s_k = trial - amps
        y_k = grad - g_trial  # curvature pairs for the minimized -fidelity
        if np.vdot(s_k, y_k) > 1e-12 * np.linalg.norm(s_k) * np.linalg.norm(y_k):
            s_hist.append(s_k)
            y_hist.append(y_k)
            if len(s_hist) > memory:
                s_hist.pop(0)
                y_hist.pop(0)
        amps, fid, grad = trial, f_trial, g_trial
        trace.append(fid)
        if it % 100 == 0:
            log.debug("grape %s iter %d fidelity %.10f", target_name, it, fid)
    pulse = replace(
        init,
        amps=amps.reshape(shape),
        target=target_name or init.target,
        fidelity=fid,
    )
    report = GrapeReport(
        iterations=it,
        fidelity_trace=trace,
        final_fidelity=fid,
        gradient_norm=float(np.linalg.norm(grad)),
        exit_reason=reason,
    )
    return pulse, report


def pi_rotation_target(n: int, spin: int, phase: float = 0.0) -> np.ndarray:
    gen = math.cos(phase) * pauli_embed(n, spin, "X") + math.sin(phase) * pauli_embed(
        n, spin, "Y"
    )
    return expm_hermitian(0.5 * gen, math.pi)


def selective_pi_pulse(
    s: SpinSystem,
    spin: int,
    duration: float = 2e-3,
    dt: float = DEFAULT_DT,
    goal: float = 0.99999,
    max_iter: int = 2000,
    seed: int = DEFAULT_SEED,
    cap: float = DEFAULT_CAP,
) -> tuple[ControlPulse, GrapeReport]:
    """Pi rotation about x on ``spin``, identity on every other spin."""
    if not 1 <= spin <= s.n:
        raise IndexError(f"spin {spin} out of range 1..{s.n}")
    if not duration > 0:
        raise ValueError("duration must be positive")
    n_slices = max(1, round(duration / dt))
    init = random_pulse(s.n, n_slices, duration / n_slices, seed=seed + spin)
    target = pi_rotation_target(s.n, spin)
    return grape_optimize(
        init, s, target, goal=goal, max_iter=max_iter, cap=cap,
        target_name=f"pi_x_spin{spin}",
    )


# --- pulse files -----------------------------------------------------------

_HEADER = "# spinqec pulse v1"


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_pulse(p: ControlPulse, path: str | Path) -> None:
    lines = [
        _HEADER,
        f"n_slices {p.n_slices}",
        f"dt {_fmt(p.dt)}",
        "channels " + " ".join(p.channels),
        f"target {p.target or '-'}",
        f"fidelity {_fmt(p.fidelity)}",
    ]
    lines += [" ".join(_fmt(a) for a in row) for row in p.amps]
    Path(path).write_text("\n".join(lines) + "\n")


def read_pulse(path: str | Path) -> ControlPulse:
    text = Path(path).read_text().splitlines()
    if not text or text[0].strip() != _HEADER:
        raise ValueError(f"{path}: not a pulse file")
    header: dict[str, str] = {}
    pos = 1
    for key in ("n_slices", "dt", "channels", "target", "fidelity"):
        if pos >= len(text):
            raise ValueError(f"{path}: truncated header")
        name, _, value = text[pos].partition(" ")
        if name != key:
            raise ValueError(f"{path}:{pos + 1}: expected {key!r}, got {name!r}")
        header[key] = value.strip()
        pos += 1
    n_slices = int(header["n_slices"])
    channels = tuple(header["channels"].split())
    rows = [line.split() for line in text[pos:] if line.strip()]
    if len(rows) != n_slices:
        raise ValueError(f"{path}: expected {n_slices} slices, found {len(rows)}")
    amps = np.array([[float(x) for x in row] for row in rows])
    target = header["target"]
    return ControlPulse(
        amps=amps,
        dt=float(header["dt"]),
        channels=channels,
        target="" if target == "-" else target,
        fidelity=float(header["fidelity"]),
    )
