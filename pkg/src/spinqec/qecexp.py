"""Three-qubit phase-flip code and the EC / DE / FED experiment pipelines.

Qubit 2 carries the data; qubits 1 and 3 are ancillas that start in |0>.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .qcore import KET0, PAULI, conjugate, expect, kron_all, pauli_embed
from .noise import apply_channel, make_channel
from .spinsys import SpinSystem

N_QUBITS = 3
DATA_QUBIT = 2


class Mode(str, enum.Enum):
    EC = "EC"
    DE = "DE"
    FED = "FED"

    @classmethod
    def parse(cls, text: str) -> "Mode":
        try:
            return cls(text.strip().upper())
        except ValueError:
            raise ValueError(f"unknown mode {text!r}; expected ec, de or fed") from None


def _perm_unitary(mapping) -> np.ndarray:
    """Unitary permuting computational basis states by ``mapping(bits)``."""
    u = np.zeros((8, 8), dtype=complex)
    for idx in range(8):
        bits = [(idx >> 2) & 1, (idx >> 1) & 1, idx & 1]
        out = mapping(bits)
        u[out[0] * 4 + out[1] * 2 + out[2], idx] = 1.0
    return u


def cnot(control: int, target: int) -> np.ndarray:
    def f(bits):
        bits = list(bits)
        bits[target - 1] ^= bits[control - 1]
        return bits

    return _perm_unitary(f)


def toffoli_correct() -> np.ndarray:
    """Flip the data qubit when both syndrome qubits (1 and 3) read 1."""

    def f(bits):
        b1, b2, b3 = bits
        return [b1, b2 ^ (b1 & b3), b3]

    return _perm_unitary(f)


def hadamard_all() -> np.ndarray:
    h = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
    return kron_all(h, h, h)


def encode_unitary() -> np.ndarray:
    """CNOTs from the data qubit onto both ancillas, then Hadamards."""
    return hadamard_all() @ cnot(2, 3) @ cnot(2, 1)


def decode_unitary() -> np.ndarray:
    return encode_unitary().conj().T


def decode_correct_unitary() -> np.ndarray:
    return toffoli_correct() @ decode_unitary()


# --- closed-form fidelities ------------------------------------------------

def _check_p(p: Sequence[float]) -> tuple[float, float, float]:
    if len(p) != 3:
        raise ValueError(f"expected three probabilities, got {len(p)}")
    for i, v in enumerate(p):
        if not 0.0 <= v <= 0.5:
            raise ValueError(f"p[{i}]={v} outside [0, 1/2]")
    return float(p[0]), float(p[1]), float(p[2])


def f_ec_exact(p: Sequence[float]) -> float:
    """Entanglement fidelity after ideal encode, dephasing, decode and correct."""
    p1, p2, p3 = _check_p(p)
    return 1.0 - (p1 * p2 + p1 * p3 + p2 * p3) + 2.0 * p1 * p2 * p3


def f_de_exact(p: Sequence[float]) -> float:
    """Entanglement fidelity after decoding without correction (same as FED)."""
    return 1.0 - _check_p(p)[1]


# --- experiment pipelines --------------------------------------------------

IDEAL = "ideal"
GRAPE = "grape"
CSV_HEADER = ("mode", "pulse_model", "t_s", "repeat", "f_x", "f_y", "f_z", "f")


@dataclass
class PulseSet:
    """Propagators (or waveforms) standing in for the ideal code unitaries."""

    encode: np.ndarray
    decode: np.ndarray
    decode_correct: np.ndarray
    durations: Mapping[str, float] = field(default_factory=dict)

    @classmethod
    def ideal(cls) -> "PulseSet":
        return cls(encode_unitary(), decode_unitary(), decode_correct_unitary(),
                   {"encode": 8e-3, "decode": 8e-3, "decode_correct": 13.6e-3})

    @classmethod
    def from_pulses(cls, s: SpinSystem, encode, decode, decode_correct) -> "PulseSet":
        from .grape import pulse_propagator

        return cls(
            pulse_propagator(encode, s),
            pulse_propagator(decode, s),
            pulse_propagator(decode_correct, s),
            {"encode": encode.duration, "decode": decode.duration,
             "decode_correct": decode_correct.duration},
        )


@dataclass
class ExperimentResult:
    mode: Mode
    pulse_model: str
    t: np.ndarray
    repeat: np.ndarray
    f_x: np.ndarray
    f_y: np.ndarray
    f_z: np.ndarray
    f: np.ndarray
    repeats: int = 1
    noise_sigma: float = 0.0

    def __post_init__(self):
        eq2 = (1.0 + self.f_x + self.f_y + self.f_z) / 4.0
        if self.f.size and np.max(np.abs(eq2 - self.f)) > 1e-12:
            raise ValueError("rows violate f = (1 + f_x + f_y + f_z) / 4")

    def __len__(self) -> int:
        return len(self.t)

    def averaged(self) -> tuple[np.ndarray, np.ndarray]:
        """Mean fidelity per delay time, in order of first appearance."""
        ts, inverse = np.unique(self.t, return_inverse=True)
        sums = np.bincount(inverse, weights=self.f)
        counts = np.bincount(inverse)
        return ts, sums / counts


def input_state(axis: str) -> np.ndarray:
    """Labelled pseudo-pure deviation ``|0><0| (x) sigma_axis (x) |0><0|``."""
    return kron_all(KET0, PAULI[axis], KET0)


def _pipeline(mode: Mode, rho: np.ndarray, pulses: PulseSet, channel) -> np.ndarray:
    if mode is Mode.FED:
        return apply_channel(channel, rho)
    rho = conjugate(pulses.encode, rho)
    rho = apply_channel(channel, rho)
    last = pulses.decode_correct if mode is Mode.EC else pulses.decode
    return conjugate(last, rho)


def polarization_ratios(mode: Mode, s: SpinSystem, t: float,
                        pulses: Optional[PulseSet] = None,
                        noise_in_pulses: bool = False) -> tuple[float, float, float]:
    """Surviving data-qubit polarization for X, Y and Z inputs after delay ``t``.

    Each ratio is normalized to the signal of the reference input state
    itself.  With ``noise_in_pulses`` the dephasing also runs over the
    encode/decode windows (code modes only).
    """
    pulses = pulses or PulseSet.ideal()
    t_eff = t
    if noise_in_pulses and mode is not Mode.FED:
        last = "decode_correct" if mode is Mode.EC else "decode"
        t_eff += pulses.durations.get("encode", 0.0) + pulses.durations.get(last, 0.0)
    channel = make_channel(t_eff, s)
    out = []
    for axis in "XYZ":
        rho = input_state(axis)
        obs = pauli_embed(N_QUBITS, DATA_QUBIT, axis)
        out.append(expect(obs, _pipeline(mode, rho, pulses, channel)) / expect(obs, rho))
    return tuple(out)


def run_experiment(
    mode: Mode | str,
    s: SpinSystem,
    times: Sequence[float],
    pulses: Optional[PulseSet] = None,
    repeats: int = 1,
    noise_sigma: float = 0.0,
    seed: int = 0,
    noise_in_pulses: bool = False,
) -> ExperimentResult:
    """Sweep the delay for one experiment mode.

    ``pulses=None`` uses the exact code unitaries; otherwise a
    :class:`PulseSet` built from synthesized waveforms.  When ``repeats > 1``
    each ratio gets independent Gaussian readout noise of width
    ``noise_sigma`` per repeat.
    """
    mode = Mode.parse(mode) if isinstance(mode, str) else mode
    if s.n != N_QUBITS:
        raise ValueError(f"the code needs {N_QUBITS} spins, system has {s.n}")
    if repeats < 1:
        raise ValueError("repeats must be at least 1")
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be non-negative")
    if repeats == 1 and noise_sigma:
        raise ValueError("readout noise needs repeats > 1")
    times = [float(t) for t in times]
    if any(t < 0 for t in times):
        raise ValueError("delay times must be non-negative")
    model = IDEAL if pulses is None else GRAPE
    rng = np.random.default_rng(seed)
    rows = []
    for t in times:
        base = polarization_ratios(mode, s, t, pulses, noise_in_pulses)
        for r in range(1, repeats + 1):
            fa = np.array(base)
            if noise_sigma:
                fa = fa + rng.normal(0.0, noise_sigma, size=3)
            rows.append((t, r, *fa, (1.0 + fa.sum()) / 4.0))
    arr = np.array(rows, dtype=float).reshape(-1, 6)
    return ExperimentResult(
        mode=mode,
        pulse_model=model,
        t=arr[:, 0],
        repeat=arr[:, 1].astype(int),
        f_x=arr[:, 2],
        f_y=arr[:, 3],
        f_z=arr[:, 4],
        f=arr[:, 5],
        repeats=repeats,
        noise_sigma=noise_sigma,
    )


def _g12(x: float) -> str:
    return format(float(x), ".12g")


def write_csv(result: ExperimentResult, path) -> None:
    lines = [",".join(CSV_HEADER)]
    for i in range(len(result)):
        lines.append(",".join([
            result.mode.value,
            result.pulse_model,
            _g12(result.t[i]),
            str(int(result.repeat[i])),
            _g12(result.f_x[i]),
            _g12(result.f_y[i]),
            _g12(result.f_z[i]),
            _g12(result.f[i]),
        ]))
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


class CSVFormatError(ValueError):
    def __init__(self, path, lineno: int, message: str):
        super().__init__(f"{path}:{lineno}: {message}")
        self.lineno = lineno


def read_csv(path) -> ExperimentResult:
    """Parse an experiment CSV; f is re-derived from the ratios, not trusted."""
    import csv

    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CSVFormatError(path, 1, "empty file") from None
        if tuple(h.strip() for h in header) != CSV_HEADER:
            raise CSVFormatError(path, 1, f"expected header {','.join(CSV_HEADER)}")
        modes, models, rows = set(), set(), []
        for lineno, rec in enumerate(reader, 2):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != len(CSV_HEADER):
                raise CSVFormatError(path, lineno, f"expected {len(CSV_HEADER)} fields")
            try:
                mode = Mode.parse(rec[0])
                t, rep = float(rec[2]), int(rec[3])
                fx, fy, fz, f = (float(x) for x in rec[4:8])
            except ValueError as exc:
                raise CSVFormatError(path, lineno, str(exc)) from None
            if abs((1.0 + fx + fy + fz) / 4.0 - f) > 1e-9:
                raise CSVFormatError(path, lineno, "f does not equal (1+f_x+f_y+f_z)/4")
            modes.add(mode)
            models.add(rec[1].strip())
            rows.append((t, rep, fx, fy, fz, f))
    if not rows:
        raise CSVFormatError(path, 2, "no data rows")
    if len(modes) != 1 or len(models) != 1:
        raise CSVFormatError(path, 2, "a file must hold exactly one mode and pulse model")
    arr = np.array(rows)
    return ExperimentResult(
        mode=modes.pop(),
        pulse_model=models.pop(),
        t=arr[:, 0],
        repeat=arr[:, 1].astype(int),
        f_x=arr[:, 2],
        f_y=arr[:, 3],
        f_z=arr[:, 4],
        f=(1.0 + arr[:, 2] + arr[:, 3] + arr[:, 4]) / 4.0,
        repeats=int(arr[:, 1].max()),
    )
