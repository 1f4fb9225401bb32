"""Pulse sequences, their propagators, and the refocusing echo used during
the variable delay between encoding and decoding."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .qcore import expm_hermitian, pauli_embed, unitary_fidelity
from .spinsys import SpinSystem, build_hamiltonian
from . import grape

DELAY = "delay"
HARD = "hard_pulse"
SHAPED = "shaped_pulse"

IDEAL = "ideal"
TIMED = "timed"

HARD_DURATION = 20e-6
SHAPED_DURATION = 2e-3
SEARCH_PHASES = (0.0, 0.5 * math.pi, math.pi, 1.5 * math.pi)

# Pulse groups between equal echo intervals.  The first and third groups
# realize Y(C1) X(C2), which maps the carbon-pair Hamiltonian to its
# negative plus a conserved Z2 Z3 term; the second and fourth add a proton
# flip that cancels that remainder together with the proton Zeeman term.
DEFAULT_TEMPLATE: tuple[tuple[int, ...], ...] = ((2, 3), (1, 3), (2, 3), (1, 3))


class LinkError(RuntimeError):
    """A shaped-pulse segment has no resolvable waveform."""


@dataclass(frozen=True)
class Segment:
    kind: str
    duration: float = 0.0
    spin: int = 0  # hard pulse target
    angle: float = math.pi
    phase: float = 0.0
    pulse: Optional[grape.ControlPulse] = field(default=None, compare=False)
    pulse_ref: str = ""
    spins: tuple[int, ...] = ()  # shaped pulse nominal targets

    def __post_init__(self):
        if self.kind not in (DELAY, HARD, SHAPED):
            raise ValueError(f"unknown segment kind {self.kind!r}")
        if self.duration < 0:
            raise ValueError(f"segment duration must be >= 0, got {self.duration}")
        if self.kind == HARD:
            if not 0 < self.angle <= 2 * math.pi:
                raise ValueError(f"hard pulse angle {self.angle} outside (0, 2pi]")
            if self.spin < 1:
                raise ValueError("hard pulse needs a target spin")


def delay(t: float) -> Segment:
    return Segment(DELAY, t)


def hard_pulse(spin: int, phase: float = 0.0, angle: float = math.pi,
               duration: float = HARD_DURATION) -> Segment:
    return Segment(HARD, duration, spin=spin, angle=angle, phase=phase)


def shaped_pulse(pulse: Optional[grape.ControlPulse], spins: Sequence[int],
                 phase: float = 0.0, ref: str = "",
                 duration: Optional[float] = None) -> Segment:
    if duration is None:
        duration = pulse.duration if pulse is not None else SHAPED_DURATION
    return Segment(SHAPED, duration, phase=phase, pulse=pulse, pulse_ref=ref,
                   spins=tuple(spins))


@dataclass(frozen=True)
class PulseSequence:
    segments: tuple[Segment, ...] = ()
    name: str = ""

    @property
    def total_duration(self) -> float:
        return math.fsum(seg.duration for seg in self.segments)

    @property
    def n_pulses(self) -> int:
        return sum(seg.kind != DELAY for seg in self.segments)

    def __add__(self, other: "PulseSequence") -> "PulseSequence":
        return PulseSequence(self.segments + other.segments, self.name)


def _rotation(n: int, spin: int, angle: float, phase: float) -> np.ndarray:
    gen = math.cos(phase) * pauli_embed(n, spin, "X") + math.sin(phase) * pauli_embed(
        n, spin, "Y"
    )
    return expm_hermitian(0.5 * gen, angle)


def segment_propagator(seg: Segment, s: SpinSystem, model: str = TIMED,
                       h: Optional[np.ndarray] = None) -> np.ndarray:
    """Unitary for one segment.

    Under ``ideal`` the pulses are instantaneous rotations (a shaped pulse
    becomes its nominal pi rotation on ``seg.spins``); under ``timed`` hard
    pulses evolve under the Hamiltonian plus a constant r.f. term for their
    duration and shaped pulses use their synthesized waveform.
    """
    if model not in (IDEAL, TIMED):
        raise ValueError(f"unknown pulse model {model!r}")
    if h is None:
        h = build_hamiltonian(s)
    if seg.kind == DELAY:
        return expm_hermitian(h, seg.duration)
    if seg.kind == HARD:
        if not 1 <= seg.spin <= s.n:
            raise IndexError(f"hard pulse spin {seg.spin} out of range 1..{s.n}")
        if model == IDEAL or seg.duration == 0:
            # zero duration is the delta-pulse limit in either model
            return _rotation(s.n, seg.spin, seg.angle, seg.phase)
        omega = seg.angle / seg.duration
        rf = omega * 0.5 * (
            math.cos(seg.phase) * pauli_embed(s.n, seg.spin, "X")
            + math.sin(seg.phase) * pauli_embed(s.n, seg.spin, "Y")
        )
        return expm_hermitian(h + rf, seg.duration)
    # shaped
    if model == IDEAL:
        u = np.eye(s.dim, dtype=complex)
        for spin in seg.spins:
            u = _rotation(s.n, spin, seg.angle, seg.phase) @ u
        return u
    if seg.pulse is None:
        raise LinkError(
            f"shaped pulse {seg.pulse_ref or '<unnamed>'} has no waveform loaded"
        )
    return grape.pulse_propagator(seg.pulse.phase_shifted(seg.phase), s)


def sequence_propagator(seq: PulseSequence | Iterable[Segment], s: SpinSystem,
                        model: str = TIMED) -> np.ndarray:
    segments = seq.segments if isinstance(seq, PulseSequence) else tuple(seq)
    h = build_hamiltonian(s)
    u = np.eye(s.dim, dtype=complex)
    for seg in segments:
        u = segment_propagator(seg, s, model, h) @ u
    return u


def verify_refocusing(seq: PulseSequence, s: SpinSystem, model: str = TIMED) -> float:
    """Overlap of the sequence propagator with the identity, ``|Tr U| / d``."""
    return unitary_fidelity(np.eye(s.dim), sequence_propagator(seq, s, model))


# --- refocusing template ---------------------------------------------------

def _slots(template) -> list[int]:
    return [spin for group in template for spin in group]


def _interval_delays(template, total_delay: float, hard_spins, hard_duration,
                     shaped_duration) -> list[float]:
    """Free-evolution delay before each pulse group.

    Shaped pulses realize their target including internal evolution, so they
    are excluded from the echo timing; hard pulses are counted as part of
    the interval they end, so every echo interval has the same length.
    """
    n_shaped = sum(spin not in hard_spins for spin in _slots(template))
    interval = (total_delay - n_shaped * shaped_duration) / len(template)
    delays = []
    for group in template:
        d = interval - hard_duration * sum(spin in hard_spins for spin in group)
        if d < 0:
            raise ValueError(
                f"total delay {total_delay} s is too short for the pulse template"
            )
        delays.append(d)
    return delays


def make_refocusing_sequence(
    s: SpinSystem,
    total_delay: float,
    phases: Sequence[float],
    template: Sequence[Sequence[int]] = DEFAULT_TEMPLATE,
    pulses: Optional[Mapping[int, grape.ControlPulse]] = None,
    hard_spins: Sequence[int] = (1,),
    hard_duration: float = HARD_DURATION,
    shaped_duration: float = SHAPED_DURATION,
) -> PulseSequence:
    """Echo sequence of ``total_delay`` wall time with the given pulse phases.

    ``template`` lists the pi-pulse groups; each is preceded by an equal echo
    interval.  Spins in ``hard_spins`` get rectangular pulses, the others get
    selective shaped pulses taken from ``pulses`` (spin -> waveform).
    """
    if not total_delay > 0:
        raise ValueError(f"total delay must be positive, got {total_delay}")
    slots = _slots(template)
    if len(phases) != len(slots):
        raise ValueError(f"template has {len(slots)} pulse slots, got {len(phases)} phases")
    pulses = pulses or {}
    delays = _interval_delays(template, total_delay, hard_spins, hard_duration,
                              shaped_duration)
    segs: list[Segment] = []
    k = 0
    for group, d in zip(template, delays):
        segs.append(delay(d))
        for spin in group:
            if not 1 <= spin <= s.n:
                raise IndexError(f"template spin {spin} out of range 1..{s.n}")
            if spin in hard_spins:
                segs.append(hard_pulse(spin, phases[k], duration=hard_duration))
            else:
                p = pulses.get(spin)
                dur = p.duration if p is not None else shaped_duration
                if not math.isclose(dur, shaped_duration, rel_tol=1e-9, abs_tol=1e-15):
                    raise ValueError(
                        f"shaped pulse for spin {spin} lasts {dur} s, expected {shaped_duration} s"
                    )
                segs.append(shaped_pulse(p, (spin,), phases[k],
                                         ref=f"selective_spin{spin}.pulse",
                                         duration=shaped_duration))
            k += 1
    # fold rounding into the last delay so the wall time is exact
    seq = PulseSequence(tuple(segs), name="refocus")
    excess = seq.total_duration - total_delay
    if excess:
        first = segs[0]
        segs[0] = delay(first.duration - excess)
        seq = PulseSequence(tuple(segs), name="refocus")
    return seq


@lru_cache(maxsize=16)
def selective_pulses(s: SpinSystem, spins: tuple[int, ...] = (2, 3),
                     duration: float = SHAPED_DURATION,
                     goal: float = 0.99999,
                     seed: int = grape.DEFAULT_SEED) -> dict[int, grape.ControlPulse]:
    """Synthesize (and memoize) selective pi pulses for the shaped slots."""
    out = {}
    for spin in spins:
        p, _ = grape.selective_pi_pulse(s, spin, duration, goal=goal, seed=seed)
        out[spin] = p
    return out


def phase_search(
    s: SpinSystem,
    total_delay: float,
    template: Sequence[Sequence[int]] = DEFAULT_TEMPLATE,
    pulses: Optional[Mapping[int, grape.ControlPulse]] = None,
    model: str = TIMED,
    hard_spins: Sequence[int] = (1,),
    hard_duration: float = HARD_DURATION,
    shaped_duration: float = SHAPED_DURATION,
    candidates: Sequence[float] = SEARCH_PHASES,
    tie_tol: float = 1e-12,
) -> tuple[tuple[float, ...], float]:
    """Exhaustive search over per-slot phases maximizing the refocusing fidelity.

    Ties (within ``tie_tol``) go to the lexicographically smallest phase
    vector in the order of ``candidates``.
    """
    slots = _slots(template)
    if len(slots) > 8:
        raise ValueError(f"template has {len(slots)} slots; the search allows at most 8")
    shaped_spins = tuple(sorted({sp for sp in slots if sp not in hard_spins}))
    if model == TIMED and pulses is None and shaped_spins:
        pulses = selective_pulses(s, shaped_spins, shaped_duration)
    zero = make_refocusing_sequence(s, total_delay, [0.0] * len(slots), template,
                                    pulses, hard_spins, hard_duration, shaped_duration)
    h = build_hamiltonian(s)

    # one propagator per (slot, phase) and one per delay
    tables: dict[int, np.ndarray] = {}
    stages: list[tuple[str, object]] = []
    k = 0
    for seg in zero.segments:
        if seg.kind == DELAY:
            stages.append(("delay", segment_propagator(seg, s, model, h)))
            continue
        stack = []
        for phi in candidates:
            variant = Segment(seg.kind, seg.duration, seg.spin, seg.angle, phi,
                              seg.pulse, seg.pulse_ref, seg.spins)
            stack.append(segment_propagator(variant, s, model, h))
        stages.append(("slot", np.array(stack)))
        k += 1

    # grow the candidate tree; index = base-len(candidates) digits, slot 1 first
    u = np.eye(s.dim, dtype=complex)[None]
    for kind, mat in stages:
        if kind == "delay":
            u = mat @ u
        else:
            u = np.einsum("qij,mjk->mqik", mat, u).reshape(-1, s.dim, s.dim)
    fid = np.abs(np.trace(u, axis1=1, axis2=2)) / s.dim
    best = fid.max()
    idx = int(np.flatnonzero(fid >= best - tie_tol)[0])
    digits = []
    base = len(candidates)
    for _ in slots:
        digits.append(idx % base)
        idx //= base
    phases = tuple(candidates[q] for q in reversed(digits))
    return phases, float(best)


# --- text serialization ----------------------------------------------------

def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _mask(spins: Sequence[int], n: int) -> str:
    return "".join("1" if i in spins else "0" for i in range(1, n + 1))


def write_sequence(seq: PulseSequence, path: str | Path, n: int = 3,
                   pulse_files: Optional[Mapping[int, str]] = None) -> None:
    """One segment per line; shaped pulses name their waveform file."""
    lines = []
    for seg in seq.segments:
        if seg.kind == DELAY:
            lines.append(f"DELAY {_fmt(seg.duration)}")
        elif seg.kind == HARD:
            lines.append(
                f"HARD {seg.spin} {_fmt(seg.angle)} {_fmt(seg.phase)} {_fmt(seg.duration)}"
            )
        else:
            ref = seg.pulse_ref
            if pulse_files and seg.spins and seg.spins[0] in pulse_files:
                ref = pulse_files[seg.spins[0]]
            if not ref or any(c.isspace() for c in ref):
                raise ValueError(f"shaped segment needs a whitespace-free file name, got {ref!r}")
            line = f"SHAPED {ref} {_mask(seg.spins, n)}"
            if seg.phase:
                line += f" {_fmt(seg.phase)}"
            lines.append(line)
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def read_sequence(path: str | Path, load_pulses: bool = True) -> PulseSequence:
    """Parse a sequence file; pulse files resolve relative to its directory.

    Missing pulse files are tolerated here and surface as :class:`LinkError`
    when a timed propagator is requested.
    """
    path = Path(path)
    segs = []
    for lineno, raw in enumerate(path.read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        key = parts[0].upper()
        try:
            if key == "DELAY" and len(parts) == 2:
                segs.append(delay(float(parts[1])))
            elif key == "HARD" and len(parts) == 5:
                segs.append(hard_pulse(int(parts[1]), float(parts[3]),
                                       float(parts[2]), float(parts[4])))
            elif key == "SHAPED" and len(parts) in (3, 4):
                ref, mask = parts[1], parts[2]
                if set(mask) - {"0", "1"}:
                    raise ValueError(f"bad spin mask {mask!r}")
                spins = tuple(i + 1 for i, c in enumerate(mask) if c == "1")
                phase = float(parts[3]) if len(parts) == 4 else 0.0
                pulse_path = path.parent / ref
                pulse = None
                if load_pulses and pulse_path.exists():
                    pulse = grape.read_pulse(pulse_path)
                segs.append(shaped_pulse(pulse, spins, phase, ref=ref))
            else:
                raise ValueError(f"unrecognized segment {line!r}")
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from None
    return PulseSequence(tuple(segs), name=path.stem)
