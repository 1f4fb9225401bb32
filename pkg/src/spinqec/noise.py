"""Uncorrelated T2 dephasing: per-qubit phase-flip channels.

Each qubit i suffers ``rho -> (1 - p_i) rho + p_i Z_i rho Z_i`` with
``p_i = (1 - exp(-t / T2_i)) / 2`` so transverse components decay as
``exp(-t / T2_i)``.  T1 never enters.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .qcore import I2, Z, kron_all, qubit_count
from .spinsys import SpinSystem


def p_from_delay(t: float, t2: float) -> float:
    """Phase-flip probability after a delay ``t`` for a spin with ``T2 = t2``."""
    if t < 0:
        raise ValueError(f"delay must be non-negative, got {t}")
    if not t2 > 0:
        raise ValueError(f"T2 must be positive, got {t2}")
    return -0.5 * math.expm1(-t / t2)


@dataclass(frozen=True)
class DephasingChannel:
    p: tuple[float, ...]
    kraus: tuple[np.ndarray, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        for i, pi in enumerate(self.p):
            if not 0.0 <= pi <= 0.5:
                raise ValueError(f"p[{i}]={pi} outside [0, 1/2]")
        singles = [
            (math.sqrt(1.0 - pi) * I2, math.sqrt(pi) * Z) for pi in self.p
        ]
        ops = tuple(kron_all(*combo) for combo in itertools.product(*singles))
        object.__setattr__(self, "kraus", ops)

    @property
    def n(self) -> int:
        return len(self.p)

    @property
    def coherence_factors(self) -> np.ndarray:
        """Per-qubit multiplier ``1 - 2 p_i`` on X and Y components."""
        return 1.0 - 2.0 * np.asarray(self.p)


def make_channel(t: float, s: SpinSystem) -> DephasingChannel:
    if len(s.t2) != s.n or any(v is None for v in s.t2):
        raise ValueError("every spin needs a T2 to build the dephasing channel")
    return DephasingChannel(tuple(p_from_delay(t, t2) for t2 in s.t2))


def apply_channel(ch: DephasingChannel, state: np.ndarray) -> np.ndarray:
    """Kraus-sum application ``sum_k K rho K^dagger``."""
    if state.shape != (2**ch.n, 2**ch.n):
        raise ValueError(f"state shape {state.shape} does not match {ch.n} qubits")
    out = np.zeros_like(state, dtype=complex)
    for k in ch.kraus:
        out += k @ state @ k.conj().T
    return out


def apply_channel_pauli(ch: DephasingChannel, state: np.ndarray) -> np.ndarray:
    """Same map by scaling matrix elements.

    Element ``(a, b)`` picks up ``prod_i (1 - 2 p_i)`` over qubits where the
    bits of ``a`` and ``b`` differ, which is the same as scaling every Pauli
    string by the coherence factors of its X/Y positions.
    """
    n = qubit_count(state.shape[0])
    if n != ch.n or state.shape[0] != state.shape[1]:
        raise ValueError(f"state shape {state.shape} does not match {ch.n} qubits")
    idx = np.arange(2**n)
    diff = idx[:, None] ^ idx[None, :]
    scale = np.ones(diff.shape)
    for i, c in enumerate(ch.coherence_factors):
        bit = 1 << (n - 1 - i)  # qubit 1 is the most significant bit
        scale = np.where(diff & bit, scale * c, scale)
    return state * scale
