"""Simulation and pulse-synthesis toolkit for a three-qubit NMR phase-flip code."""

from .qcore import expm_hermitian, expect, kron, pauli_embed, unitary_fidelity
from .spinsys import SpinSystem, build_hamiltonian, load_spinsystem, default_spinsystem
from .noise import DephasingChannel, apply_channel, make_channel, p_from_delay
from .qecexp import (
    ExperimentResult, Mode, decode_unitary, encode_unitary, f_de_exact, f_ec_exact,
    run_experiment, toffoli_correct,
)
from .analysis import FitResult, crossover_time, first_order_ratio, fit_cubic, scale_fit

__version__ = "0.1.0"
