"""Spin-system configuration and the internal NMR Hamiltonian."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np
import yaml

from .qcore import pauli_embed

WEAK = "weak"
STRONG = "strong"


class ConfigError(ValueError):
    """Raised for malformed or inconsistent spin-system configuration."""


@dataclass(frozen=True)
class SpinSystem:
    """Physical parameters of an n-spin molecule.

    Frequencies are in Hz and times in seconds.  ``j`` and ``regime`` are
    full symmetric n x n tuples; the diagonal is ignored.  ``t1`` entries may
    be ``None`` (T1 is carried for completeness but never enters the noise
    model).
    """

    nu: tuple[float, ...]
    j: tuple[tuple[float, ...], ...]
    regime: tuple[tuple[str, ...], ...]
    t2: tuple[float, ...]
    t1: tuple[Optional[float], ...] = ()
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        n = len(self.nu)
        if n < 1:
            raise ConfigError("spin system needs at least one spin")
        if len(self.j) != n or any(len(row) != n for row in self.j):
            raise ConfigError(f"couplings must be {n}x{n}")
        if len(self.regime) != n or any(len(row) != n for row in self.regime):
            raise ConfigError(f"coupling regimes must be {n}x{n}")
        for a in range(n):
            if self.j[a][a] != 0:
                raise ConfigError(f"couplings[{a}][{a}] must be zero")
            for b in range(a + 1, n):
                if self.j[a][b] != self.j[b][a]:
                    raise ConfigError(
                        f"couplings[{a}][{b}].j_hz={self.j[a][b]} differs from "
                        f"couplings[{b}][{a}].j_hz={self.j[b][a]}"
                    )
                if self.regime[a][b] != self.regime[b][a]:
                    raise ConfigError(f"couplings[{a}][{b}].regime is not symmetric")
                if self.regime[a][b] not in (WEAK, STRONG):
                    raise ConfigError(
                        f"couplings[{a}][{b}].regime must be 'weak' or 'strong'"
                    )
        if len(self.t2) != n:
            raise ConfigError(f"expected {n} t2 values, got {len(self.t2)}")
        for i, t2 in enumerate(self.t2):
            if not t2 > 0:
                raise ConfigError(f"spins[{i}].t2_s must be positive, got {t2}")
        if not self.t1:
            object.__setattr__(self, "t1", (None,) * n)
        elif len(self.t1) != n:
            raise ConfigError(f"expected {n} t1 values, got {len(self.t1)}")
        for i, (t1, t2) in enumerate(zip(self.t1, self.t2)):
            if t1 is not None and t1 < t2 / 2:
                raise ConfigError(f"spins[{i}].t1_s={t1} is below t2/2")
        if not self.labels:
            object.__setattr__(self, "labels", tuple(f"S{i + 1}" for i in range(n)))
        elif len(self.labels) != n:
            raise ConfigError(f"expected {n} labels, got {len(self.labels)}")

    @property
    def n(self) -> int:
        return len(self.nu)

    @property
    def dim(self) -> int:
        return 2**self.n

    @classmethod
    def from_arrays(
        cls,
        nu: Sequence[float],
        j: Any,
        t2: Sequence[float],
        strong: Sequence[tuple[int, int]] = (),
        t1: Sequence[Optional[float]] = (),
        labels: Sequence[str] = (),
    ) -> "SpinSystem":
        """Convenience constructor; ``strong`` lists 1-based pairs."""
        n = len(nu)
        jm = np.asarray(j, dtype=float).reshape(n, n)
        reg = [[WEAK] * n for _ in range(n)]
        for a, b in strong:
            reg[a - 1][b - 1] = reg[b - 1][a - 1] = STRONG
        return cls(
            nu=tuple(float(v) for v in nu),
            j=tuple(tuple(float(v) for v in row) for row in jm),
            regime=tuple(tuple(row) for row in reg),
            t2=tuple(float(v) for v in t2),
            t1=tuple(t1),
            labels=tuple(labels),
        )

    def with_regime(self, a: int, b: int, regime: str) -> "SpinSystem":
        """Copy with the (1-based) pair ``a, b`` switched to ``regime``."""
        reg = [list(row) for row in self.regime]
        reg[a - 1][b - 1] = reg[b - 1][a - 1] = regime
        return SpinSystem(
            self.nu, self.j, tuple(tuple(r) for r in reg), self.t2, self.t1, self.labels
        )

    def with_t2(self, t2: Sequence[float]) -> "SpinSystem":
        return SpinSystem(self.nu, self.j, self.regime, tuple(t2), (), self.labels)


def build_hamiltonian(s: SpinSystem) -> np.ndarray:
    """Internal Hamiltonian in rad/s.

    ``H = -pi sum_i nu_i Z_i + (pi/2) sum_{i<j} J_ij K_ij`` where ``K_ij`` is
    ``Z_i Z_j`` for weakly coupled pairs and ``X_i X_j + Y_i Y_j + Z_i Z_j``
    for strongly coupled ones.
    """
    n = s.n
    h = np.zeros((s.dim, s.dim), dtype=complex)
    for i in range(n):
        if s.nu[i]:
            h -= math.pi * s.nu[i] * pauli_embed(n, i + 1, "Z")
    for a in range(n):
        for b in range(a + 1, n):
            jab = s.j[a][b]
            if not jab:
                continue
            paulis = "XYZ" if s.regime[a][b] == STRONG else "Z"
            for p in paulis:
                h += (
                    0.5
                    * math.pi
                    * jab
                    * (pauli_embed(n, a + 1, p) @ pauli_embed(n, b + 1, p))
                )
    return h


def _number(value: Any, key: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{key}: expected a number, got {value!r}")
    return float(value)


def parse_spinsystem(doc: Any) -> SpinSystem:
    """Build a :class:`SpinSystem` from an already-parsed config mapping."""
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a mapping")
    if "spins" not in doc:
        raise ConfigError("missing key: spins")
    spins = doc["spins"]
    if not isinstance(spins, list) or not spins:
        raise ConfigError("spins: expected a non-empty list")
    n = len(spins)
    labels, nu, t2, t1 = [], [], [], []
    for i, spin in enumerate(spins):
        if not isinstance(spin, dict):
            raise ConfigError(f"spins[{i}]: expected a mapping")
        for key in ("label", "nu_hz", "t2_s"):
            if key not in spin:
                raise ConfigError(f"missing key: spins[{i}].{key}")
        labels.append(str(spin["label"]))
        nu.append(_number(spin["nu_hz"], f"spins[{i}].nu_hz"))
        t2.append(_number(spin["t2_s"], f"spins[{i}].t2_s"))
        t1_raw = spin.get("t1_s")
        t1.append(None if t1_raw is None else _number(t1_raw, f"spins[{i}].t1_s"))

    if "couplings" not in doc:
        raise ConfigError("missing key: couplings")
    rows = doc["couplings"]
    if not isinstance(rows, list) or len(rows) != n:
        raise ConfigError(f"couplings: expected {n} rows")
    j = [[0.0] * n for _ in range(n)]
    reg = [[WEAK] * n for _ in range(n)]
    for a, row in enumerate(rows):
        if not isinstance(row, list) or len(row) != n:
            raise ConfigError(f"couplings[{a}]: expected {n} entries")
        for b, entry in enumerate(row):
            if a == b and entry in (None, {}):
                continue
            if not isinstance(entry, dict):
                raise ConfigError(f"couplings[{a}][{b}]: expected a mapping")
            if "j_hz" not in entry:
                raise ConfigError(f"missing key: couplings[{a}][{b}].j_hz")
            j[a][b] = _number(entry["j_hz"], f"couplings[{a}][{b}].j_hz")
            regime = entry.get("regime", WEAK)
            if regime not in (WEAK, STRONG):
                raise ConfigError(
                    f"couplings[{a}][{b}].regime: expected weak|strong, got {regime!r}"
                )
            reg[a][b] = regime
    return SpinSystem(
        nu=tuple(nu),
        j=tuple(tuple(r) for r in j),
        regime=tuple(tuple(r) for r in reg),
        t2=tuple(t2),
        t1=tuple(t1),
        labels=tuple(labels),
    )


def load_spinsystem(path: str | Path) -> SpinSystem:
    """Read a YAML spin-system config file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML: {exc}") from exc
    return parse_spinsystem(doc)


def default_config_path() -> Path:
    return Path(__file__).parent / "data" / "tce.yaml"


def default_spinsystem() -> SpinSystem:
    return load_spinsystem(default_config_path())
