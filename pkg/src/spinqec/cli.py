"""Command-line entry point: ``spinqec {grape,refocus,simulate,analyze,all}``.

Exit status: 0 success, 2 configuration error, 3 a synthesis or refocusing
goal was missed, 4 a required pulse file is missing, 5 malformed CSV input.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import yaml

from . import analysis, control, grape, qecexp
from .qecexp import Mode
from .spinsys import ConfigError, SpinSystem, default_config_path, load_spinsystem, parse_spinsystem

log = logging.getLogger("spinqec")

EXIT_CONFIG = 2
EXIT_GOAL = 3
EXIT_MISSING_PULSE = 4
EXIT_BAD_CSV = 5

# name -> (target builder, duration in seconds)
CODE_PULSES = {
    "encode": (qecexp.encode_unitary, 8e-3),
    "decode": (qecexp.decode_unitary, 8e-3),
    "decode_correct": (qecexp.decode_correct_unitary, 13.6e-3),
}
REFOCUS_BOUND = 0.9996


class CLIError(Exception):
    def __init__(self, message: str, status: int):
        super().__init__(message)
        self.status = status


@dataclass
class RunConfig:
    spinsystem: Path = field(default_factory=default_config_path)
    t_start: float = 0.0
    t_stop: float = 0.2
    t_count: int = 21
    modes: tuple[Mode, ...] = (Mode.EC, Mode.DE, Mode.FED)
    pulse_model: Optional[str] = None
    dt: float = grape.DEFAULT_DT
    cap: float = grape.DEFAULT_CAP
    seed: int = grape.DEFAULT_SEED
    goal: float = 0.999
    selective_goal: float = 0.99999
    max_iter: int = 2000
    refocus_delay: float = 0.2
    repeats: int = 1
    noise_sigma: float = 0.0
    noise_in_pulses: bool = False
    out: Path = Path("spinqec-out")

    def validate(self, fitting: bool = False) -> None:
        if not 0 < self.goal < 1:
            raise ConfigError(f"goal must lie in (0, 1), got {self.goal}")
        if not 0 < self.selective_goal < 1:
            raise ConfigError(f"selective_goal must lie in (0, 1), got {self.selective_goal}")
        if self.t_count < 1 or self.t_stop < self.t_start or self.t_start < 0:
            raise ConfigError("t-grid needs 0 <= t_start <= t_stop and t_count >= 1")
        if fitting and self.t_count < 5:
            raise ConfigError("fitting needs a t-grid with at least 5 points")
        if self.pulse_model not in (None, qecexp.IDEAL, qecexp.GRAPE):
            raise ConfigError(f"pulse model must be ideal or grape, got {self.pulse_model!r}")
        if self.repeats < 1:
            raise ConfigError("repeats must be at least 1")
        if self.noise_sigma < 0 or (self.noise_sigma and self.repeats < 2):
            raise ConfigError("noise_sigma must be >= 0 and needs repeats > 1")
        if self.dt <= 0 or self.cap <= 0 or self.max_iter < 0:
            raise ConfigError("GRAPE dt, cap and max_iter must be positive")

    @property
    def times(self) -> np.ndarray:
        return np.linspace(self.t_start, self.t_stop, self.t_count)

    def system(self) -> SpinSystem:
        return load_spinsystem(self.spinsystem)


_CONFIG_KEYS = {
    "spinsystem", "t_start", "t_stop", "t_count", "modes", "pulse_model", "dt", "cap",
    "seed", "goal", "selective_goal", "max_iter", "refocus_delay", "repeats",
    "noise_sigma", "noise_in_pulses", "out",
}


def parse_modes(text) -> tuple[Mode, ...]:
    items = text.split(",") if isinstance(text, str) else list(text)
    modes = []
    for item in items:
        if str(item).strip():
            try:
                modes.append(Mode.parse(str(item)))
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
    if not modes:
        raise ConfigError("no experiment modes selected")
    return tuple(dict.fromkeys(modes))


def load_run_config(path: Optional[str]) -> RunConfig:
    """Run settings from YAML.

    A file with a top-level ``spins`` key is taken as the spin system itself;
    otherwise it is a run config whose optional ``spinsystem`` entry is a
    path relative to the config file.
    """
    cfg = RunConfig()
    if path is None:
        return cfg
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config root must be a mapping")
    if "spins" in doc:
        parse_spinsystem(doc)
        return replace(cfg, spinsystem=path)
    unknown = set(doc) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"{path}: unknown config keys {sorted(unknown)}")
    values = dict(doc)
    try:
        if "spinsystem" in values:
            values["spinsystem"] = (path.parent / values["spinsystem"]).resolve()
        if "out" in values:
            values["out"] = Path(values["out"])
        if "modes" in values:
            values["modes"] = parse_modes(values["modes"])
        for key in ("t_start", "t_stop", "dt", "cap", "goal", "selective_goal",
                    "refocus_delay", "noise_sigma"):
            if key in values:
                values[key] = float(values[key])
        for key in ("t_count", "seed", "max_iter", "repeats"):
            if key in values:
                values[key] = int(values[key])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return replace(cfg, **values)


def resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = load_run_config(getattr(args, "config", None))
    overrides = {}
    for key in ("t_start", "t_stop", "t_count", "pulse_model", "seed", "goal",
                "repeats", "noise_sigma", "refocus_delay", "max_iter"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    if getattr(args, "mode", None):
        overrides["modes"] = parse_modes(args.mode)
    if getattr(args, "out", None):
        overrides["out"] = Path(args.out)
    if getattr(args, "spinsystem", None):
        overrides["spinsystem"] = Path(args.spinsystem)
    if getattr(args, "noise_in_pulses", False):
        overrides["noise_in_pulses"] = True
    env_seed = os.environ.get("SPINQEC_SEED")
    if env_seed:
        try:
            overrides["seed"] = int(env_seed)
        except ValueError:
            raise ConfigError(f"SPINQEC_SEED must be an integer, got {env_seed!r}") from None
    cfg = replace(cfg, **overrides)
    if not 0 <= cfg.seed < 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    return cfg


def _dirs(cfg: RunConfig) -> tuple[Path, Path, Path]:
    pulses, data, reports = (cfg.out / d for d in ("pulses", "data", "reports"))
    for d in (pulses, data, reports):
        d.mkdir(parents=True, exist_ok=True)
    return pulses, data, reports


def _seed_for(cfg: RunConfig, k: int) -> int:
    return (cfg.seed + 7919 * k) % 2**32


def _g(x: float) -> str:
    return format(float(x), ".12g")


# --- subcommands -----------------------------------------------------------

def cmd_grape(cfg: RunConfig) -> int:
    """Synthesize the encode, decode and decode+correct pulses."""
    cfg.validate()
    s = cfg.system()
    pulse_dir, _, report_dir = _dirs(cfg)
    lines = ["GRAPE synthesis", f"seed {cfg.seed}", f"goal {_g(cfg.goal)}",
             f"slice {_g(cfg.dt)} s", f"amplitude cap {_g(cfg.cap)} rad/s", ""]
    missed = []
    for k, (name, (build, duration)) in enumerate(CODE_PULSES.items()):
        n_slices = round(duration / cfg.dt)
        init = grape.random_pulse(s.n, n_slices, cfg.dt, seed=_seed_for(cfg, k))
        pulse, rep = grape.grape_optimize(
            init, s, build(), goal=cfg.goal, max_iter=cfg.max_iter, cap=cfg.cap,
            target_name=name,
        )
        grape.write_pulse(pulse, pulse_dir / f"{name}.pulse")
        ok = rep.final_fidelity >= cfg.goal
        if not ok:
            missed.append(name)
        lines.append(
            f"{name:15s} {_g(n_slices * cfg.dt * 1e3)} ms  {n_slices} slices  "
            f"fidelity {rep.final_fidelity:.12f}  iterations {rep.iterations}  "
            f"exit {rep.exit_reason}  {'OK' if ok else 'MISSED'}"
        )
        log.info("%s: fidelity %.6f (%s)", name, rep.final_fidelity, rep.exit_reason)
    text = "\n".join(lines) + "\n"
    (report_dir / "grape.txt").write_text(text)
    print(text, end="")
    if missed:
        raise CLIError(f"GRAPE goal missed for: {', '.join(missed)}", EXIT_GOAL)
    return 0


def cmd_refocus(cfg: RunConfig) -> int:
    """Selective pi pulses plus the phase search for the refocusing echo."""
    cfg.validate()
    s = cfg.system()
    pulse_dir, _, report_dir = _dirs(cfg)
    shaped = (2, 3)
    pulses, lines = {}, ["Refocusing sequence", f"total delay {_g(cfg.refocus_delay)} s", ""]
    for k, spin in enumerate(shaped):
        p, rep = grape.selective_pi_pulse(
            s, spin, control.SHAPED_DURATION, dt=cfg.dt, goal=cfg.selective_goal,
            max_iter=cfg.max_iter, seed=_seed_for(cfg, 10 + k), cap=cfg.cap,
        )
        pulses[spin] = p
        grape.write_pulse(p, pulse_dir / f"selective_spin{spin}.pulse")
        lines.append(f"selective pi on spin {spin} ({s.labels[spin - 1]}): "
                     f"fidelity {rep.final_fidelity:.12f}  exit {rep.exit_reason}")
    phases, fid = control.phase_search(s, cfg.refocus_delay, pulses=pulses)
    seq = control.make_refocusing_sequence(s, cfg.refocus_delay, phases, pulses=pulses)
    control.write_sequence(seq, pulse_dir / "refocus.seq", s.n,
                           {sp: f"selective_spin{sp}.pulse" for sp in shaped})
    zero = control.verify_refocusing(
        control.make_refocusing_sequence(s, cfg.refocus_delay, [0.0] * len(phases),
                                         pulses=pulses), s)
    ok = fid >= REFOCUS_BOUND
    lines += [
        "phases (units of pi/2) " + " ".join(str(round(p / (math.pi / 2))) for p in phases),
        f"fidelity |Tr U|/8 {fid:.12f}  ({'OK' if ok else 'BELOW'} bound {REFOCUS_BOUND})",
        f"all-zero phases fidelity {zero:.12f}",
    ]
    text = "\n".join(lines) + "\n"
    (report_dir / "refocus.txt").write_text(text)
    print(text, end="")
    if not ok:
        raise CLIError(f"refocusing fidelity {fid:.6f} below {REFOCUS_BOUND}", EXIT_GOAL)
    return 0


def _load_pulse_set(cfg: RunConfig, s: SpinSystem) -> qecexp.PulseSet:
    pulse_dir = cfg.out / "pulses"
    loaded = {}
    for name in CODE_PULSES:
        path = pulse_dir / f"{name}.pulse"
        if not path.exists():
            raise CLIError(f"missing pulse file {path}; run 'spinqec grape' first",
                           EXIT_MISSING_PULSE)
        loaded[name] = grape.read_pulse(path)
    return qecexp.PulseSet.from_pulses(s, loaded["encode"], loaded["decode"],
                                       loaded["decode_correct"])


def csv_name(mode: Mode, model: str) -> str:
    return f"{mode.value.lower()}_{model}.csv"


def cmd_simulate(cfg: RunConfig, model: Optional[str] = None) -> list[Path]:
    cfg.validate()
    model = model or cfg.pulse_model or qecexp.IDEAL
    s = cfg.system()
    _, data_dir, _ = _dirs(cfg)
    pulses = _load_pulse_set(cfg, s) if model == qecexp.GRAPE else None
    written = []
    for k, mode in enumerate(cfg.modes):
        res = qecexp.run_experiment(
            mode, s, cfg.times, pulses=pulses, repeats=cfg.repeats,
            noise_sigma=cfg.noise_sigma, seed=_seed_for(cfg, 100 + k),
            noise_in_pulses=cfg.noise_in_pulses,
        )
        path = data_dir / csv_name(mode, model)
        qecexp.write_csv(res, path)
        written.append(path)
        print(f"{mode.value} ({model}): f = (1 + f_x + f_y + f_z)/4")
        print(f"  {'t_s':>8s} {'f_x':>10s} {'f_y':>10s} {'f_z':>10s} {'f':>10s}")
        for i in range(len(res)):
            print(f"  {res.t[i]:8.4f} {res.f_x[i]:10.6f} {res.f_y[i]:10.6f} "
                  f"{res.f_z[i]:10.6f} {res.f[i]:10.6f}")
    return written


def _read_csvs(paths: Sequence[Path]) -> dict[tuple[Mode, str], qecexp.ExperimentResult]:
    out = {}
    for p in paths:
        try:
            res = qecexp.read_csv(p)
        except qecexp.CSVFormatError as exc:
            raise CLIError(str(exc), EXIT_BAD_CSV) from None
        except OSError as exc:
            raise CLIError(f"cannot read {p}: {exc}", EXIT_BAD_CSV) from None
        out[(res.mode, res.pulse_model)] = res
    return out


def analyze(
    paths: Sequence[Path],
    ideal_paths: Sequence[Path] = (),
    bracket: Optional[tuple[float, float]] = None,
    report_dir: Optional[Path] = None,
) -> str:
    """Fit every dataset and derive ratios, scale factors and the crossover."""
    data = _read_csvs(paths)
    ideal = _read_csvs(ideal_paths)
    lines = ["Decay-curve analysis", ""]
    def by_mode(d):
        return sorted(d.items(), key=lambda kv: list(Mode).index(kv[0][0]))

    def fit_all(d, sink):
        for (mode, model), res in by_mode(d):
            ts, fs = res.averaged()
            try:
                fit = analysis.fit_cubic(np.c_[ts, fs])
            except analysis.FitError as exc:
                lines.append(f"[{mode.value} {model}] fit failed: {exc}")
                continue
            if sink is not None:
                sink[mode] = fit
            lines.append(analysis.fit_report(f"{mode.value} {model}", fit))
            if report_dir is not None:
                (report_dir / f"fit_{mode.value.lower()}_{model}.csv").write_text(analysis.fit_csv(fit))

    fits: dict[Mode, analysis.FitResult] = {}
    t_max = max(float(res.t.max()) for res in data.values())
    fit_all(data, fits)
    if ideal:
        lines.append("")
        lines.append("Reference (ideal) fits")
        fit_all(ideal, None)
    lines.append("")
    lines.append("First-order ratios a1(x)/a1(EC)")
    for num in (Mode.DE, Mode.FED):
        if num in fits and Mode.EC in fits:
            r = analysis.first_order_ratio(fits[num], fits[Mode.EC])
            lines.append(f"  {num.value}/EC: {r}")
            if not r.defined:
                inv = analysis.first_order_ratio(fits[Mode.EC], fits[num])
                lines.append(f"  EC/{num.value}: {inv}")
    if ideal:
        lines.append("")
        lines.append("Scale factor A in f = A f_ideal")
        for (mode, model), res in by_mode(data):
            ref = next((r for (m, _), r in ideal.items() if m is mode), None)
            if ref is None:
                continue
            te, fe = res.averaged()
            ti, fi = ref.averaged()
            try:
                a, da = analysis.scale_fit(np.c_[te, fe], np.c_[ti, fi])
                lines.append(f"  {mode.value}: A = {_g(a)} +/- {_g(da)}")
            except ValueError as exc:
                lines.append(f"  {mode.value}: {exc}")
    if Mode.EC in fits and Mode.FED in fits:
        lo, hi = bracket if bracket else (0.0, t_max)
        try:
            tc = analysis.crossover_time(fits[Mode.EC], fits[Mode.FED], (lo, hi))
            lines.append("")
            lines.append(f"EC/FED crossover: {tc:.6f} s (bracket {_g(lo)}..{_g(hi)} s)")
        except analysis.BracketError as exc:
            lines.append("")
            lines.append(f"EC/FED crossover: none ({exc})")
    text = "\n".join(lines) + "\n"
    if report_dir is not None:
        (report_dir / "analysis.txt").write_text(text)
    return text


def cmd_analyze(paths, ideal_paths=(), bracket=None, report_dir=None) -> int:
    if report_dir is not None:
        Path(report_dir).mkdir(parents=True, exist_ok=True)
    print(analyze([Path(p) for p in paths], [Path(p) for p in ideal_paths], bracket,
                  None if report_dir is None else Path(report_dir)), end="")
    return 0


def cmd_all(cfg: RunConfig) -> int:
    """Synthesis, refocusing check, simulation in both models, analysis."""
    cfg.validate(fitting=True)
    model = cfg.pulse_model or qecexp.GRAPE
    status = 0
    if model == qecexp.GRAPE:
        cmd_grape(cfg)
        try:
            cmd_refocus(cfg)
        except CLIError as exc:
            log.error("%s", exc)
            status = exc.status
    ideal_paths = cmd_simulate(cfg, qecexp.IDEAL)
    paths = ideal_paths
    if model == qecexp.GRAPE:
        paths = cmd_simulate(cfg, qecexp.GRAPE)
    _, _, report_dir = _dirs(cfg)
    cmd_analyze(paths, ideal_paths if model == qecexp.GRAPE else (), None, report_dir)
    return status


# --- argument parsing --------------------------------------------------------

def _add_run_flags(p: argparse.ArgumentParser, with_grid: bool = True) -> None:
    p.add_argument("--config", help="run config or spin-system YAML file")
    p.add_argument("--spinsystem", help="spin-system YAML (overrides the config)")
    p.add_argument("--out", help="output directory (pulses/, data/, reports/)")
    p.add_argument("--seed", type=int, help="RNG seed (env SPINQEC_SEED overrides)")
    p.add_argument("--goal", type=float, help="GRAPE fidelity goal in (0, 1)")
    p.add_argument("--max-iter", dest="max_iter", type=int)
    if with_grid:
        p.add_argument("--mode", help="comma list of ec,de,fed")
        p.add_argument("--pulse-model", dest="pulse_model", choices=["ideal", "grape"])
        p.add_argument("--t-start", dest="t_start", type=float)
        p.add_argument("--t-stop", dest="t_stop", type=float)
        p.add_argument("--t-count", dest="t_count", type=int)
        p.add_argument("--repeats", type=int)
        p.add_argument("--noise-sigma", dest="noise_sigma", type=float)
        p.add_argument("--noise-in-pulses", dest="noise_in_pulses", action="store_true",
                       help="also dephase during the encode/decode windows")
    p.add_argument("--refocus-delay", dest="refocus_delay", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spinqec",
        description="Three-qubit phase-error correction: pulse synthesis, "
                    "noisy simulation and decay analysis.",
    )
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)
    _add_run_flags(sub.add_parser("grape", help="synthesize code pulses"), with_grid=False)
    _add_run_flags(sub.add_parser("refocus", help="search refocusing pulse phases"),
                   with_grid=False)
    _add_run_flags(sub.add_parser("simulate", help="run EC/DE/FED sweeps to CSV"))
    _add_run_flags(sub.add_parser("all", help="full pipeline"))
    pa = sub.add_parser("analyze", help="fit experiment CSVs")
    pa.add_argument("csv", nargs="+", help="experiment CSV files")
    pa.add_argument("--ideal", nargs="*", default=[], help="ideal-model CSVs for f = A f_ideal")
    pa.add_argument("--bracket", nargs=2, type=float, metavar=("LO", "HI"),
                    help="crossover search interval in seconds")
    pa.add_argument("--out", help="write reports into OUT/reports")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "analyze":
            report_dir = Path(args.out) / "reports" if args.out else None
            return cmd_analyze(args.csv, args.ideal, tuple(args.bracket) if args.bracket else None,
                               report_dir)
        cfg = resolve_config(args)
        if args.command == "grape":
            return cmd_grape(cfg)
        if args.command == "refocus":
            return cmd_refocus(cfg)
        if args.command == "simulate":
            cmd_simulate(cfg)
            return 0
        return cmd_all(cfg)
    except ConfigError as exc:
        print(f"spinqec: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CLIError as exc:
        print(f"spinqec: {exc}", file=sys.stderr)
        return exc.status


if __name__ == "__main__":
    sys.exit(main())
