import numpy as np
import pytest

from spinqec import cli, qecexp
from spinqec.analysis import cubic_from_coeffs
from spinqec.qecexp import ExperimentResult, Mode

EC_REF = [0.9828, -0.0166, -0.5380, 0.0014]
DE_REF = [0.9982, -0.4361, 0.1679, 0.2152]
FED_REF = [1.0056, -0.4164, 0.3363, -0.2123]


def synthetic(mode, coeffs, path, ts=np.linspace(0, 0.2, 21)):
    f = cubic_from_coeffs(coeffs)(ts)
    fa = (4 * f - 1) / 3
    res = ExperimentResult(mode, qecexp.GRAPE, ts, np.ones(len(ts), int), fa, fa, fa, f)
    qecexp.write_csv(res, path)
    return path


def test_goal_out_of_range_is_config_error(tmp_path, capsys):
    assert cli.main(["grape", "--goal", "1.1", "--out", str(tmp_path)]) == cli.EXIT_CONFIG
    assert "goal" in capsys.readouterr().err


def test_bad_spinsystem_names_key(tmp_path, capsys):
    bad = tmp_path / "s.yaml"
    bad.write_text("spins:\n  - {label: A, nu_hz: 1, t2_s: -1}\ncouplings: [[null]]\n")
    assert cli.main(["simulate", "--config", str(bad), "--out", str(tmp_path)]) == cli.EXIT_CONFIG
    assert "t2_s" in capsys.readouterr().err


def test_grape_model_without_pulses(tmp_path, capsys):
    status = cli.main(["simulate", "--pulse-model", "grape", "--out", str(tmp_path)])
    assert status == cli.EXIT_MISSING_PULSE
    assert "encode.pulse" in capsys.readouterr().err


def test_malformed_csv_names_line(tmp_path, capsys):
    path = synthetic(Mode.EC, EC_REF, tmp_path / "ec.csv")
    lines = path.read_text().splitlines()
    lines[4] = lines[4].replace(",", ";", 2)
    path.write_text("\n".join(lines) + "\n")
    assert cli.main(["analyze", str(path)]) == cli.EXIT_BAD_CSV
    assert ":5" in capsys.readouterr().err


def test_simulate_ideal(tmp_path, capsys):
    assert cli.main(["simulate", "--pulse-model", "ideal", "--out", str(tmp_path)]) == 0
    data = tmp_path / "data"
    res = {m: qecexp.read_csv(data / f"{m}_ideal.csv") for m in ("ec", "de", "fed")}
    assert res["ec"].t[0] == 0.0 and res["ec"].f[0] == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(res["de"].f, res["fed"].f, atol=1e-10)
    assert len(res["ec"]) == 21
    assert "f = (1 + f_x + f_y + f_z)/4" in capsys.readouterr().out


def test_analyze_synthetic_ratio(tmp_path, capsys):
    paths = [synthetic(m, c, tmp_path / f"{m.value}.csv")
             for m, c in ((Mode.EC, EC_REF), (Mode.DE, DE_REF), (Mode.FED, FED_REF))]
    assert cli.main(["analyze", *map(str, paths), "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "DE/EC: 26.27" in out
    assert "FED/EC: 25.08" in out
    assert "EC/FED crossover: 0.0665" in out
    assert (tmp_path / "reports" / "fit_ec_grape.csv").exists()


def test_analyze_ideal_ec_ratio_undefined(tmp_path, capsys):
    assert cli.main(["simulate", "--pulse-model", "ideal", "--out", str(tmp_path)]) == 0
    capsys.readouterr()
    data = tmp_path / "data"
    assert cli.main(["analyze", str(data / "ec_ideal.csv"), str(data / "de_ideal.csv")]) == 0
    out = capsys.readouterr().out
    assert "ratio undefined: denominator consistent with 0" in out
    assert "EC/DE: 0.00" in out


def test_seed_env_overrides(monkeypatch):
    args = cli.build_parser().parse_args(["simulate", "--seed", "5"])
    assert cli.resolve_config(args).seed == 5
    monkeypatch.setenv("SPINQEC_SEED", "77")
    assert cli.resolve_config(args).seed == 77
    monkeypatch.setenv("SPINQEC_SEED", "x")
    with pytest.raises(cli.ConfigError):
        cli.resolve_config(args)


def test_run_config_file(tmp_path):
    cfg = tmp_path / "run.yaml"
    cfg.write_text("t_stop: 0.1\nt_count: 11\nmodes: [ec]\npulse_model: ideal\n")
    assert cli.main(["simulate", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    res = qecexp.read_csv(tmp_path / "data" / "ec_ideal.csv")
    assert len(res) == 11 and res.t[-1] == pytest.approx(0.1)
    assert not (tmp_path / "data" / "de_ideal.csv").exists()


def test_noise_needs_repeats(tmp_path):
    status = cli.main(["simulate", "--pulse-model", "ideal", "--noise-sigma", "0.01",
                       "--out", str(tmp_path)])
    assert status == cli.EXIT_CONFIG
