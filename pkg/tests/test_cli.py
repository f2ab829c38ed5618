import csv
import json
import math
import os

import pytest

from ratchet.cli import main
from ratchet.config import ConfigError, ExperimentConfig, load
from ratchet.drift import SpaceTimeDrift, traveling_wave
from ratchet.overdamped import stationary_velocity
from ratchet.runner import (ResultRecord, atomic_write, composite_from_csv, crosscheck, power_law_fit,
                            read_records, run_sweep, run_velocity, sign_changes)

FAST_SDE = """
[sde]
dt = 0.01
horizon = 50.0
burn_in = 5.0
n_paths = 2000
seed = 3
"""


def write(tmp_path, text, name="exp.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


# --- config -----------------------------------------------------------------------

@pytest.mark.parametrize("text,key", [
    ('model = "overdamped"\nflavour = 1\n', "flavour"),
    ('[physics]\nTemp = 1.0\n', "physics.Temp"),
    ('[drift]\npreset = "traveling_wave"\namplitude = 0.1\n', "drift.amplitude"),
    ('[solver]\nq_maximum = 3\n', "solver.q_maximum"),
    ('[sde]\nsteps = 3\n', "sde.steps"),
    ('[output]\nfolder = "x"\n', "output.folder"),
])
def test_unknown_keys_rejected(tmp_path, text, key):
    with pytest.raises(ConfigError, match=key.replace(".", r"\.")):
        load(write(tmp_path, text))


@pytest.mark.parametrize("text", [
    'model = "brownian"\n',
    'method = "guess"\n',
    '[drift]\npreset = "no_such_preset"\n',
    'model = "two-state"\n[drift]\npreset = "traveling_wave"\n',
    '[physics]\nT = -1.0\n',
    '[drift]\nmodes = [[1, 1, 0.5]]\n',
    '[drift]\npreset = "traveling_wave"\nmodes = [[1, 1, 0.5, 0.0]]\n',
    'model = "kramers-two-state"\nmethod = "perturbative"\n[drift]\nstate1 = [[9, 0.1, 0.0]]\n',
    '[sde]\nn_paths = 0\n',
    'model = "overdamped"\n[sweep]\nparameter = "mass"\nvalues = [1.0]\n',
    'model = [broken\n',
])
def test_invalid_configs(tmp_path, text):
    with pytest.raises(ConfigError):
        load(write(tmp_path, text))


def test_model_defaults():
    assert ExperimentConfig().phys["L"] == 1.0
    cfg = ExperimentConfig(model="two-state")
    assert cfg.phys["L"] == pytest.approx(2 * math.pi)
    assert cfg.rates().nu1 == 1.0 and cfg.rates().nu2 == 2.0


def test_explicit_modes(tmp_path):
    cfg = load(write(tmp_path, '[physics]\nT = 2.0\n[drift]\nmodes = [[1, 1, 0.25, 0.0], [0, 2, 0.0, 0.1]]\n'))
    b = cfg.space_time_drift()
    assert b.T == 2.0
    assert b.coeffs[b.p_max + 1, b.q_max + 1] == pytest.approx(0.25)
    assert b.coeffs[b.p_max - 1, b.q_max - 1] == pytest.approx(0.25)


# --- records and files ----------------------------------------------------------------

def test_record_round_trip():
    rec = ResultRecord("overdamped", "spectral", -0.0115, 1e-12, {"T": 1.0}, {"residual": 1e-15, "z": 1j},
                       0.01, 7)
    back = ResultRecord.from_json(rec.to_json())
    assert back.I == rec.I and back.seed == 7 and back.diagnostics["z"] == [0.0, 1.0]
    assert back.reproduces(rec)
    assert not ResultRecord("overdamped", "spectral", -0.0116, 1e-12).reproduces(rec)


def test_atomic_write_replaces_and_leaves_no_temp(tmp_path):
    p = tmp_path / "sub" / "f.txt"
    atomic_write(p, "one")
    atomic_write(p, "two")
    assert p.read_text() == "two"
    assert os.listdir(p.parent) == ["f.txt"]


def test_power_law_and_sign_changes():
    fit = power_law_fit([0.1, 0.2, 0.4], [3e-3, 2.4e-2, 0.192])
    assert fit["exponent"] == pytest.approx(3.0, abs=1e-12)
    assert sign_changes([0, 1, 2, 3], [1.0, -1.0, -2.0, 0.5]) == [(0, 1), (2, 3)]


def test_crosscheck_flags_disagreement():
    a = ResultRecord("overdamped", "spectral", -0.01, 1e-12)
    b = ResultRecord("overdamped", "montecarlo", -0.02, 1e-3)
    out = crosscheck([a, b], 0.1)
    assert len(out) == 1 and not out[0]["agree"]
    c = ResultRecord("overdamped", "montecarlo", -0.0105, 1e-3)
    assert crosscheck([a, c], 0.1)[0]["agree"]


# --- velocity ---------------------------------------------------------------------

@pytest.mark.slow
def test_velocity_all_methods_agree(tmp_path, capsys):
    cfg = write(tmp_path, 'model = "overdamped"\nmethod = "all"\n[drift]\npreset = "traveling_wave"\neps = 0.05\n'
                + FAST_SDE + '[output]\nper_path_csv = true\n')
    out = tmp_path / "out"
    assert main(["velocity", "--config", cfg, "--out", str(out)]) == 0
    recs = read_records(out / "records.jsonl")
    assert [r.method for r in recs] == ["spectral", "perturbative", "montecarlo"]
    assert recs[0].I == pytest.approx(stationary_velocity(traveling_wave(0.05)).value, rel=1e-12)
    cc = json.loads((out / "crosscheck.json").read_text())
    assert len(cc) == 3 and all(c["agree"] for c in cc)
    rows = list(csv.reader(open(out / "results.csv", newline="")))
    assert rows[0][:3] == ["model", "method", "I"] and len(rows) == 4
    assert len(list(csv.reader(open(out / "per_path.csv", newline="")))) == 2001
    assert recs[2].seed == 3
    assert recs[0].parameters["drift"] == {"preset": "traveling_wave", "eps": 0.05}

    # the records re-ingested as a baseline reproduce the run
    out2 = tmp_path / "out2"
    assert main(["velocity", "--config", cfg, "--out", str(out2), "--baseline",
                 str(out / "records.jsonl")]) == 0
    assert "MISMATCH" not in capsys.readouterr().out


def test_empty_drift_gives_zero(tmp_path):
    cfg = ExperimentConfig.from_dict({"method": "all", "sde": {"dt": 0.01, "horizon": 10.0, "burn_in": 1.0,
                                                             "n_paths": 500}})
    out = run_velocity(cfg)
    spectral, perturbative, mc = out.records
    assert spectral.I == 0.0 and perturbative.I == 0.0
    assert abs(mc.I) <= 3 * mc.error_bound


def test_two_state_perturbative_reference(tmp_path, capsys):
    out = tmp_path / "o"
    assert main(["velocity", "--model", "two-state", "--preset", "cos2x_cosx", "--method", "perturbative",
                 "--out", str(out)]) == 0
    rec = read_records(out / "records.jsonl")[0]
    assert rec.I == pytest.approx(1 / 672, rel=1e-10)
    d = rec.diagnostics
    assert d["closed_form"] == pytest.approx(-1 / 672, rel=1e-12)
    assert abs(d["relative_error"]) <= 1e-6


def test_baseline_mismatch_exit_code(tmp_path):
    base = tmp_path / "base.jsonl"
    base.write_text(ResultRecord("overdamped", "spectral", 1.0, 1e-12).to_json() + "\n")
    assert main(["velocity", "--preset", "traveling_wave", "--eps", "0.1", "--out", str(tmp_path / "o"),
                 "--baseline", str(base)]) == 1


def test_kramers_and_kramers_two_state(tmp_path):
    for model, preset in (("kramers", "traveling_wave"), ("kramers-two-state", "cos2x_cosx")):
        out = tmp_path / model
        assert main(["velocity", "--model", model, "--preset", preset, "--eps", "0.2", "--method",
                     "spectral", "--out", str(out)]) == 0
        assert math.isfinite(read_records(out / "records.jsonl")[0].I)


# --- sweeps -----------------------------------------------------------------------

def test_eps_sweep_exponents(tmp_path):
    out = tmp_path / "s"
    assert main(["sweep", "--preset", "traveling_wave", "--parameter", "eps", "--values",
                 "0.02,0.04,0.08", "--out", str(out), "--threads", "2"]) == 0
    summary = json.loads((out / "sweep_summary.json").read_text())
    assert summary["fits"]["spectral"]["exponent"] == pytest.approx(2.0, abs=0.1)
    rows = list(csv.reader(open(out / "plot_spectral.csv", newline="")))
    assert rows[0] == ["x", "y", "yerr"] and len(rows) == 4

    cfg = ExperimentConfig.from_dict({"model": "two-state", "drift": {"preset": "cos2x_cosx"},
                                      "sweep": {"parameter": "eps", "values": [0.05, 0.1, 0.2]}})
    fit = run_sweep(cfg).fits["spectral"]
    assert fit["exponent"] == pytest.approx(3.0, abs=0.15)


def test_nu2_sweep_brackets_sign_change():
    cfg = ExperimentConfig.from_dict({"model": "two-state", "method": "perturbative",
                                      "drift": {"preset": "cos2x_cosx"},
                                      "sweep": {"parameter": "nu2", "values": [0.4, 0.8, 1.2, 1.6, 2.0]}})
    out = run_sweep(cfg)
    assert out.brackets["perturbative"] == [(0.8, 1.2)]


def test_sweep_requires_parameter(tmp_path):
    assert main(["sweep", "--preset", "traveling_wave", "--out", str(tmp_path)]) == 2


# --- zero find --------------------------------------------------------------------

def test_zero_find_writes_composite(tmp_path, capsys):
    cfg = write(tmp_path, '[drift]\npreset = "traveling_wave"\neps = 0.5\n'
                          '[drift2]\npreset = "reversed_wave"\neps = 0.8\n')
    out = tmp_path / "z"
    assert main(["zero-find", "--config", cfg, "--out", str(out)]) == 0
    rec = read_records(out / "records.jsonl")[0]
    alpha = rec.diagnostics["alpha"]
    assert 0 < alpha < 1
    b = composite_from_csv(out / "composite_drift.csv", 1.0, 1.0)
    assert abs(stationary_velocity(b).value) <= 1e-8
    assert "alpha0" in capsys.readouterr().out


def test_zero_find_same_sign(tmp_path, capsys):
    cfg = write(tmp_path, '[drift]\npreset = "traveling_wave"\neps = 0.5\n'
                          '[drift2]\npreset = "traveling_wave"\neps = 0.9\n')
    assert main(["zero-find", "--config", cfg, "--out", str(tmp_path / "z")]) == 2
    assert "error" in capsys.readouterr().err


def test_zero_find_needs_second_drift(tmp_path):
    assert main(["zero-find", "--preset", "traveling_wave", "--out", str(tmp_path)]) == 2


# --- misc -------------------------------------------------------------------------

def test_threads_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("RATCHET_THREADS", "zero")
    assert main(["velocity", "--preset", "traveling_wave", "--out", str(tmp_path)]) == 2
    monkeypatch.setenv("RATCHET_THREADS", "2")
    assert main(["velocity", "--preset", "traveling_wave", "--out", str(tmp_path)]) == 0
    assert main(["velocity", "--preset", "traveling_wave", "--threads", "0", "--out", str(tmp_path)]) == 2


def test_eps_without_preset(tmp_path):
    assert main(["velocity", "--eps", "0.1", "--out", str(tmp_path)]) == 2


def test_selftest_subset(capsys):
    assert main(["selftest", "--only", "3"]) == 0
    assert "PASS" in capsys.readouterr().out
