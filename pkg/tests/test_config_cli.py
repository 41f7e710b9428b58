import csv
import json

import numpy as np
import pytest

from dynamo import cli, runner, verify
from dynamo.config import (
    InvalidValueError, MissingConfigError, RunConfig, UnknownKeyError, config_from_dict, parse_config,
)
from dynamo.solver import EnergyHistory, limsup_rate
from dynamo.spectral import read_checkpoint, write_checkpoint, SpectralField, Grid3


def write(tmp_path, d, name="c.json"):
    p = tmp_path / name
    p.write_text(json.dumps(d))
    return p


def small(tmp_path, **kw):
    base = dict(n0=4, lambda_hat=0.05, dt=0.2, sample_every=10, out=str(tmp_path / "out"))
    base.update(kw)
    return RunConfig(**base)


def test_minimal_config_defaults(tmp_path):
    cfg = parse_config(write(tmp_path, {"delta": 0.2, "n0": 8, "n": 1}))
    assert cfg.dt == 0.1 and cfg.eta == 0.1 and cfg.K == 1 and cfg.lambda_hat == "measure"
    assert cfg.eps_value == pytest.approx(1 / 64)
    assert cfg.sim_grid().shape == (26, 26, 4)


def test_eps_auto():
    assert config_from_dict({"eps": "auto", "n": 2, "n0": 4}).eps_value == pytest.approx(1 / 64)


def test_config_errors_are_distinct(tmp_path):
    with pytest.raises(InvalidValueError, match="dt"):
        parse_config(write(tmp_path, {"dt": -0.1}))
    with pytest.raises(UnknownKeyError, match="detla"):
        parse_config(write(tmp_path, {"detla": 0.2}))
    with pytest.raises(MissingConfigError):
        parse_config(tmp_path / "nope.json")
    with pytest.raises(InvalidValueError):
        parse_config(write(tmp_path, {"n": "sometimes"}))


def test_cli_exit_codes(tmp_path, capsys):
    assert cli.main(["alpha", "--config", str(write(tmp_path, {"dt": 0}))]) == 2
    assert "InvalidValueError" in capsys.readouterr().err
    assert cli.main(["alpha", "--config", str(tmp_path / "missing.json")]) == 2
    assert cli.main(["simulate"]) == 2
    with pytest.raises(SystemExit):
        cli.main(["alpha", "--seed", "-1"])


def test_cmd_alpha(tmp_path):
    s = runner.cmd_alpha(RunConfig(delta=0.1, out=str(tmp_path)))
    assert s["pass"] and s["checks"]["m0_projector"]["measured"] <= 1e-10
    ev = sorted(e[0] for e in s["M"]["eigenvalues"])
    assert ev == pytest.approx([-0.01, 0, 0.01], abs=1e-3)
    assert json.loads((tmp_path / "summary.json").read_text())["command"] == "alpha"


def test_cmd_alpha_out_of_regime(tmp_path):
    with pytest.warns(runner.PerturbativeRegimeWarning):
        s = runner.cmd_alpha(RunConfig(delta=0.5, out=str(tmp_path)))
    assert s["notes"]


def test_cmd_bloch_heat(tmp_path):
    cfg = RunConfig(delta=0.0, bloch_K=2, slope_K=2, j_sweep=[0.01, 0.02], out=str(tmp_path))
    s = runner.cmd_bloch(cfg)
    assert s["pass"]
    rows = list(csv.DictReader((tmp_path / "bloch.csv").open()))
    assert [float(r["re_p"]) for r in rows] == pytest.approx([-1e-4, -4e-4])


def test_cmd_bloch_sweep(tmp_path):
    s = runner.cmd_bloch(RunConfig(delta=0.2, bloch_K=4, slope_K=4, out=str(tmp_path)))
    assert s["pass"]
    assert s["j_at_max"] == pytest.approx(0.02, abs=0.005)


def test_cmd_schedule(tmp_path):
    s = runner.cmd_schedule(small(tmp_path, n=1, K=1))
    assert s["segments"] == 3 and s["pass"]
    s = runner.cmd_schedule(small(tmp_path, n="diagonal", K=3, eps=0.01))
    assert s["n"] == [1, 1, 2] and s["pass"]
    assert (tmp_path / "out" / "schedule.json").exists()


def test_schedule_refuses_nonpositive_rate(tmp_path):
    # at N0 = 4 the alpha rate j delta^2 - j^2 is negative: no growth to schedule
    cfg = RunConfig(n0=4, bloch_K=3, out=str(tmp_path))
    assert runner.measure_lambda(cfg) < 0
    with pytest.raises(runner.ScheduleError):
        runner.cmd_schedule(cfg)
    cfg_path = write(tmp_path, {"n0": 4, "bloch_K": 3, "out": str(tmp_path)})
    assert cli.main(["schedule", "--config", str(cfg_path)]) == 3


def test_control_run(tmp_path):
    s = runner.cmd_simulate(small(tmp_path, control=True))
    assert s["pass"] and s["gamma_bar_hat"] == 0.0
    assert s["intervals"][0]["growth_rate"] <= 1e-12


def test_simulate_outputs_consistent_and_deterministic(tmp_path):
    a = runner.cmd_simulate(small(tmp_path / "a"))
    runner.cmd_simulate(small(tmp_path / "b"))
    for name in ("energy.csv", "summary.json", "schedule.json"):
        assert (tmp_path / "a/out" / name).read_bytes() == (tmp_path / "b/out" / name).read_bytes()
    h = EnergyHistory.from_csv((tmp_path / "a/out/energy.csv").read_text())
    assert a["gamma_bar_hat"] == pytest.approx(limsup_rate(h, a["checkpoints"]), abs=1e-12)
    tk = a["checkpoints"][0]
    F = read_checkpoint(tmp_path / f"a/out/state_{tk:.6f}.kde1")
    assert np.sqrt(np.sum(np.abs(F.coeffs) ** 2)) == pytest.approx(h.norm_at(tk), rel=1e-12)
    # decay and generation phases pass even at this tiny N0
    assert a["checks"]["decay_1"]["pass"] and a["checks"]["generation_1"]["pass"]


def test_verify_passes(tmp_path):
    assert cli.main(["verify", "--out", str(tmp_path), "--seed", "7"]) == 0
    s = json.loads((tmp_path / "summary.json").read_text())
    assert s["pass"] and set(s["checks"]) == set(verify.SUITES)


def test_verify_catches_flipped_curl():
    from dynamo.spectral import curl_bloch

    def flipped(F):
        return -1 * curl_bloch(F)

    assert verify.curl_oracle(curl=flipped)["pass"] is False
    # the quadratic identity alone cannot see the sign
    assert verify.div_curl(np.random.default_rng(0), curl=flipped)["pass"] is True


def test_corrupted_checkpoint_surfaced(tmp_path):
    p = tmp_path / "x.kde1"
    write_checkpoint(p, SpectralField.zeros(Grid3(4, 4, 4)))
    raw = bytearray(p.read_bytes())
    raw[:4] = b"KDE2"
    p.write_bytes(bytes(raw))
    with pytest.raises(ValueError, match="magic"):
        read_checkpoint(p)
    assert verify.checkpoint_roundtrip(np.random.default_rng(0))["pass"]
