import json
import subprocess
import sys

import numpy as np
import pytest

from viscowell import cli, runner
from viscowell.config import amplitude_for_energy, build_experiment, validate_document
from viscowell.diag import EnergyTrace, initial_energies
from viscowell.errors import ConfigError
from viscowell.presets import get_preset, preset_names
from viscowell.sim import load_checkpoint


def _small_doc(**history):
    doc = get_preset("sweep-single-cubic")
    doc["domain"]["n"] = [31]
    doc["solver"].update(dt=0.02, t_end=2.0)
    doc["history"].update(history)
    return doc


@pytest.mark.parametrize("name", preset_names())
def test_presets_validate(name):
    validate_document(get_preset(name))


def test_unknown_key_rejected():
    doc = get_preset("zero")
    doc["solver"]["order"] = 4
    with pytest.raises(ConfigError, match="solver"):
        validate_document(doc)


def test_unknown_preset():
    with pytest.raises(ConfigError):
        get_preset("no-such-preset")


def test_cfl_violation_is_config_error():
    doc = _small_doc()
    doc["solver"]["dt"] = 1.0
    with pytest.raises(ConfigError):
        build_experiment(doc)


def test_invalid_kernel_is_config_error():
    doc = _small_doc()
    doc["kernel"] = {"family": "power_law", "amplitude": 1.0, "exponent": 0.5}
    with pytest.raises(ConfigError):
        build_experiment(doc)


@pytest.mark.parametrize("branch", ["inner", "outer"])
def test_amplitude_for_energy_hits_target(branch):
    doc = _small_doc(target_energy=0.2, branch=branch)
    del doc["history"]["amplitude"]
    exp = build_experiment(doc)
    assert initial_energies(exp.problem).E0 == pytest.approx(0.2, abs=1e-12)
    c = exp.diagnostics["amplitude"]
    assert (c < 1.0) if branch == "inner" else (c > 1.0)


def test_amplitude_target_above_maximum():
    doc = _small_doc()
    with pytest.raises(ConfigError):
        amplitude_for_energy(doc, 10.0)


def test_parse_axis():
    assert runner.parse_axis("amplitude=lin:0:1:3") == ("amplitude", [0.0, 0.5, 1.0])
    assert runner.parse_axis("m=list:1,2") == ("m", [1.0, 2.0])
    assert runner.parse_axis("p1=3.5") == ("p1", [3.5])
    for bad in ("amplitude=list:", "amplitude=", "speed=1", "amplitude", "m=lin:a:b:c"):
        with pytest.raises(ConfigError):
            runner.parse_axis(bad)


def test_apply_axes_does_not_mutate():
    doc = _small_doc()
    out = runner.apply_axes(doc, {"amplitude": 0.5, "m": 2.0, "p1": 4.0})
    assert out["history"]["amplitude"] == 0.5 and out["damping_m"] == 2.0
    assert out["source"]["positive"][0][1] == 4.0
    assert doc["history"]["amplitude"] == 1.0


def test_cli_constants(capsys):
    assert cli.main(["constants", "--preset", "single-cubic", "--embedding-p", "1"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["y0"] == pytest.approx(0.5, abs=1e-10)
    assert out["gamma_source"] == "override"
    assert out["embedding"][0]["gamma"] == pytest.approx(1.0, abs=0.01)


def test_cli_gamma_override(capsys):
    assert cli.main(["constants", "--preset", "zero", "--gamma-override", "1.0"]) == 0
    assert json.loads(capsys.readouterr().out)["d0"] == pytest.approx(0.25, abs=1e-10)
    assert cli.main(["constants", "--preset", "zero", "--gamma-override", "x"]) == 2


def test_cli_simulate_outputs(tmp_path, capsys):
    assert cli.main(["simulate", "--preset", "zero", "--out", str(tmp_path)]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["stop"] == "Completed" and summary["max_residual"] == 0.0
    assert json.loads((tmp_path / "summary.json").read_text()) == summary
    trace = EnergyTrace.from_csv(tmp_path / "trace.csv")
    assert len(trace) == summary["samples"]
    exp = build_experiment(get_preset("zero"))
    state = load_checkpoint(tmp_path / "final.ckpt", exp.problem, exp.solver)
    assert state.step_index == summary["steps"]
    assert not np.any(state.u)


def test_cli_classify(tmp_path, capsys):
    assert cli.main(["classify", "--preset", "blowup-negE", "--out", str(tmp_path)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["verdicts"] == ["BlowupByTheorem6.1"]
    assert (tmp_path / "classify.json").exists()


def test_cli_fit_from_trace(tmp_path, capsys):
    t = np.linspace(0.0, 5.0, 101)
    EnergyTrace.from_arrays(t=t, total_energy=3 * np.exp(-2 * t), quad_energy=3 * np.exp(-2 * t)).to_csv(tmp_path / "e.csv")
    assert cli.main(["fit", "--trace", str(tmp_path / "e.csv"), "--model", "exponential"]) == 0
    assert json.loads(capsys.readouterr().out)["rate"] == pytest.approx(2.0)
    flat = np.ones_like(t) + 0.5 * np.sin(5 * t)
    EnergyTrace.from_arrays(t=t, total_energy=flat, quad_energy=flat).to_csv(tmp_path / "f.csv")
    assert cli.main(["fit", "--trace", str(tmp_path / "f.csv")]) == 3


def test_cli_config_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli.main(["simulate", "--config", str(bad)]) == 2
    assert cli.main(["simulate"]) == 2
    assert cli.main(["simulate", "--preset", "nope"]) == 2
    assert cli.main(["sweep", "--preset", "zero", "--axis", "amplitude=list:"]) == 2
    assert cli.main(["sweep", "--preset", "zero"]) == 2
    assert cli.main(["simulate", "--config", str(tmp_path / "missing.json")]) == 2


def test_cli_config_file(tmp_path, capsys):
    path = tmp_path / "doc.json"
    path.write_text(json.dumps(_small_doc(amplitude=0.2)))
    assert cli.main(["classify", "--config", str(path)]) == 0
    assert "GlobalByTheorem4.3" in json.loads(capsys.readouterr().out)["verdicts"]


def test_sweep_is_deterministic(tmp_path, capsys):
    doc = tmp_path / "doc.json"
    doc.write_text(json.dumps(_small_doc()))
    for sub in ("a", "b"):
        rc = cli.main(["sweep", "--config", str(doc), "--axis", "amplitude=list:0.3,2.0", "--jobs", "1",
                       "--out", str(tmp_path / sub)])
        assert rc == 0
    capsys.readouterr()
    a = (tmp_path / "a" / "sweep.csv").read_bytes()
    assert a == (tmp_path / "b" / "sweep.csv").read_bytes()
    lines = a.decode().splitlines()
    assert lines[0].split(",")[:3] == ["index", "amplitude", "resolved_amplitude"]
    assert len(lines) == 3
    point = json.loads((tmp_path / "a" / "points" / "point_0001.json").read_text())
    assert point["predicted"] == "blowup" and point["observed"] == "blowup"


def test_sweep_parallel_matches_serial(tmp_path):
    doc = _small_doc()
    axes = [runner.parse_axis("amplitude=list:0.3,2.0")]
    runner.sweep(doc, axes, tmp_path / "s", jobs=1)
    runner.sweep(doc, axes, tmp_path / "p", jobs=2)
    assert (tmp_path / "s" / "sweep.csv").read_bytes() == (tmp_path / "p" / "sweep.csv").read_bytes()


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "viscowell", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    for cmd in ("constants", "simulate", "classify", "fit", "sweep"):
        assert cmd in proc.stdout
