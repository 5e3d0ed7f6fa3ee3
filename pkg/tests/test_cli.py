import filecmp
import os
import subprocess
import sys

import pytest
import yaml

from spectrolab import cli
from spectrolab.config import (
    ConfigError,
    ResolutionWarning,
    canonical_json,
    config_hash,
    dump_yaml,
    load_yaml,
    validate,
)
from spectrolab.report import RunOutputs, emit_report

CONFIGS = os.path.join(os.path.dirname(__file__), "..", "configs")


def _cfg(name):
    return load_yaml(os.path.join(CONFIGS, f"{name}.yaml"))


def _write(tmp_path, data, name="c.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data))
    return path


def test_yaml_round_trip_and_hash():
    data = _cfg("specineq")
    again = yaml.safe_load(dump_yaml(data))
    assert again == data
    assert config_hash(again) == config_hash(data)
    assert len(config_hash(data)) == 64
    changed = dict(data, seed=1)
    assert config_hash(changed) != config_hash(data)
    assert canonical_json({"b": 1, "a": 2}) == '{"a":2,"b":1}'


def test_missing_set_block_names_field(tmp_path, capsys):
    data = _cfg("specineq")
    del data["set"]
    with pytest.raises(ConfigError, match="^set: missing block"):
        validate(data, "specineq")
    assert cli.main(["specineq", "--config", str(_write(tmp_path, data)), "--out", str(tmp_path / "o")]) == 2
    assert "set:" in capsys.readouterr().err


def test_seed_required_and_override():
    data = _cfg("spectrum")
    del data["seed"]
    with pytest.raises(ConfigError, match="^seed"):
        validate(data, "spectrum")
    assert validate(data, "spectrum", seed=7).seed == 7
    assert validate(_cfg("spectrum"), "spectrum", seed=3).seed == 3


def test_experiment_subcommand_mismatch():
    with pytest.raises(ConfigError, match="^experiment"):
        validate(_cfg("spectrum"), "control")
    assert validate(_cfg("control_lr"), "control").experiment == "control-lr"


def test_bad_params_are_config_errors():
    data = _cfg("specineq")
    data["params"]["mus"] = [4, 3, 5, 6]
    with pytest.raises(ConfigError, match="params.mus"):
        validate(data, "specineq")
    data = _cfg("specineq")
    data["domain"]["N"] = 0
    with pytest.raises(ConfigError, match="domain.N"):
        validate(data, "specineq")


def test_under_resolution_warns_or_fails(tmp_path):
    data = _cfg("specineq")
    data["domain"]["N"] = 64
    with pytest.warns(ResolutionWarning):
        validate(data, "specineq")
    with pytest.raises(ConfigError, match="domain.N"):
        validate(data, "specineq", strict=True)
    path = _write(tmp_path, data)
    assert cli.main(["specineq", "--config", str(path), "--out", str(tmp_path / "o"), "--strict"]) == 2


def test_specineq_file_contract(tmp_path):
    out = tmp_path / "run"
    assert cli.main(["specineq", "--config", os.path.join(CONFIGS, "specineq.yaml"), "--out", str(out)]) == 0
    names = {p.name for p in out.iterdir()}
    assert {"constants.csv", "fit.csv", "constants.svg", "summary.txt", "run.json", "config.yaml"} <= names
    assert (out / "constants.csv").read_text().splitlines()[0] == "mu,variant,constant,r2_running"


def test_propagation_file_contract(tmp_path):
    out = tmp_path / "run"
    assert cli.main(["propagation", "--config", os.path.join(CONFIGS, "propagation.yaml"), "--out", str(out)]) == 0
    names = {p.name for p in out.iterdir()}
    assert {"region_sups.csv", "alpha_fit.csv"} <= names


def test_reruns_are_byte_identical(tmp_path):
    cfg = os.path.join(CONFIGS, "spectrum.yaml")
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["spectrum", "--config", cfg, "--out", str(a)]) == 0
    assert cli.main(["spectrum", "--config", cfg, "--out", str(b)]) == 0
    csvs = sorted(p.name for p in a.glob("*.csv"))
    assert csvs
    match, mismatch, errors = filecmp.cmpfiles(a, b, csvs, shallow=False)
    assert not mismatch and not errors


def test_empty_outputs_give_zero_tables(tmp_path):
    rec = emit_report(RunOutputs(), tmp_path / "e", "spectrum", "0" * 64)
    assert rec.passed
    assert "tables: 0" in (tmp_path / "e" / "summary.txt").read_text()


def test_unwritable_output_directory(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError):
        emit_report(RunOutputs(), blocker / "sub")
    cfg = os.path.join(CONFIGS, "spectrum.yaml")
    assert cli.main(["spectrum", "--config", cfg, "--out", str(blocker / "sub")]) == 2
    assert "output error" in capsys.readouterr().err


def test_failed_check_exits_one(tmp_path, monkeypatch):
    def failing(cfg, out):
        out.check("always-fails", False, "forced")

    monkeypatch.setitem(cli.PIPELINES, "spectrum", failing)
    cfg = os.path.join(CONFIGS, "spectrum.yaml")
    assert cli.main(["spectrum", "--config", cfg, "--out", str(tmp_path / "f")]) == 1
    assert "FAIL always-fails" in (tmp_path / "f" / "summary.txt").read_text()


def test_module_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "spectrolab", "spectrum", "--config",
                          os.path.join(CONFIGS, "spectrum.yaml"), "--out", str(tmp_path / "m")],
                         capture_output=True, text=True)
    assert out.returncode == 0 and "PASS" in out.stdout
