import csv
import json

import pytest

from drsynth.cli import main

SMALL_ROOM = """
seed = 0

[model]
builtin = "room_temperature"

[ambiguity]
radius = 0.05
order = 1
samples = 5

[ambiguity.sampler]
kind = "uniform"

[grid]
resolution = 0.05

[evaluation]
atoms = 21
policy = "threshold"
alpha = 0.9
x0_resolution = 0.1

[simulation]
trials = 50
"""


@pytest.fixture
def small_cfg(tmp_path):
    path = tmp_path / "room.toml"
    path.write_text(SMALL_ROOM)
    return str(path)


def _read_csv(path):
    # tables start with a "# table-version" line
    with open(path, newline="") as fh:
        return list(csv.DictReader(line for line in fh if not line.startswith("#")))


def test_synth_writes_outputs_and_is_bit_identical(small_cfg, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["synth", "--config", small_cfg, "--output-dir", str(a)]) == 0
    assert main(["synth", "--config", small_cfg, "--output-dir", str(b)]) == 0
    for name in ("values.csv", "policy.csv", "nominal.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    manifest = json.loads((a / "synth_manifest.json").read_text())
    assert manifest["seed"] == 0 and manifest["config_hash"]


def test_synth_reuses_cache(small_cfg, tmp_path):
    out = tmp_path / "o"
    assert main(["synth", "--config", small_cfg, "--output-dir", str(out)]) == 0
    first = (out / "values.csv").read_bytes()
    assert len(list(out.glob("synth-*.npz"))) == 1
    assert main(["synth", "--config", small_cfg, "--output-dir", str(out)]) == 0
    assert (out / "values.csv").read_bytes() == first


def test_eval_reports_probabilities(small_cfg, tmp_path):
    out = tmp_path / "o"
    assert main(["eval", "--config", small_cfg, "--output-dir", str(out)]) == 0
    rows = _read_csv(out / "evaluation.csv")
    assert rows and all(0.0 <= float(v) <= 1.0 for r in rows for k, v in r.items() if "probability" in k)


def test_simulate_single_trial_is_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert main(["simulate", "--fixture", "v_bar_2", "--trials", "1", "--seed", "3", "--log",
                     "--output-dir", str(out)]) == 0
    assert (a / "trajectories.csv").read_bytes() == (b / "trajectories.csv").read_bytes()
    assert (a / "simulation.csv").read_bytes() == (b / "simulation.csv").read_bytes()


def test_simulate_synthesized_policy(small_cfg, tmp_path):
    out = tmp_path / "o"
    assert main(["simulate", "--config", small_cfg, "--output-dir", str(out)]) == 0
    row = _read_csv(out / "simulation.csv")[0]
    assert int(row["trials"]) == 50
    assert float(row["wilson_lo"]) <= float(row["rate"]) <= float(row["wilson_hi"])


def test_check_cert_failure_exit_code(tmp_path, capsys):
    out = tmp_path / "o"
    code = main(["check-cert", "--fixture", "v_bar_1", "--state-points", "121", "--disturbance-points", "21",
                 "--output-dir", str(out)])
    assert code == 1
    rows = {r["condition"]: r for r in _read_csv(out / "cert_v_bar_1.csv")}
    assert rows["C1b"]["passed"] == "1" and rows["C2"]["passed"] == "0"
    assert "FAIL" in capsys.readouterr().out


def test_oracle_command_passes(tmp_path):
    out = tmp_path / "o"
    assert main(["oracle", "--fixtures", "5", "--output-dir", str(out)]) == 0
    assert len(_read_csv(out / "oracle_duality.csv")) == 5


def test_usage_errors_exit_two(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["synth", "--spec", "liveness"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2


def test_configuration_errors_exit_two(tmp_path, small_cfg):
    assert main(["synth", "--config", str(tmp_path / "missing.toml")]) == 2
    assert main(["check-cert", "--output-dir", str(tmp_path)]) == 2
    assert main(["check-cert", "--fixture", "v_bar_9", "--output-dir", str(tmp_path)]) == 2
    assert main(["study", "--groups", "7", "--output-dir", str(tmp_path)]) == 2
    assert main(["synth", "--config", small_cfg, "--workers", "0", "--output-dir", str(tmp_path)]) == 2
    bad = tmp_path / "bad.toml"
    bad.write_text("[ambiguity]\nradius = -1\n[model]\nbuiltin = 'room_temperature'\n")
    assert main(["synth", "--config", str(bad), "--output-dir", str(tmp_path)]) == 2
