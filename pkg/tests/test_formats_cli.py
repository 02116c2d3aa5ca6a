import json
import math
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
import yaml

from rollgeo.cli import main, run
from rollgeo.dynamics import ControlSchedule, roll
from rollgeo.formats import (
    CSV_HEADER,
    ConfigError,
    dumps_report,
    parse_config,
    read_trajectory,
    trajectory_csv,
    write_trajectory,
)
from rollgeo.state import BASE_STATE, StateError, make_state

from conftest import generic_path

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def write_config(tmp_path, data, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data))
    return path


class TestTrajectoryCsv:
    def test_round_trip(self, tmp_path):
        p = generic_path(0, duration=1.0)
        write_trajectory(tmp_path / "p.csv", p)
        q = read_trajectory(tmp_path / "p.csv", p.r)
        assert np.array_equal(q.times, p.times)
        assert np.array_equal(q.states, p.states)
        assert np.array_equal(q.thetas, p.thetas)

    def test_header(self):
        p = roll(BASE_STATE, 1.0, ControlSchedule.constant(0.0, 0.01), 1e-3)
        lines = trajectory_csv(p).splitlines()
        assert lines[0].split(",") == CSV_HEADER
        assert len(lines) == len(p) + 1

    def test_rows_revalidate(self, tmp_path):
        p = generic_path(1, duration=1.0)
        write_trajectory(tmp_path / "p.csv", p)
        rows = (tmp_path / "p.csv").read_text().splitlines()[1:]
        for row in rows:
            x = [float(c) for c in row.split(",")]
            make_state(x[1:4], x[4:7], x[7:10], x[10:13], tol=1e-9)

    def test_corrupted_row_rejected(self, tmp_path):
        p = roll(BASE_STATE, 1.0, ControlSchedule.constant(0.0, 0.01), 1e-3)
        text = trajectory_csv(p).splitlines()
        fields = text[3].split(",")
        fields[1] = "0.5"
        text[3] = ",".join(fields)
        (tmp_path / "bad.csv").write_text("\n".join(text) + "\n")
        with pytest.raises(StateError):
            read_trajectory(tmp_path / "bad.csv", 1.0)

    def test_bad_header(self, tmp_path):
        (tmp_path / "bad.csv").write_text("x,y\n1,2\n")
        with pytest.raises(ValueError):
            read_trajectory(tmp_path / "bad.csv", 1.0)


class TestReports:
    def test_sorted_and_plain(self):
        text = dumps_report({"b": np.float64(1.5), "a": np.arange(3), "c": math.nan})
        assert json.loads(text) == {"a": [0, 1, 2], "b": 1.5, "c": "nan"}
        assert text.index('"a"') < text.index('"b"')


class TestConfig:
    def test_defaults(self):
        cfg = parse_config({"controls": [[1.0, 0.0]]})
        assert cfg.r == 1.0 and cfg.step == 1e-3 and cfg.initial_state == BASE_STATE

    def test_explicit_state(self):
        cfg = parse_config({"initial_state": [0, 0, 1, 0, 0, 1, 1, 0, 0, 0, 1, 0]})
        np.testing.assert_array_equal(cfg.initial_state.b, [0, 1, 0])

    @pytest.mark.parametrize(
        "raw",
        [
            {"step": -1e-3},
            {"step": 0},
            {"r": 0},
            {"r": "wide"},
            {"controls": [[0.0, 1.0]]},
            {"controls": [[1.0]]},
            {"initial_state": [0, 0, 1]},
            {"initial_state": [0, 0, 1, 0, 0, 1, 0, 0, 1, 1, 0, 0]},
            {"bend": {"times": [0.1, 0.2]}},
            {"plane_k": [1, 2, 3, 4, math.inf]},
            {"trials": 0},
            {"colour": "blue"},
        ],
    )
    def test_rejects(self, raw):
        with pytest.raises(ConfigError):
            parse_config(raw)

    def test_not_a_mapping(self):
        with pytest.raises(ConfigError):
            parse_config([1, 2])

    @pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.yaml")), ids=lambda p: p.stem)
    def test_bundled_configs_parse_or_reject(self, path):
        raw = yaml.safe_load(path.read_text())
        if "negative" in path.stem:
            with pytest.raises(ConfigError):
                parse_config(raw)
        else:
            parse_config(raw)


class TestCli:
    def test_roll(self, tmp_path):
        assert main(["roll", "--config", str(CONFIGS / "roll.yaml"), "--out", str(tmp_path)]) == 0
        p = read_trajectory(tmp_path / "trajectory.csv", 2.0)
        assert p.duration == pytest.approx(3.0, abs=1e-12)

    def test_negative_step(self, tmp_path):
        assert run("roll", CONFIGS / "roll_negative_step.yaml", tmp_path) == 1

    def test_missing_config(self, tmp_path):
        assert run("roll", tmp_path / "nope.yaml", tmp_path) == 1

    def test_missing_field(self, tmp_path):
        cfg = write_config(tmp_path, {"r": 2.0})
        assert run("roll", cfg, tmp_path / "out") == 1

    def test_bend(self, tmp_path):
        assert run("bend", CONFIGS / "bend.yaml", tmp_path) == 0
        rep = json.loads((tmp_path / "breaks.json").read_text())
        assert rep["all_equivalent"]
        assert all(b["contact_jump"] == 0.0 for b in rep["breaks"])
        assert rep["arc_length"] == rep["original_arc_length"]

    def test_jacobian(self, tmp_path):
        assert run("jacobian", CONFIGS / "jacobian.yaml", tmp_path) == 0
        rep = json.loads((tmp_path / "jacobian.json").read_text())
        assert rep["analytic_matches_fd"]
        assert {d["category"] for d in rep["deviations"]} <= {"radius-factor", "marker-sign"}

    def test_trace(self, tmp_path):
        assert run("trace", CONFIGS / "trace.yaml", tmp_path) == 0
        assert (tmp_path / "trace.csv").exists()

    def test_trace_degenerate(self, tmp_path, caplog):
        assert run("trace", CONFIGS / "trace_degenerate.yaml", tmp_path) == 2
        assert "direction" in caplog.text

    def test_verify_pure_x1(self, tmp_path, capsys):
        assert run("verify", CONFIGS / "verify_pure_x1.yaml", tmp_path) == 0
        rep = json.loads((tmp_path / "report.json").read_text())
        assert rep["verdict"] == "consistent-with-geodesic"
        assert capsys.readouterr().out.strip() == "consistent-with-geodesic"

    def test_verify_generic(self, tmp_path):
        assert run("verify", CONFIGS / "verify_generic.yaml", tmp_path) == 0
        rep = json.loads((tmp_path / "report.json").read_text())
        assert rep["verdict"] == "not-minimizing"
        assert rep["certificate"]["residual"] <= 1e-8

    def test_shortcut(self, tmp_path):
        assert run("shortcut", CONFIGS / "shortcut.yaml", tmp_path) == 0
        rep = json.loads((tmp_path / "shortcut.json").read_text())
        assert rep["status"] == "success" and rep["iterations"] <= 20

    def test_shortcut_on_plane_path(self, tmp_path):
        assert run("shortcut", CONFIGS / "shortcut_plane.yaml", tmp_path) == 2
        rep = json.loads((tmp_path / "shortcut.json").read_text())
        assert rep["reason"] == "rank-deficient"

    def test_seed_override_changes_verify_times(self, tmp_path):
        run("verify", CONFIGS / "verify_plane.yaml", tmp_path / "a", seed=1)
        run("verify", CONFIGS / "verify_plane.yaml", tmp_path / "b", seed=2)
        a = json.loads((tmp_path / "a" / "report.json").read_text())
        b = json.loads((tmp_path / "b" / "report.json").read_text())
        assert a["verdict"] == b["verdict"] == "consistent-with-geodesic"
        assert a["singularity_max"] != b["singularity_max"]

    def test_bad_command(self, tmp_path):
        with pytest.raises(SystemExit):
            main(["fly", "--config", "x", "--out", str(tmp_path)])

    def test_console_entry_point(self, tmp_path):
        proc = subprocess.run(
            [sys.executable, "-m", "rollgeo.cli", "roll", "--config", str(CONFIGS / "roll.yaml"),
             "--out", str(tmp_path)],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0, proc.stderr

    @pytest.mark.parametrize("command,config,outputs", [
        ("roll", "roll.yaml", ["trajectory.csv"]),
        ("bend", "bend.yaml", ["bent.csv", "breaks.json"]),
        ("shortcut", "shortcut.yaml", ["shortcut.json"]),
    ])
    def test_byte_identical(self, tmp_path, command, config, outputs):
        for d in ("one", "two"):
            assert run(command, CONFIGS / config, tmp_path / d) == 0
        for name in outputs:
            assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "two" / name).read_bytes()
