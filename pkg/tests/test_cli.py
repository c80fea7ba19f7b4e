import json
import subprocess
import sys

import numpy as np
import pytest

from informativity import __version__
from informativity.cli import main
from informativity.data import DataSet, Experiment, dump_csv_experiment, dump_dataset


def write_data(path, u, x, y=None):
    e = Experiment.from_time_major(u, x, y)
    dump_dataset(DataSet([e], e.x.shape[0], e.u.shape[0], 0 if y is None else e.y.shape[0]), path)
    return str(path)


@pytest.fixture
def shift_register_file(tmp_path):
    return write_data(tmp_path / "shift.json", [1, 0], [(0, 0), (1, 0), (0, 1)])


@pytest.fixture
def two_state_file(tmp_path):
    return write_data(tmp_path / "two.json", [-1, -1], [(1, 0), (0.5, 1), (-0.25, 1)])


@pytest.fixture
def one_step_file(tmp_path):
    return write_data(tmp_path / "one.json", [1], [0, 1])


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def run_json(capsys, *argv):
    code, out, err = run(capsys, *argv)
    return code, json.loads(out), err


class TestSmallDataExamples:
    def test_analyze_controllability(self, capsys, shift_register_file):
        code, doc, _ = run_json(capsys, "analyze", "--data", shift_register_file, "--property", "controllability")
        assert code == 0
        result = doc["result"]
        assert result["informative"] is True
        assert result["certificate"]["candidates"][0]["rank"] == 2
        assert doc["version"] == __version__
        assert doc["tolerances"]["rank_scale"] == 1.0

    def test_synth_stabilize(self, capsys, two_state_file):
        code, doc, _ = run_json(capsys, "synth", "--data", two_state_file, "--task", "stabilize")
        assert code == 0
        np.testing.assert_allclose(doc["result"]["controller"]["K"], [[-1.0, -0.5]], atol=1e-9)

    def test_synth_stabilize_not_informative(self, capsys, one_step_file):
        code, doc, _ = run_json(capsys, "synth", "--data", one_step_file, "--task", "stabilize", "--method", "lmi")
        assert code == 2
        assert doc["result"]["informative"] is False
        assert "LMI infeasible" in doc["result"]["reason"]


class TestCommands:
    def test_sysid_negative(self, capsys, shift_register_file):
        code, doc, _ = run_json(capsys, "analyze", "--data", shift_register_file, "--property", "sysid")
        assert code == 2 and doc["result"]["witness"] is not None

    def test_synth_then_verify(self, capsys, tmp_path, two_state_file):
        out = tmp_path / "ctrl.json"
        code, _, _ = run(capsys, "synth", "--data", two_state_file, "--task", "stabilize", "-o", str(out))
        assert code == 0
        code, doc, _ = run_json(capsys, "verify", "--data", two_state_file, "--controller", str(out),
                                "--samples", "50")
        assert code == 0
        assert abs(doc["result"]["worst_radius"] - np.sqrt(3) / 2) < 1e-9

    def test_verify_falsified(self, capsys, tmp_path, one_step_file):
        ctrl = tmp_path / "k.json"
        ctrl.write_text(json.dumps({"kind": "gain", "K": [[-0.5]]}))
        code, doc, _ = run_json(capsys, "verify", "--data", one_step_file, "--controller", str(ctrl))
        assert code == 2 and doc["result"]["falsifier"] is not None

    def test_lqr(self, capsys, tmp_path):
        data = write_data(tmp_path / "d.json", [0, -1], [1, 1, 0])
        weights = tmp_path / "w.json"
        weights.write_text(json.dumps({"Q": [[1]], "R": [[1]]}))
        code, doc, _ = run_json(capsys, "synth", "--data", data, "--task", "lqr", "--weights", str(weights))
        assert code == 0
        assert abs(doc["result"]["certificate"]["P_plus"][0][0] - (1 + np.sqrt(5)) / 2) < 1e-8

    def test_deadbeat(self, capsys, tmp_path):
        data = write_data(tmp_path / "d.json", [0, 1], [1, 2, 5])
        code, doc, _ = run_json(capsys, "synth", "--data", data, "--task", "deadbeat")
        assert code == 0
        np.testing.assert_allclose(doc["result"]["controller"]["K"], [[-2.0]], atol=1e-10)

    def test_output_feedback(self, capsys, tmp_path):
        data = write_data(tmp_path / "d.json", [0, 1], [1, 2, 5], [1, 2])
        code, doc, _ = run_json(capsys, "synth", "--data", data, "--task", "output-feedback")
        assert code == 0
        assert doc["result"]["controller"]["kind"] == "compensator"

    def test_simulate_round_trip(self, capsys, tmp_path):
        system = tmp_path / "sys.json"
        system.write_text(json.dumps({"A": [[1.2, 0.3], [0.0, 0.5]], "B": [[0.0], [1.0]]}))
        u = tmp_path / "u.json"
        u.write_text(json.dumps(np.random.default_rng(0).standard_normal((8, 1)).tolist()))
        x0 = tmp_path / "x0.json"
        x0.write_text(json.dumps([1.0, -1.0]))
        sim = tmp_path / "sim.json"
        code, _, _ = run(capsys, "simulate", "--system", str(system), "--input", str(u), "--x0", str(x0),
                         "-o", str(sim))
        assert code == 0
        code, doc, _ = run_json(capsys, "analyze", "--data", str(sim), "--property", "sysid")
        assert code == 0
        np.testing.assert_allclose(doc["result"]["certificate"]["A"], [[1.2, 0.3], [0.0, 0.5]], atol=1e-10)
        code, _, _ = run(capsys, "synth", "--data", str(sim), "--task", "stabilize")
        assert code == 0

    def test_pe_order(self, capsys, tmp_path):
        u = np.random.default_rng(1).standard_normal(20)
        data = write_data(tmp_path / "d.json", u, np.zeros(21))
        code, doc, _ = run_json(capsys, "pe-order", "--data", data)
        assert code == 0 and doc["result"]["order"] == 10

    def test_csv_directory_input(self, capsys, tmp_path):
        e = Experiment.from_time_major([-1, -1], [(1, 0), (0.5, 1), (-0.25, 1)])
        dump_csv_experiment(e, tmp_path / "csvdata")
        code, doc, _ = run_json(capsys, "synth", "--data", str(tmp_path / "csvdata"), "--task", "stabilize")
        assert code == 0
        np.testing.assert_allclose(doc["result"]["controller"]["K"], [[-1.0, -0.5]], atol=1e-9)


class TestOutputAndErrors:
    def test_deterministic(self, capsys, shift_register_file):
        first = run(capsys, "analyze", "--data", shift_register_file, "--property", "stabilizability", "--seed", "3")
        second = run(capsys, "analyze", "--data", shift_register_file, "--property", "stabilizability", "--seed", "3")
        assert first == second

    def test_verify_deterministic(self, capsys, tmp_path, two_state_file):
        ctrl = tmp_path / "k.json"
        ctrl.write_text(json.dumps({"K": [[-1.0, -0.4]]}))
        args = ("verify", "--data", two_state_file, "--controller", str(ctrl), "--seed", "7")
        assert run(capsys, *args) == run(capsys, *args)

    def test_csv_format(self, capsys, two_state_file):
        code, out, _ = run(capsys, "synth", "--data", two_state_file, "--task", "stabilize", "--format", "csv")
        assert code == 0
        lines = out.splitlines()
        assert lines[0] == "key,value"
        rows = dict(line.split(",", 1) for line in lines[1:])
        assert rows["result.task"] == "stabilize"
        assert float(rows["result.controller.K.0.1"]) == pytest.approx(-0.5, abs=1e-9)

    def test_tolerance_flags_recorded(self, capsys, shift_register_file):
        code, doc, _ = run_json(capsys, "analyze", "--data", shift_register_file, "--property", "sysid",
                                "--rank-tol-scale", "10", "--stability-margin", "1e-6")
        assert doc["tolerances"]["rank_scale"] == 10
        assert doc["tolerances"]["stability_margin"] == 1e-6

    def test_missing_file(self, capsys, tmp_path):
        code, out, err = run(capsys, "analyze", "--data", str(tmp_path / "nope.json"), "--property", "sysid")
        assert code == 1 and out == "" and "cannot read" in err

    def test_malformed_data(self, capsys, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"experiments": []}))
        code, _, err = run(capsys, "analyze", "--data", str(bad), "--property", "sysid")
        assert code == 1 and err

    def test_missing_weights(self, capsys, two_state_file):
        code, _, err = run(capsys, "synth", "--data", two_state_file, "--task", "lqr")
        assert code == 1 and "--weights" in err

    def test_stability_with_inputs_is_an_error(self, capsys, two_state_file):
        code, _, _ = run(capsys, "analyze", "--data", two_state_file, "--property", "stability")
        assert code == 1

    def test_module_entry_point(self, shift_register_file):
        proc = subprocess.run([sys.executable, "-m", "informativity", "analyze", "--data", shift_register_file,
                               "--property", "controllability"], capture_output=True, text=True)
        assert proc.returncode == 0
        assert json.loads(proc.stdout)["result"]["informative"] is True
