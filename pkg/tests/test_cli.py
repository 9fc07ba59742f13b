import json
import subprocess
import sys

import pytest

from compgrad import harness
from compgrad.cli import run


def _err(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


class TestExitCodes:
    def test_usage(self, capsys):
        assert run(["landscape", "--bogus"]) == 2

    def test_version(self, capsys):
        assert run(["--version"]) == 0

    def test_unknown_task(self, capsys, tmp_path):
        assert run(["landscape", "--task", "nope", "--out", str(tmp_path)]) == 3
        rec = _err(capsys)
        assert rec["exit_code"] == 3 and rec["error"] == "UnknownTaskError"

    def test_bad_config(self, capsys, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("this line has no equals sign\n")
        assert run(["landscape", "--config", str(cfg), "--out", str(tmp_path)]) == 4
        assert _err(capsys)["exit_code"] == 4

    def test_unknown_key(self, capsys, tmp_path):
        assert run(["table1", "--set", "bogus=1", "--out", str(tmp_path)]) == 4

    def test_invalid_env_constant(self, capsys, tmp_path):
        code = run(["landscape", "--task", "sigmoid", "--set", "env.T=0", "--set", "grid=0.1",
                    "--set", "trials=2", "--out", str(tmp_path)])
        assert code == 4

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_numeric_abort(self, capsys, tmp_path):
        code = run(["landscape", "--task", "quadratic", "--set", "grid=1e200", "--set", "trials=2",
                    "--set", "oracle=analytic", "--out", str(tmp_path)])
        assert code == 5
        rec = _err(capsys)
        assert rec["error"] == "NumericError" and rec["location"] == 0

    def test_io_error(self, capsys, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("")
        code = run(["table1", "--set", "m=5", "--set", "dims=1", "--out", str(blocker / "sub")])
        assert code == 6
        assert _err(capsys)["exit_code"] == 6

    def test_plot_missing_input(self, capsys, tmp_path):
        assert run(["plot", "--input", str(tmp_path / "none.csv"), "--out", str(tmp_path)]) == 6


class TestCommands:
    def test_table1_reproducible(self, tmp_path, capsys):
        args = ["table1", "--seed", "7", "--set", "m=40", "--set", "dims=1,8"]
        assert run(args + ["--out", str(tmp_path / "a")]) == 0
        assert run(args + ["--out", str(tmp_path / "b")]) == 0
        a = (tmp_path / "a" / "table1.csv").read_bytes()
        assert a == (tmp_path / "b" / "table1.csv").read_bytes()
        direct = harness.run_experiment(harness.load_config("table1", seed=7, m=40, dims=[1, 8]), tmp_path / "c")
        assert direct.read_bytes() == a

    def test_gradcheck(self, tmp_path, capsys):
        assert run(["gradcheck", "--task", "ball_with_wall", "--points", "50", "--out", str(tmp_path)]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["passed"] and report["max_rel_error"] < 1e-5
        assert (tmp_path / "gradcheck_ball_with_wall.json").exists()

    def test_landscape_then_plot(self, tmp_path, capsys):
        out = tmp_path / "r"
        assert run(["landscape", "--task", "quadratic", "--set", "grid=0:1:3", "--set", "trials=5",
                    "--set", "oracle=analytic", "--out", str(out)]) == 0
        csv_path = capsys.readouterr().out.strip()
        assert run(["plot", "--input", csv_path, "--metric", "sqrt_error,alpha_mean",
                    "--task", "quadratic", "--out", str(out)]) == 0
        assert (out / "quadratic_sqrt_error.svg").exists()
        assert (out / "quadratic_alpha_mean.svg").exists()

    def test_presets(self, capsys):
        assert run(["presets"]) == 0
        listed = capsys.readouterr().out.split()
        assert listed == harness.list_presets()

    def test_console_entry_point(self):
        res = subprocess.run([sys.executable, "-m", "compgrad", "presets"], capture_output=True, text=True)
        assert res.returncode == 0 and "table1" in res.stdout
