"""Command-line subcommands and exit codes."""

from __future__ import annotations

import subprocess
import sys

import numpy as np
import pytest

from ddeuler.cli import EXIT_CONFIG, EXIT_FAIL, EXIT_OK, EXIT_SOLVER, EXIT_TRIPPED, main
from ddeuler.littlewood_paley import BesovIndex, DyadicLadder, besov_norm
from ddeuler.spectral import Field, Grid, write_field


@pytest.fixture
def cfg_file(tmp_path):
    def make(text: str):
        p = tmp_path / "run.cfg"
        p.write_text(text)
        return p
    return make


BASE = "grid.n = 32\ntime.t_end = 0.1\ninit.b_amp = 0.2\n"


class TestSimulate:
    def test_completes(self, cfg_file, tmp_path, capsys):
        code = main(["simulate", "--config", str(cfg_file(BASE)), "--out", str(tmp_path / "out")])
        assert code == EXIT_OK
        assert capsys.readouterr().out.startswith("status=completed t=0.1 ")
        assert (tmp_path / "out" / "diagnostics.csv").exists()

    def test_tripped(self, cfg_file, tmp_path):
        code = main(["simulate", "--config", str(cfg_file(BASE + "proxy.tail_cap = 1e-30\n")),
                     "--out", str(tmp_path / "o")])
        assert code == EXIT_TRIPPED

    def test_solver_error(self, cfg_file, tmp_path):
        text = BASE + "pressure.method = fixed_point\npressure.max_iter = 1\npressure.tol = 1e-15\n"
        assert main(["simulate", "--config", str(cfg_file(text)), "--out", str(tmp_path / "o")]) == EXIT_SOLVER

    def test_config_error_names_line(self, cfg_file, capsys):
        code = main(["simulate", "--config", str(cfg_file("grid.n = 32\ninit.b_amp = 2\n"))])
        assert code == EXIT_CONFIG
        assert "line 2: init.b_amp must lie in [0, 1)" in capsys.readouterr().err

    def test_missing_config(self, tmp_path):
        assert main(["simulate", "--config", str(tmp_path / "nope.cfg")]) == EXIT_CONFIG


class TestBesov:
    def test_matches_library(self, tmp_path, capsys):
        g = Grid(32)
        f = Field.from_function(g, lambda x, y: np.cos(3 * x + 4 * y) + 0.5 * np.sin(y))
        write_field(tmp_path / "f.fld", f)
        assert main(["besov", "--field", str(tmp_path / "f.fld"), "--s", "1", "--p", "inf", "--r", "1"]) == EXIT_OK
        expect = besov_norm(DyadicLadder(g), f, BesovIndex(1, np.inf, 1))
        assert float(capsys.readouterr().out) == expect

    def test_rejects_bad_index(self, tmp_path):
        with pytest.raises(SystemExit):
            main(["besov", "--field", str(tmp_path / "f.fld"), "--s", "1", "--p", "3", "--r", "1"])


class TestRescaleCheck:
    def test_pass(self, cfg_file, capsys):
        assert main(["rescale-check", "--config", str(cfg_file(BASE)), "--eps", "0.5"]) == EXIT_OK
        assert "status=pass" in capsys.readouterr().out

    def test_fail_with_impossible_tolerance(self, cfg_file):
        # eps = 0.1 is not a power of two, so round-off leaves a tiny nonzero discrepancy
        assert main(["rescale-check", "--config", str(cfg_file(BASE)), "--eps", "0.1", "--tol", "0"]) == EXIT_FAIL

    def test_inconclusive(self, cfg_file):
        text = BASE + "proxy.tail_cap = 1e-30\n"
        assert main(["rescale-check", "--config", str(cfg_file(text)), "--eps", "0.5"]) == EXIT_TRIPPED


class TestScan:
    SCAN = "grid.n = 32\ntime.t_end = 6\ninit.b_amp = 0.2\nproxy.tail_cap = 1e-5\nproxy.drift_tol = 1\n"

    def test_epsilon_csv(self, cfg_file, tmp_path, capsys):
        out = tmp_path / "scan.csv"
        code = main(["lifespan-scan", "--config", str(cfg_file(self.SCAN)), "--mode", "epsilon",
                     "--values", "1,0.5", "--out", str(out)])
        assert code == EXIT_OK
        lines = out.read_text().splitlines()
        assert lines[0].startswith("eps,status,lifespan,scaled_lifespan") and len(lines) == 3

    def test_eta_stdout(self, cfg_file, capsys):
        code = main(["lifespan-scan", "--config", str(cfg_file(self.SCAN)), "--mode", "eta", "--values", "0.4,0.1"])
        cap = capsys.readouterr()
        assert code in (EXIT_OK, EXIT_FAIL)
        assert cap.out.startswith("eta,status") and "fit T" in cap.err

    def test_empty_values(self, cfg_file, capsys):
        code = main(["lifespan-scan", "--config", str(cfg_file(self.SCAN)), "--mode", "epsilon", "--values", ""])
        assert code == EXIT_OK and capsys.readouterr().out.count("\n") == 1

    def test_solver_error(self, cfg_file):
        text = self.SCAN.replace("proxy.drift_tol = 1", "proxy.drift_tol = 0")
        code = main(["lifespan-scan", "--config", str(cfg_file(text)), "--mode", "eta", "--values", "0.4"])
        assert code == EXIT_SOLVER

    def test_bad_values(self, cfg_file):
        assert main(["lifespan-scan", "--config", str(cfg_file(self.SCAN)), "--mode", "eta",
                     "--values", "0.1,0.4"]) == EXIT_CONFIG
        with pytest.raises(SystemExit):
            main(["lifespan-scan", "--config", str(cfg_file(self.SCAN)), "--mode", "eta", "--values", "a,b"])


class TestEntryPoint:
    def test_module_invocation(self):
        proc = subprocess.run([sys.executable, "-m", "ddeuler.cli", "--help"], capture_output=True, text=True)
        assert proc.returncode == 0
        for cmd in ("simulate", "besov", "rescale-check", "lifespan-scan", "selftest"):
            assert cmd in proc.stdout
