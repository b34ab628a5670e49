"""The n = 64 property battery: all suites pass, output is deterministic, faults are caught."""

from __future__ import annotations

import io

import pytest

from ddeuler.cli import EXIT_FAIL, EXIT_OK, main
from ddeuler.selftest import SUITES, corrupted_ladder, selftest
from ddeuler.spectral import Grid


@pytest.fixture(scope="module")
def clean_run():
    out, err = io.StringIO(), io.StringIO()
    results = selftest(out, err)
    return results, out.getvalue(), err.getvalue()


def test_all_suites_pass(clean_run):
    results, text, _ = clean_run
    assert [r.name for r in results] == [name for name, _ in SUITES]
    assert all(r.passed for r in results), text
    assert text.splitlines()[-1] == f"{len(SUITES)}/{len(SUITES)} suites passed"


def test_output_is_byte_identical(clean_run):
    _, text, _ = clean_run
    out = io.StringIO()
    selftest(out, io.StringIO())
    assert out.getvalue() == text


def test_timings_only_on_stderr(clean_run):
    _, text, err = clean_run
    assert "[selftest]" in err and "[selftest]" not in text


def test_corrupted_cutoffs_are_detected():
    out = io.StringIO()
    results = {r.name: r.passed for r in selftest(out, io.StringIO(), corrupted_ladder(Grid(64)))}
    assert not results["partition_of_unity"] and not results["bony_decomposition"]
    assert results["spectral_core"] and results["pressure_solver"]


def test_cli_exit_codes(capsys):
    assert main(["selftest"]) == EXIT_OK
    assert main(["selftest", "--corrupt-cutoffs"]) == EXIT_FAIL
    assert "FAIL partition_of_unity" in capsys.readouterr().out
