"""Initial data, the simulate driver, the rescaling test and the lifespan scans."""

from __future__ import annotations

import csv
import io
import math

import numpy as np
import pytest

from ddeuler import experiments as E
from ddeuler import solver as S
from ddeuler.config import ExperimentConfig, load_config
from ddeuler.spectral import Grid, divergence, read_field
from ddeuler.transport import max_speed

SMALL = ExperimentConfig(grid_n=32, time_t_end=0.2, init_b_amp=0.2)
# coarse scan: the proxy trips on the spectral tail long before t_end
SCAN = ExperimentConfig(grid_n=32, time_t_end=6.0, init_b_amp=0.2, proxy_tail_cap=1e-5, proxy_drift_tol=1.0)


class TestInitialData:
    @pytest.mark.parametrize("profile", ["taylor_green", "random_band"])
    def test_velocity_profile(self, profile):
        g = Grid(32)
        u = E.velocity_profile(SMALL.with_values(init_profile=profile), g)
        assert max_speed(u) == pytest.approx(1.0, rel=1e-14)
        assert divergence(u).norm(np.inf) < 1e-12

    def test_random_band_is_seeded(self):
        g = Grid(32)
        cfg = SMALL.with_values(init_profile="random_band", init_seed=3)
        a, b = E.velocity_profile(cfg, g), E.velocity_profile(cfg, g)
        assert np.array_equal(a.physical, b.physical)
        c = E.velocity_profile(cfg.with_values(init_seed=4), g)
        assert not np.array_equal(a.physical, c.physical)

    def test_b_amp_is_the_besov_norm(self):
        for eta in (0.0, 0.1, 0.4):
            st = E.initial_state(SMALL, b_amp=eta)
            assert S.diagnostics(st).B == pytest.approx(eta, rel=1e-12, abs=1e-15)

    def test_u_amp_scales_speed(self):
        st = E.initial_state(SMALL, u_amp=0.25)
        assert max_speed(st.u) == pytest.approx(0.25, rel=1e-12)

    def test_rejects_bad_b_amp(self):
        with pytest.raises(ValueError):
            E.initial_state(SMALL, b_amp=1.0)


class TestRun:
    def test_outputs(self, tmp_path):
        res = E.run(SMALL.with_values(output_stride=2), tmp_path)
        assert res.status == "completed"
        assert load_config(tmp_path / "config.echo") == SMALL.with_values(output_stride=2)
        rows = list(csv.reader((tmp_path / "diagnostics.csv").read_text().splitlines()))
        assert tuple(rows[0]) == S.DIAGNOSTIC_COLUMNS
        assert float(rows[-1][0]) == pytest.approx(0.2, abs=1e-14)
        assert len(rows) - 1 == len(range(0, len(res.records), 2)) + ((len(res.records) - 1) % 2 != 0)
        rho = read_field(tmp_path / "rho_final.fld")
        assert rho.physical.tobytes() == res.final.rho.physical.tobytes()
        for name in ("u_initial", "omega_initial", "u_final", "omega_final", "rho_initial"):
            assert (tmp_path / f"{name}.fld").exists()

    def test_csv_is_full_precision(self):
        res = E.run(SMALL)
        text = E.records_csv(res.records)
        parsed = np.loadtxt(io.StringIO(text), delimiter=",", skiprows=1)
        assert np.array_equal(parsed, np.array([r.row() for r in res.records]))

    def test_deterministic(self, tmp_path):
        E.run(SMALL, tmp_path / "a")
        E.run(SMALL, tmp_path / "b")
        for name in ("diagnostics.csv", "u_final.fld"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


class TestRescale:
    def test_identity_scaling(self):
        rep = E.rescale_equivariance_test(SMALL, 1.0)
        assert rep.status == "pass" and rep.discrepancy == 0

    @pytest.mark.parametrize("eps", [0.5, 0.1])
    def test_equivariance(self, eps):
        rep = E.rescale_equivariance_test(SMALL, eps)
        assert rep.status == "pass" and rep.discrepancy <= 1e-10 and rep.steps > 0

    def test_inconclusive_when_proxy_trips(self):
        rep = E.rescale_equivariance_test(SMALL.with_values(proxy_tail_cap=1e-30), 0.5)
        assert rep.status == "inconclusive"

    def test_rejects_bad_eps(self):
        with pytest.raises(ValueError):
            E.rescale_equivariance_test(SMALL, 0.0)
        with pytest.raises(ValueError):
            E.rescale_equivariance_test(SMALL, 1.5)


class TestScans:
    def test_epsilon_scaled_lifespan_is_constant(self):
        rep = E.lifespan_scan_epsilon(SCAN, [1.0, 0.5])
        assert [r.status for r in rep.rows] == ["tripped", "tripped"]
        scaled = [r.value * r.lifespan for r in rep.rows]
        # the exact symmetry maps one run onto the other
        assert scaled[1] == pytest.approx(scaled[0], rel=1e-12)
        assert rep.monotone

    def test_eta_scan(self):
        rep = E.lifespan_scan_eta(SCAN, [0.4, 0.2, 0.1])
        assert all(r.status == "tripped" for r in rep.rows)
        assert rep.monotone == all(b >= a for a, b in zip(rep.lifespans, rep.lifespans[1:]))
        assert math.isfinite(rep.fit_slope)
        assert [r.B0 for r in rep.rows] == pytest.approx([0.4, 0.2, 0.1], rel=1e-12)
        lines = rep.to_csv().splitlines()
        assert lines[0].startswith("eta,status,lifespan") and len(lines) == 4

    def test_workers_preserve_order(self):
        serial = E.lifespan_scan_eta(SCAN.with_values(time_t_end=0.3), [0.3, 0.1])
        parallel = E.lifespan_scan_eta(SCAN.with_values(time_t_end=0.3), [0.3, 0.1], workers=2)
        assert serial.to_csv() == parallel.to_csv()

    def test_solver_error_aborts_scan(self):
        cfg = SCAN.with_values(proxy_drift_tol=0.0, proxy_tail_cap=1.0)
        rep = E.lifespan_scan_eta(cfg, [0.4, 0.2])
        assert rep.rows[0].status == "solver_error" and not rep.monotone and "aborted" in rep.note

    @pytest.mark.parametrize("values", [[0.5, 1.0], [1.0, 1.0], [0.0]])
    def test_rejects_bad_eps_lists(self, values):
        with pytest.raises(ValueError):
            E.lifespan_scan_epsilon(SCAN, values)

    def test_rejects_bad_eta_lists(self):
        with pytest.raises(ValueError):
            E.lifespan_scan_eta(SCAN, [0.1, 0.2])
        with pytest.raises(ValueError):
            E.lifespan_scan_eta(SCAN, [1.0])


class TestScanEdgeCases:
    def test_empty_eps_list(self):
        rep = E.lifespan_scan_epsilon(SCAN, [])
        assert rep.rows == [] and rep.monotone
        assert rep.to_csv().count("\n") == 1

    def test_lifespan_doubles_when_eps_halves(self):
        rep = E.lifespan_scan_epsilon(SCAN, [1.0, 0.5, 0.25])
        T = rep.lifespans
        assert T[1] / T[0] >= 1.8 and T[2] / T[1] >= 1.8

    def test_homogeneous_eps_scan_does_not_trip(self):
        # homogeneous Taylor-Green is a steady Euler flow: nothing reaches the spectral tail
        rep = E.lifespan_scan_epsilon(SCAN.with_values(init_b_amp=0.0, time_t_end=2.0), [1.0, 0.5])
        assert [r.status for r in rep.rows] == ["no_trip", "no_trip"]
        assert all(r.lifespan == math.inf for r in rep.rows)

    def test_eta_zero_row(self):
        rep = E.lifespan_scan_eta(SCAN, [0.2, 0.0])
        assert rep.rows[0].status == "tripped"
        assert rep.rows[1].status == "no_trip" and rep.rows[1].source_integral == 0 and rep.rows[1].B0 == 0
        assert rep.monotone

    def test_b_envelope_recorded(self):
        row = E.lifespan_scan_eta(SCAN, [0.3]).rows[0]
        assert math.isfinite(row.envelope_c) and row.envelope_c >= 0
        # B_final <= B0 exp(c X_integral) holds by construction of the fitted c
        assert row.B_final <= row.B0 * math.exp(row.envelope_c * row.X_integral) * (1 + 1e-12)
        assert row.source_integral > 0 and row.max_pressure_iterations >= 1


class TestRescaleLifespan:
    def test_scaled_trip_time(self):
        # both runs trip; the scaled one no earlier than 0.9 / eps times the reference
        cfg = SCAN.with_values(time_t_end=40.0)
        eps = 0.1
        rep = E.rescale_equivariance_test(cfg, eps)
        assert rep.status == "inconclusive"
        assert rep.trip_time_reference is not None and rep.trip_time_scaled is not None
        assert rep.trip_time_scaled >= 0.9 * rep.trip_time_reference / eps
