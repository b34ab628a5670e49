"""Pseudo-spectral advection, the vorticity source and the cancellation identity."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ddeuler.spectral import Field, Grid, biot_savart, gradient, leray_project, random_band_field
from oracles import true_extrema

from ddeuler.transport import (AdvectionStep, CFLViolation, advect, cancellation_identity_check, cfl_number,
                               max_speed, vorticity_source)


@pytest.fixture(scope="module")
def grid():
    return Grid(64)


def unit_velocity(grid, seed, kmax=6):
    u = leray_project(random_band_field(grid, np.random.default_rng(seed), 1, kmax, ncomp=2))
    return u * (1.0 / max_speed(u))


class TestStep:
    def test_validation(self):
        with pytest.raises(ValueError):
            AdvectionStep(dt=0.0)
        with pytest.raises(ValueError):
            AdvectionStep(dt=0.1, scheme="euler")

    def test_cfl_violation_reports_number(self, grid):
        u = unit_velocity(grid, 0)
        dt = 0.9 * grid.h
        with pytest.raises(CFLViolation) as info:
            advect(Field.zeros(grid), u, step=AdvectionStep(dt=dt))
        assert info.value.cfl == pytest.approx(cfl_number(u, dt))
        assert info.value.cfl == pytest.approx(0.9)

    def test_constant_unchanged(self, grid):
        q = Field(grid, physical=np.full((64, 64), 3.25))
        out = advect(q, unit_velocity(grid, 1), step=AdvectionStep(dt=0.4 * grid.h))
        assert np.abs(out.physical - 3.25).max() <= 1e-14

    def test_inputs_unmodified(self, grid):
        q = random_band_field(grid, np.random.default_rng(2), 0, 8)
        before = q.physical.copy()
        advect(q, unit_velocity(grid, 3), step=AdvectionStep(dt=0.2 * grid.h))
        assert np.array_equal(q.physical, before)


class TestTranslation:
    def test_exact_phase_shift(self, grid):
        # uniform translation: q(t, x) = q0(x - c t); exact solution is a spectral phase shift
        c = 0.7
        u = Field(grid, physical=np.stack([np.full((64, 64), c), np.zeros((64, 64))]))
        q0 = random_band_field(grid, np.random.default_rng(4), 0, 4)
        q0 = q0 * (1.0 / q0.norm(np.inf))
        step = AdvectionStep(dt=0.05 * grid.h / c)
        q = q0
        for _ in range(100):
            q = advect(q, u, step=step)
        k1, _ = grid.wavenumbers
        exact = Field(grid, spectral=q0.spectral * np.exp(-1j * k1 * c * 100 * step.dt))
        assert np.abs(q.physical - exact.physical).max() <= 1e-8


class TestConservation:
    def test_integrals_conserved(self, grid):
        u = unit_velocity(grid, 5)
        q = random_band_field(grid, np.random.default_rng(6), 0, 6)
        m0, e0 = grid.integrate(q.physical), grid.integrate(q.physical**2)
        step = AdvectionStep(dt=0.1 * grid.h)
        for _ in range(100):
            q = advect(q, u, step=step)
        assert abs(grid.integrate(q.physical) - m0) <= 1e-8 * np.sqrt(e0)
        assert abs(grid.integrate(q.physical**2) - e0) <= 1e-8 * e0

    def test_range_preserved(self):
        # one-sided: the extrema of the interpolant may not leave the initial range
        g = Grid(128)
        u = unit_velocity(g, 7, kmax=3)
        q = Field.from_function(g, lambda x, y: np.sin(x) * np.cos(2 * y))
        lo, hi = true_extrema(q)
        step = AdvectionStep(dt=1.0 / 500)
        for _ in range(500):
            q = advect(q, u, step=step)
        new_lo, new_hi = true_extrema(q)
        assert new_lo >= lo - 1e-6 * (hi - lo)
        assert new_hi <= hi + 1e-6 * (hi - lo)

    def test_time_dependent_velocity_callable(self, grid):
        u = unit_velocity(grid, 8)
        q = random_band_field(grid, np.random.default_rng(9), 0, 6)
        step = AdvectionStep(dt=0.2 * grid.h)
        frozen = advect(q, u, step=step)
        moving = advect(q, lambda theta: u, step=step)
        assert np.abs(frozen.physical - moving.physical).max() < 1e-15


class TestVorticitySource:
    def test_constant_density(self, grid):
        rho = Field(grid, physical=np.full((64, 64), 1.3))
        gp = random_band_field(grid, np.random.default_rng(10), 1, 8, ncomp=2)
        assert vorticity_source(rho, gp).norm(np.inf) < 1e-14

    def test_parallel_gradients(self, grid):
        rho = Field.from_function(grid, lambda x, y: 1.2 + 0.5 * np.sin(x))
        gp = Field.from_function(grid, lambda x, y: (np.cos(2 * x), 0 * x))
        assert vorticity_source(rho, gp).norm(np.inf) <= 1e-12

    def test_rejects_nonpositive_density(self, grid):
        with pytest.raises(ValueError):
            vorticity_source(Field.from_function(grid, lambda x, y: np.sin(x)), Field.zeros(grid, 2))

    def test_matches_finite_differences(self):
        # second-order centred differences converge at rate 4 to the spectral value
        errs = []
        for n in (32, 64, 128):
            g = Grid(n)
            rho = Field.from_function(g, lambda x, y: 1.0 / (1.0 + 0.3 * np.sin(x) * np.cos(2 * y)))
            pi = Field.from_function(g, lambda x, y: np.cos(x + y) + 0.5 * np.sin(2 * x))
            a = 1.0 / rho.physical
            d = lambda f, ax: (np.roll(f, -1, ax) - np.roll(f, 1, ax)) / (2 * g.h)  # noqa: E731
            fd = -(d(a, 0) * d(pi.physical, 1) - d(a, 1) * d(pi.physical, 0))
            k1, k2 = g.derivative_wavenumbers
            gp = Field(g, spectral=np.stack([1j * k1 * pi.spectral, 1j * k2 * pi.spectral]))
            errs.append(np.abs(vorticity_source(rho, gp, dealias=False).physical - fd).max())
        assert errs[0] / errs[1] > 3.5 and errs[1] / errs[2] > 3.8

    @settings(max_examples=15, deadline=None)
    @given(seed=st.integers(0, 2**31))
    def test_integrates_to_zero(self, seed):
        g = Grid(32)
        rng = np.random.default_rng(seed)
        p = random_band_field(g, rng, 1, 4).physical
        rho = Field(g, physical=1.0 / (1.0 + 0.5 * p / np.abs(p).max()))
        gp = gradient(random_band_field(g, rng, 1, 8))
        assert abs(g.integrate(vorticity_source(rho, gp).physical)) < 1e-10


class TestCancellationIdentity:
    def test_zero(self, grid):
        assert cancellation_identity_check(Field.zeros(grid, 2)).discrepancy == 0

    def test_shear(self, grid):
        rep = cancellation_identity_check(Field.from_function(grid, lambda x, y: (np.sin(y), 0 * x)))
        assert rep.discrepancy <= 1e-10

    def test_random_divergence_free(self, grid):
        rng = np.random.default_rng(11)
        for _ in range(20):
            rep = cancellation_identity_check(leray_project(random_band_field(grid, rng, 1, 16, ncomp=2)))
            assert rep.discrepancy <= 1e-9 * rep.scale


class TestHomogeneousVorticity:
    def test_norms_conserved_by_transport(self, grid):
        # rho = 1: omega is carried by u = BS(omega), re-evaluated every step
        w = Field.from_function(grid, lambda x, y: np.cos(x) * np.cos(y) + 0.4 * np.sin(2 * x + y))
        l2_0 = w.norm(2)
        linf_0 = max(abs(v) for v in true_extrema(w))
        step = AdvectionStep(dt=0.1 * grid.h / max_speed(biot_savart(w)))
        for _ in range(100):
            w = advect(w, biot_savart(w), step=step)
        assert abs(w.norm(2) - l2_0) <= 1e-5 * l2_0
        assert abs(max(abs(v) for v in true_extrema(w)) - linf_0) <= 1e-5 * linf_0
