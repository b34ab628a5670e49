"""Time integration of the density-dependent Euler system on the torus.

The advected unknown is ``a = 1/rho``.  Two formulations are provided:
velocity-pressure (:func:`step`) and 2-D vorticity-pressure
(:func:`step_vorticity`).  Both use classical RK4 in time with the pressure
re-solved at every stage by default, and Leray cleaning of the velocity after
each step.  Also here: the linear Picard approximation scheme, the stability
gap between two runs and the blow-up proxy.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import pressure as psolve
from .littlewood_paley import BesovIndex, DyadicLadder, besov_norm
from .spectral import Array, Field, Grid, biot_savart, curl, jacobian, leray_project
from .transport import advection_term, check_cfl, max_speed, wedge

log = logging.getLogger(__name__)

DIAGNOSTIC_COLUMNS = ("t", "energy", "rho_min", "rho_max", "sup_grad_u", "bkm_integrand",
                      "omega_linf", "omega_l2", "X", "B", "tail_fraction")


class SolverError(RuntimeError):
    """Raised by the steppers; ``diagnostics`` holds the record at failure when available."""

    def __init__(self, message: str, diagnostics: "DiagnosticsRecord | None" = None):
        super().__init__(message)
        self.diagnostics = diagnostics


class PressureFailure(SolverError):
    pass


class CFLFailure(SolverError):
    pass


class DensityBoundViolation(SolverError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    cfl_cap: float = 0.5
    pressure_method: str = "fixed_point_with_cg_fallback"
    pressure_tol: float = 1e-10
    pressure_max_iter: int = 200
    pressure_relax: float = 1.0
    pressure_per_stage: bool = True
    drift_tol: float = 1e-3
    besov_s: float = 1.0
    besov_r: float = 1.0
    bkm_cap: float = np.inf
    tail_cap: float = 0.1
    proxy_mode: str = "grad_u"  # or "vorticity": ||omega||_inf replaces ||grad u||_inf

    def __post_init__(self) -> None:
        if self.pressure_method not in psolve.METHODS:
            raise ValueError(f"unknown pressure method {self.pressure_method!r}")
        if self.proxy_mode not in ("grad_u", "vorticity"):
            raise ValueError(f"unknown proxy mode {self.proxy_mode!r}")


@dataclass(frozen=True, eq=False)
class FluidState:
    t: float
    a: Field
    u: Field
    grad_pi: Field
    omega: Field
    pi_hat: Optional[Array] = field(default=None, repr=False)
    rho_bounds: tuple = (None, None)  # initial (rho_min, rho_max), carried for the drift check
    pressure_iterations: int = 0

    @property
    def grid(self) -> Grid:
        return self.a.grid

    @property
    def rho(self) -> Field:
        return Field(self.grid, physical=1.0 / self.a.physical)

    @property
    def mean_u(self) -> Array:
        return np.asarray(self.u.mean())


@dataclass(frozen=True)
class DiagnosticsRecord:
    t: float
    energy: float
    rho_min: float
    rho_max: float
    sup_grad_u: float
    bkm_integrand: float
    omega_linf: float
    omega_l2: float
    X: float
    B: float
    tail_fraction: float

    def row(self) -> list[float]:
        return [getattr(self, c) for c in DIAGNOSTIC_COLUMNS]


# -- construction ---------------------------------------------------------------
_LADDERS: dict = {}


def ladder_for(grid: Grid) -> DyadicLadder:
    lad = _LADDERS.get(grid)
    if lad is None:
        lad = _LADDERS[grid] = DyadicLadder(grid)
    return lad


def pressure_solve(a: Field, F: Field, cfg: SolverConfig, initial: Optional[Array] = None) -> psolve.PressureSolution:
    try:
        return psolve.solve(psolve.EllipticProblem(a, F), cfg.pressure_method, cfg.pressure_tol,
                            cfg.pressure_max_iter, cfg.pressure_relax, initial)
    except psolve.PressureNonConvergence as exc:
        raise PressureFailure(str(exc)) from exc


def _momentum_flux(u: Field) -> Field:
    """Dealiased ``u . grad(P u)``; its divergence drives the pressure."""
    return advection_term(leray_project(u), u)


def make_state(rho: Field, u: Field, cfg: SolverConfig = SolverConfig(), t: float = 0.0) -> FluidState:
    """Initial state from density and velocity; the velocity is Leray-projected."""
    if float(rho.physical.min()) <= 0:
        raise ValueError("initial density must be positive")
    u = leray_project(u)
    a = Field(rho.grid, physical=1.0 / rho.physical)
    sol = pressure_solve(a, _momentum_flux(u), cfg)
    bounds = (float(rho.physical.min()), float(rho.physical.max()))
    return FluidState(t, a, u, sol.grad_pi, curl(u), sol.pi_hat, bounds, sol.iterations)


# -- diagnostics --------------------------------------------------------------------
def tail_fraction(u: Field) -> float:
    """Fraction of the kinetic energy ``|u_hat|^2`` in the top third of the retained (2/3) band."""
    g = u.grid
    m1, m2 = g.modes
    mag = np.sqrt(m1**2 + m2**2)
    w = np.full(g.spectral_shape[1], 2.0)
    w[0] = w[-1] = 1.0
    spec = np.sum(np.abs(u.spectral) ** 2, axis=0) * w
    total = spec.sum()
    if total == 0:
        return 0.0
    return float(spec[mag >= (2.0 / 3.0) * (g.n / 3.0)].sum() / total)


def diagnostics(state: FluidState, cfg: SolverConfig = SolverConfig()) -> DiagnosticsRecord:
    g = state.grid
    lad = ladder_for(g)
    a = state.a.physical
    rho = 1.0 / a
    u = state.u
    up = u.physical
    J = jacobian(u)
    grad_mag = np.sqrt(np.sum(J**2, axis=(0, 1)))
    sup_grad_u = float(grad_mag.max())
    om = state.omega
    omega_linf = om.norm(np.inf)
    lead = omega_linf if cfg.proxy_mode == "vorticity" else sup_grad_u
    bkm = lead + besov_norm(lad, state.grad_pi, BesovIndex(cfg.besov_s - 1.0, np.inf, cfg.besov_r))
    h1 = np.sqrt(u.norm(2) ** 2 + float(np.sum(grad_mag**2) * g.cell_area))
    X = float(h1 + besov_norm(lad, u, BesovIndex(1.0, np.inf, 1.0)))
    b = Field(g, physical=a - 1.0)
    B = besov_norm(lad, b, BesovIndex(1.0, np.inf, 1.0))
    energy = float(np.sum(rho * np.sum(up**2, axis=0)) * g.cell_area)
    return DiagnosticsRecord(
        t=float(state.t), energy=energy, rho_min=float(rho.min()), rho_max=float(rho.max()),
        sup_grad_u=sup_grad_u, bkm_integrand=float(bkm), omega_linf=omega_linf, omega_l2=om.norm(2),
        X=X, B=float(B), tail_fraction=tail_fraction(u),
    )


def blow_up_proxy(rec: DiagnosticsRecord, cfg: SolverConfig = SolverConfig()) -> tuple[bool, str]:
    """Resolution-loss / continuation-criterion surrogate (an implementation-defined threshold)."""
    if not all(np.isfinite(v) for v in rec.row()):
        return True, "non-finite diagnostics"
    if rec.bkm_integrand >= cfg.bkm_cap:
        return True, f"bkm_integrand {rec.bkm_integrand:.6g} >= cap {cfg.bkm_cap:.6g}"
    if rec.tail_fraction >= cfg.tail_cap:
        return True, f"tail_fraction {rec.tail_fraction:.6g} >= cap {cfg.tail_cap:.6g}"
    return False, ""


def _check_density(state: FluidState, cfg: SolverConfig, rec: DiagnosticsRecord) -> None:
    lo, hi = state.rho_bounds
    if lo is None:
        return
    if rec.rho_min < lo - cfg.drift_tol or rec.rho_max > hi + cfg.drift_tol:
        raise DensityBoundViolation(
            f"density range [{rec.rho_min:.6g}, {rec.rho_max:.6g}] left [{lo:.6g}, {hi:.6g}] "
            f"by more than {cfg.drift_tol:g}", rec)


# -- velocity-pressure stepper ---------------------------------------------------
def _dealiased(g: Grid, values: Array) -> Array:
    return g.fft(values) * g.dealias_mask


def _velocity_rhs(a_hat: Array, u_hat: Array, g: Grid, cfg: SolverConfig, pi_guess, frozen_pressure,
                  forcing: Optional[Field]):
    a = Field(g, spectral=a_hat)
    u = Field(g, spectral=u_hat)
    if frozen_pressure is not None:
        sol = frozen_pressure
        flux = advection_term(u, u)
    else:
        flux = _momentum_flux(u)
        F = flux if forcing is None else flux - forcing
        sol = pressure_solve(a, F, cfg, pi_guess)
    da = -advection_term(a, u).spectral
    du = -flux.spectral - _dealiased(g, a.physical * sol.grad_pi.physical)
    if forcing is not None:
        du = du + forcing.spectral
    return da, du, sol


def step(state: FluidState, dt: float, cfg: SolverConfig = SolverConfig(),
         forcing: Optional[Field] = None) -> tuple[FluidState, DiagnosticsRecord]:
    """Advance ``(a, u)`` by one RK4 step of the a-form system, then re-project ``u``."""
    g = state.grid
    try:
        check_cfl(state.u, dt, cfg.cfl_cap)
    except ValueError as exc:
        raise CFLFailure(str(exc), diagnostics(state, cfg)) from exc
    a0, u0 = state.a.spectral, state.u.spectral
    guess = state.pi_hat
    frozen = None
    try:
        if not cfg.pressure_per_stage:
            frozen = pressure_solve(state.a, _momentum_flux(state.u) if forcing is None
                                    else _momentum_flux(state.u) - forcing, cfg, guess)
        ka1, ku1, s1 = _velocity_rhs(a0, u0, g, cfg, guess, frozen, forcing)
        ka2, ku2, s2 = _velocity_rhs(a0 + 0.5 * dt * ka1, u0 + 0.5 * dt * ku1, g, cfg, s1.pi_hat, frozen, forcing)
        ka3, ku3, s3 = _velocity_rhs(a0 + 0.5 * dt * ka2, u0 + 0.5 * dt * ku2, g, cfg, s2.pi_hat, frozen, forcing)
        ka4, ku4, s4 = _velocity_rhs(a0 + dt * ka3, u0 + dt * ku3, g, cfg, s3.pi_hat, frozen, forcing)
    except PressureFailure as exc:
        exc.diagnostics = diagnostics(state, cfg)
        raise
    a1 = Field(g, spectral=a0 + dt / 6.0 * (ka1 + 2 * ka2 + 2 * ka3 + ka4))
    u1 = leray_project(Field(g, spectral=u0 + dt / 6.0 * (ku1 + 2 * ku2 + 2 * ku3 + ku4)))
    return _finish_step(state, a1, u1, dt, cfg, s4.pi_hat, forcing)


def _finish_step(state: FluidState, a1: Field, u1: Field, dt: float, cfg: SolverConfig, guess,
                 forcing: Optional[Field]) -> tuple[FluidState, DiagnosticsRecord]:
    F = _momentum_flux(u1) if forcing is None else _momentum_flux(u1) - forcing
    try:
        sol = pressure_solve(a1, F, cfg, guess)
    except PressureFailure as exc:
        exc.diagnostics = diagnostics(state, cfg)
        raise
    new = FluidState(state.t + dt, a1, u1, sol.grad_pi, curl(u1), sol.pi_hat, state.rho_bounds,
                     sol.iterations)
    rec = diagnostics(new, cfg)
    _check_density(new, cfg, rec)
    return new, rec


# -- vorticity-pressure stepper -------------------------------------------------
def _vorticity_rhs(a_hat: Array, w_hat: Array, mean_u: Array, g: Grid, cfg: SolverConfig, pi_guess, frozen):
    a = Field(g, spectral=a_hat)
    w_hat = w_hat.copy()
    w_hat[0, 0] = 0.0
    u = biot_savart(Field(g, spectral=w_hat), mean_u)
    flux = advection_term(u, u)
    sol = frozen if frozen is not None else pressure_solve(a, flux, cfg, pi_guess)
    k1, k2 = g.derivative_wavenumbers
    da_phys = g.ifft(np.stack([1j * k1 * a_hat, 1j * k2 * a_hat]))
    dw = -advection_term(Field(g, spectral=w_hat), u).spectral \
        - _dealiased(g, wedge(da_phys, sol.grad_pi.physical))
    da = -advection_term(a, u).spectral
    pressure_force = a.physical * sol.grad_pi.physical
    dmean = -(flux.spectral[:, 0, 0].real / g.n**2) - pressure_force.mean(axis=(1, 2))
    return da, dw, dmean, sol


def step_vorticity(state: FluidState, dt: float, cfg: SolverConfig = SolverConfig()
                   ) -> tuple[FluidState, DiagnosticsRecord]:
    """Advance ``(a, omega, mean u)``; the velocity is recovered by Biot-Savart at every stage.

    The wedge term uses ``grad b = grad a`` with ``b = a - 1``.
    """
    g = state.grid
    try:
        check_cfl(state.u, dt, cfg.cfl_cap)
    except ValueError as exc:
        raise CFLFailure(str(exc), diagnostics(state, cfg)) from exc
    a0, w0, m0 = state.a.spectral, state.omega.spectral, state.mean_u
    guess = state.pi_hat
    frozen = None
    try:
        if not cfg.pressure_per_stage:
            frozen = pressure_solve(state.a, advection_term(state.u, state.u), cfg, guess)
        ka1, kw1, km1, s1 = _vorticity_rhs(a0, w0, m0, g, cfg, guess, frozen)
        ka2, kw2, km2, s2 = _vorticity_rhs(a0 + 0.5 * dt * ka1, w0 + 0.5 * dt * kw1, m0 + 0.5 * dt * km1,
                                           g, cfg, s1.pi_hat, frozen)
        ka3, kw3, km3, s3 = _vorticity_rhs(a0 + 0.5 * dt * ka2, w0 + 0.5 * dt * kw2, m0 + 0.5 * dt * km2,
                                           g, cfg, s2.pi_hat, frozen)
        ka4, kw4, km4, s4 = _vorticity_rhs(a0 + dt * ka3, w0 + dt * kw3, m0 + dt * km3, g, cfg, s3.pi_hat, frozen)
    except PressureFailure as exc:
        exc.diagnostics = diagnostics(state, cfg)
        raise
    a1 = Field(g, spectral=a0 + dt / 6.0 * (ka1 + 2 * ka2 + 2 * ka3 + ka4))
    w1 = w0 + dt / 6.0 * (kw1 + 2 * kw2 + 2 * kw3 + kw4)
    w1[0, 0] = 0.0
    m1 = m0 + dt / 6.0 * (km1 + 2 * km2 + 2 * km3 + km4)
    u1 = biot_savart(Field(g, spectral=w1), m1)
    return _finish_step(state, a1, u1, dt, cfg, s4.pi_hat, None)


# -- driver ----------------------------------------------------------------------------
@dataclass
class RunResult:
    status: str  # completed | proxy_tripped | solver_error
    records: list
    states: list
    trip_time: Optional[float] = None
    reason: str = ""
    final: Optional[FluidState] = None


def choose_dt(state: FluidState, cfg: SolverConfig, dt: float, t_end: float) -> float:
    """Fixed ``dt`` if positive, else the CFL-limited step; clipped to land on ``t_end``."""
    if dt <= 0:
        speed = max_speed(state.u)
        dt = cfg.cfl_cap * state.grid.h / speed if speed > 0 else max(t_end - state.t, 0.0)
    remaining = t_end - state.t
    if dt >= remaining * (1.0 - 1e-12):
        dt = remaining
    return dt


def integrate(state: FluidState, t_end: float, cfg: SolverConfig = SolverConfig(), dt: float = 0.0,
              formulation: str = "velocity", keep_every: int = 0, stop_on_proxy: bool = True,
              callback: Optional[Callable[[FluidState, DiagnosticsRecord], None]] = None) -> RunResult:
    """Integrate to ``t_end`` or until :func:`blow_up_proxy` trips.

    ``keep_every > 0`` stores every k-th state (the initial one included).
    Solver failures are captured in the result rather than raised.
    """
    stepper = step if formulation == "velocity" else step_vorticity
    if formulation not in ("velocity", "vorticity"):
        raise ValueError(f"unknown formulation {formulation!r}")
    rec = diagnostics(state, cfg)
    records = [rec]
    states = [state] if keep_every else []
    if callback:
        callback(state, rec)
    tripped, why = blow_up_proxy(rec, cfg)
    if tripped and stop_on_proxy:
        return RunResult("proxy_tripped", records, states, state.t, why, state)
    n = 0
    while state.t < t_end and t_end - state.t > 1e-12 * max(1.0, abs(t_end)):
        h = choose_dt(state, cfg, dt, t_end)
        try:
            state, rec = stepper(state, h, cfg)
        except SolverError as exc:
            return RunResult("solver_error", records, states, None, str(exc), state)
        n += 1
        records.append(rec)
        if keep_every and n % keep_every == 0:
            states.append(state)
        if callback:
            callback(state, rec)
        tripped, why = blow_up_proxy(rec, cfg)
        if tripped and stop_on_proxy:
            return RunResult("proxy_tripped", records, states, state.t, why, state)
    return RunResult("completed", records, states, None, "", state)


# -- Picard approximation scheme ---------------------------------------------------
@dataclass
class PicardIterate:
    index: int
    times: Array
    a: Array  # (K, n, n)
    u: Array  # (K, 2, n, n)
    grad_pi: Array  # (K, 2, n, n)
    cauchy_gap: float = np.nan


class PicardDivergence(SolverError):
    pass


def _lerp(samples: Array, k: int, theta: float) -> Array:
    if theta == 0.0:
        return samples[k]
    if theta == 1.0:
        return samples[k + 1]
    return (1.0 - theta) * samples[k] + theta * samples[k + 1]


def _transport_linear(g: Grid, q0: Array, vel: Array, source: Optional[Callable[[int, float], Array]],
                      dt: float) -> Array:
    """Integrate ``dq/dt + v.grad q = source`` through the stored velocity samples (RK4, linear in time)."""
    K = vel.shape[0]
    out = np.empty((K,) + q0.shape)
    out[0] = q0
    k1w, k2w = g.derivative_wavenumbers
    mask = g.dealias_mask

    def rhs(k: int, theta: float, q_hat: Array) -> Array:
        v = _lerp(vel, k, theta)
        d1 = g.ifft(1j * k1w * q_hat)
        d2 = g.ifft(1j * k2w * q_hat)
        r = -g.fft(v[0] * d1 + v[1] * d2) * mask
        if source is not None:
            r = r + g.fft(source(k, theta)) * mask
        return r

    q = g.fft(q0)
    for k in range(K - 1):
        s1 = rhs(k, 0.0, q)
        s2 = rhs(k, 0.5, q + 0.5 * dt * s1)
        s3 = rhs(k, 0.5, q + 0.5 * dt * s2)
        s4 = rhs(k, 1.0, q + dt * s3)
        q = q + dt / 6.0 * (s1 + 2 * s2 + 2 * s3 + s4)
        out[k + 1] = g.ifft(q)
    return out


def picard_solve(state0: FluidState, T: float, n_iters: int, nsteps: int = 16,
                 cfg: SolverConfig = SolverConfig()) -> list[PicardIterate]:
    """Iterates ``(a^n, u^n, grad Pi^n)`` of the linear approximation scheme on ``[0, T]``.

    Iterate 0 is the frozen initial data with zero pressure.  Each subsequent
    iterate transports ``a`` and ``u`` by the previous velocity, forces ``u`` by
    ``-a^{n+1} grad Pi^n`` and re-solves the pressure at every stored time.
    """
    if n_iters < 2:
        raise ValueError("need at least two Picard iterates")
    g = state0.grid
    K = nsteps + 1
    dt = T / nsteps
    times = np.linspace(0.0, T, K)
    a0 = state0.a.physical
    u0 = state0.u.physical
    it = PicardIterate(0, times, np.broadcast_to(a0, (K,) + a0.shape).copy(),
                       np.broadcast_to(u0, (K,) + u0.shape).copy(), np.zeros((K,) + u0.shape))
    iterates = [it]
    gaps: list[float] = []
    for n in range(1, n_iters + 1):
        prev = iterates[-1]
        a_new = _transport_linear(g, a0, prev.u, None, dt)

        def force(k: int, theta: float, _a=a_new, _p=prev.grad_pi) -> Array:
            return -_lerp(_a, k, theta)[None] * _lerp(_p, k, theta)

        u_new = np.stack([
            _transport_linear(g, u0[c], prev.u, lambda k, th, c=c: force(k, th)[c], dt) for c in range(2)
        ], axis=1)
        gp = np.empty_like(u_new)
        guess = None
        for k in range(K):
            u_k = Field(g, physical=u_new[k])
            try:
                sol = pressure_solve(Field(g, physical=a_new[k]), _momentum_flux(u_k), cfg, guess)
            except psolve.EllipticityError as exc:
                raise PicardDivergence(f"iterate {n} lost positivity of a at t={times[k]:.4g}; "
                                       f"reduce the horizon T={T}") from exc
            gp[k] = sol.grad_pi.physical
            guess = sol.pi_hat
        da = np.sqrt(np.sum((a_new - prev.a) ** 2, axis=(1, 2)) * g.cell_area)
        du = np.sqrt(np.sum((u_new - prev.u) ** 2, axis=(1, 2, 3)) * g.cell_area)
        gap = float(np.max(da + du))
        gaps.append(gap)
        iterates.append(PicardIterate(n, times, a_new, u_new, gp, gap))
        if len(gaps) >= 4 and gaps[-1] > gaps[-2] > gaps[-3] > gaps[-4]:
            raise PicardDivergence(f"Picard gaps grew over three consecutive iterates ({gaps[-4:]}); "
                                   f"reduce the horizon T={T}")
    return iterates


# -- stability ------------------------------------------------------------------------
@dataclass
class StabilityReport:
    times: Array
    delta_rho: Array
    delta_u: Array  # ||sqrt(rho_2) du||_2
    distance: Array
    growth: Array  # A(t)
    fitted_c: float
    envelope_ok: bool


def stability_gap(run_a: list, run_b: list) -> StabilityReport:
    """Distance between two trajectories against the ``exp(A(t))`` envelope of the stability estimate.

    ``run_a`` supplies ``(rho_1, u_1, grad Pi_1)`` for ``A(t)``; ``run_b`` is the
    perturbed run ``(rho_2, u_2)``.  ``fitted_c`` is the smallest ``C`` with
    ``d(t) <= exp(C A(t)) d(0)``; the estimate itself corresponds to ``C = 1``.
    """
    if len(run_a) != len(run_b):
        raise ValueError("trajectories have different numbers of samples")
    times = np.array([s.t for s in run_a])
    if not np.allclose(times, [s.t for s in run_b], rtol=0, atol=1e-12):
        raise ValueError("trajectory time samples do not match")
    g = run_a[0].grid
    drho, du, integrand = [], [], []
    k1, k2 = g.derivative_wavenumbers
    for s1, s2 in zip(run_a, run_b):
        rho1 = 1.0 / s1.a.physical
        rho2 = 1.0 / s2.a.physical
        drho.append(g.lp_norm(rho2 - rho1, 2))
        du.append(g.lp_norm(np.sqrt(rho2) * (s2.u.physical - s1.u.physical), 2))
        rh = g.fft(rho1)
        grho = g.ifft(np.stack([1j * k1 * rh, 1j * k2 * rh]))
        sq = np.sqrt(rho2)
        integrand.append(g.lp_norm(grho / sq, np.inf)
                         + g.lp_norm(s1.grad_pi.physical / (rho1 * sq), np.inf)
                         + float(np.sqrt(np.sum(jacobian(s1.u) ** 2, axis=(0, 1))).max()))
    drho, du, integrand = map(np.array, (drho, du, integrand))
    dist = drho + du
    growth = np.concatenate([[0.0], np.cumsum(0.5 * (integrand[1:] + integrand[:-1]) * np.diff(times))])
    fitted = 0.0
    if dist[0] > 0:
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.log(np.maximum(dist[1:], 1e-300) / dist[0]) / growth[1:]
        ratio = ratio[np.isfinite(ratio)]
        fitted = float(max(ratio.max(), 0.0)) if ratio.size else 0.0
        ok = bool(np.all(dist <= np.exp(growth) * dist[0] * (1 + 1e-12)))
    else:
        ok = bool(np.all(dist == 0))
    return StabilityReport(times, drho, du, dist, growth, fitted, ok)
