"""Initial data, the driver behind ``simulate``, the rescaling test and the lifespan scans.

``u_amp`` (epsilon) is the sup norm of the initial velocity; ``b_amp`` (eta)
is the ``B^1_{inf,1}`` norm of ``b0 = 1/rho0 - 1``.  Measured lifespans are the
blow-up proxy tripping times: a lower-bound-flavoured surrogate, not the
maximal existence time.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from . import solver as S
from .config import ExperimentConfig, echo
from .littlewood_paley import BesovIndex, besov_norm
from .spectral import Field, Grid, leray_project, random_band_field, write_field
from .transport import max_speed, wedge

log = logging.getLogger(__name__)

B1_INF_1 = BesovIndex(1.0, math.inf, 1.0)


# -- initial data ------------------------------------------------------------------
def velocity_profile(cfg: ExperimentConfig, grid: Grid) -> Field:
    """Divergence-free velocity with ``max |u| = 1`` before scaling by ``u_amp``."""
    k0 = 2 * np.pi / grid.length
    if cfg.init_profile == "taylor_green":
        u = Field.from_function(grid, lambda x, y: (np.sin(k0 * x) * np.cos(k0 * y),
                                                    -np.cos(k0 * x) * np.sin(k0 * y)))
    else:
        rng = np.random.default_rng(cfg.init_seed)
        u = leray_project(random_band_field(grid, rng, max(cfg.init_kmin, 1.0), cfg.init_kmax, ncomp=2))
    speed = max_speed(u)
    if speed == 0:
        raise ValueError("velocity profile vanishes; widen the init.kmin/init.kmax band")
    return u * (1.0 / speed)


def density_profile(grid: Grid) -> Field:
    """Fixed smooth profile ``p`` with ``||p||_{B^1_{inf,1}} = 1``; ``b0 = eta * p``."""
    k0 = 2 * np.pi / grid.length
    p = Field.from_function(grid, lambda x, y: np.cos(k0 * x) * np.cos(k0 * y) + 0.5 * np.sin(k0 * (x + 2 * y)))
    return p * (1.0 / besov_norm(S.ladder_for(grid), p, B1_INF_1))


def initial_state(cfg: ExperimentConfig, u_amp: Optional[float] = None, b_amp: Optional[float] = None) -> S.FluidState:
    grid = Grid(cfg.grid_n, cfg.grid_length)
    u_amp = cfg.init_u_amp if u_amp is None else u_amp
    b_amp = cfg.init_b_amp if b_amp is None else b_amp
    if not 0 <= b_amp < 1:
        raise ValueError("b_amp must lie in [0, 1)")
    # |b0| <= ||b0||_{B^1_{inf,1}} = b_amp < 1 keeps a = 1 + b0 positive
    a = Field(grid, physical=1.0 + b_amp * density_profile(grid).physical)
    rho = Field(grid, physical=1.0 / a.physical)
    return S.make_state(rho, velocity_profile(cfg, grid) * u_amp, cfg.solver_config())


# -- simulate ------------------------------------------------------------------------
def _fmt(v: float) -> str:
    return format(v, ".17g")


def records_csv(records: Sequence[S.DiagnosticsRecord], stride: int = 1) -> str:
    """Diagnostics CSV; every ``stride``-th row plus the last one."""
    buf = io.StringIO()
    buf.write(",".join(S.DIAGNOSTIC_COLUMNS) + "\n")
    last = len(records) - 1
    for i, rec in enumerate(records):
        if i % stride == 0 or i == last:
            buf.write(",".join(_fmt(v) for v in rec.row()) + "\n")
    return buf.getvalue()


def run(cfg: ExperimentConfig, out_dir: Union[str, Path, None] = None) -> S.RunResult:
    """Integrate the configured experiment; writes CSV, config echo and FLD1 snapshots to ``out_dir``."""
    state = initial_state(cfg)
    scfg = cfg.solver_config()
    result = S.integrate(state, cfg.time_t_end, scfg, cfg.time_dt, cfg.time_formulation)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.echo").write_text(echo(cfg))
        (out / "diagnostics.csv").write_text(records_csv(result.records, cfg.output_stride))
        for tag, st in (("initial", state), ("final", result.final)):
            write_field(out / f"rho_{tag}.fld", st.rho)
            write_field(out / f"u_{tag}.fld", st.u)
            write_field(out / f"omega_{tag}.fld", st.omega)
    return result


# -- rescaling --------------------------------------------------------------------------
@dataclass
class RescaleReport:
    eps: float
    status: str  # pass | fail | inconclusive
    rho_discrepancy: float
    u_discrepancy: float
    grad_pi_discrepancy: float
    steps: int
    trip_time_reference: Optional[float] = None
    trip_time_scaled: Optional[float] = None
    tol: float = 1e-6

    @property
    def discrepancy(self) -> float:
        return max(self.rho_discrepancy, self.u_discrepancy, self.grad_pi_discrepancy)


def _rel_l2(x: Field, y: Field) -> float:
    den = y.norm(2)
    return (x - y).norm(2) / den if den > 0 else (x - y).norm(2)


def rescale_equivariance_test(cfg: ExperimentConfig, eps: float, tol: float = 1e-6) -> RescaleReport:
    """Compare ``(rho0, u0)`` run to ``eps t_f`` with ``(rho0, eps u0)`` run to ``t_f``.

    The second run must equal the first after ``u -> u/eps`` and
    ``grad Pi -> grad Pi/eps^2``.  Both runs take the same number of fixed
    steps, ``eps dt`` and ``dt``, with ``dt`` from the configuration or from the
    CFL cap at half margin.
    """
    if not 0 < eps <= 1:
        raise ValueError("eps must lie in (0, 1]")
    scfg = cfg.solver_config()
    ref0 = initial_state(cfg)
    scl0 = initial_state(cfg, u_amp=eps * cfg.init_u_amp)
    dt = cfg.time_dt
    if dt <= 0:
        speed = max_speed(scl0.u)
        dt = 0.5 * cfg.time_cfl_cap * ref0.grid.h / speed if speed > 0 else cfg.time_t_end
    nsteps = max(int(math.ceil(cfg.time_t_end / dt - 1e-9)), 0)
    dt = cfg.time_t_end / nsteps if nsteps else 0.0
    ref, scl = ref0, scl0
    trip_ref = trip_scl = None
    for _ in range(nsteps):
        try:
            ref, rec_ref = S.step(ref, eps * dt, scfg)
            scl, rec_scl = S.step(scl, dt, scfg)
        except S.SolverError as exc:
            log.warning("rescale run failed: %s", exc)
            return RescaleReport(eps, "inconclusive", math.nan, math.nan, math.nan, 0)
        if trip_ref is None and S.blow_up_proxy(rec_ref, scfg)[0]:
            trip_ref = ref.t
        if trip_scl is None and S.blow_up_proxy(rec_scl, scfg)[0]:
            trip_scl = scl.t
    d_rho = _rel_l2(scl.rho, ref.rho)
    d_u = _rel_l2(scl.u * (1.0 / eps), ref.u)
    d_p = _rel_l2(scl.grad_pi * (1.0 / eps**2), ref.grad_pi)
    worst = max(d_rho, d_u, d_p)
    if trip_ref is not None or trip_scl is not None:
        status = "inconclusive"
    else:
        status = "pass" if worst <= tol else "fail"
    return RescaleReport(eps, status, d_rho, d_u, d_p, nsteps, trip_ref, trip_scl, tol)


# -- lifespan scans -------------------------------------------------------------------
@dataclass
class ScanRow:
    value: float
    status: str  # tripped | no_trip | solver_error
    lifespan: float  # proxy tripping time, inf when no trip before t_end
    steps: int
    reason: str = ""
    B0: float = math.nan
    B_final: float = math.nan
    X_integral: float = 0.0
    source_integral: float = 0.0
    envelope_c: float = 0.0
    max_pressure_iterations: int = 0


@dataclass
class ScanReport:
    mode: str
    rows: list = field(default_factory=list)
    monotone: bool = True
    fit_slope: float = math.nan
    fit_r2: float = math.nan
    note: str = ""

    @property
    def values(self) -> list:
        return [r.value for r in self.rows]

    @property
    def lifespans(self) -> list:
        return [r.lifespan for r in self.rows]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        key = "eps" if self.mode == "epsilon" else "eta"
        w.writerow([key, "status", "lifespan", "scaled_lifespan", "steps", "B0", "B_final", "X_integral",
                    "source_integral", "envelope_c", "max_pressure_iterations", "reason"])
        for r in self.rows:
            scaled = r.value * r.lifespan if self.mode == "epsilon" else r.lifespan
            w.writerow([_fmt(r.value), r.status, _fmt(r.lifespan), _fmt(scaled), r.steps, _fmt(r.B0),
                        _fmt(r.B_final), _fmt(r.X_integral), _fmt(r.source_integral), _fmt(r.envelope_c),
                        r.max_pressure_iterations, r.reason])
        return buf.getvalue()


def _scan_point(cfg: ExperimentConfig, value: float, mode: str) -> ScanRow:
    if mode == "epsilon":
        state = initial_state(cfg, u_amp=value * cfg.init_u_amp)
    else:
        state = initial_state(cfg, b_amp=value)
    scfg = cfg.solver_config()
    g = state.grid
    k1, k2 = g.derivative_wavenumbers
    src_norms: list[float] = []
    iters = [state.pressure_iterations]

    def watch(st: S.FluidState, rec: S.DiagnosticsRecord) -> None:
        ah = st.a.spectral
        grad_b = g.ifft(np.stack([1j * k1 * ah, 1j * k2 * ah]))
        src_norms.append(float(np.abs(wedge(grad_b, st.grad_pi.physical)).max()))
        iters.append(st.pressure_iterations)

    result = S.integrate(state, cfg.time_t_end, scfg, cfg.time_dt, cfg.time_formulation, callback=watch)
    recs = result.records
    times = np.array([r.t for r in recs])
    X = np.array([r.X for r in recs])
    B = np.array([r.B for r in recs])
    x_int = np.concatenate([[0.0], np.cumsum(0.5 * (X[1:] + X[:-1]) * np.diff(times))])
    s = np.array(src_norms[: len(times)])
    src_int = float(np.sum(0.5 * (s[1:] + s[:-1]) * np.diff(times))) if len(times) > 1 else 0.0
    env = 0.0
    if B[0] > 0 and len(B) > 1:
        with np.errstate(divide="ignore", invalid="ignore"):
            c = np.log(B[1:] / B[0]) / x_int[1:]
        c = c[np.isfinite(c)]
        env = float(max(c.max(), 0.0)) if c.size else 0.0
    status = {"completed": "no_trip", "proxy_tripped": "tripped"}.get(result.status, "solver_error")
    life = result.trip_time if status == "tripped" else math.inf
    return ScanRow(value, status, life, len(recs) - 1, result.reason, float(B[0]), float(B[-1]),
                   float(x_int[-1]), src_int, env, int(max(iters)))


def _run_points(cfg: ExperimentConfig, values: Sequence[float], mode: str, workers: int) -> list[ScanRow]:
    if workers > 1 and len(values) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            # map preserves parameter order regardless of completion order
            return list(pool.map(_scan_point, [cfg] * len(values), values, [mode] * len(values)))
    return [_scan_point(cfg, v, mode) for v in values]


def lifespan_scan_epsilon(cfg: ExperimentConfig, eps_list: Sequence[float], workers: int = 1,
                          band: float = 2.0) -> ScanReport:
    """Lifespan ``T(eps)`` of ``(rho0, eps u0)``; checks ``eps T(eps)`` nondecreasing within ``band``."""
    eps_list = [float(e) for e in eps_list]
    if any(not 0 < e <= 1 for e in eps_list) or any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps_list must be strictly decreasing within (0, 1]")
    report = ScanReport("epsilon")
    rows = _run_points(cfg, eps_list, "epsilon", workers)
    for row in rows:
        report.rows.append(row)
        if row.status == "solver_error":
            report.monotone = False
            report.note = f"scan aborted at eps={row.value}: {row.reason}"
            break
    scaled = [r.value * r.lifespan for r in report.rows if r.status != "solver_error"]
    if report.monotone:
        report.monotone = all(b >= a / band for a, b in zip(scaled, scaled[1:]))
    return report


def lifespan_scan_eta(cfg: ExperimentConfig, eta_list: Sequence[float], workers: int = 1) -> ScanReport:
    """Lifespan ``T(eta)`` for ``b0 = eta p``; checks monotonicity and fits ``T ~ log(1 + log(1/eta))``."""
    eta_list = [float(e) for e in eta_list]
    if any(not 0 <= e < 1 for e in eta_list) or any(b >= a for a, b in zip(eta_list, eta_list[1:])):
        raise ValueError("eta_list must be strictly decreasing within [0, 1)")
    report = ScanReport("eta")
    for row in _run_points(cfg, eta_list, "eta", workers):
        report.rows.append(row)
        if row.status == "solver_error":
            report.monotone = False
            report.note = f"scan aborted at eta={row.value}: {row.reason}"
            break
    if report.monotone:
        T = report.lifespans
        report.monotone = all(b >= a for a, b in zip(T, T[1:]))
    pts = [(math.log(1.0 + math.log(1.0 / r.value)), r.lifespan) for r in report.rows
           if r.status == "tripped" and 0 < r.value < 1]
    if len(pts) >= 2:
        x, y = np.array(pts).T
        slope, icept = np.polyfit(x, y, 1)
        ss = float(np.sum((y - y.mean()) ** 2))
        report.fit_slope = float(slope)
        report.fit_r2 = 1.0 - float(np.sum((y - slope * x - icept) ** 2)) / ss if ss > 0 else 1.0
    base_iters = report.rows[-1].max_pressure_iterations if report.rows else 0
    grown = [r.value for r in report.rows if r.max_pressure_iterations > 2 * max(base_iters, 1)]
    if grown and not report.note:
        report.note = "pressure iteration counts grew for eta in " + ",".join(_fmt(v) for v in grown)
    return report
