"""Property battery at ``n = 64`` aggregating every module's invariants.

The summary written to ``out`` depends only on fixed seeds, so repeated runs
are byte-identical; wall-clock timings go to ``err``.
"""

from __future__ import annotations

import sys
import time
from dataclasses import dataclass
from typing import Callable, Optional, TextIO

import numpy as np

from . import solver as S
from .config import ExperimentConfig, echo, parse_config
from .littlewood_paley import DyadicLadder, bernstein_check, block, blocks, paraproduct, remainder
from .pressure import EllipticProblem, solve_cg, solve_fixed_point
from .spectral import (Field, Grid, biot_savart, curl, divergence, fft_forward, fft_inverse, gradient,
                       laplacian, leray_project, random_band_field)
from .transport import AdvectionStep, advect, cancellation_identity_check

N = 64
SEED = 20240101


@dataclass
class SuiteResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0


def _rel(x: np.ndarray, y: np.ndarray) -> float:
    d = float(np.abs(y).max())
    return float(np.abs(x - y).max()) / (d if d > 0 else 1.0)


def _check(items: list[tuple[str, float, float]]) -> tuple[bool, str]:
    ok = all(v <= tol for _, v, tol in items)
    return ok, "; ".join(f"{name}={v:.1e}{'' if v <= tol else ' FAIL'}" for name, v, tol in items)


def suite_spectral(g: Grid, rng: np.random.Generator, ladder: DyadicLadder) -> tuple[bool, str]:
    f = Field(g, physical=rng.standard_normal((g.n, g.n)))
    rt = _rel(fft_inverse(fft_forward(f)).physical, f.physical)
    v = random_band_field(g, rng, 1, 20, ncomp=2)
    pv = leray_project(v)
    idem = _rel(leray_project(pv).physical, pv.physical)
    gfield = random_band_field(g, rng, 1, 20, zero_mean=True)
    kill = leray_project(gradient(gfield)).norm(np.inf) / gradient(gfield).norm(np.inf)
    lap = _rel(divergence(gradient(gfield)).physical, laplacian(gfield).physical)
    w = random_band_field(g, rng, 1, 20, zero_mean=True)
    u = biot_savart(w, (0.3, -0.1))
    bs = _rel(curl(u).physical, w.physical)
    div_u = divergence(u).norm(np.inf)
    return _check([("round_trip", rt, 1e-12), ("leray_idempotent", idem, 1e-12), ("leray_kills_grad", kill, 1e-12),
                   ("div_grad_laplacian", lap, 1e-12), ("biot_savart_curl", bs, 1e-10), ("biot_savart_div", div_u, 1e-10)])


def suite_partition(g: Grid, rng: np.random.Generator, ladder: DyadicLadder) -> tuple[bool, str]:
    worst_sum = worst_orth = 0.0
    for _ in range(10):
        f = random_band_field(g, rng)
        B = blocks(ladder, f)
        worst_sum = max(worst_sum, _rel(B.sum(axis=0), f.physical))
        for j in ladder.indices:
            bj = block(ladder, j, f)
            for jj in ladder.indices:
                if abs(j - jj) >= 2:
                    worst_orth = max(worst_orth, block(ladder, jj, bj).norm(np.inf) / f.norm(np.inf))
    return _check([("reconstruction", worst_sum, 1e-12), ("quasi_orthogonality", worst_orth, 1e-12)])


def suite_bony(g: Grid, rng: np.random.Generator, ladder: DyadicLadder) -> tuple[bool, str]:
    worst = 0.0
    for _ in range(10):
        u, v = random_band_field(g, rng), random_band_field(g, rng)
        lhs = paraproduct(ladder, u, v) + paraproduct(ladder, v, u) + remainder(ladder, u, v)
        uv = g.dealias(u.physical * v.physical)
        worst = max(worst, float(np.abs(lhs.physical - uv).max()))
    return _check([("bony_identity", worst, 1e-10)])


def suite_bernstein(g: Grid, rng: np.random.Generator, ladder: DyadicLadder) -> tuple[bool, str]:
    reps = [bernstein_check(ladder, j, trials=20, seed=SEED + j) for j in range(2, ladder.jmax)]
    items = []
    for p, name in ((2, "p2"), (np.inf, "pinf")):
        lo = min(r.ratio_min[p] for r in reps)
        hi = max(r.ratio_max[p] for r in reps)
        items.append((f"bracket_{name}", hi / lo, 4.0))
    lth = [r.low_to_high for r in reps]
    items.append(("low_to_high_spread", max(lth) / min(lth), 4.0))
    return _check(items)


def suite_pressure(g: Grid, rng: np.random.Generator, ladder: DyadicLadder) -> tuple[bool, str]:
    worst_eq = 0.0
    bound_ok = True
    for _ in range(5):
        prof = random_band_field(g, rng, 1, 4).physical
        a = Field(g, physical=1.0 + 0.5 * prof / np.abs(prof).max() * rng.uniform(0.1, 0.99))
        F = random_band_field(g, rng, 1, 12, ncomp=2)
        prob = EllipticProblem(a, F)
        fp = solve_fixed_point(prob)
        cg = solve_cg(prob)
        worst_eq = max(worst_eq, (fp.grad_pi - cg.grad_pi).norm(2) / cg.grad_pi.norm(2))
        for sol in (fp, cg):
            bound_ok &= prob.a_star * sol.grad_pi.norm(2) <= F.norm(2) * (1 + 1e-12)
    pi = random_band_field(g, rng, 1, 8, zero_mean=True)
    a = Field(g, physical=1.0 + 0.3 * np.sin(g.coords[0]) * np.cos(g.coords[1]))
    swirl = leray_project(random_band_field(g, rng, 1, 8, ncomp=2))
    F = Field(g, physical=-a.physical * gradient(pi).physical) + swirl
    got = solve_fixed_point(EllipticProblem(a, F)).grad_pi
    manuf = (got - gradient(pi)).norm(2) / gradient(pi).norm(2)
    return _check([("fixed_point_vs_cg", worst_eq, 1e-7), ("manufactured", manuf, 1e-8),
                   ("energy_bound_violations", 0.0 if bound_ok else 1.0, 0.0)])


def suite_transport(g: Grid, rng: np.random.Generator, ladder: DyadicLadder) -> tuple[bool, str]:
    c = Field(g, physical=np.full((g.n, g.n), 1.7))
    u = leray_project(random_band_field(g, rng, 1, 6, ncomp=2))
    u = u * (1.0 / np.sqrt(np.sum(u.physical**2, axis=0)).max())
    step = AdvectionStep(dt=0.1 * g.h)  # RK4 damping of resolved modes scales like (cfl)^6
    const = _rel(advect(c, u, step=step).physical, c.physical)
    q = random_band_field(g, rng, 0, 6)
    m0, e0 = g.integrate(q.physical), g.integrate(q.physical**2)
    for _ in range(100):
        q = advect(q, u, step=step)
    mass = abs(g.integrate(q.physical) - m0) / abs(e0) ** 0.5
    l2 = abs(g.integrate(q.physical**2) - e0) / e0
    canc = cancellation_identity_check(leray_project(random_band_field(g, rng, 1, 12, ncomp=2)))
    return _check([("constant_preserved", const, 1e-14), ("mass_drift", mass, 1e-8), ("l2_drift", l2, 1e-8),
                   ("cancellation_identity", canc.discrepancy / canc.scale, 1e-9)])


def suite_solver(g: Grid, rng: np.random.Generator, ladder: DyadicLadder) -> tuple[bool, str]:
    cfg = S.SolverConfig()
    x, y = g.coords
    rho = Field(g, physical=1.0 / (1.0 + 0.2 * np.cos(x + y) * np.sin(y)))
    u = Field(g, physical=np.stack([np.sin(x) * np.cos(y) + 0.3 * np.sin(2 * y), -np.cos(x) * np.sin(y)]))
    st = S.make_state(rho, u, cfg)
    vel = S.integrate(st, 0.25, cfg, dt=0.02)
    vor = S.integrate(st, 0.25, cfg, dt=0.02, formulation="vorticity")
    E = np.array([r.energy for r in vel.records])
    rng_lo = np.array([r.rho_min for r in vel.records])
    fin = vel.final
    rest = S.integrate(S.make_state(rho, Field.zeros(g, 2), cfg), 0.1, cfg, dt=0.05).final
    return _check([
        ("energy_drift", float(np.abs(E - E[0]).max() / E[0]), 1e-6),
        ("rho_min_drift", float(np.abs(rng_lo - rng_lo[0]).max()), 1e-5),
        ("formulation_gap", (vor.final.u - fin.u).norm(2) / fin.u.norm(2), 1e-4),
        ("omega_consistency", (curl(fin.u) - fin.omega).norm(np.inf), 1e-9),
        ("reprojection", (leray_project(fin.u) - fin.u).norm(np.inf), 1e-10),
        ("rest_state", rest.u.norm(np.inf) + rest.grad_pi.norm(np.inf), 1e-14),
    ])


def suite_config(g: Grid, rng: np.random.Generator, ladder: DyadicLadder) -> tuple[bool, str]:
    cfg = ExperimentConfig(grid_n=32, init_b_amp=0.25, proxy_tail_cap=1e-6)
    trip = 0.0 if parse_config(echo(cfg)) == cfg else 1.0
    empty = 0.0 if parse_config("") == ExperimentConfig() else 1.0
    return _check([("echo_round_trip", trip, 0.0), ("empty_defaults", empty, 0.0)])


SUITES: list[tuple[str, Callable]] = [
    ("spectral_core", suite_spectral),
    ("partition_of_unity", suite_partition),
    ("bony_decomposition", suite_bony),
    ("bernstein", suite_bernstein),
    ("pressure_solver", suite_pressure),
    ("transport", suite_transport),
    ("euler_solver", suite_solver),
    ("config", suite_config),
]


def corrupted_ladder(grid: Grid) -> DyadicLadder:
    """Fault-injection hook: a ladder whose ``Delta_1`` table is off by 1e-3 on one mode."""
    tables = np.array(DyadicLadder(grid).tables)
    i = np.argmax(tables[2])
    tables.reshape(tables.shape[0], -1)[2, i] += 1e-3
    return DyadicLadder(grid, tables=tables)


def selftest(out: TextIO = sys.stdout, err: TextIO = sys.stderr,
             ladder: Optional[DyadicLadder] = None) -> list[SuiteResult]:
    """Run every suite; ``ladder`` overrides the cutoff tables (used for fault injection)."""
    g = Grid(N)
    ladder = ladder or DyadicLadder(g)
    results = []
    for idx, (name, fn) in enumerate(SUITES):
        rng = np.random.default_rng(SEED + idx)
        t0 = time.perf_counter()
        try:
            ok, detail = fn(g, rng, ladder)
        except Exception as exc:  # a crashing suite is a failing suite
            ok, detail = False, f"error: {type(exc).__name__}: {exc}"
        dt = time.perf_counter() - t0
        results.append(SuiteResult(name, ok, detail, dt))
        out.write(f"{'PASS' if ok else 'FAIL'} {name}: {detail}\n")
        err.write(f"[selftest] {name} {dt:.2f}s\n")
    failed = sum(not r.passed for r in results)
    out.write(f"{len(results) - failed}/{len(results)} suites passed\n")
    return results
