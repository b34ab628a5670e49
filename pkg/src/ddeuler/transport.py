"""Pseudo-spectral transport by a divergence-free velocity.

Products are formed in physical space and truncated by the 2/3 rule.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from .spectral import Array, Field, Grid, jacobian

VelocityLike = Union[Field, Callable[[float], Field]]
SourceLike = Union[None, Field, Callable[[float, Field], Field]]


class CFLViolation(ValueError):
    def __init__(self, cfl: float, cap: float):
        super().__init__(f"CFL number {cfl:.4g} exceeds cap {cap:.4g}")
        self.cfl = cfl
        self.cap = cap


@dataclass(frozen=True)
class AdvectionStep:
    dt: float
    scheme: str = "rk4_spectral"
    dealias: bool = True
    cfl_cap: float = 0.5

    def __post_init__(self) -> None:
        if not self.dt > 0:
            raise ValueError(f"time step must be positive, got {self.dt}")
        if self.scheme != "rk4_spectral":
            raise ValueError(f"unsupported scheme {self.scheme!r}")


def max_speed(u: Field) -> float:
    return float(np.sqrt(np.sum(u.physical**2, axis=0)).max())


def cfl_number(u: Field, dt: float) -> float:
    return dt * max_speed(u) * u.grid.n / u.grid.length


def check_cfl(u: Field, dt: float, cap: float) -> float:
    cfl = cfl_number(u, dt)
    if cfl > cap * (1.0 + 1e-9):
        raise CFLViolation(cfl, cap)
    return cfl


def advection_term(q: Field, u: Field, dealias: bool = True) -> Field:
    """``u . grad q`` for scalar or vector ``q``."""
    g = q.grid
    k1, k2 = g.derivative_wavenumbers
    s = q.spectral
    d1 = g.ifft(1j * k1 * s)
    d2 = g.ifft(1j * k2 * s)
    up = u.physical
    prod = up[0] * d1 + up[1] * d2
    if dealias:
        return Field(g, spectral=g.fft(prod) * g.dealias_mask)
    return Field(g, physical=prod)


def rk4(y: Field, rhs: Callable[[float, Field], Field], dt: float) -> Field:
    """One classical RK4 step; ``rhs(theta, y)`` is evaluated at stage fractions 0, 1/2, 1/2, 1."""
    g = y.grid
    s0 = y.spectral
    k1 = rhs(0.0, y).spectral
    k2 = rhs(0.5, Field(g, spectral=s0 + 0.5 * dt * k1)).spectral
    k3 = rhs(0.5, Field(g, spectral=s0 + 0.5 * dt * k2)).spectral
    k4 = rhs(1.0, Field(g, spectral=s0 + dt * k3)).spectral
    return Field(g, spectral=s0 + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4))


def advect(q: Field, u: VelocityLike, src: SourceLike = None, step: Optional[AdvectionStep] = None,
           dt: Optional[float] = None) -> Field:
    """Advance ``dq/dt = -u.grad q + src`` by one RK4 step.

    ``u`` is a frozen velocity or a callable of the stage fraction in ``[0, 1]``;
    ``src`` is a frozen field or a callable ``src(theta, q_stage)``.
    """
    step = step or AdvectionStep(dt)
    vel = u if callable(u) else (lambda theta, _u=u: _u)
    for theta in ((0.0, 1.0) if callable(u) else (0.0,)):
        check_cfl(vel(theta), step.dt, step.cfl_cap)

    def rhs(theta: float, qs: Field) -> Field:
        out = -advection_term(qs, vel(theta), step.dealias).spectral
        if src is not None:
            extra = src(theta, qs) if callable(src) else src
            out = out + extra.spectral
        return Field(q.grid, spectral=out)

    return rk4(q, rhs, step.dt)


def wedge(v: Array, w: Array) -> Array:
    """``v^1 w^2 - v^2 w^1`` on physical samples."""
    return v[0] * w[1] - v[1] * w[0]


def vorticity_source(rho: Field, grad_pi: Field, dealias: bool = True) -> Field:
    """``-grad(1/rho) ^ grad Pi``, the baroclinic source of the 2-D vorticity equation."""
    rmin = float(rho.physical.min())
    if rmin <= 0:
        raise ValueError(f"density must be positive (min rho = {rmin:.3e})")
    g = rho.grid
    k1, k2 = g.derivative_wavenumbers
    ahat = g.fft(1.0 / rho.physical)
    da = g.ifft(np.stack([1j * k1 * ahat, 1j * k2 * ahat]))
    out = -wedge(da, grad_pi.physical)
    if dealias:
        return Field(g, spectral=g.fft(out) * g.dealias_mask)
    return Field(g, physical=out)


@dataclass
class CancellationReport:
    lhs: Array  # (2, 2, n, n)
    rhs: Array
    discrepancy: float
    scale: float


def cancellation_identity_check(u: Field) -> CancellationReport:
    """Compare ``(Omega.grad u + grad u^T.Omega)_ij`` with its divergence form.

    Both sides are evaluated spectrally; the identity requires ``div u = 0``.
    """
    g = u.grid
    k = g.derivative_wavenumbers
    J = jacobian(u)  # J[i, j] = d_j u^i
    up = u.physical
    lhs = np.zeros((2, 2, g.n, g.n))
    rhs = np.zeros_like(lhs)
    for i in range(2):
        for j in range(2):
            for kk in range(2):
                # d_i u^k d_k u^j - d_j u^k d_k u^i
                lhs[i, j] += J[kk, i] * J[j, kk] - J[kk, j] * J[i, kk]
                flux = up[j] * J[kk, i] - up[i] * J[kk, j]
                rhs[i, j] += g.ifft(1j * k[kk] * g.fft(flux))
    scale = float(max(np.abs(lhs).max(), np.abs(rhs).max(), 1.0))
    return CancellationReport(lhs, rhs, float(np.abs(lhs - rhs).max()), scale)
