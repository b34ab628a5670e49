"""Variable-coefficient elliptic solve ``-div(a grad Pi) = div F`` on the torus.

Two independent routes:

* :func:`solve_fixed_point` iterates ``Delta Pi = -grad(log a).grad Pi - div F / a``
  with the spectral inverse Laplacian, absorbing the lower-order term;
* :func:`solve_cg` runs preconditioned conjugate gradients on the symmetric
  positive form ``Pi -> -div(a grad Pi)`` over mean-zero fields.

``Pi`` is gauge-fixed to zero mean.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .spectral import Array, Field, Grid

log = logging.getLogger(__name__)

METHODS = ("fixed_point", "cg", "fixed_point_with_cg_fallback")


class EllipticityError(ValueError):
    pass


class PressureNonConvergence(RuntimeError):
    def __init__(self, method: str, iterations: int, residual: float):
        super().__init__(f"{method} pressure solve did not converge after {iterations} iterations "
                         f"(relative residual {residual:.3e})")
        self.method = method
        self.iterations = iterations
        self.residual = residual


@dataclass(frozen=True, eq=False)
class EllipticProblem:
    a: Field
    F: Field

    def __post_init__(self) -> None:
        if self.a.ncomp != 1 or self.F.ncomp != 2:
            raise ValueError("need a scalar coefficient and a vector flux")
        if self.a.grid != self.F.grid:
            raise ValueError("coefficient and flux live on different grids")
        if not self.a_star > 0:
            raise EllipticityError(f"coefficient must be bounded below by a positive constant (inf a = {self.a_star})")

    @property
    def grid(self) -> Grid:
        return self.a.grid

    @property
    def a_star(self) -> float:
        return float(self.a.physical.min())

    @property
    def a_upper(self) -> float:
        return float(self.a.physical.max())

    @property
    def rhs_hat(self) -> Array:
        """Spectral ``div F``."""
        k1, k2 = self.grid.derivative_wavenumbers
        s = self.F.spectral
        return 1j * k1 * s[0] + 1j * k2 * s[1]


@dataclass(frozen=True, eq=False)
class PressureSolution:
    pi_hat: Array
    grad_pi: Field
    iterations: int
    residual: float
    method: str

    @property
    def pi(self) -> Field:
        return Field(self.grad_pi.grid, spectral=self.pi_hat)


def _grad_hat(grid: Grid, pi_hat: Array) -> Array:
    k1, k2 = grid.derivative_wavenumbers
    return np.stack([1j * k1 * pi_hat, 1j * k2 * pi_hat])


def _div_hat(grid: Grid, v_hat: Array) -> Array:
    k1, k2 = grid.derivative_wavenumbers
    return 1j * k1 * v_hat[0] + 1j * k2 * v_hat[1]


def _apply(grid: Grid, a: Array, grad_phys: Array) -> Array:
    """Spectral ``-div(a grad Pi)`` given physical ``grad Pi``."""
    return -_div_hat(grid, grid.fft(a * grad_phys))


def _l2_hat(grid: Grid, f_hat: Array) -> float:
    """L^2 norm from a half spectrum (Parseval with Hermitian column weights)."""
    w = np.full(grid.spectral_shape[1], 2.0)
    w[0] = 1.0
    if grid.n % 2 == 0:
        w[-1] = 1.0
    total = np.sum(w * (f_hat.real**2 + f_hat.imag**2))
    return float(np.sqrt(total * grid.cell_area) / grid.n)


def residual(prob: EllipticProblem, grad_pi: Field) -> float:
    """Relative L^2 residual ``||-div(a grad Pi) - div F|| / ||div F||``."""
    g = prob.grid
    rhs = prob.rhs_hat
    r = _apply(g, prob.a.physical, grad_pi.physical) - rhs
    denom = _l2_hat(g, rhs)
    num = _l2_hat(g, r)
    return num / denom if denom > 0 else num


def _zero_solution(grid: Grid, method: str) -> PressureSolution:
    return PressureSolution(np.zeros(grid.spectral_shape, complex), Field.zeros(grid, 2), 0, 0.0, method)


def _finish(prob: EllipticProblem, pi_hat: Array, grad_phys: Array, iterations: int, method: str) -> PressureSolution:
    grad = Field(prob.grid, physical=grad_phys)
    return PressureSolution(pi_hat, grad, iterations, residual(prob, grad), method)


def solve_fixed_point(prob: EllipticProblem, tol: float = 1e-10, max_iter: int = 200, relax: float = 1.0,
                      initial: Array | None = None) -> PressureSolution:
    """Picard iteration on ``Delta Pi = -grad(log a).grad Pi - div F / a``.

    The lower-order term ``grad(a).grad Pi`` is evaluated as
    ``div(a grad Pi) - a Delta Pi`` so that the fixed point solves the same
    discrete equation as :func:`solve_cg`.  Stops once the true residual drops
    below ``tol``; ``initial`` is an optional spectral guess for ``Pi``.
    """
    g = prob.grid
    rhs = prob.rhs_hat
    denom = _l2_hat(g, rhs)
    if denom == 0.0:
        return _zero_solution(g, "fixed_point")
    a = prob.a.physical
    pi_hat = np.zeros(g.spectral_shape, complex) if initial is None else np.array(initial, dtype=complex)
    with np.errstate(over="ignore", invalid="ignore"):
        return _fixed_point_loop(prob, g, rhs, denom, a, pi_hat, tol, max_iter, relax)


def _fixed_point_loop(prob, g, rhs, denom, a, pi_hat, tol, max_iter, relax) -> PressureSolution:
    res = np.inf
    for it in range(max_iter + 1):
        grad = g.ifft(_grad_hat(g, pi_hat))
        op_hat = _apply(g, a, grad)  # -div(a grad Pi)
        res = _l2_hat(g, op_hat - rhs) / denom
        if res <= tol:
            return _finish(prob, pi_hat, grad, it, "fixed_point")
        if not np.isfinite(res) or it == max_iter:
            break
        lap = g.ifft(-g.ksq * pi_hat)
        # a Delta Pi_new = -div F - grad(a).grad Pi, with grad(a).grad Pi = div(a grad Pi) - a Delta Pi
        target = g.ifft(-rhs + op_hat) / a + lap
        new_hat = -g.fft(target) * g.inv_ksq
        pi_hat = new_hat if relax == 1.0 else (1.0 - relax) * pi_hat + relax * new_hat
    raise PressureNonConvergence("fixed_point", max_iter, float(res))


def solve_cg(prob: EllipticProblem, tol: float = 1e-10, max_iter: int = 200,
             initial: Array | None = None) -> PressureSolution:
    """Conjugate gradients on ``-div(a grad .)`` preconditioned by ``(-Delta)^{-1} / mean(a)``."""
    g = prob.grid
    b = prob.rhs_hat
    bnorm = _l2_hat(g, b)
    if bnorm == 0.0:
        return _zero_solution(g, "cg")
    a = prob.a.physical
    pinv = g.inv_ksq / float(a.mean())
    w = np.full(g.spectral_shape[1], 2.0)
    w[0] = 1.0
    w[-1] = 1.0

    def dot(x: Array, y: Array) -> float:
        return float(np.sum(w * (x.real * y.real + x.imag * y.imag)))

    def op(x: Array) -> tuple[Array, Array]:
        grad = g.ifft(_grad_hat(g, x))
        return _apply(g, a, grad), grad

    x = np.zeros(g.spectral_shape, complex) if initial is None else np.array(initial, dtype=complex)
    ax, grad = op(x)
    r = b - ax
    it = 0
    while True:
        res = _l2_hat(g, r) / bnorm
        if res <= tol:
            # confirm against the true residual before returning
            ax, grad = op(x)
            r = b - ax
            res = _l2_hat(g, r) / bnorm
            if res <= tol:
                return _finish(prob, x, grad, it, "cg")
        if it >= max_iter:
            raise PressureNonConvergence("cg", it, res)
        z = pinv * r
        rz = dot(r, z)
        p = z.copy()
        while it < max_iter:
            it += 1
            ap, _ = op(p)
            alpha = rz / dot(p, ap)
            x = x + alpha * p
            r = r - alpha * ap
            if _l2_hat(g, r) / bnorm <= tol:
                break
            z = pinv * r
            rz_new = dot(r, z)
            p = z + (rz_new / rz) * p
            rz = rz_new


def solve(prob: EllipticProblem, method: str = "fixed_point_with_cg_fallback", tol: float = 1e-10,
          max_iter: int = 200, relax: float = 1.0, initial: Array | None = None) -> PressureSolution:
    """Dispatch on ``method`` (one of :data:`METHODS`)."""
    if method == "cg":
        return solve_cg(prob, tol, max_iter, initial)
    if method == "fixed_point":
        return solve_fixed_point(prob, tol, max_iter, relax, initial)
    if method == "fixed_point_with_cg_fallback":
        try:
            return solve_fixed_point(prob, tol, max_iter, relax, initial)
        except PressureNonConvergence as exc:
            log.info("falling back to CG: %s", exc)
            return solve_cg(prob, tol, max_iter, initial)
    raise ValueError(f"unknown pressure method {method!r}")


@dataclass
class IterationProfile:
    amplitudes: list
    iterations: list  # None where the fixed point failed within max_iter
    divergence_threshold: float | None = None


def heterogeneity_iteration_profile(amplitudes, grid: Grid | None = None, F: Field | None = None,
                                    profile: Field | None = None, tol: float = 1e-10, max_iter: int = 200,
                                    scan_threshold: bool = False) -> IterationProfile:
    """Fixed-point iteration counts for ``a = 1 + alpha * profile`` with ``max|profile| = 1``."""
    grid = grid or Grid(64)
    if profile is None:
        profile = Field.from_function(grid, lambda x, y: np.sin(x) * np.cos(y))
    prof = profile.physical / np.abs(profile.physical).max()
    if F is None:
        F = Field.from_function(grid, lambda x, y: (np.cos(2 * x + y), np.sin(x - 3 * y)))
    counts = []
    for alpha in amplitudes:
        if not 0 <= alpha < 1:
            raise ValueError(f"amplitude must lie in [0, 1), got {alpha}")
        prob = EllipticProblem(Field(grid, physical=1.0 + alpha * prof), F)
        try:
            counts.append(solve_fixed_point(prob, tol, max_iter).iterations)
        except PressureNonConvergence:
            counts.append(None)
    report = IterationProfile(list(amplitudes), counts)
    if scan_threshold:
        lo, hi = 0.0, 0.999
        for _ in range(12):
            mid = 0.5 * (lo + hi)
            try:
                solve_fixed_point(EllipticProblem(Field(grid, physical=1.0 + mid * prof), F), tol, 500)
                lo = mid
            except PressureNonConvergence:
                hi = mid
        report.divergence_threshold = lo
    return report
