"""Independent reference computations shared by the test modules."""

from __future__ import annotations

import numpy as np
from scipy.optimize import minimize

from ddeuler.spectral import Field


def trig_eval(f: Field):
    """Callable evaluating the trigonometric interpolant of a scalar field at arbitrary points."""
    g = f.grid
    n = g.n
    coeffs = np.fft.fft2(f.physical) / n**2
    m = np.fft.fftfreq(n, 1.0 / n)
    coeffs[n // 2, :] = 0.0
    coeffs[:, n // 2] = 0.0
    k = 2 * np.pi / g.length * m

    def value(p):
        e1 = np.exp(1j * k * p[0])
        e2 = np.exp(1j * k * p[1])
        return float(np.real(e1 @ coeffs @ e2))

    return value


def true_extrema(f: Field, starts: int = 4) -> tuple[float, float]:
    """(min, max) of the interpolant, polished from the best samples by local optimisation."""
    value = trig_eval(f)
    x1, x2 = f.grid.coords
    pts = np.stack([np.broadcast_to(x1, f.physical.shape).ravel(), np.broadcast_to(x2, f.physical.shape).ravel()], 1)
    flat = f.physical.ravel()
    out = []
    for sign in (1.0, -1.0):
        best = sign * flat.min() if sign > 0 else -flat.max()
        for i in np.argsort(sign * flat)[:starts]:
            res = minimize(lambda p: sign * value(p), pts[i], method="Nelder-Mead",
                           options={"xatol": 1e-10, "fatol": 1e-15, "maxiter": 2000})
            best = min(best, float(res.fun))
        out.append(sign * best)
    return out[0], out[1]
