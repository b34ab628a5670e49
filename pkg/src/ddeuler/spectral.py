"""Periodic grid, fields and the spectral operators built on them.

The whole plane is replaced by the torus ``[0, L)^2``.  Arrays are indexed
``[i1, i2]`` with ``x1 = i1 * L / n`` along the first axis.  The spectral
representation is the half spectrum returned by ``rfft2`` (last axis halved),
forward unnormalized, inverse divided by ``n**2``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Callable, Union

import numpy as np
import scipy.fft as sfft

Array = np.ndarray


class GridMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class Grid:
    """Uniform periodic ``n x n`` grid of period ``length``.

    Parameters
    ----------
    n : int
        Points per axis; even and at least 16.
    length : float
        Domain period ``L``.
    """

    n: int
    length: float = 2.0 * np.pi

    def __post_init__(self) -> None:
        if not isinstance(self.n, (int, np.integer)) or self.n % 2 != 0 or self.n < 16:
            raise ValueError(f"grid size must be an even integer >= 16, got {self.n!r}")
        if not self.length > 0:
            raise ValueError(f"domain length must be positive, got {self.length!r}")

    # -- geometry -----------------------------------------------------------
    @property
    def h(self) -> float:
        return self.length / self.n

    @property
    def cell_area(self) -> float:
        return self.h * self.h

    @property
    def area(self) -> float:
        return self.length * self.length

    @property
    def spectral_shape(self) -> tuple[int, int]:
        return (self.n, self.n // 2 + 1)

    @cached_property
    def coords(self) -> tuple[Array, Array]:
        x = np.arange(self.n) * self.h
        return np.meshgrid(x, x, indexing="ij")

    # -- integer mode bookkeeping ------------------------------------------
    @cached_property
    def modes(self) -> tuple[Array, Array]:
        """Integer mode numbers ``(m1, m2)`` broadcastable to the half spectrum."""
        m1 = np.fft.fftfreq(self.n, d=1.0 / self.n).reshape(-1, 1)
        m2 = np.fft.rfftfreq(self.n, d=1.0 / self.n).reshape(1, -1)
        return m1, m2

    @property
    def scale(self) -> float:
        return 2.0 * np.pi / self.length

    @cached_property
    def wavenumbers(self) -> tuple[Array, Array]:
        m1, m2 = self.modes
        return m1 * self.scale, m2 * self.scale

    @cached_property
    def kmag(self) -> Array:
        """``|k|`` on the half spectrum (Nyquist modes included)."""
        k1, k2 = self.wavenumbers
        return np.sqrt(k1**2 + k2**2)

    @cached_property
    def kmax(self) -> float:
        return float(self.kmag.max())

    @cached_property
    def nyquist_mask(self) -> Array:
        m1, m2 = self.modes
        return (np.abs(m1) == self.n // 2) | (np.abs(m2) == self.n // 2)

    @cached_property
    def derivative_wavenumbers(self) -> tuple[Array, Array]:
        """Wavenumbers used by derivatives, with the Nyquist row/column zeroed."""
        m1, m2 = self.modes
        k1, k2 = self.wavenumbers
        k1 = np.where(np.abs(m1) == self.n // 2, 0.0, k1)
        k2 = np.where(np.abs(m2) == self.n // 2, 0.0, k2)
        return k1, k2

    @cached_property
    def ksq(self) -> Array:
        k1, k2 = self.derivative_wavenumbers
        return k1**2 + k2**2

    @cached_property
    def inv_ksq(self) -> Array:
        """``1/|k|^2`` with zero on the kernel of the discrete Laplacian."""
        ksq = self.ksq
        out = np.zeros_like(ksq)
        np.divide(1.0, ksq, out=out, where=ksq > 0)
        return out

    @cached_property
    def dealias_mask(self) -> Array:
        m1, m2 = self.modes
        cut = self.n / 3.0
        return (np.abs(m1) < cut) & (np.abs(m2) < cut)

    # -- transforms on raw arrays ------------------------------------------
    def fft(self, values: Array) -> Array:
        return sfft.rfft2(values, axes=(-2, -1))

    def ifft(self, coeffs: Array) -> Array:
        return sfft.irfft2(coeffs, s=(self.n, self.n), axes=(-2, -1))

    def dealias(self, values: Array) -> Array:
        return self.ifft(self.fft(values) * self.dealias_mask)

    # -- quadrature ---------------------------------------------------------
    def integrate(self, values: Array):
        return values.sum(axis=(-2, -1)) * self.cell_area

    def lp_norm(self, values: Array, p: float) -> float:
        """L^p norm of scalar samples, or of the pointwise Euclidean magnitude of a vector."""
        mag = np.abs(values) if values.ndim == 2 else np.sqrt(np.sum(values**2, axis=0))
        if np.isinf(p):
            return float(mag.max())
        if p == 1:
            return float(mag.sum() * self.cell_area)
        if p == 2:
            return float(np.sqrt(np.sum(mag * mag) * self.cell_area))
        return float((np.sum(mag**p) * self.cell_area) ** (1.0 / p))


class Field:
    """Scalar (``ncomp == 1``) or 2-vector samples on a :class:`Grid`.

    Either representation may be supplied; the other is computed on first
    access and cached.  Arrays are marked read-only so operations never mutate
    their inputs.
    """

    __slots__ = ("grid", "_phys", "_spec")

    def __init__(self, grid: Grid, physical: Array | None = None, spectral: Array | None = None):
        if physical is None and spectral is None:
            raise ValueError("a field needs physical or spectral data")
        self.grid = grid
        self._phys = None if physical is None else _frozen(np.asarray(physical, dtype=np.float64))
        self._spec = None if spectral is None else _frozen(np.asarray(spectral, dtype=np.complex128))
        shape = self._phys.shape if self._phys is not None else self._spec.shape
        expect = (grid.n, grid.n) if self._phys is not None else grid.spectral_shape
        if shape[-2:] != expect or len(shape) not in (2, 3) or (len(shape) == 3 and shape[0] != 2):
            raise GridMismatchError(f"array of shape {shape} does not fit grid n={grid.n}")

    @classmethod
    def zeros(cls, grid: Grid, ncomp: int = 1) -> "Field":
        shape = (grid.n, grid.n) if ncomp == 1 else (ncomp, grid.n, grid.n)
        return cls(grid, physical=np.zeros(shape))

    @classmethod
    def from_function(cls, grid: Grid, fn: Callable[[Array, Array], Union[Array, tuple]]) -> "Field":
        x1, x2 = grid.coords
        out = fn(x1, x2)
        if isinstance(out, (tuple, list)):
            out = np.stack([np.broadcast_to(c, x1.shape) for c in out])
        else:
            out = np.broadcast_to(out, x1.shape)
        return cls(grid, physical=np.array(out, dtype=np.float64))

    @property
    def ncomp(self) -> int:
        arr = self._phys if self._phys is not None else self._spec
        return 1 if arr.ndim == 2 else arr.shape[0]

    @property
    def physical(self) -> Array:
        if self._phys is None:
            self._phys = _frozen(self.grid.ifft(self._spec))
        return self._phys

    @property
    def spectral(self) -> Array:
        if self._spec is None:
            self._spec = _frozen(self.grid.fft(self._phys))
        return self._spec

    def component(self, i: int) -> "Field":
        if self.ncomp == 1:
            raise ValueError("scalar field has no components")
        if self._phys is not None:
            return Field(self.grid, physical=self._phys[i])
        return Field(self.grid, spectral=self._spec[i])

    def norm(self, p: float = 2) -> float:
        return self.grid.lp_norm(self.physical, p)

    def mean(self) -> Union[float, Array]:
        m = self.spectral[..., 0, 0].real / self.grid.n**2
        return float(m) if self.ncomp == 1 else np.array(m)

    def _check(self, other: "Field") -> None:
        if other.grid != self.grid:
            raise GridMismatchError("fields live on different grids")

    def __add__(self, other: "Field") -> "Field":
        self._check(other)
        return Field(self.grid, physical=self.physical + other.physical)

    def __sub__(self, other: "Field") -> "Field":
        self._check(other)
        return Field(self.grid, physical=self.physical - other.physical)

    def __mul__(self, c: float) -> "Field":
        return Field(self.grid, physical=self.physical * c)

    __rmul__ = __mul__

    def __neg__(self) -> "Field":
        return self * -1.0

    def __repr__(self) -> str:
        return f"Field(n={self.grid.n}, ncomp={self.ncomp})"


def _frozen(a: Array) -> Array:
    a = a.view()
    a.flags.writeable = False
    return a


def vector(grid: Grid, c1: Array, c2: Array) -> Field:
    return Field(grid, physical=np.stack([c1, c2]))


# -- transforms ------------------------------------------------------------
def fft_forward(f: Field) -> Field:
    """Return a field with the (unnormalized) spectral representation populated."""
    return Field(f.grid, physical=f.physical, spectral=f.spectral)


def fft_inverse(f: Field) -> Field:
    """Return a field with the physical representation populated (inverse divides by n^2)."""
    return Field(f.grid, physical=f.physical, spectral=f.spectral)


# -- differential operators ------------------------------------------------
def gradient(f: Field) -> Field:
    if f.ncomp != 1:
        raise ValueError("gradient expects a scalar field")
    k1, k2 = f.grid.derivative_wavenumbers
    s = f.spectral
    return Field(f.grid, spectral=np.stack([1j * k1 * s, 1j * k2 * s]))


def divergence(v: Field) -> Field:
    if v.ncomp != 2:
        raise ValueError("divergence expects a vector field")
    k1, k2 = v.grid.derivative_wavenumbers
    s = v.spectral
    return Field(v.grid, spectral=1j * k1 * s[0] + 1j * k2 * s[1])


def curl(v: Field) -> Field:
    """Scalar vorticity ``d1 v2 - d2 v1``."""
    k1, k2 = v.grid.derivative_wavenumbers
    s = v.spectral
    return Field(v.grid, spectral=1j * k1 * s[1] - 1j * k2 * s[0])


def laplacian(f: Field) -> Field:
    return Field(f.grid, spectral=-f.grid.ksq * f.spectral)


def jacobian(v: Field) -> Array:
    """Physical samples of ``d_j v^i`` as an array of shape ``(2, 2, n, n)``, index ``[i, j]``."""
    k1, k2 = v.grid.derivative_wavenumbers
    s = v.spectral
    d = np.stack([np.stack([1j * k1 * s[i], 1j * k2 * s[i]]) for i in range(2)])
    return v.grid.ifft(d)


def sup_gradient(v: Field) -> float:
    """``max_x |grad v(x)|`` with the pointwise Frobenius norm."""
    J = jacobian(v)
    return float(np.sqrt(np.sum(J**2, axis=(0, 1))).max())


# -- projections -----------------------------------------------------------
def leray_project(v: Field) -> Field:
    """Projection onto divergence-free fields, ``P v = v - Q v``; mode 0 passes through."""
    if v.ncomp != 2:
        raise ValueError("leray_project expects a vector field")
    g = v.grid
    k1, k2 = g.derivative_wavenumbers
    s = v.spectral
    kdotv = (k1 * s[0] + k2 * s[1]) * g.inv_ksq
    return Field(g, spectral=np.stack([s[0] - k1 * kdotv, s[1] - k2 * kdotv]))


def biot_savart(omega: Field, mean_u=(0.0, 0.0)) -> Field:
    """Recover the divergence-free velocity with vorticity ``omega`` and mean ``mean_u``."""
    if omega.ncomp != 1:
        raise ValueError("biot_savart expects a scalar vorticity")
    g = omega.grid
    s = omega.spectral
    mean = s[0, 0].real / g.n**2
    scale = float(np.abs(s).max()) / g.n**2
    if abs(mean) > 1e-10 * scale + 1e-14:
        raise ValueError(f"vorticity mean must vanish on torus (mean = {mean:.3e})")
    k1, k2 = g.derivative_wavenumbers
    psi = -s * g.inv_ksq
    u_hat = np.stack([-1j * k2 * psi, 1j * k1 * psi])
    u_hat[:, 0, 0] = np.asarray(mean_u, dtype=float) * g.n**2
    return Field(g, spectral=u_hat)


def dealias(f: Field) -> Field:
    return Field(f.grid, spectral=f.spectral * f.grid.dealias_mask)


def translate(f: Field, shift1: int = 0, shift2: int = 0) -> Field:
    """Shift samples by whole grid cells (periodic roll)."""
    return Field(f.grid, physical=np.roll(f.physical, (shift1, shift2), axis=(-2, -1)))


# -- FLD1 binary format -----------------------------------------------------
def write_field(path: Union[str, Path], f: Field) -> None:
    g = f.grid
    header = f"FLD1 {g.n} {g.n} {f.ncomp} {float(g.length)!r}\n".encode("ascii")
    data = np.ascontiguousarray(f.physical, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(data.tobytes(order="C"))


def read_field(path: Union[str, Path]) -> Field:
    raw = Path(path).read_bytes()
    nl = raw.index(b"\n")
    parts = raw[:nl].decode("ascii").split()
    if len(parts) != 5 or parts[0] != "FLD1":
        raise ValueError(f"{path}: not an FLD1 file")
    nx, ny, ncomp = (int(p) for p in parts[1:4])
    length = float(parts[4])
    if nx != ny:
        raise ValueError(f"{path}: only square grids are supported ({nx}x{ny})")
    data = np.frombuffer(raw[nl + 1 :], dtype="<f8")
    expected = nx * ny * ncomp
    if data.size != expected:
        raise ValueError(f"{path}: expected {expected} samples, found {data.size}")
    shape = (nx, ny) if ncomp == 1 else (ncomp, nx, ny)
    return Field(Grid(nx, length), physical=data.reshape(shape).astype(np.float64))


# -- random test data --------------------------------------------------------
def random_band_field(grid: Grid, rng: np.random.Generator, kmin: float = 0.0, kmax: float | None = None,
                      ncomp: int = 1, zero_mean: bool = False) -> Field:
    """Real field with independent Gaussian modes on the shell ``kmin <= |m| <= kmax`` (integer modes).

    Nyquist modes are always excluded.
    """
    m1, m2 = grid.modes
    mag = np.sqrt(m1**2 + m2**2)
    kmax = grid.n / 3.0 if kmax is None else kmax
    mask = (mag >= kmin) & (mag <= kmax) & ~grid.nyquist_mask
    if zero_mean:
        mask = mask & (mag > 0)
    shape = grid.spectral_shape if ncomp == 1 else (ncomp,) + grid.spectral_shape
    coeffs = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * mask
    return Field(grid, physical=grid.ifft(coeffs * grid.n))
