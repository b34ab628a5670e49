"""Littlewood-Paley decomposition on the grid frequencies.

Smooth cutoffs, dyadic blocks, Besov norms, Bony's paraproduct and
remainder, plus empirical checkers for the Bernstein, paraproduct and
composition inequalities.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .spectral import Array, Field, Grid, GridMismatchError, gradient, random_band_field

CHI_INNER = 3.0 / 4.0
CHI_OUTER = 4.0 / 3.0


def _smooth_step(t: Array) -> Array:
    """``exp(-1/t)`` for ``t > 0``, zero otherwise."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = np.exp(-1.0 / t[pos])
    return out


def chi(r) -> Array:
    """Radial cutoff: 1 on ``[0, 3/4]``, 0 on ``[4/3, inf)``, C-infinity and nonincreasing."""
    r = np.asarray(r, dtype=float)
    hi = _smooth_step(CHI_OUTER - r)
    lo = _smooth_step(r - CHI_INNER)
    return hi / (hi + lo)


def phi(r) -> Array:
    """Annular cutoff ``chi(r/2) - chi(r)``, supported in ``[3/4, 8/3]``."""
    r = np.asarray(r, dtype=float)
    return chi(r / 2.0) - chi(r)


@dataclass(frozen=True)
class CutoffPair:
    chi: Callable[[Array], Array] = chi
    phi: Callable[[Array], Array] = phi


@dataclass(frozen=True)
class BesovIndex:
    s: float
    p: float = np.inf
    r: float = 1.0

    def __post_init__(self) -> None:
        if not (1 <= self.p <= np.inf and 1 <= self.r <= np.inf):
            raise ValueError(f"need 1 <= p, r <= inf, got p={self.p}, r={self.r}")

    def condition_c(self, dim: int = 2) -> bool:
        """True when ``B^s_{p,r}`` embeds in the Lipschitz functions."""
        crit = 1.0 + dim / self.p
        return self.s > crit or (self.s == crit and self.r == 1)


@dataclass(frozen=True, eq=False)
class DyadicLadder:
    """Tabulated multipliers for ``Delta_j`` (``-1 <= j <= jmax``) on one grid.

    ``tables[j + 1]`` is the multiplier of ``Delta_j`` on the half spectrum.
    Blocks are built as differences of ``chi`` tables so their sum telescopes.
    """

    grid: Grid
    cutoffs: CutoffPair = field(default_factory=CutoffPair)
    tables: Array = field(default=None, repr=False)
    jmax: int = field(default=None)

    def __post_init__(self) -> None:
        if self.tables is not None:
            object.__setattr__(self, "jmax", self.tables.shape[0] - 2)
            return
        kmax = self.grid.kmax
        jmax = int(np.floor(np.log2(kmax / CHI_INNER)))
        while CHI_INNER * 2.0 ** (jmax + 1) <= kmax:
            jmax += 1
        while CHI_INNER * 2.0**jmax > kmax:
            jmax -= 1
        k = self.grid.kmag
        lows = np.stack([self.cutoffs.chi(k / 2.0**j) for j in range(jmax + 2)])
        tables = np.empty((jmax + 2,) + k.shape)
        tables[0] = lows[0]
        tables[1:] = lows[1:] - lows[:-1]
        tables.flags.writeable = False
        object.__setattr__(self, "tables", tables)
        object.__setattr__(self, "jmax", jmax)

    @property
    def indices(self) -> range:
        return range(-1, self.jmax + 1)

    def multiplier(self, j: int) -> Array:
        if not -1 <= j <= self.jmax:
            raise ValueError(f"block index {j} outside [-1, {self.jmax}]")
        return self.tables[j + 1]

    def low_multiplier(self, j: int) -> Array:
        if j < 0:
            raise ValueError(f"low cutoff index must be >= 0, got {j}")
        # S_j = chi(2^-j D) = Delta_{-1} + ... + Delta_{j-1}, i.e. tables[0 .. j]
        if j > self.jmax:
            return np.ones(self.grid.spectral_shape)
        return self.tables[: j + 1].sum(axis=0)


def _check_grid(ladder: DyadicLadder, *fields: Field) -> None:
    for f in fields:
        if f.grid != ladder.grid:
            raise GridMismatchError("field grid does not match the ladder grid")


def block(ladder: DyadicLadder, j: int, f: Field) -> Field:
    """``Delta_j f``."""
    _check_grid(ladder, f)
    return Field(f.grid, spectral=f.spectral * ladder.multiplier(j))


def low_cutoff(ladder: DyadicLadder, j: int, f: Field) -> Field:
    """``S_j f = sum_{j' <= j-1} Delta_j' f``."""
    _check_grid(ladder, f)
    return Field(f.grid, spectral=f.spectral * ladder.low_multiplier(j))


def blocks(ladder: DyadicLadder, f: Field) -> Array:
    """Physical samples of every block, shape ``(jmax + 2, ...)``; index 0 is ``Delta_{-1}``."""
    _check_grid(ladder, f)
    spec = f.spectral
    if f.ncomp == 1:
        stacked = ladder.tables * spec
    else:
        stacked = ladder.tables[:, None] * spec[None]
    return ladder.grid.ifft(stacked)


def block_norms(ladder: DyadicLadder, f: Field, p: float) -> Array:
    """``||Delta_j f||_{L^p}`` for ``j = -1 .. jmax``."""
    g = ladder.grid
    return np.array([g.lp_norm(b, p) for b in blocks(ladder, f)])


def besov_weights(ladder: DyadicLadder, s: float) -> Array:
    j = np.arange(-1, ladder.jmax + 1)
    return 2.0 ** (s * np.maximum(j, 0))


def besov_norm(ladder: DyadicLadder, f: Field, idx: BesovIndex) -> float:
    """Nonhomogeneous Besov norm; vector fields use the pointwise Euclidean magnitude.

    The low-frequency block carries weight 1.
    """
    terms = besov_weights(ladder, idx.s) * block_norms(ladder, f, idx.p)
    if np.isinf(idx.r):
        return float(terms.max())
    if idx.r == 1:
        return float(terms.sum())
    return float(np.sum(terms**idx.r) ** (1.0 / idx.r))


def _product_blocks(ladder: DyadicLadder, u: Field, v: Field) -> tuple[Array, Array]:
    _check_grid(ladder, u, v)
    if u.ncomp != 1 or v.ncomp != 1:
        raise ValueError("paraproduct and remainder act on scalar fields")
    return blocks(ladder, u), blocks(ladder, v)


def _finish(grid: Grid, values: Array, dealias: bool) -> Field:
    if dealias:
        return Field(grid, spectral=grid.fft(values) * grid.dealias_mask)
    return Field(grid, physical=values)


def paraproduct(ladder: DyadicLadder, u: Field, v: Field, dealias: bool = True) -> Field:
    """``T_u v = sum_j S_{j-1} u  Delta_j v``."""
    U, V = _product_blocks(ladder, u, v)
    lows = np.cumsum(U, axis=0)
    # S_{j-1} u = sum of U[0 .. j-1]  (array index i = j + 1)
    out = np.einsum("ixy,ixy->xy", lows[:-2], V[2:]) if U.shape[0] > 2 else np.zeros_like(U[0])
    return _finish(ladder.grid, out, dealias)


def remainder(ladder: DyadicLadder, u: Field, v: Field, dealias: bool = True) -> Field:
    """``R(u, v) = sum_{|j - j'| <= 1} Delta_j u  Delta_j' v``."""
    U, V = _product_blocks(ladder, u, v)
    near = V.copy()
    near[1:] += V[:-1]
    near[:-1] += V[1:]
    out = np.einsum("ixy,ixy->xy", U, near)
    return _finish(ladder.grid, out, dealias)


def product(u: Field, v: Field, dealias: bool = True) -> Field:
    """Pointwise product, optionally truncated to the 2/3 band."""
    return _finish(u.grid, u.physical * v.physical, dealias)


# -- empirical inequality checks ----------------------------------------------
@dataclass
class BernsteinReport:
    j: int
    ratio_min: dict
    ratio_max: dict
    low_to_high: float  # max ||u||_inf / (2^j ||u||_2)


def annulus_field(ladder: DyadicLadder, j: int, rng: np.random.Generator) -> Field:
    """Random real field spectrally supported in the annulus of block ``j``.

    Built from a few randomly placed spikes plus weak noise, so the samples
    include the concentrated wave packets that saturate Bernstein's bounds.
    """
    g = ladder.grid
    spikes = np.zeros((g.n, g.n))
    for _ in range(rng.integers(1, 4)):
        i1, i2 = rng.integers(0, g.n, size=2)
        spikes[i1, i2] += rng.standard_normal()
    noise = random_band_field(g, rng, 0.0, np.inf).physical
    raw = spikes + 0.05 * noise / np.abs(noise).max()
    return block(ladder, j, Field(g, physical=raw))


def bernstein_check(ladder: DyadicLadder, j: int, trials: int = 50, seed: int = 0) -> BernsteinReport:
    """Ratios ``||grad u||_p / (2^j ||u||_p)`` for ``p in {2, inf}`` over random annulus fields."""
    if not 0 <= j <= ladder.jmax:
        raise ValueError(f"annulus index {j} outside [0, {ladder.jmax}]")
    rng = np.random.default_rng(seed)
    ratios = {2: [], np.inf: []}
    lth = []
    scale = 2.0**j
    for _ in range(trials):
        u = annulus_field(ladder, j, rng)
        gu = gradient(u)
        for p in ratios:
            ratios[p].append(gu.norm(p) / (scale * u.norm(p)))
        lth.append(u.norm(np.inf) / (scale * u.norm(2)))
    return BernsteinReport(
        j=j,
        ratio_min={p: float(min(r)) for p, r in ratios.items()},
        ratio_max={p: float(max(r)) for p, r in ratios.items()},
        low_to_high=float(max(lth)),
    )


def paraproduct_constants(ladder: DyadicLadder, pairs, idx: BesovIndex) -> Array:
    """``||T_u v||_{B} / (||u||_inf ||v||_{B})`` for each ``(u, v)`` pair."""
    out = []
    for u, v in pairs:
        num = besov_norm(ladder, paraproduct(ladder, u, v, dealias=False), idx)
        out.append(num / (u.norm(np.inf) * besov_norm(ladder, v, idx)))
    return np.array(out)


def composition_constants(ladder: DyadicLadder, samples, idx: BesovIndex,
                          fn: Callable[[Array], Array] = np.log) -> Array:
    """``||grad F(a)||_{B^{s-1}} / ||grad a||_{B^{s-1}}`` for positive fields ``a``."""
    low = BesovIndex(idx.s - 1.0, idx.p, idx.r)
    out = []
    for a in samples:
        fa = Field(a.grid, physical=fn(a.physical))
        out.append(besov_norm(ladder, gradient(fa), low) / besov_norm(ladder, gradient(a), low))
    return np.array(out)
