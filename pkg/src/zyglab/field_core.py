"""Periodic 3-D grids, sampled fields, FFT convolution and Lp norms.

Transform normalization is fixed throughout the package: the forward DFT is
unscaled and the inverse carries 1/N (the numpy convention).  The continuous
Fourier coefficient of a sampled band-limited function,

    c(xi) = integral over the box of g(x) exp(-i xi.x) dx,

is recovered from the raw DFT as ``cell_volume * exp(-i xi.origin) * G``; see
:func:`fourier_coefficients` and :func:`from_fourier_coefficients`.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataError, DimensionError, GeometryError, ParameterError, WeightError

# tolerance (in units of grid spacing) used when deciding whether a node lies
# on a rectangle boundary
_EDGE_TOL = 1e-9


def _is_pow2(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


def _triple(v, name: str, cast=float) -> tuple:
    if np.isscalar(v):
        v = (v, v, v)
    v = tuple(cast(x) for x in v)
    if len(v) != 3:
        raise ParameterError(f"{name} must have three entries, got {len(v)}")
    return v


@dataclass(frozen=True)
class Grid3:
    """Uniform periodic grid on the box ``origin + [0, L1) x [0, L2) x [0, L3)``.

    ``origin`` is the coordinate of index (0, 0, 0).  When omitted the box is
    centred, i.e. ``origin = -L/2`` on every axis, so the node ``n/2`` sits at 0.
    """

    extents: tuple[float, float, float]
    counts: tuple[int, int, int]
    origin: tuple[float, float, float] | None = None

    def __post_init__(self):
        ext = _triple(self.extents, "extents")
        cnt = _triple(self.counts, "counts", int)
        if any(L <= 0 or not math.isfinite(L) for L in ext):
            raise ParameterError(f"extents must be positive, got {ext}")
        if not all(_is_pow2(n) for n in cnt):
            raise ParameterError(f"counts must be powers of two, got {cnt}")
        org = tuple(-L / 2 for L in ext) if self.origin is None else _triple(self.origin, "origin")
        object.__setattr__(self, "extents", ext)
        object.__setattr__(self, "counts", cnt)
        object.__setattr__(self, "origin", org)

    @classmethod
    def cube(cls, L: float, n: int, origin=None) -> "Grid3":
        return cls((L, L, L), (n, n, n), origin)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.counts

    @property
    def size(self) -> int:
        return self.counts[0] * self.counts[1] * self.counts[2]

    @property
    def spacing(self) -> tuple[float, float, float]:
        return tuple(L / n for L, n in zip(self.extents, self.counts))

    @property
    def cell_volume(self) -> float:
        h = self.spacing
        return h[0] * h[1] * h[2]

    @property
    def volume(self) -> float:
        L = self.extents
        return L[0] * L[1] * L[2]

    def axis(self, i: int) -> np.ndarray:
        """Node coordinates along axis ``i``."""
        return self.origin[i] + self.spacing[i] * np.arange(self.counts[i])

    def centered_axis(self, i: int) -> np.ndarray:
        """Node coordinates reduced to the centred fundamental domain [-L/2, L/2)."""
        L = self.extents[i]
        x = np.mod(self.axis(i) + L / 2, L) - L / 2
        # snap roundoff so that nodes exactly at +L/2 map to -L/2
        x[np.isclose(x, L / 2, rtol=0, atol=_EDGE_TOL * self.spacing[i])] = -L / 2
        return x

    def mesh(self, centered: bool = False) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        ax = self.centered_axis if centered else self.axis
        return tuple(np.meshgrid(ax(0), ax(1), ax(2), indexing="ij"))

    def frequencies(self, i: int) -> np.ndarray:
        """Angular frequencies 2*pi*m/L in FFT order along axis ``i``."""
        return 2 * np.pi * np.fft.fftfreq(self.counts[i], d=self.spacing[i])

    def frequency_mesh(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return tuple(np.meshgrid(*(self.frequencies(i) for i in range(3)), indexing="ij"))

    def nyquist(self, i: int) -> float:
        return np.pi * self.counts[i] / self.extents[i]

    def node_aligned(self) -> bool:
        """True when the origin lies on the lattice of nodes through 0."""
        for o, h in zip(self.origin, self.spacing):
            r = o / h
            if abs(r - round(r)) > 1e-9:
                return False
        return True

    def refined(self, factor: int = 2) -> "Grid3":
        """Same box, ``factor`` times more nodes per axis, node-for-node nested."""
        return Grid3(self.extents, tuple(n * factor for n in self.counts), self.origin)


@dataclass(frozen=True, eq=False)
class ScalarField3:
    """Samples of a function on a :class:`Grid3`.  Values are read-only."""

    grid: Grid3
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.shape != self.grid.counts:
            if v.size == self.grid.size:
                v = v.reshape(self.grid.counts)
            else:
                raise DimensionError(f"expected {self.grid.size} samples, got {v.size}")
        if np.iscomplexobj(v):
            v = v.astype(np.complex128, copy=True)
        else:
            v = v.astype(np.float64, copy=True)
            if not np.all(np.isfinite(v)):
                raise DataError("real field contains non-finite samples")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid: Grid3, fn, centered: bool = False) -> "ScalarField3":
        x1, x2, x3 = grid.mesh(centered)
        return cls(grid, np.broadcast_to(fn(x1, x2, x3), grid.counts))

    @classmethod
    def constant(cls, grid: Grid3, c: float) -> "ScalarField3":
        return cls(grid, np.full(grid.counts, c))

    @classmethod
    def delta(cls, grid: Grid3, point=(0.0, 0.0, 0.0)) -> "ScalarField3":
        """Discrete delta of unit mass at the node nearest to ``point``."""
        v = np.zeros(grid.counts)
        idx = tuple(
            int(round((p - o) / h)) % n
            for p, o, h, n in zip(point, grid.origin, grid.spacing, grid.counts)
        )
        v[idx] = 1.0 / grid.cell_volume
        return cls(grid, v)

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.values)

    def with_values(self, values) -> "ScalarField3":
        return ScalarField3(self.grid, values)

    def _other(self, other):
        if isinstance(other, ScalarField3):
            _check_same_grid(self, other)
            return other.values
        return other

    def __add__(self, other):
        return self.with_values(self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return self.with_values(self.values - self._other(other))

    def __rsub__(self, other):
        return self.with_values(self._other(other) - self.values)

    def __mul__(self, other):
        return self.with_values(self.values * self._other(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self.with_values(self.values / self._other(other))

    def __neg__(self):
        return self.with_values(-self.values)

    def abs(self) -> "ScalarField3":
        return self.with_values(np.abs(self.values))

    @property
    def real(self) -> "ScalarField3":
        return self.with_values(np.real(self.values))

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))


@dataclass(frozen=True, eq=False)
class SpectralField3:
    """Raw (unscaled) DFT coefficients of a field, in FFT index order."""

    grid: Grid3
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=np.complex128)
        if c.shape != self.grid.counts:
            raise DimensionError(f"expected coefficient array of shape {self.grid.counts}")
        c = c.copy()
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def forward(cls, f: ScalarField3) -> "SpectralField3":
        return cls(f.grid, np.fft.fftn(f.values))

    def inverse(self, real: bool = True) -> ScalarField3:
        v = np.fft.ifftn(self.coeffs)
        return ScalarField3(self.grid, v.real if real else v)

    @cached_property
    def continuous(self) -> np.ndarray:
        """Continuous Fourier coefficients c(xi_m) (see module docstring)."""
        return self.coeffs * _origin_phase(self.grid, -1) * self.grid.cell_volume


def _origin_phase(grid: Grid3, sign: int) -> np.ndarray:
    xi1, xi2, xi3 = (grid.frequencies(i) for i in range(3))
    o = grid.origin
    return (
        np.exp(sign * 1j * xi1 * o[0])[:, None, None]
        * np.exp(sign * 1j * xi2 * o[1])[None, :, None]
        * np.exp(sign * 1j * xi3 * o[2])[None, None, :]
    )


def fourier_coefficients(f: ScalarField3) -> np.ndarray:
    """Continuous Fourier coefficients of ``f`` at the grid frequencies."""
    return np.fft.fftn(f.values) * _origin_phase(f.grid, -1) * f.grid.cell_volume


def from_fourier_coefficients(grid: Grid3, c: np.ndarray, real: bool = True) -> ScalarField3:
    """Inverse of :func:`fourier_coefficients`."""
    v = np.fft.ifftn(c * _origin_phase(grid, +1)) / grid.cell_volume
    return ScalarField3(grid, v.real if real else v)


def _check_same_grid(f: ScalarField3, g: ScalarField3) -> None:
    if f.grid != g.grid:
        raise DimensionError(f"grid mismatch: {f.grid} vs {g.grid}")


def _check_finite(f: ScalarField3) -> None:
    if not np.all(np.isfinite(f.values)):
        raise DataError("field contains non-finite samples")


def fft_convolve(f: ScalarField3, g: ScalarField3) -> ScalarField3:
    """Periodic convolution (f*g)(x) = sum_y f(y) g(x - y) * cell volume.

    Needs a node-aligned origin so that displacements between nodes are again
    node coordinates.
    """
    _check_same_grid(f, g)
    _check_finite(f)
    _check_finite(g)
    grid = f.grid
    if not grid.node_aligned():
        raise DimensionError("convolution needs an origin on the node lattice through 0")
    out = np.fft.ifftn(np.fft.fftn(f.values) * np.fft.fftn(g.values)) * grid.cell_volume
    shift = tuple(int(round(o / h)) for o, h in zip(grid.origin, grid.spacing))
    out = np.roll(out, shift, axis=(0, 1, 2))
    if not (f.is_complex or g.is_complex):
        out = out.real
    return ScalarField3(grid, out)


def apply_multiplier(f: ScalarField3, m: np.ndarray, real: bool | None = None) -> ScalarField3:
    """Apply a Fourier multiplier given on the grid frequencies (FFT order)."""
    out = np.fft.ifftn(np.fft.fftn(f.values) * m)
    if real is None:
        real = not f.is_complex
    return ScalarField3(f.grid, out.real if real else out)


def lp_norm(f: ScalarField3, p: float, w: ScalarField3 | None = None) -> float:
    """(sum |f|^p w * cell volume)^(1/p); ``p = inf`` gives the sup norm."""
    if not p >= 1:
        raise ParameterError(f"p must be >= 1, got {p}")
    a = np.abs(f.values)
    if w is not None:
        _check_same_grid(f, w)
        if np.iscomplexobj(w.values) or np.any(w.values <= 0):
            raise WeightError("weight must be strictly positive")
    if math.isinf(p):
        return float(a.max())
    s = a**p if w is None else a**p * w.values
    return float((s.sum() * f.grid.cell_volume) ** (1.0 / p))


def axis_mask(grid: Grid3, i: int, a: float, length: float) -> np.ndarray:
    """Nodes along axis ``i`` inside the half-open periodic interval [a, a+length)."""
    L, h = grid.extents[i], grid.spacing[i]
    if length >= L - _EDGE_TOL * h:
        return np.ones(grid.counts[i], dtype=bool)
    t = np.mod(grid.axis(i) - a, L)
    tol = _EDGE_TOL * h
    return (t < length - tol) | (t > L - tol)


def region_mask(grid: Grid3, region) -> np.ndarray:
    """Boolean node mask of a box-like object with ``corner`` and ``sides``."""
    if any(s <= 0 for s in region.sides):
        raise GeometryError(f"region sides must be positive, got {region.sides}")
    m = [axis_mask(grid, i, region.corner[i], region.sides[i]) for i in range(3)]
    return m[0][:, None, None] & m[1][None, :, None] & m[2][None, None, :]


def integrate(f: ScalarField3, region=None) -> float | complex:
    """Riemann sum over nodes (cell centres) inside ``region`` times cell volume."""
    v = f.values if region is None else f.values[region_mask(f.grid, region)]
    s = v.sum() * f.grid.cell_volume
    return complex(s) if f.is_complex else float(s)


def parseval_sides(f: ScalarField3) -> tuple[float, float]:
    """Both sides of Parseval: (cellvol * sum|f|^2, cellvol/N * sum|F|^2)."""
    grid = f.grid
    lhs = float(np.sum(np.abs(f.values) ** 2) * grid.cell_volume)
    rhs = float(np.sum(np.abs(np.fft.fftn(f.values)) ** 2) * grid.cell_volume / grid.size)
    return lhs, rhs


# -- serialization -----------------------------------------------------------

_HEADER = struct.Struct("<3q6d")


def save_field(f: ScalarField3, path: str | Path) -> None:
    """Flat little-endian binary: int64 counts, float64 extents and origin, then samples."""
    if f.is_complex:
        raise DataError("binary format stores real fields only")
    g = f.grid
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(*g.counts, *g.extents, *g.origin))
        fh.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes())


def load_field(path: str | Path) -> ScalarField3:
    raw = Path(path).read_bytes()
    head = _HEADER.unpack_from(raw)
    grid = Grid3(head[3:6], head[0:3], head[6:9])
    vals = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if vals.size != grid.size:
        raise DataError(f"expected {grid.size} samples, file has {vals.size}")
    return ScalarField3(grid, vals.reshape(grid.counts))


def field_to_csv(f: ScalarField3, path: str | Path) -> None:
    if f.grid.size > 64**3:
        raise ParameterError("CSV export is meant for small grids")
    x1, x2, x3 = f.grid.mesh()
    i1, i2, i3 = np.indices(f.grid.counts)
    cols = [a.ravel() for a in (i1, i2, i3, x1, x2, x3, f.values.real)]
    np.savetxt(path, np.column_stack(cols), delimiter=",",
               header="i1,i2,i3,x1,x2,x3,value", comments="", fmt=["%d"] * 3 + ["%.17g"] * 4)


def random_field(grid: Grid3, rng: np.random.Generator, positive: bool = False) -> ScalarField3:
    v = rng.standard_normal(grid.counts)
    if positive:
        v = np.exp(0.5 * v)
    return ScalarField3(grid, v)


def as_points(x: Sequence | np.ndarray) -> np.ndarray:
    """Coerce to a float array whose last axis has length 3."""
    a = np.asarray(x, dtype=float)
    if a.shape[-1] != 3:
        raise DimensionError("points need three coordinates on the last axis")
    return a
