"""Zygmund dilations, rectangles, dyadic lattices and cones."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import GeometryError, ParameterError, ResolutionError
from .field_core import Grid3, region_mask

ZYGMUND_TOL = 1e-10


def zygmund_dilate(x, s: float, t: float) -> np.ndarray:
    """rho_{s,t}(x) = (s x1, t x2, s t x3); works on arrays of points."""
    if not (s > 0 and t > 0):
        raise ParameterError(f"dilation parameters must be positive, got s={s}, t={t}")
    return np.asarray(x, dtype=float) * np.array([s, t, s * t])


def is_zygmund(sides, tol: float = ZYGMUND_TOL) -> bool:
    lI, lJ, lS = (float(v) for v in sides)
    if min(lI, lJ, lS) <= 0:
        raise GeometryError(f"sides must be positive, got {sides}")
    return abs(lS - lI * lJ) <= tol * lS


@dataclass(frozen=True)
class Box:
    """Half-open axis-parallel box [a, a + l) in each coordinate."""

    corner: tuple[float, float, float]
    sides: tuple[float, float, float]

    def __post_init__(self):
        c = tuple(float(v) for v in self.corner)
        s = tuple(float(v) for v in self.sides)
        if len(c) != 3 or len(s) != 3:
            raise GeometryError("corner and sides need three entries")
        if min(s) <= 0:
            raise GeometryError(f"sides must be positive, got {s}")
        object.__setattr__(self, "corner", c)
        object.__setattr__(self, "sides", s)

    @property
    def volume(self) -> float:
        return self.sides[0] * self.sides[1] * self.sides[2]

    @property
    def upper(self) -> tuple[float, float, float]:
        return tuple(a + l for a, l in zip(self.corner, self.sides))

    @property
    def center(self) -> tuple[float, float, float]:
        return tuple(a + l / 2 for a, l in zip(self.corner, self.sides))

    @property
    def zygmund(self) -> bool:
        return is_zygmund(self.sides)

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        lo, hi = np.array(self.corner), np.array(self.upper)
        return np.all((x >= lo) & (x < hi), axis=-1)

    def contains_box(self, other: "Box", tol: float = 1e-12) -> bool:
        return all(
            a - tol <= b and b + m <= a + l + tol
            for a, l, b, m in zip(self.corner, self.sides, other.corner, other.sides)
        )

    def mask(self, grid: Grid3) -> np.ndarray:
        """Nodes of ``grid`` inside the box, with periodic wrap."""
        return region_mask(grid, self)

    def node_count(self, grid: Grid3) -> int:
        return int(self.mask(grid).sum())


@dataclass(frozen=True)
class ZygmundRectangle(Box):
    """Box I x J x S with l(S) = l(I) * l(J)."""

    def __post_init__(self):
        super().__post_init__()
        if not is_zygmund(self.sides):
            raise GeometryError(f"sides {self.sides} violate l(S) = l(I) l(J)")

    @classmethod
    def from_IJ(cls, corner, lI: float, lJ: float) -> "ZygmundRectangle":
        return cls(corner, (lI, lJ, lI * lJ))


def smallest_zygmund_cover(*boxes: Box) -> ZygmundRectangle:
    """Smallest Zygmund rectangle containing all ``boxes`` (grown along the slack axis)."""
    lo = np.min([b.corner for b in boxes], axis=0)
    hi = np.max([b.upper for b in boxes], axis=0)
    lI, lJ, lS = hi - lo
    if lS >= lI * lJ:
        # grow I (then the product matches S); the cheapest choice keeps J fixed
        lI = lS / lJ
    else:
        lS = lI * lJ
    return ZygmundRectangle(tuple(lo), (lI, lJ, lS))


def _divides(L: float, l: float) -> int | None:
    r = L / l
    q = round(r)
    return int(q) if q >= 1 and abs(r - q) <= 1e-9 * max(1.0, r) else None


@dataclass(frozen=True)
class ZygLattice:
    """Dyadic Zygmund cells with sides 2^(j-N), 2^(k-N), 2^(j+k-2N) tiling the box.

    Cells are anchored at the origin of R^3 (corners at integer multiples of
    the sides) and their corners are reduced into the periodic box.
    """

    grid: Grid3
    j: int
    k: int
    N: int

    @property
    def sides(self) -> tuple[float, float, float]:
        return (2.0 ** (self.j - self.N), 2.0 ** (self.k - self.N), 2.0 ** (self.j + self.k - 2 * self.N))

    @property
    def shape(self) -> tuple[int, int, int]:
        return tuple(int(round(L / l)) for L, l in zip(self.grid.extents, self.sides))

    def __len__(self) -> int:
        s = self.shape
        return s[0] * s[1] * s[2]

    def axis_corners(self, i: int) -> np.ndarray:
        L, o, l = self.grid.extents[i], self.grid.origin[i], self.sides[i]
        q = np.arange(self.shape[i])
        return o + np.mod(q * l - o, L)

    def __iter__(self) -> Iterator[ZygmundRectangle]:
        c = [self.axis_corners(i) for i in range(3)]
        for a in c[0]:
            for b in c[1]:
                for d in c[2]:
                    yield ZygmundRectangle((a, b, d), self.sides)

    @cached_property
    def cells(self) -> tuple[ZygmundRectangle, ...]:
        return tuple(iter(self))

    def axis_labels(self, i: int) -> np.ndarray:
        """Cell index along axis ``i`` for every grid node along that axis."""
        L, l, h = self.grid.extents[i], self.sides[i], self.grid.spacing[i]
        x = np.mod(self.grid.axis(i), L)
        q = np.floor(x / l + 1e-9 * h / l).astype(int)
        return np.mod(q, self.shape[i])

    def labels(self) -> np.ndarray:
        """Flat cell index (in iteration order) of every grid node."""
        s = self.shape
        q = [self.axis_labels(i) for i in range(3)]
        return (q[0][:, None, None] * s[1] + q[1][None, :, None]) * s[2] + q[2][None, None, :]


def build_lattice(grid: Grid3, j: int, k: int, N: int, min_cells: int = 2) -> ZygLattice:
    """The lattice R_z^N(j, k) on ``grid``; cells must span >= ``min_cells`` grid cells."""
    if N < 0:
        raise ParameterError("refinement N must be nonnegative")
    lat = ZygLattice(grid, j, k, N)
    for i, (L, l, h) in enumerate(zip(grid.extents, lat.sides, grid.spacing)):
        if _divides(L, l) is None:
            raise GeometryError(f"axis {i + 1}: cell side {l} does not divide box side {L}")
        if l < min_cells * h * (1 - 1e-12):
            raise ResolutionError(f"axis {i + 1}: cell side {l} is below {min_cells} grid cells ({h})")
    return lat


def write_lattice_csv(lattice: ZygLattice, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["j", "k", "N", "corner1", "corner2", "corner3", "lI", "lJ", "lS"])
        for R in lattice:
            w.writerow([lattice.j, lattice.k, lattice.N, *map(repr, R.corner), *map(repr, R.sides)])


@dataclass(frozen=True)
class ZygmundCone:
    """Cone over ``vertex``: points (y, s, t) with |x1-y1|<s, |x2-y2|<w, |x3-y3|<st.

    ``variant="literal"`` uses w = s (the region as usually displayed);
    ``variant="zygmund"`` uses w = t, whose sections are Zygmund boxes
    2s x 2t x 2st.
    """

    vertex: tuple[float, float, float]
    variant: str = "literal"

    def __post_init__(self):
        if self.variant not in ("literal", "zygmund"):
            raise ParameterError(f"unknown cone variant {self.variant!r}")
        object.__setattr__(self, "vertex", tuple(float(v) for v in self.vertex))

    def half_widths(self, s: float, t: float) -> tuple[float, float, float]:
        if not (s > 0 and t > 0):
            raise ParameterError("s and t must be positive")
        return (s, s if self.variant == "literal" else t, s * t)

    def contains(self, y, s: float, t: float) -> np.ndarray:
        d = np.abs(np.asarray(y, dtype=float) - np.array(self.vertex))
        return np.all(d < np.array(self.half_widths(s, t)), axis=-1)


def cone_section(cone: ZygmundCone, s: float, t: float) -> Box:
    """The (s, t)-slice of the cone as a plain box (check ``.zygmund`` for the flag)."""
    w = cone.half_widths(s, t)
    return Box(tuple(x - a for x, a in zip(cone.vertex, w)), tuple(2 * a for a in w))


def dyadic_exponent(x: float) -> int | None:
    """log2(x) when x is an exact power of two, else None."""
    m, e = math.frexp(x)
    return e - 1 if m == 0.5 else None
