"""Zygmund maximal function, A_p characteristics, bmo norms, medians and
John-Nirenberg style tail measurements over finite rectangle families.

Measure is node count times cell volume.  A lattice family is stored as
groups: each group is a tiling of the box by congruent cells of ``m`` nodes
per axis, shifted by a node offset.  Node ``x`` owns the cell
``[x - h/2, x + h/2)``, so a cell of ``m`` nodes is a box of side ``m h``.
Cell statistics of a group come from one reshape of the value array.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator

import numpy as np

from .errors import GeometryError, InsufficientDataError, ParameterError, WeightError
from .field_core import Grid3, ScalarField3
from .geometry import ZygmundRectangle, is_zygmund
from .report import ExperimentReport

MAX_MEMBERS = 10**6
UNIFORMITY_C = 16

DESCRIPTORS = ("dyadic_lattice", "translated_dyadic", "explicit_list")


@dataclass(frozen=True)
class CellGroup:
    """Cells of ``size`` nodes per axis starting at node ``offset``, not wrapping."""

    size: tuple[int, int, int]
    offset: tuple[int, int, int]

    def cells_per_axis(self, grid: Grid3) -> tuple[int, int, int]:
        return tuple((n - o) // m for n, m, o in zip(grid.counts, self.size, self.offset))

    def count(self, grid: Grid3) -> int:
        return math.prod(self.cells_per_axis(grid))

    def view(self, values: np.ndarray, grid: Grid3) -> np.ndarray:
        """Array of shape (c1, m1, c2, m2, c3, m3) of the covered nodes."""
        c = self.cells_per_axis(grid)
        sl = tuple(slice(o, o + ci * m) for o, ci, m in zip(self.offset, c, self.size))
        return values[sl].reshape(c[0], self.size[0], c[1], self.size[1], c[2], self.size[2])

    def means(self, values: np.ndarray, grid: Grid3) -> np.ndarray:
        return self.view(values, grid).mean(axis=(1, 3, 5))

    def expand(self, cell_values: np.ndarray, grid: Grid3, fill=np.nan) -> np.ndarray:
        """Broadcast per-cell values back to the nodes; uncovered nodes get ``fill``."""
        out = np.full(grid.counts, fill, dtype=np.result_type(cell_values, float))
        c = self.cells_per_axis(grid)
        sl = tuple(slice(o, o + ci * m) for o, ci, m in zip(self.offset, c, self.size))
        block = np.broadcast_to(
            cell_values[:, None, :, None, :, None],
            (c[0], self.size[0], c[1], self.size[1], c[2], self.size[2]),
        )
        out[sl] = block.reshape(tuple(ci * m for ci, m in zip(c, self.size)))
        return out

    def rectangle(self, grid: Grid3, index) -> ZygmundRectangle:
        h = grid.spacing
        corner = tuple(
            grid.origin[i] + (self.offset[i] + index[i] * self.size[i]) * h[i] - h[i] / 2 for i in range(3)
        )
        return ZygmundRectangle(corner, tuple(self.size[i] * h[i] for i in range(3)))


@dataclass(frozen=True, eq=False)
class RectangleFamily:
    """A finite family of Zygmund rectangles on a grid.

    Lattice descriptors keep ``groups``; ``rectangles`` is materialized on demand.
    """

    grid: Grid3
    descriptor: str
    groups: tuple[CellGroup, ...] = ()
    explicit: tuple[ZygmundRectangle, ...] = ()

    def __post_init__(self):
        if self.descriptor not in DESCRIPTORS:
            raise ParameterError(f"unknown family descriptor {self.descriptor!r}")
        h = self.grid.spacing
        for g in self.groups:
            if not is_zygmund([m * hi for m, hi in zip(g.size, h)]):
                raise GeometryError(f"cell size {g.size} is not a Zygmund box on this grid")
        for R in self.explicit:
            if not isinstance(R, ZygmundRectangle):
                raise GeometryError("explicit members must be ZygmundRectangle instances")
        if len(self) == 0:
            raise ParameterError("rectangle family is empty")

    def __len__(self) -> int:
        return sum(g.count(self.grid) for g in self.groups) + len(self.explicit)

    def __iter__(self) -> Iterator[ZygmundRectangle]:
        for g in self.groups:
            for idx in np.ndindex(*g.cells_per_axis(self.grid)):
                yield g.rectangle(self.grid, idx)
        yield from self.explicit

    @cached_property
    def rectangles(self) -> list[ZygmundRectangle]:
        return list(self)


def _zygmund_sizes(grid: Grid3) -> list[tuple[int, int, int]]:
    """Power-of-two node counts per axis whose physical box is Zygmund."""
    h = grid.spacing
    out = []
    for e1 in range(int(math.log2(grid.counts[0])) + 1):
        for e2 in range(int(math.log2(grid.counts[1])) + 1):
            m3 = (2**e1 * h[0]) * (2**e2 * h[1]) / h[2]
            q = round(m3)
            if q < 1 or abs(m3 - q) > 1e-9 * m3 or q & (q - 1) or q > grid.counts[2]:
                continue
            out.append((2**e1, 2**e2, q))
    return out


def dyadic_family(grid: Grid3, translated: bool = True, min_nodes: int = 1, cap: int = MAX_MEMBERS) -> RectangleFamily:
    """Dyadic Zygmund cells (and half-step translates) of at least ``min_nodes`` nodes.

    When the family would exceed ``cap`` members the smallest cells are dropped.
    """
    sizes = [s for s in _zygmund_sizes(grid) if math.prod(s) >= min_nodes]
    if not sizes:
        raise ParameterError(
            f"no dyadic Zygmund cells fit grid spacing {grid.spacing}; use power-of-two spacings"
        )
    groups = []
    for s in sorted(sizes, key=math.prod, reverse=True):
        shifts = [(0, m // 2) if (translated and m >= 2) else (0,) for m in s]
        for off in np.ndindex(*(len(x) for x in shifts)):
            groups.append(CellGroup(s, tuple(shifts[i][off[i]] for i in range(3))))
    kept, total = [], 0
    for g in groups:
        c = g.count(grid)
        if c == 0:
            continue
        if total + c > cap:
            break
        kept.append(g)
        total += c
    return RectangleFamily(grid, "translated_dyadic" if translated else "dyadic_lattice", tuple(kept))


def explicit_family(grid: Grid3, rectangles) -> RectangleFamily:
    return RectangleFamily(grid, "explicit_list", (), tuple(rectangles))


def default_family(grid: Grid3) -> RectangleFamily:
    return dyadic_family(grid, translated=True)


def _check_family(f: ScalarField3, family: RectangleFamily) -> None:
    if f.grid != family.grid:
        raise ParameterError("field and family live on different grids")


def _explicit_nodes(grid: Grid3, R: ZygmundRectangle) -> np.ndarray:
    m = R.mask(grid)
    if not m.any():
        raise GeometryError(f"rectangle {R} contains no grid node")
    return m


def _family_means(family: RectangleFamily, arrays):
    """Yield (locator, [means...]) per group / explicit rectangle."""
    g = family.grid
    for grp in family.groups:
        yield grp, [grp.means(a, g) for a in arrays]
    for R in family.explicit:
        m = _explicit_nodes(g, R)
        yield R, [np.array(a[m].mean()) for a in arrays]


def _locate(family, loc, flat_index, shape) -> ZygmundRectangle:
    if isinstance(loc, CellGroup):
        return loc.rectangle(family.grid, np.unravel_index(flat_index, shape))
    return loc


def _argmax_over(family, stat_fn, arrays):
    best, best_R = -np.inf, None
    for loc, means in _family_means(family, arrays):
        v = np.atleast_1d(stat_fn(*means))
        i = int(np.argmax(v))
        if v.flat[i] > best:
            best = float(v.flat[i])
            best_R = _locate(family, loc, i, v.shape)
    return best, best_R


def maximal_zygmund(f: ScalarField3, family: RectangleFamily) -> ScalarField3:
    """sup over members containing x of the mean of |f|; |f(x)| where no member covers x."""
    _check_family(f, family)
    if f.is_complex:
        raise ParameterError("maximal function expects a real field")
    a = np.abs(f.values)
    out = np.full(a.shape, -np.inf)
    g = family.grid
    for grp in family.groups:
        out = np.fmax(out, grp.expand(grp.means(a, g), g, fill=-np.inf))
    for R in family.explicit:
        m = _explicit_nodes(g, R)
        out[m] = np.maximum(out[m], a[m].mean())
    out = np.where(np.isfinite(out), out, a)
    return ScalarField3(g, out)


@dataclass(frozen=True)
class ApChar:
    p: float
    value: float
    argmax_rectangle: ZygmundRectangle


def _check_weight(w: ScalarField3) -> np.ndarray:
    if w.is_complex or not np.all(w.values > 0):
        raise WeightError("weights must be real and strictly positive")
    return w.values


def ap_z_characteristic(w: ScalarField3, p: float, family: RectangleFamily) -> ApChar:
    """sup_R (mean_R w)(mean_R w^{-1/(p-1)})^{p-1} with the maximizing member."""
    _check_family(w, family)
    if not p > 1:
        raise ParameterError("p must exceed 1")
    v = _check_weight(w)
    dual = v ** (-1.0 / (p - 1))
    value, R = _argmax_over(family, lambda a, b: a * b ** (p - 1), [v, dual])
    # Jensen gives value >= 1; single-node cells may land 1 ulp below it
    return ApChar(float(p), max(value, 1.0), R)


def _oscillation_stat(b: np.ndarray, family: RectangleFamily):
    g = family.grid
    for grp in family.groups:
        mean = grp.means(b, g)
        dev = np.abs(b - grp.expand(mean, g, fill=0.0))
        yield grp, grp.means(dev, g), mean
    for R in family.explicit:
        m = _explicit_nodes(g, R)
        bm = b[m].mean()
        yield R, np.array(np.abs(b[m] - bm).mean()), np.array(bm)


def bmo_z_norm(b: ScalarField3, family: RectangleFamily) -> tuple[float, ZygmundRectangle]:
    """sup over the family of (1/|R|) int_R |b - b_R|."""
    _check_family(b, family)
    if b.is_complex:
        raise ParameterError("bmo norm expects a real field")
    best, best_R = -np.inf, None
    for loc, osc, _ in _oscillation_stat(b.values, family):
        o = np.atleast_1d(osc)
        i = int(np.argmax(o))
        if o.flat[i] > best:
            best, best_R = float(o.flat[i]), _locate(family, loc, i, osc.shape)
    return best, best_R


def rectangle_mean(b: ScalarField3, R: ZygmundRectangle) -> float:
    return float(b.values[_explicit_nodes(b.grid, R)].mean())


def mean_oscillation(b: ScalarField3, R: ZygmundRectangle) -> float:
    v = b.values[_explicit_nodes(b.grid, R)]
    return float(np.abs(v - v.mean()).mean())


def median(b: ScalarField3, R) -> float:
    """A median of b over the nodes of R; for even counts the midpoint of the
    admissible interval [v_(n/2), v_(n/2+1)]."""
    v = np.sort(b.values[_explicit_nodes(b.grid, R)].ravel())
    n = v.size
    if n % 2:
        return float(v[n // 2])
    return float(0.5 * (v[n // 2 - 1] + v[n // 2]))


def median_interval(b: ScalarField3, R) -> tuple[float, float]:
    v = np.sort(b.values[_explicit_nodes(b.grid, R)].ravel())
    n = v.size
    return (float(v[n // 2]), float(v[n // 2])) if n % 2 else (float(v[n // 2 - 1]), float(v[n // 2]))


# -- John-Nirenberg tails ----------------------------------------------------------


def tail_sup(b: ScalarField3, family: RectangleFamily, t_grid) -> np.ndarray:
    """sup_B |{x in B: |b - b_B| > t}| / |B| for every t."""
    _check_family(b, family)
    t = np.asarray(t_grid, dtype=float)
    out = np.zeros(t.size)
    g = family.grid
    for grp in family.groups:
        mean = grp.means(b.values, g)
        dev = grp.view(np.abs(b.values - grp.expand(mean, g, fill=0.0)), g)
        dev = np.moveaxis(dev, (1, 3, 5), (3, 4, 5)).reshape(mean.size, -1)
        dev.sort(axis=1)
        m = dev.shape[1]
        # count of entries > t per cell = m - searchsorted(right)
        above = np.array([m - np.searchsorted(row, t, side="right") for row in dev])
        out = np.maximum(out, above.max(axis=0) / m)
    for R in family.explicit:
        msk = _explicit_nodes(g, R)
        d = np.abs(b.values[msk] - b.values[msk].mean())
        out = np.maximum(out, (d[:, None] > t[None, :]).mean(axis=0))
    return out


def _linear_fit(x, y):
    A = np.vstack([x, np.ones_like(x)]).T
    (slope, icpt), *_ = np.linalg.lstsq(A, y, rcond=None)
    pred = slope * x + icpt
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(icpt), r2


def jn_tail(b: ScalarField3, family: RectangleFamily, t_grid=None, n_t: int = 40,
            trim: float = 0.1) -> ExperimentReport:
    """Measure the sup-over-B distribution tail and fit log(tail) = log C0 - c t / ||b||.

    ``t_grid`` defaults to ``n_t`` thresholds spanning (0, max deviation).  The
    top and bottom ``trim`` fractions of thresholds are excluded from the fit.
    """
    norm, R = bmo_z_norm(b, family)
    rep = ExperimentReport("jn-tail", meta={"family": family.descriptor, "members": len(family)})
    rep.metrics["bmo_norm"] = norm
    if t_grid is None:
        t_grid = np.linspace(0, _max_deviation(b, family), n_t + 1)[1:]
    t = np.asarray(t_grid, dtype=float)
    tail = tail_sup(b, family, t)
    rep.add_curve("tail", ["t", "sup_fraction"], zip(t, tail))
    lo, hi = int(math.floor(trim * t.size)), int(math.ceil((1 - trim) * t.size))
    sel = np.arange(t.size)[lo:hi]
    sel = sel[tail[sel] > 0]
    if sel.size < 4:
        raise InsufficientDataError(f"only {sel.size} usable thresholds in the fit window")
    slope, icpt, r2 = _linear_fit(t[sel], np.log(tail[sel]))
    rep.metrics.update(
        slope=slope,
        intercept=icpt,
        C0=math.exp(icpt),
        c0=-slope * norm,
        decay_scale=(-1.0 / slope) if slope < 0 else math.inf,
        r_squared=r2,
        fit_points=int(sel.size),
    )
    return rep


def _max_deviation(b: ScalarField3, family: RectangleFamily) -> float:
    g = family.grid
    out = 0.0
    for grp in family.groups:
        mean = grp.means(b.values, g)
        d = np.abs(b.values - grp.expand(mean, g, fill=np.nan))
        out = max(out, float(np.nanmax(d)))
    for R in family.explicit:
        msk = _explicit_nodes(g, R)
        out = max(out, float(np.abs(b.values[msk] - b.values[msk].mean()).max()))
    return out


# -- exp / log link ----------------------------------------------------------------


def exp_log_majorant(char: float, p: float) -> float:
    return char * max(char, (p - 1) * char ** (1.0 / (p - 1)))


def exp_log_check(
    family: RectangleFamily,
    weight: ScalarField3 | None = None,
    symbol: ScalarField3 | None = None,
    p: float = 2.0,
    gamma: float = 1.0,
    target: float = 4.0,
    max_halvings: int = 30,
) -> ExperimentReport:
    """Direction (i) for a weight: bmo(log w) against [w]_p max{[w]_p, (p-1)[w]_p^{1/(p-1)}}.
    Direction (ii) for a symbol: halve delta from gamma/||b|| until [e^{delta b}]_2 <= target."""
    if (weight is None) == (symbol is None):
        raise ParameterError("give exactly one of weight or symbol")
    rep = ExperimentReport("exp-log", meta={"family": family.descriptor, "members": len(family)})
    if weight is not None:
        ch = ap_z_characteristic(weight, p, family)
        lw = ScalarField3(weight.grid, np.log(_check_weight(weight)))
        norm, _ = bmo_z_norm(lw, family)
        bound = exp_log_majorant(ch.value, p)
        rep.metrics.update(direction="i", p=p, characteristic=ch.value, bmo_log_w=norm,
                           majorant=bound, margin=bound - norm)
        rep.check("bmo(log w) <= majorant", norm <= bound)
        return rep
    norm, _ = bmo_z_norm(symbol, family)
    rep.metrics.update(direction="ii", bmo_norm=norm, target=target)
    if norm == 0:
        rep.metrics.update(delta=gamma, characteristic=1.0, halvings=0)
        rep.check("delta found", True)
        return rep
    delta = gamma / norm
    ch = None
    for k in range(max_halvings + 1):
        w = ScalarField3(symbol.grid, np.exp(delta * (symbol.values - symbol.values.mean())))
        ch = ap_z_characteristic(w, 2.0, family).value
        if ch <= target:
            rep.metrics.update(delta=delta, characteristic=ch, halvings=k)
            rep.check("delta found", True)
            return rep
        delta /= 2
    rep.metrics.update(delta=None, characteristic=ch, halvings=max_halvings)
    rep.check("delta found", False)
    return rep
