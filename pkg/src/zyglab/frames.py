"""Littlewood-Paley frames for Zygmund dilations and the four square functions.

All frame objects are built on the Fourier side: an atom psi_{j,k} is the
band-limited periodic function whose continuous Fourier coefficients are

    psi1^(2^j xi1) * psi2^(2^k xi2, 2^{j+k} xi3)          (x1 against (x2, x3))

so convolution with an atom is an exact multiplier on the grid.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
from scipy import integrate as sp_integrate

from .errors import ConfigurationError, ParameterError, ResolutionError
from .field_core import (
    Grid3,
    ScalarField3,
    fourier_coefficients,
    from_fourier_coefficients,
)
from .kernels import KernelSpec, truncate_to_field
from .report import ExperimentReport

X1_VS_X2X3 = "x1_vs_x2x3"
X2_VS_X1X3 = "x2_vs_x1x3"


class ResolutionWarning(UserWarning):
    pass


@dataclass(frozen=True)
class BumpPair:
    """Radial Fourier profiles with annulus support 1/2 < |xi| < 2 and
    dyadic square sums equal to one.

    The cutoff is eta(r) = (1 - log2(r)^2)^smoothness on 1/2 < r < 2 and the
    profile is eta(r) / sqrt(sum_j eta(2^j r)^2).
    """

    smoothness: int = 4
    grouping: str = X1_VS_X2X3

    def __post_init__(self):
        if self.smoothness < 2:
            raise ConfigurationError("smoothness must be at least 2")
        if self.grouping not in (X1_VS_X2X3, X2_VS_X1X3):
            raise ConfigurationError(f"unknown grouping {self.grouping!r}")

    def _eta_log(self, u):
        u = np.asarray(u, dtype=float)
        return np.where(np.abs(u) < 1, np.clip(1 - u * u, 0, None) ** self.smoothness, 0.0)

    def profile(self, r):
        """psi^(r) for r = |xi| >= 0."""
        r = np.asarray(r, dtype=float)
        pos = r > 0
        u = np.where(pos, np.log2(np.where(pos, r, 1.0)), 4.0)  # 4.0: outside the support
        num = self._eta_log(u)
        # the denominator is 1-periodic in u; two shells are enough
        f = u - np.floor(u)
        den = np.sqrt(self._eta_log(f) ** 2 + self._eta_log(f - 1) ** 2)
        out = np.zeros_like(r)
        ok = num > 0
        out[ok] = num[ok] / den[ok]
        return out

    def psi1_hat(self, xi):
        return self.profile(np.abs(xi))

    def psi2_hat(self, a, b):
        return self.profile(np.hypot(a, b))

    def symbol(self, j: int, k: int, xi1, xi2, xi3):
        """Fourier transform of the atom psi_{j,k} at frequencies (xi1, xi2, xi3)."""
        if self.grouping == X1_VS_X2X3:
            return self.psi1_hat(2.0**j * xi1) * self.psi2_hat(2.0**k * xi2, 2.0 ** (j + k) * xi3)
        return self.psi1_hat(2.0**k * xi2) * self.psi2_hat(2.0**j * xi1, 2.0 ** (j + k) * xi3)

    @cached_property
    def log_normalization(self) -> float:
        """int_0^inf |psi^(u)|^2 du/u, computed by quadrature (equals log 2)."""
        val, _ = sp_integrate.quad(lambda v: float(self.profile(2.0**v)) ** 2 * math.log(2), -1, 1,
                                   epsabs=1e-14, epsrel=1e-13, limit=200)
        return val

    def phi_symbol(self, s: float, t: float, xi1, xi2, xi3):
        """Fourier transform of the continuous atom phi_{s,t}."""
        c = 1.0 / self.log_normalization
        if self.grouping == X1_VS_X2X3:
            return c * self.psi1_hat(s * xi1) * self.psi2_hat(t * xi2, s * t * xi3)
        return c * self.psi1_hat(t * xi2) * self.psi2_hat(s * xi1, s * t * xi3)

    def phi_symbol_grid(self, s: float, t: float, grid: Grid3) -> np.ndarray:
        """:meth:`phi_symbol` at the grid frequencies, built from its 1-D and 2-D factors."""
        a1, a2, a3 = (grid.frequencies(i) for i in range(3))
        c = 1.0 / self.log_normalization
        if self.grouping == X1_VS_X2X3:
            lone = self.psi1_hat(s * a1)[:, None, None]
            plane = self.psi2_hat(t * a2[:, None], s * t * a3[None, :])[None, :, :]
        else:
            lone = self.psi1_hat(t * a2)[None, :, None]
            plane = self.psi2_hat(s * a1[:, None], s * t * a3[None, :])[:, None, :]
        return c * lone * plane


def build_bump_pair(smoothness: int = 4, grouping: str = X1_VS_X2X3) -> BumpPair:
    bp = BumpPair(smoothness, grouping)
    xi = np.geomspace(1 / 8, 8, 257)
    total = sum(bp.psi1_hat(2.0**j * xi) ** 2 for j in range(-6, 7))
    if not np.allclose(total, 1.0, atol=1e-10, rtol=0):
        raise ConfigurationError("cutoff does not produce a partition of unity")
    return bp


# -- admissible scales ----------------------------------------------------------


def _atom_max_freqs(bumps: BumpPair, j: int, k: int) -> tuple[float, float, float]:
    if bumps.grouping == X1_VS_X2X3:
        return (2.0 ** (1 - j), 2.0 ** (1 - k), 2.0 ** (1 - j - k))
    return (2.0 ** (1 - j), 2.0 ** (1 - k), 2.0 ** (1 - j - k))


def atom_admissible(bumps: BumpPair, grid: Grid3, j: int, k: int) -> bool:
    """Atom frequency support below half the Nyquist frequency on every axis and
    touching at least one grid frequency."""
    mx = _atom_max_freqs(bumps, j, k)
    if any(m > grid.nyquist(i) / 2 * (1 + 1e-12) for i, m in enumerate(mx)):
        return False
    return bool(np.any(_symbol_on_grid(bumps, grid, j, k) > 0))


def admissible_pairs(bumps: BumpPair, grid: Grid3, j_lim=(-12, 12), k_lim=(-12, 12)) -> list[tuple[int, int]]:
    return [
        (j, k)
        for j in range(j_lim[0], j_lim[1] + 1)
        for k in range(k_lim[0], k_lim[1] + 1)
        if atom_admissible(bumps, grid, j, k)
    ]


def scale_box(j_range, k_range) -> list[tuple[int, int]]:
    """All (j, k) with j0 <= j <= j1 and k0 <= k <= k1."""
    return [(j, k) for j in range(j_range[0], j_range[1] + 1) for k in range(k_range[0], k_range[1] + 1)]


def normalize_range(jk_range) -> list[tuple[int, int]]:
    """Sorted list of distinct (j, k) pairs."""
    if jk_range is None:
        raise ParameterError("scale range is required")
    pairs = sorted({(int(j), int(k)) for j, k in jk_range})
    if not pairs:
        raise ParameterError("empty scale range")
    return pairs


@lru_cache(maxsize=96)
def _symbol_cached(bumps: BumpPair, grid: Grid3, j: int, k: int) -> np.ndarray:
    xi1, xi2, xi3 = grid.frequency_mesh()
    s = bumps.symbol(j, k, xi1, xi2, xi3)
    s.setflags(write=False)
    return s


def _symbol_on_grid(bumps, grid, j, k):
    return _symbol_cached(bumps, grid, int(j), int(k))


def check_range(bumps: BumpPair, grid: Grid3, pairs) -> None:
    bad = [p for p in pairs if not atom_admissible(bumps, grid, *p)]
    if bad:
        ok = admissible_pairs(bumps, grid)
        raise ResolutionError(f"scales {bad} are outside the resolved band; admissible: {ok}")


def square_sum(bumps: BumpPair, grid: Grid3, jk_range) -> np.ndarray:
    """sum over the range of |psi^_{j,k}|^2 at the grid frequencies."""
    pairs = normalize_range(jk_range)
    return sum(_symbol_on_grid(bumps, grid, j, k) ** 2 for j, k in pairs)


def band_mask(bumps: BumpPair, grid: Grid3, jk_range, tol: float = 1e-12) -> np.ndarray:
    """Grid frequencies where the truncated square sum equals one."""
    return np.abs(square_sum(bumps, grid, jk_range) - 1.0) <= tol


def default_range(bumps: BumpPair, grid: Grid3) -> list[tuple[int, int]]:
    return admissible_pairs(bumps, grid)


def band_limited_random(grid: Grid3, bumps: BumpPair, jk_range, rng: np.random.Generator) -> ScalarField3:
    """Real random field whose spectrum lies in the resolved band."""
    mask = band_mask(bumps, grid, jk_range)
    if not mask.any():
        raise ResolutionError("resolved band is empty for this range")
    F = np.fft.fftn(rng.standard_normal(grid.counts)) * mask
    return ScalarField3(grid, np.fft.ifftn(F).real)


def project_band(f: ScalarField3, bumps: BumpPair, jk_range) -> ScalarField3:
    mask = band_mask(bumps, f.grid, jk_range)
    return ScalarField3(f.grid, np.fft.ifftn(np.fft.fftn(f.values) * mask).real)


@dataclass(frozen=True, eq=False)
class FrameAtom:
    j: int
    k: int
    field: ScalarField3


def make_atom(bumps: BumpPair, j: int, k: int, grid: Grid3) -> FrameAtom:
    if not atom_admissible(bumps, grid, j, k):
        raise ResolutionError(
            f"atom ({j}, {k}) is outside the resolved band; admissible: {admissible_pairs(bumps, grid)}"
        )
    return FrameAtom(j, k, from_fourier_coefficients(grid, _symbol_on_grid(bumps, grid, j, k)))


def atom_coefficients(f: ScalarField3, bumps: BumpPair, jk_range, check: bool = True):
    """Yield ((j, k), psi_{j,k} * f) for the range; exact multipliers."""
    pairs = normalize_range(jk_range)
    if check:
        check_range(bumps, f.grid, pairs)
    F = np.fft.fftn(f.values)
    real = not f.is_complex
    for j, k in pairs:
        v = np.fft.ifftn(F * _symbol_on_grid(bumps, f.grid, j, k))
        yield (j, k), (v.real if real else v)


def reproduce(f: ScalarField3, bumps: BumpPair, jk_range) -> ScalarField3:
    """sum_{j,k} psi_{j,k} * psi_{j,k} * f."""
    m = square_sum(bumps, f.grid, jk_range)
    v = np.fft.ifftn(np.fft.fftn(f.values) * m)
    return ScalarField3(f.grid, v.real if not f.is_complex else v)


def g_zd(f: ScalarField3, bumps: BumpPair, jk_range) -> ScalarField3:
    """Discrete square function (sum_{j,k} |psi_{j,k} * f|^2)^(1/2)."""
    acc = np.zeros(f.grid.counts)
    for _, c in atom_coefficients(f, bumps, jk_range):
        acc += np.abs(c) ** 2
    return ScalarField3(f.grid, np.sqrt(acc))


def _box_filter_1d(n: int, h: float, L: float, a: float) -> np.ndarray:
    """Periodic weights counting nodes with |offset| < a; nodes exactly at
    distance a count one half, so aligned boxes have measure exactly 2a."""
    d = np.fft.fftfreq(n, 1.0 / n) * h  # signed offsets, centred
    if 2 * a >= L * (1 - 1e-12):
        return np.ones(n)
    tol = 1e-9 * h
    w = np.where(np.abs(d) < a - tol, 1.0, 0.0)
    w[np.abs(np.abs(d) - a) <= tol] = 0.5
    return w


def box_sum(values: np.ndarray, grid: Grid3, half_widths) -> np.ndarray:
    """sum over nodes y in the box |x_i - y_i| < a_i of values(y), times cell volume."""
    out = np.asarray(values, dtype=float)
    for i, a in enumerate(half_widths):
        w = _box_filter_1d(grid.counts[i], grid.spacing[i], grid.extents[i], a)
        shape = [1, 1, 1]
        shape[i] = -1
        out = np.fft.ifft(np.fft.fft(out, axis=i) * np.fft.fft(w).reshape(shape), axis=i).real
    return out * grid.cell_volume


def _atom_box(bumps: BumpPair, j: int, k: int):
    return (2.0**j, 2.0**k, 2.0 ** (j + k))


def area_from_coefficients(coeffs, grid: Grid3, bumps: BumpPair) -> np.ndarray:
    """sum_{j,k} 2^{-2(j+k)} * int_{box_{j,k}(x)} |c_{j,k}(y)|^2 dy for given squared
    coefficient arrays (mapping (j, k) -> array)."""
    acc = np.zeros(grid.counts)
    for (j, k), c2 in coeffs.items():
        acc += 2.0 ** (-2 * (j + k)) * box_sum(c2, grid, _atom_box(bumps, j, k))
    return acc


def S_zd(f: ScalarField3, bumps: BumpPair, jk_range) -> ScalarField3:
    """Discrete area function with Zygmund boxes of half-widths 2^j, 2^k, 2^{j+k}."""
    sq = {jk: np.abs(c) ** 2 for jk, c in atom_coefficients(f, bumps, jk_range)}
    return ScalarField3(f.grid, np.sqrt(area_from_coefficients(sq, f.grid, bumps)))


# -- continuous family ------------------------------------------------------------


def log_trapezoid_weights(grid_vals) -> np.ndarray:
    """Trapezoid weights for int F(s) ds/s on a log-spaced grid."""
    u = np.log(np.asarray(grid_vals, dtype=float))
    if u.size < 2 or np.any(np.diff(u) <= 0):
        raise ParameterError("quadrature grid must be increasing with at least two points")
    w = np.zeros_like(u)
    du = np.diff(u)
    w[:-1] += du / 2
    w[1:] += du / 2
    return w


def _density_warning(vals, name):
    u = np.log10(np.asarray(vals, dtype=float))
    per_decade = (u.size - 1) / max(u[-1] - u[0], 1e-300)
    if per_decade < 8 - 1e-9:
        warnings.warn(f"{name} grid has {per_decade:.1f} points per decade (< 8)", ResolutionWarning)


def default_st_grids(f_grid: Grid3, per_decade: int = 32, margin: float = 2.0):
    """Log grids wide enough to capture every grid frequency below Nyquist/2.

    Each bump spans only 0.6 decades, so 8 points per decade leaves about 1%
    quadrature error; 32 brings it near 1e-4 on the squared symbol.
    """
    lo = [2 * np.pi / L for L in f_grid.extents]
    hi = [f_grid.nyquist(i) / 2 for i in range(3)]
    s_min, s_max = 0.5 / hi[0] / margin, 2.0 / lo[0] * margin
    rho_min = min(lo[1], s_min * lo[2])
    rho_max = np.hypot(hi[1], s_max * hi[2])
    t_min, t_max = 0.5 / rho_max / margin, 2.0 / rho_min * margin

    def mk(a, b):
        n = int(np.ceil(per_decade * np.log10(b / a))) + 1
        return np.geomspace(a, b, n)

    return mk(s_min, s_max), mk(t_min, t_max)


def _continuous_coefficients(f: ScalarField3, bumps, s_grid, t_grid):
    _density_warning(s_grid, "s")
    _density_warning(t_grid, "t")
    ws, wt = log_trapezoid_weights(s_grid), log_trapezoid_weights(t_grid)
    F = np.fft.fftn(f.values)
    for s, a in zip(s_grid, ws):
        for t, b in zip(t_grid, wt):
            m = bumps.phi_symbol_grid(s, t, f.grid)
            if not np.any(m):
                continue
            c = np.fft.ifftn(F * m)
            yield s, t, a * b, (c.real if not f.is_complex else c)


def g_z_continuous(f: ScalarField3, bumps: BumpPair, s_grid, t_grid) -> ScalarField3:
    """(int int |phi_{s,t} * f|^2 ds dt/(s t))^(1/2) by log-trapezoid quadrature."""
    acc = np.zeros(f.grid.counts)
    for _, _, w, c in _continuous_coefficients(f, bumps, s_grid, t_grid):
        acc += w * np.abs(c) ** 2
    return ScalarField3(f.grid, np.sqrt(acc))


def S_z_continuous(f: ScalarField3, bumps: BumpPair, s_grid, t_grid) -> ScalarField3:
    """Cone area function: sum over (s, t) of the box integral of |phi_{s,t} * f|^2
    over |x1-y1|<s, |x2-y2|<t, |x3-y3|<st with measure ds dt/(s^3 t^3)."""
    acc = np.zeros(f.grid.counts)
    for s, t, w, c in _continuous_coefficients(f, bumps, s_grid, t_grid):
        acc += w / (s * s * t * t) * box_sum(np.abs(c) ** 2, f.grid, (s, t, s * t))
    return ScalarField3(f.grid, np.sqrt(acc))


# -- almost orthogonality ---------------------------------------------------------


def almost_orthogonality_probe(
    spec: KernelSpec,
    bumps: BumpPair,
    j_range,
    k_range,
    grid: Grid3,
    max_offset: int = 4,
    normalization: str = "envelope",
) -> ExperimentReport:
    """sup_x |psi_{j,k} * K * psi_{j',k'}| over scale pairs, regressed against the offset
    |j - j'| + |k - k'|.

    ``normalization="envelope"`` divides by 2^{-2 max(j,j') - 2 max(k,k')}, the
    size of the larger-scale atom; ``"diagonal"`` divides by the geometric mean of
    the two diagonal sups.  Pairs whose Fourier supports are disjoint give exact
    zeros; they are reported but left out of the log-linear fit.
    """
    if normalization not in ("envelope", "diagonal"):
        raise ParameterError(f"unknown normalization {normalization!r}")
    K = fourier_coefficients(truncate_to_field(spec, grid))
    pairs = [(j, k) for j in range(j_range[0], j_range[1] + 1) for k in range(k_range[0], k_range[1] + 1)]
    check_range(bumps, grid, pairs)
    sym = {p: _symbol_on_grid(bumps, grid, *p) for p in pairs}
    cache: dict = {}

    def sup(p, q):
        key = (p, q) if p <= q else (q, p)
        if key not in cache:
            prod = sym[p] * sym[q]
            if not np.any(prod):
                cache[key] = 0.0
            else:
                cache[key] = from_fourier_coefficients(grid, prod * K, real=False).max_abs()
        return cache[key]

    def ref(p, q):
        if normalization == "envelope":
            return 2.0 ** (-2 * max(p[0], q[0]) - 2 * max(p[1], q[1]))
        return math.sqrt(sup(p, p) * sup(q, q))

    rows = []
    by_offset: dict[int, float] = {}
    for p in pairs:
        for q in pairs:
            d = abs(p[0] - q[0]) + abs(p[1] - q[1])
            if d > max_offset:
                continue
            r = ref(p, q)
            val = sup(p, q) / r if r > 0 else 0.0
            rows.append((*p, *q, d, sup(p, q), val))
            by_offset[d] = max(by_offset.get(d, 0.0), val)

    d_all = np.array(sorted(by_offset))
    v_all = np.array([by_offset[v] for v in d_all])
    top = v_all[0] if v_all[0] > 0 else 1.0
    nz = v_all > 0
    d, y = d_all[nz], np.log2(v_all[nz] / top)
    rep = ExperimentReport("almost_orthogonality", meta={
        "kernel": spec.family, "grid": grid.counts, "extents": grid.extents, "eps": spec.eps,
        "j_range": list(j_range), "k_range": list(k_range), "normalization": normalization,
    })
    if d.size >= 2:
        slope, intercept = np.polyfit(d, y, 1)
        resid = y - (slope * d + intercept)
        r2 = 1 - resid.var() / y.var() if y.var() > 0 else 1.0
    else:
        slope, intercept, r2 = float("-inf"), 0.0, 1.0
        rep.warnings.append("fewer than two offsets with nonzero sups; decay is exact")
    rep.metrics.update(slope=float(slope), intercept=float(intercept), r2=float(r2),
                       sup_by_offset={int(k): float(v) for k, v in by_offset.items()},
                       zero_offsets=[int(x) for x in d_all[~nz]], fit_points=int(d.size))
    rep.add_curve("sup_table", ["j", "k", "j2", "k2", "offset", "sup", "normalized"], rows)
    rep.add_curve("decay", ["offset", "log2_normalized_sup"], list(zip(d, y)))
    return rep
