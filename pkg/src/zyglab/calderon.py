"""Discrete Calderon split Id = E + R over dyadic Zygmund lattices.

For a scale pair (j, k) and refinement N the lattice cells have sides
l = (2^{j-N}, 2^{k-N}, 2^{j+k-2N}) and corners at integer multiples of l.
Writing g = psi_{j,k} * f, the essential part is

    E f = sum_{j,k} psi_{j,k} * (P g),    P g = sum_R g(x_R) 1_R,

with x_R the sample point of the cell.  Everything is computed exactly on
the torus from continuous Fourier coefficients: for a sample point at a
fixed offset delta inside every cell,

    (P g)^(xi) = chi_0^(xi) / |R| * sum_{eta = xi mod 2pi/l} g^(eta) exp(i eta delta),

where chi_0^ is the transform of the cell [0, l).  The aliasing sum folds grid
frequencies modulo the number of cells per axis.  Cells may be smaller than
the grid spacing; the formula stays exact because g is band-limited.
Per-cell random sample points are handled by direct trigonometric evaluation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import GeometryError, ParameterError, PreconditionError
from .field_core import Grid3, ScalarField3, fourier_coefficients, from_fourier_coefficients
from .frames import BumpPair, _symbol_on_grid, band_mask, check_range, normalize_range
from .report import ExperimentReport

POLICIES = ("lower_left", "center", "random_fixed")
MAX_RANDOM_CELLS = 1 << 13


@dataclass(frozen=True)
class CalderonConfig:
    grid: Grid3
    bumps: BumpPair
    jk_range: tuple
    N: int
    sample_policy: str = "lower_left"
    seed: int = 0

    def __post_init__(self):
        if self.sample_policy not in POLICIES:
            raise ParameterError(f"unknown sample policy {self.sample_policy!r}")
        if self.N < 0:
            raise ParameterError("N must be nonnegative")
        pairs = tuple(normalize_range(self.jk_range))
        object.__setattr__(self, "jk_range", pairs)
        check_range(self.bumps, self.grid, pairs)
        for j, k in pairs:
            cell_counts(self.grid, j, k, self.N)

    def with_N(self, N: int) -> "CalderonConfig":
        return CalderonConfig(self.grid, self.bumps, self.jk_range, N, self.sample_policy, self.seed)

    def with_policy(self, policy: str) -> "CalderonConfig":
        return CalderonConfig(self.grid, self.bumps, self.jk_range, self.N, policy, self.seed)


def cell_sides(j: int, k: int, N: int) -> tuple[float, float, float]:
    return (2.0 ** (j - N), 2.0 ** (k - N), 2.0 ** (j + k - 2 * N))


def cell_counts(grid: Grid3, j: int, k: int, N: int) -> tuple[int, int, int]:
    out = []
    for i, (L, l) in enumerate(zip(grid.extents, cell_sides(j, k, N))):
        r = L / l
        q = round(r)
        if q < 1 or abs(r - q) > 1e-9 * r:
            raise GeometryError(f"axis {i + 1}: cell side {l} for (j,k,N)=({j},{k},{N}) does not divide {L}")
        out.append(int(q))
    return tuple(out)


def _cell_transform(grid: Grid3, sides) -> np.ndarray:
    """chi_0^(xi) / |R| on grid frequencies: the cell-average transform."""
    out = np.ones(grid.counts, dtype=complex)
    for i, l in enumerate(sides):
        xi = grid.frequencies(i)
        with np.errstate(invalid="ignore", divide="ignore"):
            v = np.where(xi == 0, 1.0, (1 - np.exp(-1j * xi * l)) / (1j * xi * l))
        shape = [1, 1, 1]
        shape[i] = -1
        out = out * v.reshape(shape)
    return out


def _fold(c: np.ndarray, counts) -> np.ndarray:
    """Sum coefficients over frequency classes modulo the cell counts (FFT order)."""
    out = c
    for i, nc in enumerate(counts):
        n = out.shape[i]
        if nc >= n:
            continue
        moved = np.moveaxis(out, i, 0)
        summed = moved.reshape(n // nc, nc, *moved.shape[1:]).sum(axis=0)
        tiled = np.concatenate([summed] * (n // nc), axis=0)
        out = np.moveaxis(tiled, 0, i)
    return out


def _phase(grid: Grid3, delta, sign: int) -> np.ndarray:
    out = np.ones(grid.counts, dtype=complex)
    for i, d in enumerate(delta):
        shape = [1, 1, 1]
        shape[i] = -1
        out = out * np.exp(sign * 1j * grid.frequencies(i) * d).reshape(shape)
    return out


class _Sampler:
    """P and its adjoint for one scale pair, acting on continuous coefficients."""

    def __init__(self, cfg: CalderonConfig, j: int, k: int):
        g = cfg.grid
        self.grid = g
        self.sides = cell_sides(j, k, cfg.N)
        self.counts = cell_counts(g, j, k, cfg.N)
        self.avg = _cell_transform(g, self.sides)
        self.policy = cfg.sample_policy
        self.support = _symbol_on_grid(cfg.bumps, g, j, k) != 0
        if self.policy == "random_fixed":
            self._init_random(cfg, j, k)
        else:
            delta = (0.0, 0.0, 0.0) if self.policy == "lower_left" else tuple(l / 2 for l in self.sides)
            self.fwd_phase = _phase(g, delta, +1)
            self.adj_phase = _phase(g, delta, -1)

    def _init_random(self, cfg, j, k):
        n_cells = math.prod(self.counts)
        if n_cells > MAX_RANDOM_CELLS:
            raise ParameterError(f"random sample points need <= {MAX_RANDOM_CELLS} cells, got {n_cells}")
        rng = np.random.default_rng([cfg.seed, j + 1000, k + 1000, cfg.N])
        q = np.indices(self.counts).reshape(3, -1).T
        corners = q * np.array(self.sides)
        self.points = corners + rng.uniform(0, 1, corners.shape) * np.array(self.sides)
        self.corners = corners
        g = self.grid
        xi = np.stack([m[self.support] for m in g.frequency_mesh()], axis=1)
        self.xi = xi
        # A[R, eta] = exp(i eta x_R) / V : evaluation of the trigonometric polynomial
        self.A = np.exp(1j * self.points @ xi.T) / g.volume
        # B[xi, R] = exp(-i xi a_R) * chi_0^(xi)
        self.B = np.exp(-1j * xi @ corners.T) * (self.avg[self.support] * math.prod(self.sides))[:, None]

    def apply(self, c: np.ndarray) -> np.ndarray:
        if self.policy == "random_fixed":
            out = np.zeros(self.grid.counts, dtype=complex)
            out[self.support] = self.B @ (self.A @ c[self.support])
            return out
        return self.avg * _fold(c * self.fwd_phase, self.counts)

    def adjoint(self, d: np.ndarray) -> np.ndarray:
        if self.policy == "random_fixed":
            out = np.zeros(self.grid.counts, dtype=complex)
            # adjoint w.r.t. <c, d> = sum conj(c) d / V on both sides
            out[self.support] = self.A.conj().T @ (self.B.conj().T @ d[self.support])
            return out
        return self.adj_phase * _fold(np.conj(self.avg) * d, self.counts)


class CalderonOperators:
    """E, R and their adjoints on continuous Fourier coefficients."""

    def __init__(self, cfg: CalderonConfig):
        self.cfg = cfg
        self.symbols = {jk: _symbol_on_grid(cfg.bumps, cfg.grid, *jk) for jk in cfg.jk_range}
        self.samplers = {jk: _Sampler(cfg, *jk) for jk in cfg.jk_range}
        self.mask = band_mask(cfg.bumps, cfg.grid, cfg.jk_range)

    def essential(self, c):
        out = np.zeros_like(c, dtype=complex)
        for jk, s in self.symbols.items():
            out += s * self.samplers[jk].apply(s * c)
        return out

    def remainder(self, c):
        out = np.zeros_like(c, dtype=complex)
        for jk, s in self.symbols.items():
            g = s * c
            out += s * (g - self.samplers[jk].apply(g))
        return out

    def remainder_adjoint(self, d):
        out = np.zeros_like(d, dtype=complex)
        for jk, s in self.symbols.items():
            h = s * d
            out += s * (h - self.samplers[jk].adjoint(h))
        return out

    # band-restricted versions
    def R_band(self, c):
        return self.mask * self.remainder(self.mask * c)

    def R_band_adjoint(self, d):
        return self.mask * self.remainder_adjoint(self.mask * d)

    def E_band(self, c):
        return self.mask * self.essential(self.mask * c)


def _ops(cfg: CalderonConfig, f: ScalarField3 | None = None) -> CalderonOperators:
    if f is not None and f.grid != cfg.grid:
        raise ParameterError("field and configuration use different grids")
    return CalderonOperators(cfg)


def essential_part(f: ScalarField3, cfg: CalderonConfig) -> ScalarField3:
    ops = _ops(cfg, f)
    c = ops.essential(fourier_coefficients(f))
    return from_fourier_coefficients(cfg.grid, c, real=not f.is_complex)


def remainder_apply(f: ScalarField3, cfg: CalderonConfig) -> ScalarField3:
    """R f = sum psi * (g - P g), evaluated from the cell-difference form."""
    ops = _ops(cfg, f)
    c = ops.remainder(fourier_coefficients(f))
    return from_fourier_coefficients(cfg.grid, c, real=not f.is_complex)


def _cnorm(c, V):
    return math.sqrt(float(np.sum(np.abs(c) ** 2)) / V)


@dataclass
class RemainderNorm:
    dominant: float
    lower_bound: float
    converged: bool
    iterations: int
    history: list = field(default_factory=list)

    @property
    def value(self) -> float:
        return max(self.dominant, self.lower_bound)


def remainder_norm(cfg: CalderonConfig, probes: int = 8, max_iter: int = 200, tol: float = 1e-6) -> RemainderNorm:
    """Estimate ||R|| on the band by power iteration on R*R plus random probes."""
    if probes < 8:
        raise ParameterError("need at least 8 probes")
    ops = CalderonOperators(cfg)
    V = cfg.grid.volume
    rng = np.random.default_rng(cfg.seed)

    def rand():
        c = fourier_coefficients(ScalarField3(cfg.grid, rng.standard_normal(cfg.grid.counts))) * ops.mask
        return c / _cnorm(c, V)

    lower = 0.0
    for _ in range(probes):
        c = rand()
        lower = max(lower, _cnorm(ops.R_band(c), V))
    v = rand()
    est, prev, converged, it = 0.0, None, False, 0
    hist = []
    for it in range(1, max_iter + 1):
        w = ops.R_band(v)
        est = _cnorm(w, V)
        hist.append(est)
        u = ops.R_band_adjoint(w)
        nu = _cnorm(u, V)
        if nu == 0:
            converged = True
            break
        v = u / nu
        if prev is not None and abs(est - prev) <= tol * max(est, 1e-300):
            converged = True
            break
        prev = est
    return RemainderNorm(float(est), float(max(lower, est)), converged, it, hist)


def find_N0(cfg: CalderonConfig, N_max: int = 8, probes: int = 8) -> tuple[int | None, dict[int, float]]:
    """Smallest N with estimated ||R|| < 1, plus the norms seen on the way."""
    norms = {}
    for N in range(0, N_max + 1):
        try:
            c = cfg.with_N(N)
        except GeometryError:
            continue
        norms[N] = remainder_norm(c, probes).value
        if norms[N] < 1:
            return N, norms
    return None, norms


def reproduce(
    f: ScalarField3, cfg: CalderonConfig, neumann_terms: int = 20, norm: float | None = None
) -> ExperimentReport:
    """Reconstruct f as sum_{n <= terms} R^n (E f) on the band and track the residual."""
    ops = _ops(cfg, f)
    V = cfg.grid.volume
    if norm is None:
        norm = remainder_norm(cfg).value
    if not norm < 1:
        raise PreconditionError(f"remainder norm {norm:.3f} is not below 1; refine N")
    c = ops.mask * fourier_coefficients(f)
    fn = _cnorm(c, V)
    rep = ExperimentReport("reproduce", meta={"N": cfg.N, "policy": cfg.sample_policy,
                                              "grid": cfg.grid.counts, "extents": cfg.grid.extents})
    rep.metrics["remainder_norm"] = norm
    if fn == 0:
        rep.metrics["residuals"] = [0.0] * (neumann_terms + 1)
        rep.metrics["residual"] = 0.0
        return rep
    term = ops.E_band(c)
    acc = term.copy()
    res = [_cnorm(c - acc, V) / fn]
    for _ in range(neumann_terms):
        term = ops.R_band(term)
        acc = acc + term
        res.append(_cnorm(c - acc, V) / fn)
    r = np.array(res)
    ok = r[r > 1e-13]
    ratios = ok[1:] / ok[:-1] if ok.size > 1 else np.array([])
    rep.metrics.update(residual=float(r[-1]), residuals=r.tolist(),
                       mean_ratio=float(np.exp(np.mean(np.log(ratios)))) if ratios.size else 0.0)
    rep.add_curve("residual", ["terms", "relative_residual"], list(enumerate(res)))
    return rep
