"""Singular integrals, commutators, weighted operator-norm estimates and the
counterexample / lower-bound experiments."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DimensionError, GeometryError, ParameterError, WeightError
from .field_core import Grid3, ScalarField3, fft_convolve
from .geometry import ZygmundRectangle, smallest_zygmund_cover
from .kernels import KernelSpec, nw_eval, truncate_to_field
from .report import ExperimentReport
from .weights import (
    ap_z_characteristic,
    bmo_z_norm,
    explicit_family,
    mean_oscillation,
    median,
    rectangle_mean,
)

LOWER_BOUND_CONST = 1.0 / (4 * 49**2)
KERNEL_FLOOR_CONST = 1.0 / (2 * 49**2)


class ConvolutionOperator:
    """f -> K_trunc * f on a fixed grid, with the kernel transform precomputed."""

    def __init__(self, kernel: KernelSpec, grid: Grid3):
        self.kernel = kernel
        self.grid = grid
        self.field = truncate_to_field(kernel, grid)
        self._hat = np.fft.fftn(self.field.values)
        self._shift = tuple(int(round(o / h)) for o, h in zip(grid.origin, grid.spacing))
        # probe fft_convolve once so the origin requirement errors early
        fft_convolve(self.field, ScalarField3.constant(grid, 0.0))

    def apply_values(self, v: np.ndarray) -> np.ndarray:
        out = np.fft.ifftn(self._hat * np.fft.fftn(v)) * self.grid.cell_volume
        out = np.roll(out, self._shift, axis=(0, 1, 2))
        return out.real if np.isrealobj(v) else out

    def adjoint_values(self, v: np.ndarray) -> np.ndarray:
        # transpose of roll o circulant: un-roll, then multiply by the conjugate symbol
        v0 = np.roll(v, tuple(-s for s in self._shift), axis=(0, 1, 2))
        out = np.fft.ifftn(np.conj(self._hat) * np.fft.fftn(v0)) * self.grid.cell_volume
        return out.real if np.isrealobj(v) else out

    def __call__(self, f: ScalarField3) -> ScalarField3:
        if f.grid != self.grid:
            raise DimensionError("field and operator use different grids")
        return ScalarField3(self.grid, self.apply_values(f.values))


def apply_T(kernel: KernelSpec, f: ScalarField3) -> ScalarField3:
    """T f = K_trunc * f on the torus."""
    return fft_convolve(truncate_to_field(kernel, f.grid), f)


@dataclass(frozen=True, eq=False)
class CommutatorSpec:
    """Iterated commutator [b_k, ... [b_2, [b_1, T]] ...]."""

    b: ScalarField3
    kernel: KernelSpec
    order: int = 1
    symbols: tuple[ScalarField3, ...] | None = None

    def __post_init__(self):
        if self.order < 1:
            raise ParameterError("commutator order must be positive")
        syms = tuple(self.symbols) if self.symbols is not None else (self.b,) * self.order
        if len(syms) != self.order:
            raise ParameterError(f"order {self.order} needs {self.order} symbols, got {len(syms)}")
        for s in syms:
            if s.grid != self.b.grid:
                raise DimensionError("all symbols must share one grid")
        object.__setattr__(self, "symbols", syms)

    @property
    def grid(self) -> Grid3:
        return self.b.grid


def _commutator_values(T: ConvolutionOperator, symbols, v: np.ndarray, adjoint: bool = False) -> np.ndarray:
    # C_0 = T; C_m v = b_m C_{m-1} v - C_{m-1}(b_m v).  The adjoint of C_m is
    # C_{m-1}^*(b_m v) - b_m C_{m-1}^* v, so it carries a sign (-1)^m.
    base = T.adjoint_values if adjoint else T.apply_values

    def rec(m, x):
        if m == 0:
            return base(x)
        b = symbols[m - 1].values
        return b * rec(m - 1, x) - rec(m - 1, b * x)

    out = rec(len(symbols), v)
    return (-1) ** len(symbols) * out if adjoint else out


def commutator_apply(spec: CommutatorSpec, f: ScalarField3, T: ConvolutionOperator | None = None) -> ScalarField3:
    if f.grid != spec.grid:
        raise DimensionError("field and commutator symbols use different grids")
    T = T or ConvolutionOperator(spec.kernel, spec.grid)
    return ScalarField3(spec.grid, _commutator_values(T, spec.symbols, f.values))


@dataclass
class FieldOperator:
    """A linear map on fields over ``grid``; ``adjoint`` enables power iteration."""

    grid: Grid3
    apply: Callable[[np.ndarray], np.ndarray]
    adjoint: Callable[[np.ndarray], np.ndarray] | None = None
    name: str = "op"

    @classmethod
    def commutator(cls, spec: CommutatorSpec) -> "FieldOperator":
        T = ConvolutionOperator(spec.kernel, spec.grid)
        return cls(
            spec.grid,
            lambda v: _commutator_values(T, spec.symbols, v),
            lambda v: _commutator_values(T, spec.symbols, v, adjoint=True),
            f"commutator(order={spec.order})",
        )

    @classmethod
    def convolution(cls, kernel: KernelSpec, grid: Grid3) -> "FieldOperator":
        T = ConvolutionOperator(kernel, grid)
        return cls(grid, T.apply_values, T.adjoint_values, "T")

    @classmethod
    def dense(cls, grid: Grid3, matrix: np.ndarray) -> "FieldOperator":
        A = np.asarray(matrix, dtype=float)
        if A.shape != (grid.size, grid.size):
            raise DimensionError(f"matrix must be {grid.size} x {grid.size}")
        return cls(
            grid,
            lambda v: (A @ v.ravel()).reshape(grid.counts),
            lambda v: (A.T @ v.ravel()).reshape(grid.counts),
            "dense",
        )


@dataclass(frozen=True)
class OpNormEstimate:
    p: float
    weight_id: str
    lower_bound: float
    dominant: float | None
    probes: int
    iterations: int

    @property
    def value(self) -> float:
        return self.dominant if self.dominant is not None else self.lower_bound


def band_limited_probe(grid: Grid3, rng: np.random.Generator, fraction: float = 0.25) -> np.ndarray:
    F = np.fft.fftn(rng.standard_normal(grid.counts))
    keep = [np.abs(np.fft.fftfreq(n, 1.0 / n)) <= fraction * n for n in grid.counts]
    F *= keep[0][:, None, None] & keep[1][None, :, None] & keep[2][None, None, :]
    return np.fft.ifftn(F).real


def _wnorm(v, p, w):
    a = np.abs(v)
    if math.isinf(p):
        return float(a.max())
    return float(np.sum(a**p * w) ** (1.0 / p))


def weighted_opnorm(
    op: FieldOperator,
    p: float = 2.0,
    w: ScalarField3 | None = None,
    probes: int = 64,
    iters: int = 200,
    tol: float = 1e-6,
    seed: int = 0,
    weight_id: str | None = None,
) -> OpNormEstimate:
    """Lower bound from random band-limited probes; for p = 2 also the dominant
    singular value of sqrt(w) op (. / sqrt(w)) by power iteration."""
    if not p >= 1:
        raise ParameterError("p must be at least 1")
    g = op.grid
    if w is None:
        wv = np.ones(g.counts)
        weight_id = weight_id or "1"
    else:
        if w.grid != g:
            raise DimensionError("weight and operator use different grids")
        if w.is_complex or not np.all(w.values > 0):
            raise WeightError("weight must be strictly positive")
        wv = w.values
        weight_id = weight_id or "w"
    rng = np.random.default_rng(seed)
    lower = 0.0
    for _ in range(probes):
        f = band_limited_probe(g, rng)
        nf = _wnorm(f, p, wv)
        if nf > 0:
            lower = max(lower, _wnorm(op.apply(f), p, wv) / nf)
    dominant, it = None, 0
    if p == 2 and op.adjoint is not None and iters > 0:
        sw = np.sqrt(wv)
        A = lambda v: sw * op.apply(v / sw)
        At = lambda v: op.adjoint(sw * v) / sw
        v = rng.standard_normal(g.counts)
        v /= np.linalg.norm(v)
        est = 0.0
        for it in range(1, iters + 1):
            Av = A(v)
            est = float(np.linalg.norm(Av))
            u = At(Av)
            nu = np.linalg.norm(u)
            if nu == 0:
                dominant = 0.0
                break
            # eigen-residual of A*A at v: stricter than a relative-change test
            # when the top singular values are close
            if np.linalg.norm(u - est**2 * v) <= tol * est**2:
                dominant = est
                break
            v = u / nu
        # the last iterate is itself a probe
        lower = max(lower, est)
    return OpNormEstimate(float(p), weight_id, float(lower), dominant, probes, it)


# -- counterexample ---------------------------------------------------------------


def _log_axis(lo_exp: float, hi_exp: float, per_octave: int) -> np.ndarray:
    u = np.arange(lo_exp, hi_exp + 1e-12, 1.0 / per_octave)
    v = 2.0**u
    return np.concatenate([-v[::-1], [0.0], v])


def rs_derivative_sup(spec: KernelSpec, per_octave: int = 4, margin: int = 4,
                      scaled: bool = False) -> tuple[float, tuple]:
    """sup over a log-spaced frequency lattice of |d/dxi1 K^_RS|; also the argmax.

    With ``scaled`` the sup is taken of |xi1 d/dxi1 K^_RS| instead.
    """
    (j0, j1), (k0, k1) = spec.rs_scale_range
    x1 = _log_axis(-j1 - margin, -j0 + margin, per_octave)
    x2 = _log_axis(-k1 - margin, -k0 + margin, per_octave)
    x3 = _log_axis(-(j1 + k1) - margin, -(j0 + k0) + margin, per_octave)
    p1, p2, p3 = spec.rs_profile.profiles
    w1 = x1 if scaled else 1.0
    A = {j: w1 * 2.0**j * p1.fourier_derivative(2.0**j * x1) for j in range(j0, j1 + 1)}
    B = {k: p2.fourier(2.0**k * x2) for k in range(k0, k1 + 1)}
    C = {m: p3.fourier(2.0**m * x3) for m in range(j0 + k0, j1 + k1 + 1)}
    tot = np.zeros((x1.size, x2.size, x3.size), dtype=complex)
    for j, k in spec.scale_pairs():
        tot += A[j][:, None, None] * (B[k][:, None] * C[j + k][None, :])[None, :, :]
    a = np.abs(tot)
    i = np.unravel_index(int(np.argmax(a)), a.shape)
    return float(a[i]), (float(x1[i[0]]), float(x2[i[1]]), float(x3[i[2]]))


def oscillation_grid(a_values, n: int = 64) -> Grid3:
    """Cell-centred grid on [0, 2a] x [0, 2a] x [0, a + a^2] for the largest a."""
    amax = max(a_values)
    L = (2.0 * amax, 2.0 * amax, amax + amax**2)
    h = tuple(x / n for x in L)
    return Grid3(L, (n, n, n), tuple(x / 2 for x in h))


def oscillation_rectangle(a: float) -> ZygmundRectangle:
    """(a, 2a] x (a, 2a] x (a, a + a^2]: means of x1 equal 3a/2, oscillation a/4."""
    return ZygmundRectangle((a, a, a), (a, a, a * a))


def counterexample_experiment(
    rs_spec: KernelSpec,
    a_values: Sequence[float] = (1, 2, 4, 8),
    b0: str = "x1",
    n: int = 64,
    refine: int = 1,
    per_octave: int = 4,
) -> ExperimentReport:
    """(i) sup |d/dxi1 K^| for the RS kernel at two truncation levels;
    (ii) oscillation of b0 = x1 over the rectangles (a,2a]^2 x (a,a+a^2]."""
    rep = ExperimentReport("counterexample", meta={"b0": b0, "a_values": list(a_values),
                                                   "scale_range": rs_spec.rs_scale_range})
    (j0, j1), (k0, k1) = rs_spec.rs_scale_range
    wider = KernelSpec.ricci_stein((j0 - refine, j1 + refine), (k0 - refine, k1 + refine), rs_spec.rs_profile)
    s0, at0 = rs_derivative_sup(rs_spec, per_octave)
    s1, at1 = rs_derivative_sup(wider, per_octave)
    variation = abs(s1 - s0) / s0
    rep.metrics.update(sup_d1_symbol=s0, sup_d1_symbol_wider=s1, sup_variation=variation,
                       argmax_xi=at0, argmax_xi_wider=at1)
    rep.check("sup |d1 K^| varies < 10% under truncation", variation < 0.10)
    # xi1 d1 K^ is the dilation-invariant form of the same derivative; reported
    # alongside, without a check
    t0, _ = rs_derivative_sup(rs_spec, per_octave, scaled=True)
    t1, _ = rs_derivative_sup(wider, per_octave, scaled=True)
    rep.metrics.update(sup_xi1_d1_symbol=t0, sup_xi1_d1_symbol_wider=t1,
                       sup_xi1_variation=abs(t1 - t0) / t0)

    g = oscillation_grid(a_values, n)
    fn = {"x1": lambda x, y, z: x, "const": lambda x, y, z: np.ones_like(x)}[b0]
    b = ScalarField3.from_function(g, fn)
    rows = []
    for a in a_values:
        R = oscillation_rectangle(a)
        rows.append((a, rectangle_mean(b, R), mean_oscillation(b, R)))
    rep.add_curve("oscillation", ["a", "mean", "oscillation"], rows)
    a_arr = np.array([r[0] for r in rows], float)
    osc = np.array([r[2] for r in rows])
    slope = float(np.polyfit(a_arr, osc, 1)[0]) if len(rows) > 1 else float("nan")
    rep.metrics.update(oscillation_slope=slope, oscillations=osc.tolist(),
                       means=[r[1] for r in rows])
    if b0 == "x1":
        rep.check("oscillation slope 0.25 +- 0.01", abs(slope - 0.25) <= 0.01)
        rep.check("oscillation a/4 within 2%", bool(np.all(np.abs(osc - a_arr / 4) <= 0.02 * a_arr / 4)))
    return rep


# -- lower bound construction -----------------------------------------------------


def companion_rectangle(R: ZygmundRectangle) -> ZygmundRectangle:
    """Shift of R with gaps 5 l(I), 5 l(J), 47 l(S) on the positive side."""
    lI, lJ, lS = R.sides
    c = R.corner
    return ZygmundRectangle((c[0] + 6 * lI, c[1] + 6 * lJ, c[2] + 48 * lS), R.sides)


def _domain(grid: Grid3):
    h = grid.spacing
    lo = tuple(o - hh / 2 for o, hh in zip(grid.origin, h))
    return lo, tuple(a + L for a, L in zip(lo, grid.extents))


def _check_fits(grid: Grid3, boxes) -> None:
    lo, hi = _domain(grid)
    for B in boxes:
        for i in range(3):
            if B.corner[i] < lo[i] - 1e-12 or B.upper[i] > hi[i] + 1e-12:
                need = max(b.upper[i] for b in boxes) - min(b.corner[i] for b in boxes)
                raise GeometryError(
                    f"axis {i + 1}: rectangles do not fit the box without wrap; need L >= {need:g}"
                )


def _nodes(grid: Grid3, B) -> np.ndarray:
    m = B.mask(grid)
    if not m.any():
        raise GeometryError(f"{B} contains no grid node")
    X = np.stack(grid.mesh(), axis=-1)
    return np.argwhere(m), X[m]


def lower_bound_experiment(
    b: ScalarField3,
    R: ZygmundRectangle,
    p: float = 2.0,
    w: ScalarField3 | None = None,
) -> ExperimentReport:
    """Median split of the companion rectangle and the resulting commutator lower bound.

    The commutator of an indicator supported in R~ is evaluated at nodes of R
    by direct quadrature, sum_{y in F} (b(x) - b(y)) K(x - y) dy, which is exact
    for the node measure because R and R~ are disjoint.
    """
    g = b.grid
    Rt = companion_rectangle(R)
    _check_fits(g, [R, Rt])
    idx_R, XR = _nodes(g, R)
    idx_T, XT = _nodes(g, Rt)
    if len(XT) % 2:
        raise GeometryError("companion rectangle needs an even node count for an exact half split")
    cv = g.cell_volume
    K = nw_eval(XR[:, None, :] - XT[None, :, :])
    floor = float(K.min()) / (KERNEL_FLOOR_CONST / R.volume)
    bR = b.values[tuple(idx_R.T)]
    bT = b.values[tuple(idx_T.T)]
    m = median(b, Rt)
    order = np.argsort(bT, kind="stable")
    half = len(bT) // 2
    F1, F2 = order[:half], order[half:]
    comm = [((bR[:, None] - bT[None, F]) * K[:, F]).sum(axis=1) * cv for F in (F1, F2)]
    averages = [float(np.abs(c).mean()) for c in comm]
    left = sum(averages)
    right = float(np.abs(bR - m).mean())
    rep = ExperimentReport("lower-bound", meta={"R": [R.corner, R.sides], "R_tilde": [Rt.corner, Rt.sides],
                                                "nodes_R": len(XR), "nodes_R_tilde": len(XT), "p": p})
    measure_ratio = len(XT) * cv / R.volume
    rep.metrics.update(
        median=m, kernel_min=float(K.min()), kernel_floor_ratio=floor, kernel_positive=bool(np.all(K > 0)),
        commutator_averages=averages, left=left, right=right,
        lower_constant=LOWER_BOUND_CONST, bound=LOWER_BOUND_CONST * right,
        node_measure_ratio=measure_ratio,
        E1_nodes=int(np.sum(bR >= m)), F_sizes=[len(F1), len(F2)],
    )
    rep.check("kernel positive on R x R~", np.all(K > 0))
    rep.check("kernel floor >= 1/(2 49^2 |R|)", floor >= 1.0)
    rep.check("left >= right / (4 49^2)", left >= LOWER_BOUND_CONST * right * (1 - 1e-12))

    # weighted bookkeeping on the smallest Zygmund rectangle containing R and R~
    Rhat = smallest_zygmund_cover(R, Rt)
    wv = np.ones(g.counts) if w is None else w.values
    pp = p / (p - 1)
    wR = wv[tuple(idx_R.T)]
    sigma_R = float(np.sum(wR ** (1 - pp)) * cv)
    char_hat = ap_z_characteristic(ScalarField3(g, wv), p, explicit_family(g, [Rhat])).value
    chain = []
    for c, F in zip(comm, (F1, F2)):
        lp_w = float(np.sum(np.abs(c) ** p * wR) * cv) ** (1 / p)
        wF = float(np.sum(wv[tuple(idx_T[F].T)]) * cv)
        holder = lp_w * sigma_R ** (1 / pp) / (len(XR) * cv)
        chain.append({"average": float(np.abs(c).mean()), "holder_bound": holder,
                      "norm_lower_bound": lp_w / wF ** (1 / p)})
    rep.metrics.update(chain=chain, Rhat=[Rhat.corner, Rhat.sides],
                       Rhat_volume_ratio=Rhat.volume / R.volume, char_Rhat=char_hat,
                       char_factor=char_hat ** (1 / p))
    rep.check("Holder step of the weighted chain", all(c["average"] <= c["holder_bound"] * (1 + 1e-10) for c in chain))
    return rep


def direct_commutator_indicator(b: ScalarField3, F_mask: np.ndarray, x_mask: np.ndarray, kernel_fn=nw_eval) -> np.ndarray:
    """sum_{y in F} (b(x) - b(y)) K(x - y) dy at the nodes of ``x_mask`` (no wrap)."""
    g = b.grid
    X = np.stack(g.mesh(), axis=-1)
    xs, ys = X[x_mask], X[F_mask]
    K = kernel_fn(xs[:, None, :] - ys[None, :, :])
    return ((b.values[x_mask][:, None] - b.values[F_mask][None, :]) * K).sum(axis=1) * g.cell_volume


# -- upper bound sweep ------------------------------------------------------------


def upper_bound_sweep(
    kernel: KernelSpec,
    b_family: Sequence[tuple[str, ScalarField3]],
    w_family: Sequence[tuple[str, ScalarField3 | None]],
    p_list: Sequence[float] = (2.0,),
    family=None,
    probes: int = 64,
    iters: int = 200,
    seed: int = 0,
    spread_limit: float = 3.0,
) -> ExperimentReport:
    """Ratio of estimated ||[b,T]||_{p,w} to ||b||_bmo across symbols."""
    from .weights import default_family

    if not b_family:
        raise ParameterError("empty symbol family")
    g = b_family[0][1].grid
    family = family or default_family(g)
    T = ConvolutionOperator(kernel, g)
    rep = ExperimentReport("upper-sweep", meta={"family": family.descriptor, "members": len(family),
                                                "probes": probes, "iters": iters, "seed": seed})
    rows = []
    for bname, b in b_family:
        norm, _ = bmo_z_norm(b, family)
        op = FieldOperator(g, lambda v, b=b: _commutator_values(T, (b,), v),
                           lambda v, b=b: _commutator_values(T, (b,), v, adjoint=True), bname)
        for wname, w in w_family:
            for p in p_list:
                est = weighted_opnorm(op, p, w, probes, iters, seed=seed, weight_id=wname)
                ratio = est.value / norm if norm > 0 else 0.0
                rows.append({"b": bname, "w": wname, "p": p, "bmo": norm, "opnorm": est.value,
                             "dominant": est.dominant, "lower_bound": est.lower_bound, "ratio": ratio})
    rep.metrics["rows"] = rows
    spreads = {}
    for wname, _ in w_family:
        for p in p_list:
            r = [x["ratio"] for x in rows if x["w"] == wname and x["p"] == p and x["bmo"] > 0]
            spread = max(r) / min(r) if r and min(r) > 0 else math.inf
            spreads[f"{wname}|p={p:g}"] = spread
            rep.check(f"ratio spread <= {spread_limit:g} for w={wname}, p={p:g}", spread <= spread_limit)
    rep.metrics["spreads"] = spreads
    rep.add_curve("ratios", ["index", "p", "bmo", "opnorm", "ratio"],
                  [(i, x["p"], x["bmo"], x["opnorm"], x["ratio"]) for i, x in enumerate(rows)])
    return rep
