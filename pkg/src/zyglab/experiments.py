"""Experiment runners.  Each takes a dataclass config and returns a report whose
checks are the pass/fail assertions of that experiment."""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from .calderon import CalderonConfig, remainder_norm, reproduce
from .errors import GeometryError
from .field_core import Grid3, ScalarField3, lp_norm
from .frames import (
    S_zd,
    admissible_pairs,
    almost_orthogonality_probe,
    band_limited_random,
    build_bump_pair,
    g_zd,
)
from .geometry import ZygmundRectangle
from .kernels import KernelSpec
from .operators import counterexample_experiment, lower_bound_experiment, upper_bound_sweep
from .report import ExperimentReport
from .weights import (
    ap_z_characteristic,
    bmo_z_norm,
    default_family,
    exp_log_check,
    explicit_family,
    jn_tail,
    mean_oscillation,
    rectangle_mean,
)

TWO_PI_8 = 2 * math.pi * 8


# -- symbols and weights ----------------------------------------------------------


def log_symbol(grid: Grid3, axis: int = 0, c: float = 0.1, floor_cells: float = 1.0) -> ScalarField3:
    """Periodic log|2 sin(pi (x_i - c) / L)|, truncated at ``floor_cells`` grid cells."""
    L, h = grid.extents[axis], grid.spacing[axis]
    floor = abs(2 * math.sin(math.pi * floor_cells * h / L))
    x = grid.mesh()[axis]
    return ScalarField3(grid, np.log(np.maximum(np.abs(2 * np.sin(np.pi * (x - c) / L)), floor)))


def two_level_weight(grid: Grid3, high: float = 2.0) -> ScalarField3:
    x = grid.mesh()[0]
    mid = grid.origin[0] - grid.spacing[0] / 2 + grid.extents[0] / 2
    return ScalarField3(grid, np.where(x < mid, high, 1.0))


def weight_family(grid: Grid3) -> list[tuple[str, ScalarField3]]:
    """The constructed A_2 weights used by the equivalence and exp-log experiments."""
    b1 = log_symbol(grid, 0)
    b2 = log_symbol(grid, 1, c=0.3)
    b3 = log_symbol(grid, 2, c=-0.2)
    return [
        ("one", ScalarField3.constant(grid, 1.0)),
        ("two-level", two_level_weight(grid)),
        ("exp-half-log-x1", ScalarField3(grid, np.exp(0.5 * b1.values))),
        ("exp-log-x2", ScalarField3(grid, np.exp(-0.4 * b2.values))),
        ("product", ScalarField3(grid, np.exp(0.3 * b1.values + 0.3 * b3.values))),
    ]


def symbol_family(grid: Grid3, seed: int = 0) -> list[tuple[str, ScalarField3]]:
    rng = np.random.default_rng(seed)
    F = np.fft.fftn(rng.standard_normal(grid.counts))
    keep = [np.abs(np.fft.fftfreq(n, 1.0 / n)) <= 2 for n in grid.counts]
    F *= keep[0][:, None, None] & keep[1][None, :, None] & keep[2][None, None, :]
    smooth = np.fft.ifftn(F).real
    smooth /= np.abs(smooth).max()
    return [
        ("log-x1", log_symbol(grid, 0)),
        ("log-x2", log_symbol(grid, 1, c=0.3)),
        ("log-x3", log_symbol(grid, 2, c=-0.2)),
        ("log-x1+x3", ScalarField3(grid, log_symbol(grid, 0).values + log_symbol(grid, 2, c=0.7).values)),
        ("smooth-random", ScalarField3(grid, smooth)),
    ]


# -- configs ----------------------------------------------------------------------


@dataclass
class PlancherelConfig:
    L: float = TWO_PI_8
    n: int = 64
    samples: int = 20
    tol: float = 1e-6
    zero: bool = False
    small_n: int = 32


@dataclass
class EquivalenceConfig:
    L: float = 32.0
    n: int = 64
    samples: int = 20
    ratio_min: float = 0.1
    ratio_max: float = 10.0
    char_max: float = 4.0
    small_n: int = 32


@dataclass
class CalderonRunConfig:
    L: float = 16.0
    n: int = 32
    N_max: int = 6
    policy: str = "lower_left"
    terms: int = 20
    residual_tol: float = 1e-4
    ratio_min: float = 0.35
    ratio_max: float = 0.65
    N0_max: int = 4
    probes: int = 8
    small_n: int = 16


@dataclass
class AlmostOrthConfig:
    L: float = TWO_PI_8
    n: int = 64
    eps_cells: float = 2.0
    max_offset: int = 4
    slope_max: float = -0.9
    r2_min: float = 0.9
    normalization: str = "envelope"
    small_n: int = 32


@dataclass
class ApCharConfig:
    L: float = 16.0
    n: int = 32
    p: float = 2.0
    char_max: float = 4.0
    small_n: int = 16


@dataclass
class BmoNormConfig:
    a_values: tuple = (1.0, 2.0, 4.0)
    n: int = 64
    mean_tol: float = 0.01
    osc_tol: float = 0.02
    b: str = "x1"
    small_n: int = 32


@dataclass
class JnTailConfig:
    # b depends on x1 only, so tail fractions are quantized by the node count
    # along x1; the grid is fine along x1 and coarse across it
    L: float = 16.0
    n: int = 1024
    n_cross: int = 8
    c: float = 0.1
    lam: float = 2.0
    thresholds: int = 40
    r2_min: float = 0.95
    scale_tol: float = 0.05
    small_n: int = 256


@dataclass
class ExpLogConfig:
    L: float = 16.0
    n: int = 32
    p: float = 2.0
    target: float = 4.0
    small_n: int = 16


@dataclass
class CounterexampleConfig:
    j_lo: int = -2
    j_hi: int = 2
    k_lo: int = -2
    k_hi: int = 2
    a_values: tuple = (1.0, 2.0, 4.0, 8.0)
    n: int = 64
    per_octave: int = 4
    small_n: int = 32


@dataclass
class LowerBoundConfig:
    n: int = 32
    trials: int = 5
    p: float = 2.0
    floor_min: float = 1.0
    small_n: int = 32


@dataclass
class UpperSweepConfig:
    L: float = 8.0
    n: int = 16
    eps_cells: float = 2.0
    probes: int = 64
    iters: int = 200
    spread_limit: float = 3.0
    symbols: int = 4
    small_n: int = 16


def _grid(L: float, n: int) -> Grid3:
    return Grid3.cube(L, n)


def _n(cfg, small: bool) -> int:
    return cfg.small_n if small else cfg.n


def _meta(rep: ExperimentReport, cfg, seed: int, small: bool, t0: float) -> ExperimentReport:
    rep.meta.update(config=asdict(cfg), seed=seed, small=small,
                    normalization="forward DFT unscaled, inverse 1/N; measures are node count x cell volume")
    rep.timings["total"] = time.perf_counter() - t0
    return rep


# -- runners ----------------------------------------------------------------------


def run_plancherel(cfg: PlancherelConfig, seed: int = 0, small: bool = False) -> ExperimentReport:
    t0 = time.perf_counter()
    g = _grid(cfg.L, _n(cfg, small))
    bumps = build_bump_pair()
    pairs = admissible_pairs(bumps, g)
    rng = np.random.default_rng(seed)
    rep = ExperimentReport("plancherel", meta={"pairs": pairs})
    errs, rows = [], []
    for i in range(cfg.samples):
        f = ScalarField3.constant(g, 0.0) if cfg.zero else band_limited_random(g, bumps, pairs, rng)
        nf = lp_norm(f, 2)
        ng = lp_norm(g_zd(f, bumps, pairs), 2)
        err = abs(ng - nf) / nf if nf > 0 else abs(ng)
        errs.append(err)
        rows.append((i, nf, ng, err))
    rep.add_curve("norms", ["sample", "norm_f", "norm_g", "relative_error"], rows)
    rep.metrics["max_relative_error"] = max(errs)
    rep.check(f"| ||g f|| - ||f|| | / ||f|| <= {cfg.tol:g}", max(errs) <= cfg.tol)
    return _meta(rep, cfg, seed, small, t0)


def run_equivalence(cfg: EquivalenceConfig, seed: int = 0, small: bool = False) -> ExperimentReport:
    t0 = time.perf_counter()
    g = _grid(cfg.L, _n(cfg, small))
    bumps = build_bump_pair()
    pairs = admissible_pairs(bumps, g)
    fam = default_family(g)
    rng = np.random.default_rng(seed)
    fields = [band_limited_random(g, bumps, pairs, rng) for _ in range(cfg.samples)]
    Sg = [(S_zd(f, bumps, pairs), g_zd(f, bumps, pairs)) for f in fields]
    rep = ExperimentReport("equivalence", meta={"family": fam.descriptor, "members": len(fam)})
    weights = weight_family(g)[:3]
    rows = []
    for name, w in weights:
        ch = ap_z_characteristic(w, 2.0, fam).value
        rep.check(f"[w]_A2 <= {cfg.char_max:g} for {name}", ch <= cfg.char_max)
        ratios = [lp_norm(S, 2, w) / lp_norm(G, 2, w) for S, G in Sg]
        rep.metrics[f"ratios[{name}]"] = {"min": min(ratios), "max": max(ratios), "char": ch}
        rep.check(f"S/g ratios in [{cfg.ratio_min:g}, {cfg.ratio_max:g}] for {name}",
                  min(ratios) >= cfg.ratio_min and max(ratios) <= cfg.ratio_max)
        rows += [(len(rows), ch, r) for r in ratios]
    rep.add_curve("ratios", ["index", "characteristic", "ratio"], rows)
    return _meta(rep, cfg, seed, small, t0)


def run_calderon(cfg: CalderonRunConfig, seed: int = 0, small: bool = False) -> ExperimentReport:
    t0 = time.perf_counter()
    g = _grid(cfg.L, _n(cfg, small))
    bumps = build_bump_pair()
    pairs = admissible_pairs(bumps, g)
    rep = ExperimentReport("calderon", meta={"pairs": pairs, "policy": cfg.policy})
    norms: dict[int, float] = {}
    for N in range(cfg.N_max + 1):
        try:
            c = CalderonConfig(g, bumps, pairs, N, cfg.policy, seed)
        except GeometryError as e:
            rep.warnings.append(f"N={N} skipped: {e}")
            continue
        norms[N] = remainder_norm(c, probes=cfg.probes).value
    Ns = sorted(norms)
    vals = [norms[N] for N in Ns]
    rep.add_curve("norm_vs_N", ["N", "remainder_norm"], list(zip(Ns, vals)))
    ratios = [vals[i + 1] / vals[i] for i in range(len(vals) - 1) if vals[i] > 0]
    rep.metrics.update(norms={str(N): v for N, v in norms.items()}, ratios=ratios)
    rep.check("norm decreasing in N", all(b < a for a, b in zip(vals, vals[1:])))
    run = any(all(cfg.ratio_min <= r <= cfg.ratio_max for r in ratios[i:i + 3]) for i in range(len(ratios) - 2))
    rep.check(f"three consecutive ratios in [{cfg.ratio_min:g}, {cfg.ratio_max:g}]", run)
    N0 = next((N for N in Ns if norms[N] < 1), None)
    rep.metrics["N0"] = N0
    rep.check(f"norm < 1 at some N0 <= {cfg.N0_max}", N0 is not None and N0 <= cfg.N0_max)
    if N0 is not None:
        # reconstruct at the first N whose norm is at most 1/2
        Nr = next(N for N in Ns if N >= N0 and (norms[N] <= 0.5 or N == Ns[-1]))
        c = CalderonConfig(g, bumps, pairs, Nr, cfg.policy, seed)
        f = band_limited_random(g, bumps, pairs, np.random.default_rng(seed))
        rr = reproduce(f, c, cfg.terms, norm=norms[Nr])
        rep.metrics.update(reconstruction_N=Nr, residual=rr.metrics["residual"])
        rep.curves.update(rr.curves)
        rep.check(f"Neumann residual <= {cfg.residual_tol:g} at {cfg.terms} terms",
                  rr.metrics["residual"] <= cfg.residual_tol)
    return _meta(rep, cfg, seed, small, t0)


def run_almost_orth(cfg: AlmostOrthConfig, seed: int = 0, small: bool = False) -> ExperimentReport:
    t0 = time.perf_counter()
    g = _grid(cfg.L, _n(cfg, small))
    bumps = build_bump_pair()
    pairs = admissible_pairs(bumps, g)
    js, ks = [p[0] for p in pairs], [p[1] for p in pairs]
    spec = KernelSpec.nagel_wainger(eps=cfg.eps_cells * g.spacing[0])
    rep = almost_orthogonality_probe(spec, bumps, (min(js), max(js)), (min(ks), max(ks)), g,
                                     cfg.max_offset, cfg.normalization)
    rep.name = "almost-orth"
    rep.check(f"slope <= {cfg.slope_max:g}", rep.metrics["slope"] <= cfg.slope_max)
    rep.check(f"R^2 >= {cfg.r2_min:g}", rep.metrics["r2"] >= cfg.r2_min)
    return _meta(rep, cfg, seed, small, t0)


def run_ap_char(cfg: ApCharConfig, seed: int = 0, small: bool = False) -> ExperimentReport:
    t0 = time.perf_counter()
    g = _grid(cfg.L, _n(cfg, small))
    fam = default_family(g)
    rep = ExperimentReport("ap-char", meta={"family": fam.descriptor, "members": len(fam)})
    rows = []
    for name, w in weight_family(g):
        ch = ap_z_characteristic(w, cfg.p, fam)
        rep.metrics[f"char[{name}]"] = {"value": ch.value, "argmax": [ch.argmax_rectangle.corner,
                                                                     ch.argmax_rectangle.sides]}
        rep.check(f"1 <= [w] <= {cfg.char_max:g} for {name}", 1.0 <= ch.value <= cfg.char_max)
        rows.append((len(rows), ch.value))
    rep.add_curve("characteristics", ["index", "value"], rows)
    return _meta(rep, cfg, seed, small, t0)


def bmo_grid(a_values, n: int) -> Grid3:
    """Cell-centred grid on [0, 2a]^2 x [0, a + a^2] for the largest a; the spacing
    divides every a, so the midpoint rule is exact for b = x1."""
    amax = max(a_values)
    L = (2.0 * amax, 2.0 * amax, amax + amax**2)
    h = tuple(x / n for x in L)
    return Grid3(L, (n, n, n), tuple(x / 2 for x in h))


def run_bmo_norm(cfg: BmoNormConfig, seed: int = 0, small: bool = False) -> ExperimentReport:
    t0 = time.perf_counter()
    a_values = tuple(float(a) for a in cfg.a_values)
    g = bmo_grid(a_values, _n(cfg, small))
    fn = {"x1": lambda x, y, z: x, "const": lambda x, y, z: np.full_like(x, 3.0)}[cfg.b]
    b = ScalarField3.from_function(g, fn)
    rects = [ZygmundRectangle((a, a, a), (a, a, a * a)) for a in a_values]
    rep = ExperimentReport("bmo-norm", meta={"b": cfg.b, "grid": g.counts, "extents": g.extents})
    rows = []
    for a, R in zip(a_values, rects):
        m, osc = rectangle_mean(b, R), mean_oscillation(b, R)
        rows.append((a, m, osc))
        if cfg.b == "x1":
            rep.check(f"mean 3a/2 within {cfg.mean_tol:.0%} at a={a:g}", abs(m - 1.5 * a) <= cfg.mean_tol * 1.5 * a)
            rep.check(f"oscillation a/4 within {cfg.osc_tol:.0%} at a={a:g}", abs(osc - a / 4) <= cfg.osc_tol * a / 4)
        else:
            rep.check(f"oscillation 0 at a={a:g}", osc <= 1e-12)
    norm, R = bmo_z_norm(b, explicit_family(g, rects))
    rep.metrics.update(means=[r[1] for r in rows], oscillations=[r[2] for r in rows],
                       family_sup=norm, argmax=[R.corner, R.sides])
    rep.add_curve("oscillation", ["a", "mean", "oscillation"], rows)
    return _meta(rep, cfg, seed, small, t0)


def run_jn_tail(cfg: JnTailConfig, seed: int = 0, small: bool = False) -> ExperimentReport:
    t0 = time.perf_counter()
    g = Grid3((cfg.L,) * 3, (_n(cfg, small), cfg.n_cross, cfg.n_cross))
    fam = default_family(g)
    b = log_symbol(g, 0, cfg.c)
    base = jn_tail(b, fam, n_t=cfg.thresholds)
    scaled = jn_tail(b * (1.0 / cfg.lam), fam, n_t=cfg.thresholds)
    rep = ExperimentReport("jn-tail", meta=base.meta)
    rep.curves.update(base.curves)
    r1, r2 = base.metrics["decay_scale"], scaled.metrics["decay_scale"]
    rescale = (r1 / r2) / cfg.lam
    rep.metrics.update(base=base.metrics, scaled=scaled.metrics, rescale_factor=rescale)
    rep.check(f"R^2 >= {cfg.r2_min:g}", base.metrics["r_squared"] >= cfg.r2_min)
    rep.check(f"decay rate rescales by lambda within {cfg.scale_tol:.0%}", abs(rescale - 1) <= cfg.scale_tol)
    return _meta(rep, cfg, seed, small, t0)


def run_exp_log(cfg: ExpLogConfig, seed: int = 0, small: bool = False) -> ExperimentReport:
    t0 = time.perf_counter()
    g = _grid(cfg.L, _n(cfg, small))
    fam = default_family(g)
    rep = ExperimentReport("exp-log", meta={"family": fam.descriptor, "members": len(fam)})
    rows = []
    for name, w in weight_family(g):
        r = exp_log_check(fam, weight=w, p=cfg.p)
        rep.metrics[f"i[{name}]"] = r.metrics
        rep.check(f"(i) bmo(log w) <= majorant for {name}", r.passed)
        rows.append((len(rows), r.metrics["bmo_log_w"], r.metrics["majorant"]))
    for name, b in symbol_family(g, seed):
        r = exp_log_check(fam, symbol=b, target=cfg.target)
        rep.metrics[f"ii[{name}]"] = r.metrics
        rep.check(f"(ii) delta found for {name}", r.passed)
    rep.add_curve("direction_i", ["index", "bmo_log_w", "majorant"], rows)
    return _meta(rep, cfg, seed, small, t0)


def run_counterexample(cfg: CounterexampleConfig, seed: int = 0, small: bool = False) -> ExperimentReport:
    t0 = time.perf_counter()
    spec = KernelSpec.ricci_stein((cfg.j_lo, cfg.j_hi), (cfg.k_lo, cfg.k_hi))
    rep = counterexample_experiment(spec, cfg.a_values, n=_n(cfg, small), per_octave=cfg.per_octave)
    return _meta(rep, cfg, seed, small, t0)


def lower_bound_setup(n: int = 32) -> tuple[Grid3, ZygmundRectangle]:
    """Grid and rectangle for the median construction.  With l(I) = l(J) = l(S) = 1
    the pair R, R~ spans 7 x 7 x 49; 32 nodes along x3 then give one node layer
    per rectangle (h3 = 2) and 4 x 4 nodes in I x J (h = 1/4)."""
    ext = (8.0, 8.0, 64.0)
    h = tuple(L / n for L in ext)
    g = Grid3(ext, (n, n, n), (h[0] / 2, h[1] / 2, 1.0))
    R = ZygmundRectangle((0.0, 0.0, 1.0 - h[2] / 8), (1.0, 1.0, 1.0))
    return g, R


def run_lower_bound(cfg: LowerBoundConfig, seed: int = 0, small: bool = False) -> ExperimentReport:
    t0 = time.perf_counter()
    g, R = lower_bound_setup(_n(cfg, small))
    rng = np.random.default_rng(seed)
    rep = ExperimentReport("lower-bound", meta={"grid": g.counts, "extents": g.extents,
                                                "R": [R.corner, R.sides]})
    rows = []
    for i in range(cfg.trials):
        b = ScalarField3(g, rng.uniform(-1, 1, g.counts))
        r = lower_bound_experiment(b, R, cfg.p)
        m = r.metrics
        rows.append((i, m["kernel_floor_ratio"], m["left"], m["bound"], m["right"]))
        rep.metrics[f"trial[{i}]"] = m
        for label, ok in r.checks.items():
            rep.check(f"trial {i}: {label}", ok)
        rep.check(f"trial {i}: kernel floor ratio >= {cfg.floor_min:g}", m["kernel_floor_ratio"] >= cfg.floor_min)
    rep.add_curve("trials", ["trial", "kernel_floor_ratio", "left", "bound", "right"], rows)
    return _meta(rep, cfg, seed, small, t0)


def run_upper_sweep(cfg: UpperSweepConfig, seed: int = 0, small: bool = False) -> ExperimentReport:
    t0 = time.perf_counter()
    g = _grid(cfg.L, _n(cfg, small))
    kernel = KernelSpec.nagel_wainger(eps=cfg.eps_cells * g.spacing[0])
    syms = symbol_family(g, seed)[: cfg.symbols]
    rep = upper_bound_sweep(kernel, syms, [("one", None)], [2.0], probes=cfg.probes,
                            iters=cfg.iters, seed=seed, spread_limit=cfg.spread_limit)
    return _meta(rep, cfg, seed, small, t0)


@dataclass(frozen=True)
class Experiment:
    name: str
    runner: Callable
    config: type
    reproduces: str
    description: str


EXPERIMENTS: dict[str, Experiment] = {
    e.name: e
    for e in [
        Experiment("plancherel", run_plancherel, PlancherelConfig, "Plancherel identity for the discrete square function",
                   "||g_z^d f||_2 = ||f||_2 for band-limited f"),
        Experiment("equivalence", run_equivalence, EquivalenceConfig, "weighted equivalence of area and square functions",
                   "weighted ratios of area and square functions"),
        Experiment("calderon", run_calderon, CalderonRunConfig, "discrete Calderon reproducing formula",
                   "remainder norm vs N and Neumann reconstruction"),
        Experiment("almost-orth", run_almost_orth, AlmostOrthConfig, "almost orthogonality of frame atoms and the kernel",
                   "decay of psi * K * psi' across scale offsets"),
        Experiment("ap-char", run_ap_char, ApCharConfig, "Zygmund A_p characteristic",
                   "characteristics of the constructed weights"),
        Experiment("bmo-norm", run_bmo_norm, BmoNormConfig, "x1 is not in little bmo",
                   "mean and oscillation of x1 on (a,2a]^2 x (a,a+a^2]"),
        Experiment("jn-tail", run_jn_tail, JnTailConfig, "John-Nirenberg lemma for general bases",
                   "exponential tail and scale covariance"),
        Experiment("exp-log", run_exp_log, ExpLogConfig, "exp-log link for general bases",
                   "bmo(log w) majorant and delta search"),
        Experiment("counterexample", run_counterexample, CounterexampleConfig, "bounded Ricci-Stein commutator with an unbounded symbol",
                   "Ricci-Stein symbol derivative vs x1 oscillation"),
        Experiment("lower-bound", run_lower_bound, LowerBoundConfig, "commutator lower bound by median splitting",
                   "median construction and commutator lower bound"),
        Experiment("upper-sweep", run_upper_sweep, UpperSweepConfig, "weighted commutator upper bound",
                   "commutator norm / bmo norm across symbols"),
    ]
}


def list_experiments() -> list[tuple[str, str, str]]:
    return [(e.name, e.description, e.reproduces) for e in EXPERIMENTS.values()]
