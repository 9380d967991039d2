"""Nagel-Wainger and Ricci-Stein kernels, truncation, and condition checkers."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from numpy.polynomial import Polynomial

from .errors import ConfigurationError, ParameterError, ResolutionError, SingularityError
from .field_core import Grid3, ScalarField3, as_points, load_field
from .report import ExperimentReport

NAGEL_WAINGER = "nagel_wainger"
RICCI_STEIN = "ricci_stein"
TABULATED = "tabulated"
FAMILIES = (NAGEL_WAINGER, RICCI_STEIN, TABULATED)


_GL_XI_MAX = 16.0


@dataclass(frozen=True)
class Profile1D:
    """Polynomial profile on [-1, 1], extended by zero."""

    poly: Polynomial

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(np.abs(x) <= 1.0, self.poly(np.clip(x, -1, 1)), 0.0)

    @property
    def mean(self) -> float:
        P = self.poly.integ()
        return float(P(1.0) - P(-1.0))

    @cached_property
    def _gl(self):
        return np.polynomial.legendre.leggauss(64)

    def _transform(self, poly: Polynomial, xi):
        # Gauss-Legendre resolves exp(-i x xi) on [-1, 1] only for moderate xi;
        # beyond that integrate by parts, which terminates for a polynomial:
        # int P e^{-i xi x} = [-e^{-i xi x} sum_m P^(m)(x) / (i xi)^(m+1)]_{-1}^{1}
        xi = np.asarray(xi, dtype=float)
        out = np.empty(xi.shape, dtype=complex)
        small = np.abs(xi) <= _GL_XI_MAX
        x, w = self._gl
        out[small] = (np.exp(-1j * np.multiply.outer(xi[small], x)) * (w * poly(x))).sum(-1)
        z = xi[~small]
        if z.size:
            derivs = [poly.deriv(m) for m in range(poly.degree() + 1)]
            acc = np.zeros(z.shape, dtype=complex)
            for end, sign in ((1.0, 1.0), (-1.0, -1.0)):
                series = sum(d(end) / (1j * z) ** (m + 1) for m, d in enumerate(derivs))
                acc -= sign * np.exp(-1j * z * end) * series
            out[~small] = acc
        return out

    def fourier(self, xi):
        """Continuous transform int phi(x) exp(-i x xi) dx."""
        return self._transform(self.poly, xi)

    def fourier_derivative(self, xi):
        """d/dxi of :meth:`fourier`, i.e. the transform of -i x phi(x)."""
        return -1j * self._transform(self.poly * Polynomial([0.0, 1.0]), xi)


def mexican_profile() -> Profile1D:
    """(1 - x^2)^3 (1 - 9 x^2): even, C^2 at the endpoints, mean zero."""
    base = Polynomial([1.0, 0.0, -1.0]) ** 3
    return Profile1D(base * Polynomial([1.0, 0.0, -9.0]))


@dataclass(frozen=True)
class BumpTriple:
    """Three mean-zero profiles; their tensor product is the Ricci-Stein bump."""

    profiles: tuple[Profile1D, Profile1D, Profile1D]

    def __post_init__(self):
        if len(self.profiles) != 3:
            raise ConfigurationError("need exactly three profiles")
        for p in self.profiles:
            if abs(p.mean) > 1e-10:
                raise ConfigurationError(f"profile mean {p.mean:.3e} is not zero")

    @classmethod
    def default(cls) -> "BumpTriple":
        p = mexican_profile()
        return cls((p, p, p))

    def __call__(self, x1, x2, x3):
        a, b, c = self.profiles
        return a(x1) * b(x2) * c(x3)


@dataclass(frozen=True)
class KernelSpec:
    """A Zygmund singular kernel together with its truncation and exponents."""

    family: str
    theta1: float | None = None
    theta2: float | None = None
    eps: tuple[float, float, float] = (0.25, 0.25, 0.25)
    N: tuple[float, float, float] = (np.inf, np.inf, np.inf)
    rs_profile: BumpTriple | None = None
    rs_scale_range: tuple[tuple[int, int], tuple[int, int]] | None = None
    table: ScalarField3 | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigurationError(f"unknown kernel family {self.family!r}")
        t1 = self.theta1 if self.theta1 is not None else 1.0
        t2 = self.theta2 if self.theta2 is not None else (0.75 if self.family == RICCI_STEIN else 0.5)
        if not (0 < t1 <= 1 and 0 < t2 < 1):
            raise ConfigurationError(f"need 0 < theta1 <= 1 and 0 < theta2 < 1, got {t1}, {t2}")
        eps = tuple(float(e) for e in np.broadcast_to(self.eps, 3))
        N = tuple(float(n) for n in np.broadcast_to(self.N, 3))
        if any(e < 0 for e in eps) or any(e > n for e, n in zip(eps, N)):
            raise ConfigurationError(f"need 0 <= eps_i <= N_i, got eps={eps}, N={N}")
        object.__setattr__(self, "theta1", t1)
        object.__setattr__(self, "theta2", t2)
        object.__setattr__(self, "eps", eps)
        object.__setattr__(self, "N", N)
        if self.family == RICCI_STEIN:
            if self.rs_profile is None:
                object.__setattr__(self, "rs_profile", BumpTriple.default())
            if self.rs_scale_range is None:
                raise ConfigurationError("Ricci-Stein kernel needs a finite (j, k) range")
        if self.family == TABULATED and self.table is None:
            raise ConfigurationError("tabulated kernel needs a table field")

    @classmethod
    def nagel_wainger(cls, eps=(0.25, 0.25, 0.25), N=(np.inf,) * 3, **kw) -> "KernelSpec":
        return cls(NAGEL_WAINGER, eps=eps, N=N, **kw)

    @classmethod
    def ricci_stein(cls, j_range=(-2, 2), k_range=(-2, 2), profile=None, **kw) -> "KernelSpec":
        kw.setdefault("eps", (0.0, 0.0, 0.0))
        return cls(RICCI_STEIN, rs_profile=profile, rs_scale_range=(tuple(j_range), tuple(k_range)), **kw)

    @classmethod
    def tabulated(cls, path_or_field, **kw) -> "KernelSpec":
        f = path_or_field if isinstance(path_or_field, ScalarField3) else load_field(path_or_field)
        kw.setdefault("eps", (0.0, 0.0, 0.0))
        return cls(TABULATED, table=f, **kw)

    @property
    def singular(self) -> bool:
        return self.family == NAGEL_WAINGER

    def scale_pairs(self):
        (j0, j1), (k0, k1) = self.rs_scale_range
        return [(j, k) for j in range(j0, j1 + 1) for k in range(k0, k1 + 1)]

    def __call__(self, x1, x2, x3):
        return kernel_eval(self, x1, x2, x3)


def nw_eval(x) -> np.ndarray | float:
    """sgn(x1 x2) / (x1^2 x2^2 + x3^2) at points with coordinates on the last axis."""
    x = as_points(x)
    return _nw(x[..., 0], x[..., 1], x[..., 2])


def _nw(x1, x2, x3):
    den = (x1 * x2) ** 2 + x3**2
    if np.any(den == 0):
        raise SingularityError("Nagel-Wainger kernel evaluated at a singular point")
    out = np.sign(x1 * x2) / den
    return float(out) if np.ndim(out) == 0 else out


def rs_eval(spec: KernelSpec, x) -> np.ndarray | float:
    """Finite Ricci-Stein sum over ``spec.rs_scale_range``."""
    if spec.family != RICCI_STEIN or spec.rs_profile is None:
        raise ConfigurationError("rs_eval needs a Ricci-Stein spec with a profile")
    x = as_points(x)
    out = _rs(spec, x[..., 0], x[..., 1], x[..., 2])
    return float(out) if np.ndim(out) == 0 else out


def _rs(spec, x1, x2, x3):
    phi = spec.rs_profile
    out = np.zeros(np.broadcast(x1, x2, x3).shape)
    for j, k in spec.scale_pairs():
        out = out + 2.0 ** (-2 * (j + k)) * phi(x1 / 2.0**j, x2 / 2.0**k, x3 / 2.0 ** (j + k))
    return out


def kernel_eval(spec: KernelSpec, x1, x2, x3):
    """Untruncated kernel at arrays of coordinates."""
    if spec.family == NAGEL_WAINGER:
        return _nw(np.asarray(x1, float), np.asarray(x2, float), np.asarray(x3, float))
    if spec.family == RICCI_STEIN:
        return _rs(spec, x1, x2, x3)
    raise ConfigurationError("tabulated kernels are only available on their grid")


def rs_symbol(spec: KernelSpec, xi1, xi2, xi3, d1: bool = False):
    """Continuous Fourier transform of the finite Ricci-Stein sum (or its xi1-derivative).

    Each term 2^{-2(j+k)} phi(x1/2^j, x2/2^k, x3/2^{j+k}) transforms to
    phi1^(2^j xi1) phi2^(2^k xi2) phi3^(2^{j+k} xi3).
    """
    p1, p2, p3 = spec.rs_profile.profiles
    xi1, xi2, xi3 = np.broadcast_arrays(*(np.asarray(v, float) for v in (xi1, xi2, xi3)))
    out = np.zeros(xi1.shape, dtype=complex)
    for j, k in spec.scale_pairs():
        a = 2.0**j * p1.fourier_derivative(2.0**j * xi1) if d1 else p1.fourier(2.0**j * xi1)
        out += a * p2.fourier(2.0**k * xi2) * p3.fourier(2.0 ** (j + k) * xi3)
    return out


def truncate_to_field(spec: KernelSpec, grid: Grid3) -> ScalarField3:
    """Sample K_eps^N on ``grid`` using centred coordinates.

    Nodes with |x_i| < eps_i or |x_i| > N_i are zeroed, and so are the nodes at
    -L_i/2, which have no mirror image on the torus (this keeps the sampled
    kernel exactly odd whenever the kernel is).
    """
    if spec.singular:
        for i, (e, h) in enumerate(zip(spec.eps, grid.spacing)):
            if e < 2 * h * (1 - 1e-12):
                raise ResolutionError(f"axis {i + 1}: eps={e} is below two grid cells ({h})")
    x1, x2, x3 = grid.mesh(centered=True)
    keep = np.ones(grid.counts, dtype=bool)
    for i, x in enumerate((x1, x2, x3)):
        L, h = grid.extents[i], grid.spacing[i]
        ax = np.abs(x)
        keep &= (ax >= spec.eps[i] - 1e-12 * h) & (ax <= spec.N[i] + 1e-12 * h) & (ax < L / 2 - 1e-9 * h)
    if spec.family == TABULATED:
        if spec.table.grid != grid:
            raise ConfigurationError("tabulated kernel lives on a different grid")
        vals = np.where(keep, spec.table.values, 0.0)
        return ScalarField3(grid, vals)
    vals = np.zeros(grid.counts)
    vals[keep] = kernel_eval(spec, x1[keep], x2[keep], x3[keep])
    return ScalarField3(grid, vals)


# -- checkers ------------------------------------------------------------------


def check_homogeneity(spec: KernelSpec, trials: int = 10_000, seed: int = 0) -> ExperimentReport:
    """Max relative deviation of K(rho_{s,t} x) (st)^2 from K(x) over random draws."""
    if spec.family != NAGEL_WAINGER:
        raise ConfigurationError("homogeneity applies to the Nagel-Wainger kernel")
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((trials, 3)) * 10.0 ** rng.uniform(-1, 1, (trials, 3))
    s = 10.0 ** rng.uniform(-2, 2, trials)
    t = 10.0 ** rng.uniform(-2, 2, trials)
    k0 = nw_eval(x)
    k1 = nw_eval(x * np.column_stack([s, t, s * t])) * (s * t) ** 2
    dev = float(np.max(np.abs(k1 - k0) / np.abs(k0)))
    rep = ExperimentReport("homogeneity", meta={"trials": trials, "seed": seed})
    rep.metrics["max_relative_deviation"] = dev
    rep.check("deviation <= 1e-12", dev <= 1e-12)
    return rep


def _difference(fn, x, h, alpha, beta, gamma):
    """Delta^a_{x1,h1} Delta^b_{x2,h2} Delta^g_{x3,h3} K with Delta^0 K = -K, Delta^1 K = K(.+h) - K."""
    out = 0.0
    coords = [(0, 1), (0, 1), (0, 1)]
    exps = (alpha, beta, gamma)
    for e in itertools.product(*coords):
        # e_i = 1 means "shifted" for that axis; only allowed when the exponent is 1
        if any(ei and not ai for ei, ai in zip(e, exps)):
            continue
        sign = 1.0
        for ei, ai in zip(e, exps):
            if ai == 0:
                sign *= -1.0
            elif ei == 0:
                sign *= -1.0
        pt = [x[..., i] + e[i] * h[..., i] for i in range(3)]
        out = out + sign * fn(*pt)
    return out


def _balance(a, b, theta2):
    """(|a/b| + |b/a|)^theta2."""
    r = np.abs(a / b)
    return (r + 1.0 / r) ** theta2


REGULARITY_PATTERNS = [
    (a, b, g)
    for a in (0, 1)
    for b in (0, 1)
    for g in (0, 1)
    if (b + g <= 1) or (a + g <= 1)
]


def regularity_ratios(spec: KernelSpec, x, h, pattern) -> np.ndarray:
    """LHS/RHS of the regularity condition (with C = 1) at arrays of points and steps."""
    a, b, g = pattern
    t1, t2 = spec.theta1, spec.theta2
    lhs = np.abs(_difference(lambda *p: kernel_eval(spec, *p), x, h, a, b, g))
    ax, ah = np.abs(x), np.abs(h)
    rhs = (
        ah[..., 0] ** (a * t1) * ah[..., 1] ** (b * t1) * ah[..., 2] ** (g * t1)
        / (ax[..., 0] ** (a * t1 + 1) * ax[..., 1] ** (b * t1 + 1) * ax[..., 2] ** (g * t1 + 1)
           * _balance(x[..., 0] * x[..., 1], x[..., 2], t2))
    )
    return lhs / rhs


def _admissible_samples(rng, n, decades=2.0):
    """Admissible (x, h) draws.

    x1, x2 and the balance r = |x3 / (x1 x2)| are log-uniform over
    ``decades``; h_i / x_i is uniform in [-1/2, 1/2], snapped to the edge half
    the time.  For Zygmund-homogeneous kernels the ratios depend only on r and
    the step fractions, so those are the variables sampled evenly."""
    sgn = rng.choice([-1.0, 1.0], (n, 3))
    x = sgn * 10.0 ** rng.uniform(-decades, decades, (n, 3))
    x[:, 2] = sgn[:, 2] * np.abs(x[:, 0] * x[:, 1]) * 10.0 ** rng.uniform(-decades, decades, n)
    frac = rng.uniform(-0.5, 0.5, (n, 3))
    # extremes of the ratios sit on the admissible edge |h_i| = |x_i| / 2
    edge = rng.random((n, 3)) < 0.5
    frac[edge] = 0.5 * np.sign(frac[edge])
    frac[frac == 0] = 0.5
    return x, x * frac


def check_regularity(spec: KernelSpec, samples: int = 10_000, seed: int = 0) -> ExperimentReport:
    """Monte-Carlo sup of LHS/RHS of the regularity condition over admissible tuples."""
    rng = np.random.default_rng(seed)
    rep = ExperimentReport("regularity", meta={"samples": samples, "seed": seed,
                                               "theta1": spec.theta1, "theta2": spec.theta2})
    per = {}
    for pat in REGULARITY_PATTERNS:
        x, h = _admissible_samples(rng, samples)
        r = regularity_ratios(spec, x, h, pat)
        per["".join(map(str, pat))] = float(np.max(r))
    rep.metrics["sup_by_pattern"] = per
    rep.metrics["sup"] = max(per.values())
    rep.check("finite sup", np.isfinite(rep.metrics["sup"]))
    return rep


# -- cancellation -------------------------------------------------------------

_GL_X, _GL_W = np.polynomial.legendre.leggauss(12)


def _panels(lo: float, hi: float, per_decade: int) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre nodes/weights on lo <= |x| <= hi (both signs).

    Panel edges are log-spaced and include every power of two in the range so
    that piecewise-polynomial dyadic profiles are integrated exactly.
    """
    if not (0 <= lo < hi):
        raise ParameterError(f"need 0 <= delta < r, got {lo}, {hi}")
    lo_eff = lo if lo > 0 else hi * 1e-4
    n = max(2, int(np.ceil(per_decade * np.log10(hi / lo_eff))) + 1)
    edges = np.geomspace(lo_eff, hi, n)
    pw = 2.0 ** np.arange(np.floor(np.log2(lo_eff)), np.ceil(np.log2(hi)) + 1)
    edges = np.unique(np.concatenate([edges, pw[(pw > lo_eff) & (pw < hi)]]))
    if lo == 0:
        edges = np.concatenate([[0.0], edges])
    a, b = edges[:-1], edges[1:]
    x = ((b - a)[:, None] * (_GL_X + 1) / 2 + a[:, None]).ravel()
    w = ((b - a)[:, None] * _GL_W / 2).ravel()
    return np.concatenate([-x[::-1], x]), np.concatenate([w[::-1], w])


def _integral_3d(fn, ranges, per_decade):
    (x1, w1), (x2, w2), (x3, w3) = (_panels(lo, hi, per_decade) for lo, hi in ranges)
    total = 0.0
    for a, wa in zip(x1, w1):
        X2, X3 = np.meshgrid(x2, x3, indexing="ij")
        total += wa * np.einsum("i,j,ij->", w2, w3, fn(np.full_like(X2, a), X2, X3))
    return total


def _separable_terms(spec: KernelSpec):
    """Ricci-Stein sums as [(coefficient, (f1, f2, f3))] of 1-D factors; None otherwise."""
    if spec.family != RICCI_STEIN:
        return None
    p1, p2, p3 = spec.rs_profile.profiles
    out = []
    for j, k in spec.scale_pairs():
        a, b, c = 2.0**j, 2.0**k, 2.0 ** (j + k)
        out.append((2.0 ** (-2 * (j + k)),
                    (lambda x, a=a: p1(x / a), lambda x, b=b: p2(x / b), lambda x, c=c: p3(x / c))))
    return out


def _factor(fn, x, h, e):
    """One-axis difference with the sign convention Delta^0 K = -K."""
    return fn(x + h) - fn(x) if e else -fn(x)


def _as_triples(vals):
    out = []
    for v in vals:
        out.append(tuple(float(u) for u in np.broadcast_to(v, 3)))
    return out


def check_cancellation(
    spec: KernelSpec,
    mode: str,
    deltas,
    radii,
    samples: int = 200,
    per_decade: int = 6,
    seed: int = 0,
) -> ExperimentReport:
    """Implied constants of the cancellation conditions over a finite (delta, r) window.

    ``mode`` is ``"C"`` or ``"Cprime"``.  Each entry of ``deltas`` / ``radii`` is
    a scalar or a triple of per-axis values.  Every integral is evaluated twice
    (``per_decade`` and twice as many panels) and a warning is recorded when
    the constant moves by more than 5%.
    """
    if mode not in ("C", "Cprime"):
        raise ParameterError("mode must be 'C' or 'Cprime'")
    rng = np.random.default_rng(seed)
    K = lambda a, b, c: kernel_eval(spec, a, b, c)  # noqa: E731
    t1, t2 = spec.theta1, spec.theta2
    windows = [(d, r) for d in _as_triples(deltas) for r in _as_triples(radii)
               if all(di < ri for di, ri in zip(d, r))]
    if not windows:
        raise ParameterError("no admissible (delta, r) pairs")
    rep = ExperimentReport(f"cancellation_{mode}", meta={
        "mode": mode, "family": spec.family, "theta1": t1, "theta2": t2,
        "window_delta": [min(d[i] for d, _ in windows) for i in range(3)],
        "window_r": [max(r[i] for _, r in windows) for i in range(3)],
    })

    def both(fn):
        c0, c1 = fn(per_decade), fn(2 * per_decade)
        return c0, c1

    sep = _separable_terms(spec)

    # (a): full triple integral
    def full(pd):
        if sep is None:
            return max(abs(_integral_3d(K, list(zip(d, r)), pd)) for d, r in windows)
        worst = 0.0
        for d, r in windows:
            quad = [_panels(d[i], r[i], pd) for i in range(3)]
            tot = sum(c * math.prod(float(np.dot(w, f(x))) for f, (x, w) in zip(fs, quad)) for c, fs in sep)
            worst = max(worst, abs(tot))
        return worst

    # (b): one-variable integral of a difference in the two other variables.
    # In mode C we integrate x1 and difference (x2, x3); in C' we integrate x2
    # and difference (x1, x3).
    free = 0 if mode == "C" else 1
    others = [i for i in range(3) if i != free]
    x_s, h_s = _admissible_samples(rng, samples, decades=1.0)

    def single(pd):
        worst = 0.0
        for pat in ((0, 0), (1, 0), (0, 1)):
            for d, r in windows:
                xq, wq = _panels(d[free], r[free], pd)
                for x, h in zip(x_s, h_s):
                    pts = np.repeat(x[None, :], xq.size, 0)
                    pts[:, free] = xq
                    hh = np.zeros_like(pts)
                    hh[:, others[0]] = h[others[0]]
                    hh[:, others[1]] = h[others[1]]
                    exps = [0, 0, 0]
                    exps[others[0]], exps[others[1]] = pat
                    val = abs(np.dot(wq, _difference(K, pts, hh, *exps)))
                    ya, yb = others
                    num = abs(h[ya]) ** (pat[0] * t1) * abs(h[yb]) ** (pat[1] * t1)
                    den = abs(x[ya]) ** (pat[0] * t1 + 1) * abs(x[yb]) ** (pat[1] * t1 + 1)
                    # balance factor pairs the free-variable range with the
                    # non-x3 differenced variable against x3
                    partner = x[0] if free == 1 else x[1]
                    bal = 1 / _balance(r[free] * partner, x[2], t2) + 1 / _balance(d[free] * partner, x[2], t2) \
                        if d[free] > 0 else 1 / _balance(r[free] * partner, x[2], t2)
                    worst = max(worst, val / (num / den * bal))
        return worst

    # (c): double integral of a difference in the remaining variable
    lone = 0 if mode == "C" else 1
    pair = [i for i in range(3) if i != lone]

    def double(pd):
        worst = 0.0
        for alpha in (0, 1):
            for d, r in windows:
                (ya, wa), (yb, wb) = (_panels(d[i], r[i], pd) for i in pair)
                if sep is not None:
                    # the two integrated axes each carry Delta^0 = -1; the signs cancel
                    I = [(float(np.dot(wa, fs[pair[0]](ya))), float(np.dot(wb, fs[pair[1]](yb)))) for _, fs in sep]
                    for x, h in zip(x_s[:20], h_s[:20]):
                        val = abs(sum(c * float(_factor(fs[lone], x[lone], h[lone], alpha)) * Ii[0] * Ii[1]
                                      for (c, fs), Ii in zip(sep, I)))
                        rhs = abs(h[lone]) ** (alpha * t1) / abs(x[lone]) ** (alpha * t1 + 1)
                        worst = max(worst, val / rhs)
                    continue
                A, B = np.meshgrid(ya, yb, indexing="ij")
                W = np.outer(wa, wb)
                for x, h in zip(x_s[:20], h_s[:20]):
                    pts = np.empty(A.shape + (3,))
                    pts[..., lone] = x[lone]
                    pts[..., pair[0]] = A
                    pts[..., pair[1]] = B
                    hh = np.zeros_like(pts)
                    hh[..., lone] = h[lone]
                    exps = [0, 0, 0]
                    exps[lone] = alpha
                    val = abs(np.sum(W * _difference(K, pts, hh, *exps)))
                    rhs = abs(h[lone]) ** (alpha * t1) / abs(x[lone]) ** (alpha * t1 + 1)
                    worst = max(worst, val / rhs)
        return worst

    for label, fn in (("a", full), ("b", single), ("c", double)):
        c0, c1 = both(fn)
        rep.metrics[f"{mode}.{label}"] = c1
        rep.metrics[f"{mode}.{label}.coarse"] = c0
        scale = max(abs(c0), abs(c1))
        stable = abs(c1 - c0) <= 0.05 * scale + 1e-12
        rep.check(f"{mode}.{label} finite", np.isfinite(c1))
        if not stable:
            rep.warnings.append(f"{mode}.{label} changed by more than 5% under refinement")
    return rep
