import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zyglab.errors import DimensionError, GeometryError, ParameterError, WeightError
from zyglab.experiments import log_symbol, lower_bound_setup
from zyglab.field_core import Grid3, ScalarField3, lp_norm, random_field
from zyglab.frames import admissible_pairs, band_limited_random, build_bump_pair
from zyglab.geometry import ZygmundRectangle
from zyglab.kernels import KernelSpec, truncate_to_field
from zyglab.operators import (
    KERNEL_FLOOR_CONST,
    LOWER_BOUND_CONST,
    CommutatorSpec,
    ConvolutionOperator,
    FieldOperator,
    apply_T,
    commutator_apply,
    companion_rectangle,
    counterexample_experiment,
    direct_commutator_indicator,
    lower_bound_experiment,
    upper_bound_sweep,
    weighted_opnorm,
)


@pytest.fixture(scope="module")
def g16():
    return Grid3.cube(8.0, 16)


@pytest.fixture(scope="module")
def nw16(g16):
    return KernelSpec.nagel_wainger(eps=2 * g16.spacing[0])


def mirror1(v):
    # node i sits at -L/2 + i h, so its image under x1 -> -x1 is n - i
    return np.roll(v[::-1], 1, axis=0)


def test_delta_returns_kernel():
    g = Grid3.cube(8.0, 32)
    k = KernelSpec.nagel_wainger(eps=0.5)
    out = apply_T(k, ScalarField3.delta(g)).values
    K = truncate_to_field(k, g).values
    assert np.max(np.abs(out - K)) <= 1e-12 * np.abs(K).max()


def test_even_input_gives_odd_output():
    g = Grid3.cube(8.0, 32)
    x1, x2, x3 = g.mesh()
    w = 2 * np.pi / 8
    f = np.cos(w * x1) * np.sin(w * x2 + 0.3) + np.exp(np.cos(w * x3)) * np.cos(2 * w * x1)
    Tf = apply_T(KernelSpec.nagel_wainger(eps=0.5), ScalarField3(g, f)).values
    assert np.max(np.abs(mirror1(Tf) + Tf)) <= 1e-10 * np.abs(Tf).max()


def test_operator_class_matches_apply_T(g16, nw16, rng):
    f = random_field(g16, rng)
    T = ConvolutionOperator(nw16, g16)
    assert np.allclose(T(f).values, apply_T(nw16, f).values, atol=1e-12)
    h = random_field(g16, rng)
    # <T f, h> = <f, T* h>
    lhs = np.vdot(T.apply_values(f.values), h.values)
    rhs = np.vdot(f.values, T.adjoint_values(h.values))
    assert lhs == pytest.approx(rhs, rel=1e-12)
    with pytest.raises(DimensionError):
        T(random_field(Grid3.cube(8.0, 8), rng))


def _truncation_ratio(g, f, eps, N):
    return lp_norm(apply_T(KernelSpec.nagel_wainger(eps=eps, N=N), f), 2) / lp_norm(f, 2)


@pytest.fixture(scope="module")
def probe64():
    g = Grid3.cube(16.0, 64)
    bumps = build_bump_pair()
    return g, band_limited_random(g, bumps, admissible_pairs(bumps, g), np.random.default_rng(0))


def test_truncation_stable_in_N(probe64):
    g, f = probe64
    e = 2 * g.spacing[0]
    a, b = _truncation_ratio(g, f, e, 4.0), _truncation_ratio(g, f, e, 8.0 - g.spacing[0])
    assert b == pytest.approx(a, rel=0.05)


def test_truncation_stable_under_refinement(probe64):
    # (eps, N) -> (eps / 2, 2 N) with the outer cut clipped to the half period
    g, f = probe64
    h = g.spacing[0]
    a = _truncation_ratio(g, f, 4 * h, 4.0)
    b = _truncation_ratio(g, f, 2 * h, 8.0 - h)
    assert b == pytest.approx(a, rel=0.05)


def test_commutator_with_constant_vanishes(g16, nw16, rng):
    f = random_field(g16, rng)
    out = commutator_apply(CommutatorSpec(ScalarField3.constant(g16, 3.7), nw16), f)
    assert out.max_abs() <= 1e-12 * lp_norm(apply_T(nw16, f), 2)


def test_order_two_with_unit_inner_symbol(g16, nw16, rng):
    b2 = random_field(g16, rng)
    spec = CommutatorSpec(b2, nw16, order=2, symbols=(ScalarField3.constant(g16, 1.0), b2))
    assert commutator_apply(spec, random_field(g16, rng)).max_abs() <= 1e-12


def test_order_two_is_nested(g16, nw16, rng):
    b1, b2, f = (random_field(g16, rng) for _ in range(3))
    inner = lambda v: commutator_apply(CommutatorSpec(b1, nw16), v)
    expected = b2 * inner(f) - inner(b2 * f)
    got = commutator_apply(CommutatorSpec(b1, nw16, 2, (b1, b2)), f)
    assert np.allclose(got.values, expected.values, atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(-3, 3))
def test_commutator_bilinear(seed, c):
    g = Grid3.cube(4.0, 8)
    k = KernelSpec.nagel_wainger(eps=1.0)
    rng = np.random.default_rng(seed)
    b1, b2, f, h = (random_field(g, rng) for _ in range(4))
    C = lambda b, v: commutator_apply(CommutatorSpec(b, k), v).values
    scale = np.abs(C(b1, f)).max() + np.abs(C(b2, f)).max() + 1.0
    assert np.max(np.abs(C(b1 + b2, f) - C(b1, f) - C(b2, f))) <= 1e-12 * scale
    assert np.max(np.abs(C(b1, f + c * h) - C(b1, f) - c * C(b1, h))) <= 1e-12 * (1 + abs(c)) * scale


def test_commutator_adjoint_pairing(g16, nw16, rng):
    b1, b2, f, h = (random_field(g16, rng) for _ in range(4))
    for spec in (CommutatorSpec(b1, nw16), CommutatorSpec(b1, nw16, 2, (b1, b2))):
        op = FieldOperator.commutator(spec)
        assert np.vdot(op.apply(f.values), h.values) == pytest.approx(
            np.vdot(f.values, op.adjoint(h.values)), rel=1e-10)


def test_commutator_spec_errors(g16, nw16, rng):
    b = random_field(g16, rng)
    with pytest.raises(ParameterError):
        CommutatorSpec(b, nw16, order=2, symbols=(b,))
    with pytest.raises(ParameterError):
        CommutatorSpec(b, nw16, order=0)
    with pytest.raises(DimensionError):
        CommutatorSpec(b, nw16, 2, (b, random_field(Grid3.cube(8.0, 8), rng)))
    with pytest.raises(DimensionError):
        commutator_apply(CommutatorSpec(b, nw16), random_field(Grid3.cube(8.0, 8), rng))


def test_opnorm_identity_and_scalar(g16, rng):
    w = random_field(g16, rng, positive=True)
    ident = FieldOperator(g16, lambda v: v, lambda v: v, "id")
    for p, weight in [(2.0, None), (2.0, w), (3.0, w), (1.5, None)]:
        est = weighted_opnorm(ident, p, weight, probes=8, iters=20)
        assert est.lower_bound == pytest.approx(1.0, abs=1e-8)
        if p == 2.0:
            assert est.dominant == pytest.approx(1.0, abs=1e-8)
    scaled = FieldOperator(g16, lambda v: -2.5 * v, lambda v: -2.5 * v)
    assert weighted_opnorm(scaled, 2.0, w, probes=8, iters=20).value == pytest.approx(2.5, rel=1e-8)


def test_opnorm_matches_svd():
    g = Grid3.cube(4.0, 8)
    A = np.random.default_rng(3).standard_normal((g.size, g.size))
    est = weighted_opnorm(FieldOperator.dense(g, A), 2.0, probes=16, iters=5000, tol=1e-10)
    top = np.linalg.svd(A, compute_uv=False)[0]
    assert est.dominant is not None
    assert est.dominant == pytest.approx(top, rel=1e-6)
    assert est.lower_bound <= est.dominant * (1 + 1e-8)


def test_opnorm_lower_never_exceeds_dominant(g16, nw16, rng):
    b = log_symbol(g16, 0)
    w = random_field(g16, rng, positive=True)
    est = weighted_opnorm(FieldOperator.commutator(CommutatorSpec(b, nw16)), 2.0, w, probes=16, iters=5000)
    assert est.dominant is not None
    assert est.lower_bound <= est.dominant * (1 + 1e-8)


def test_opnorm_errors(g16, rng):
    ident = FieldOperator(g16, lambda v: v)
    with pytest.raises(ParameterError):
        weighted_opnorm(ident, 0.5)
    with pytest.raises(WeightError):
        weighted_opnorm(ident, 2.0, ScalarField3.constant(g16, 0.0))
    with pytest.raises(DimensionError):
        weighted_opnorm(ident, 2.0, ScalarField3.constant(Grid3.cube(8.0, 8), 1.0))
    with pytest.raises(DimensionError):
        FieldOperator.dense(g16, np.eye(4))
    # no adjoint: probes only
    est = weighted_opnorm(ident, 2.0, probes=4)
    assert est.dominant is None and est.value == pytest.approx(1.0)


def test_counterexample_constant_symbol():
    rep = counterexample_experiment(KernelSpec.ricci_stein(), (1, 2, 4), b0="const", n=32)
    assert rep.metrics["oscillations"] == pytest.approx([0.0, 0.0, 0.0], abs=1e-12)
    assert rep.metrics["oscillation_slope"] == pytest.approx(0.0, abs=1e-12)


def test_counterexample_oscillation_values():
    rep = counterexample_experiment(KernelSpec.ricci_stein(), (1, 2, 4), n=64)
    assert rep.metrics["oscillations"] == pytest.approx([0.25, 0.5, 1.0], rel=0.02)
    assert rep.metrics["sup_d1_symbol"] > 0 and np.isfinite(rep.metrics["sup_d1_symbol_wider"])


def test_scaled_symbol_derivative_stable():
    rep = counterexample_experiment(KernelSpec.ricci_stein(), (1, 2), n=16)
    assert rep.metrics["sup_xi1_variation"] <= 0.01


def test_companion_offsets():
    R = ZygmundRectangle((0.0, 0.0, 0.0), (1.0, 2.0, 2.0))
    Rt = companion_rectangle(R)
    assert Rt.sides == R.sides
    assert Rt.corner == (6.0, 12.0, 96.0)


@pytest.fixture(scope="module")
def lb_setup():
    return lower_bound_setup(32)


def test_lower_bound_constant_symbol(lb_setup):
    g, R = lb_setup
    rep = lower_bound_experiment(ScalarField3.constant(g, 2.0), R)
    assert rep.metrics["left"] == 0.0 and rep.metrics["right"] == 0.0
    assert rep.passed


def test_lower_bound_kernel_floor(lb_setup):
    g, R = lb_setup
    rep = lower_bound_experiment(random_field(g, np.random.default_rng(0)), R)
    assert rep.metrics["kernel_positive"]
    assert rep.metrics["kernel_floor_ratio"] >= 1.0
    assert rep.metrics["kernel_min"] * 2 * 49**2 * R.volume >= 1.0
    assert LOWER_BOUND_CONST == pytest.approx(KERNEL_FLOOR_CONST / 2)


@pytest.mark.parametrize("seed", range(5))
def test_lower_bound_sign_pattern(lb_setup, seed):
    g, R = lb_setup
    rng = np.random.default_rng(seed)
    b = ScalarField3(g, rng.choice([-1.0, 1.0], size=g.counts))
    rep = lower_bound_experiment(b, R)
    m = rep.metrics
    assert m["right"] > 0
    assert m["left"] / m["bound"] >= 1.0
    assert rep.passed


def test_lower_bound_commutator_matches_direct_sum(lb_setup):
    g, R = lb_setup
    b = random_field(g, np.random.default_rng(7))
    Rt = companion_rectangle(R)
    mR, mT = R.mask(g), Rt.mask(g)
    direct = direct_commutator_indicator(b, mT, mR)
    rep = lower_bound_experiment(b, R)
    total = sum(rep.metrics["commutator_averages"])
    # the two halves of R~ add up to the indicator of R~, up to the absolute values
    assert np.abs(direct).mean() <= total * (1 + 1e-12)


def test_lower_bound_geometry_error():
    g = Grid3.cube(8.0, 16)
    with pytest.raises(GeometryError, match="need L"):
        lower_bound_experiment(ScalarField3.constant(g, 1.0), ZygmundRectangle((0, 0, 0), (1, 1, 1)))


def test_upper_sweep_zero_symbol_and_scaling(g16, nw16):
    b = log_symbol(g16, 0)
    rep = upper_bound_sweep(nw16, [("zero", ScalarField3.constant(g16, 0.0)), ("b", b), ("2b", 2.0 * b)],
                            [("one", None)], probes=4, iters=100)
    rows = {r["b"]: r for r in rep.metrics["rows"]}
    assert rows["zero"]["ratio"] == 0.0
    assert rows["2b"]["ratio"] == pytest.approx(rows["b"]["ratio"], rel=1e-6)
    assert rows["2b"]["bmo"] == pytest.approx(2 * rows["b"]["bmo"], rel=1e-12)
    with pytest.raises(ParameterError):
        upper_bound_sweep(nw16, [], [("one", None)])
