import math

import numpy as np
import pytest

from zyglab.calderon import (
    POLICIES,
    CalderonConfig,
    _Sampler,
    cell_counts,
    cell_sides,
    essential_part,
    find_N0,
    remainder_apply,
    remainder_norm,
    reproduce,
)
from zyglab.errors import GeometryError, ParameterError, PreconditionError
from zyglab.field_core import Grid3, ScalarField3, fourier_coefficients, lp_norm, random_field
from zyglab.frames import admissible_pairs, band_limited_random, build_bump_pair
from zyglab.frames import reproduce as frame_reproduce


@pytest.fixture(scope="module")
def bumps():
    return build_bump_pair()


@pytest.fixture(scope="module")
def g16():
    return Grid3.cube(16.0, 16)


@pytest.fixture(scope="module")
def pairs(bumps, g16):
    return admissible_pairs(bumps, g16)


def brute_essential(f: ScalarField3, bumps, j, k, N, points, corners):
    """E f for one shell by looping over cells: sum_R g(x_R) int_R psi(x - y) dy."""
    g = f.grid
    V = g.volume
    xi = np.stack([m.ravel() for m in g.frequency_mesh()], axis=1)
    sym = bumps.symbol(j, k, *xi.T)
    fc = fourier_coefficients(f).ravel()
    sides = np.array(cell_sides(j, k, N))
    nodes = np.stack([m.ravel() for m in g.mesh()], axis=1)
    acc = np.zeros(len(xi), dtype=complex)
    for x_R, a in zip(points, corners):
        g_at = np.sum(sym * fc * np.exp(1j * xi @ x_R)) / V
        cell = np.ones(len(xi), dtype=complex)
        for i in range(3):
            z = xi[:, i]
            with np.errstate(divide="ignore", invalid="ignore"):
                v = (np.exp(-1j * z * a[i]) - np.exp(-1j * z * (a[i] + sides[i]))) / (1j * z)
            cell *= np.where(z == 0, sides[i], v)
        acc += g_at * cell
    # int_R psi(x - y) dy summed over cells, evaluated at every node
    out = np.exp(1j * nodes @ xi.T) @ (sym * acc) / V
    return out.reshape(g.counts)


@pytest.mark.parametrize("policy", POLICIES)
def test_essential_matches_cell_loop(bumps, policy):
    g = Grid3.cube(8.0, 8)
    (j, k), = admissible_pairs(bumps, g)
    cfg = CalderonConfig(g, bumps, [(j, k)], 1, policy, seed=3)
    f = random_field(g, np.random.default_rng(4))
    counts, sides = cell_counts(g, j, k, 1), np.array(cell_sides(j, k, 1))
    corners = np.indices(counts).reshape(3, -1).T * sides
    if policy == "random_fixed":
        points = _Sampler(cfg, j, k).points
    else:
        points = corners + (0.0 if policy == "lower_left" else 0.5) * sides
    oracle = brute_essential(f, bumps, j, k, 1, points, corners)
    fast = essential_part(f, cfg).values
    assert np.max(np.abs(fast - oracle.real)) <= 1e-10 * np.max(np.abs(oracle))
    assert np.max(np.abs(oracle.imag)) <= 1e-10 * np.max(np.abs(oracle))


def test_zero_field(bumps, g16, pairs):
    cfg = CalderonConfig(g16, bumps, pairs, 1)
    zero = ScalarField3.constant(g16, 0.0)
    assert essential_part(zero, cfg).max_abs() == 0.0
    assert remainder_apply(zero, cfg).max_abs() == 0.0
    rep = reproduce(zero, cfg, 5, norm=0.5)
    assert rep.metrics["residual"] == 0.0


def test_exact_split_every_policy(bumps, g16, pairs, rng):
    f = random_field(g16, rng)
    target = frame_reproduce(f, bumps, pairs).values
    for policy in POLICIES:
        cfg = CalderonConfig(g16, bumps, pairs, 1, policy)
        total = essential_part(f, cfg).values + remainder_apply(f, cfg).values
        assert np.max(np.abs(total - target)) <= 1e-12 * np.max(np.abs(target))


def test_essential_is_linear(bumps, g16, pairs, rng):
    cfg = CalderonConfig(g16, bumps, pairs, 1, "random_fixed")
    f, h = random_field(g16, rng), random_field(g16, rng)
    lhs = essential_part(2.0 * f - h, cfg).values
    rhs = 2.0 * essential_part(f, cfg).values - essential_part(h, cfg).values
    assert np.allclose(lhs, rhs, atol=1e-12)


def test_fine_cells_reduce_to_frame_identity(bumps, g16, pairs, rng):
    f = random_field(g16, rng)
    target = frame_reproduce(f, bumps, pairs)
    for policy in ("lower_left", "center"):
        Ef = essential_part(f, CalderonConfig(g16, bumps, pairs, 20, policy))
        assert lp_norm(Ef - target, 2) <= 1e-6 * lp_norm(target, 2)
    assert remainder_norm(CalderonConfig(g16, bumps, pairs, 20)).value <= 1e-6


def test_single_atom_support(bumps):
    g = Grid3.cube(16.0, 32)
    cfg = CalderonConfig(g, bumps, [(1, 1)], 1)
    f = band_limited_random(g, bumps, admissible_pairs(bumps, g), np.random.default_rng(0))
    c = np.abs(fourier_coefficients(essential_part(f, cfg)))
    xi1, xi2, xi3 = g.frequency_mesh()
    r1, r2 = 2 * np.abs(xi1), np.hypot(2 * xi2, 4 * xi3)
    outside = (r1 <= 0.5) | (r1 >= 2) | (r2 <= 0.5) | (r2 >= 2)
    assert np.max(c[outside]) <= 1e-12 * c.max()


def test_norm_halves_per_level(bumps, g16, pairs):
    norms = [remainder_norm(CalderonConfig(g16, bumps, pairs, N)).value for N in range(5)]
    ratios = [b / a for a, b in zip(norms, norms[1:])]
    assert all(0.35 <= r <= 0.65 for r in ratios)
    N0, seen = find_N0(CalderonConfig(g16, bumps, pairs, 0))
    assert N0 is not None and N0 <= 4 and seen[N0] < 1


def test_policies_bounded_by_lower_left(bumps, g16, pairs):
    # midpoint sampling is second order, so policies differ by more than a
    # constant factor; all of them stay under the corner rule and below one
    for N in (0, 1):
        ll = remainder_norm(CalderonConfig(g16, bumps, pairs, N)).value
        for policy in ("center", "random_fixed"):
            v = remainder_norm(CalderonConfig(g16, bumps, pairs, N, policy)).value
            assert v <= ll * 1.05 and v < 1


def test_reproduce_geometric(bumps, g16, pairs):
    cfg = CalderonConfig(g16, bumps, pairs, 3)
    f = band_limited_random(g16, bumps, pairs, np.random.default_rng(1))
    norm = remainder_norm(cfg).value
    rep = reproduce(f, cfg, 20, norm=norm)
    res = rep.metrics["residuals"]
    assert rep.metrics["residual"] <= 1e-4
    assert res[0] == pytest.approx(lp_norm(remainder_apply(f, cfg), 2) / lp_norm(f, 2), rel=1e-10)
    assert rep.metrics["mean_ratio"] == pytest.approx(norm, rel=0.2)
    k = np.arange(6)
    slope = np.polyfit(k, np.log(res[:6]), 1)[0]
    assert slope == pytest.approx(math.log(norm), rel=0.2)


def test_reproduce_requires_contraction(bumps, g16, pairs, rng):
    cfg = CalderonConfig(g16, bumps, pairs, 0)
    with pytest.raises(PreconditionError):
        reproduce(random_field(g16, rng), cfg, norm=1.2)


def test_config_errors(bumps, g16, pairs):
    with pytest.raises(ParameterError):
        CalderonConfig(g16, bumps, pairs, 1, "anywhere")
    with pytest.raises(ParameterError):
        CalderonConfig(g16, bumps, pairs, -1)
    with pytest.raises(GeometryError):
        CalderonConfig(Grid3((16.0, 16.0, 10.0), (16, 16, 16)), bumps, [(1, 1)], 0)
    with pytest.raises(ParameterError):
        remainder_norm(CalderonConfig(g16, bumps, pairs, 1), probes=4)
