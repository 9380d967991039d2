import csv

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from zyglab.errors import GeometryError, ParameterError, ResolutionError
from zyglab.field_core import Grid3
from zyglab.geometry import (
    Box,
    ZygmundCone,
    ZygmundRectangle,
    build_lattice,
    cone_section,
    dyadic_exponent,
    is_zygmund,
    smallest_zygmund_cover,
    write_lattice_csv,
    zygmund_dilate,
)


def test_dilate_examples():
    assert np.array_equal(zygmund_dilate((1, 1, 1), 2, 3), [2, 3, 6])
    x = np.array([0.3, -1.2, 4.5])
    assert np.array_equal(zygmund_dilate(x, 1, 1), x)
    with pytest.raises(ParameterError):
        zygmund_dilate(x, 0, 1)
    with pytest.raises(ParameterError):
        zygmund_dilate(x, 1, -2)


pos = st.floats(1e-3, 1e3)


@given(st.tuples(*[st.floats(-100, 100)] * 3), pos, pos, pos, pos)
def test_dilation_group_law(x, s, t, s2, t2):
    lhs = zygmund_dilate(zygmund_dilate(x, s2, t2), s, t)
    rhs = zygmund_dilate(x, s * s2, t * t2)
    assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-300)


def test_is_zygmund_examples():
    assert is_zygmund((2, 3, 6))
    assert not is_zygmund((1, 1, 2))
    with pytest.raises(GeometryError):
        is_zygmund((1, 0, 1))


@given(st.integers(-6, 6), st.integers(-6, 6), st.integers(0, 6))
def test_lattice_sides_are_zygmund(j, k, N):
    assert is_zygmund((2.0 ** (j - N), 2.0 ** (k - N), 2.0 ** (j + k - 2 * N)))


@given(pos, pos, st.floats(1e-2, 1e2))
def test_is_zygmund_invariant_under_exchange(lI, lJ, c):
    lS = lI * lJ
    assert is_zygmund((c * lI, lJ / c, lS), tol=1e-10)


def test_rectangle_constraint():
    R = ZygmundRectangle.from_IJ((0, 0, 0), 0.5, 4.0)
    assert R.sides == (0.5, 4.0, 2.0)
    assert R.volume == 4.0
    with pytest.raises(GeometryError):
        ZygmundRectangle((0, 0, 0), (1, 1, 2))


def test_lattice_unit_box():
    g = Grid3.cube(1.0, 8, origin=(0, 0, 0))
    lat = build_lattice(g, 0, 0, 1)
    assert len(lat) == 16
    assert lat.sides == (0.5, 0.5, 0.25)
    assert all(R.sides == (0.5, 0.5, 0.25) for R in lat.cells)
    assert sum(R.volume for R in lat.cells) == pytest.approx(g.volume, abs=1e-12)


def test_lattice_tiles_every_node_once():
    g = Grid3((2.0, 2.0, 4.0), (16, 16, 32))
    for j, k, N in [(0, 0, 1), (1, 0, 1), (1, 1, 1), (2, 1, 2)]:
        lat = build_lattice(g, j, k, N)
        count = np.zeros(g.counts, dtype=int)
        for R in lat.cells:
            count += R.mask(g)
        assert np.all(count == 1)
        assert len(lat) * np.prod(lat.sides) == pytest.approx(g.volume, rel=1e-12)
        labels = lat.labels()
        for q, R in enumerate(lat.cells):
            assert np.array_equal(labels == q, R.mask(g))


def test_lattice_refinement_nests_sixteen():
    g = Grid3((2.0, 2.0, 4.0), (16, 16, 64))
    coarse, fine = build_lattice(g, 1, 1, 1), build_lattice(g, 1, 1, 2)
    for R in coarse.cells:
        kids = [F for F in fine.cells if R.contains_box(F)]
        assert len(kids) == 16
        assert sum(F.volume for F in kids) == pytest.approx(R.volume, rel=1e-12)


def test_lattice_errors():
    g = Grid3.cube(2.5, 16)
    with pytest.raises(GeometryError, match="axis 1"):
        build_lattice(g, 0, 0, 0)
    g = Grid3.cube(4.0, 8)
    with pytest.raises(ResolutionError):
        build_lattice(g, 0, 0, 2)
    with pytest.raises(ParameterError):
        build_lattice(g, 0, 0, -1)


def test_lattice_dilation_covariance():
    g = Grid3.cube(8.0, 32)
    a = build_lattice(g, 0, 0, 0)
    b = build_lattice(g, 1, 1, 0)
    img = {tuple(np.round(zygmund_dilate(R.sides, 2, 2), 12)) for R in a.cells}
    assert img == {tuple(np.round(b.sides, 12))}
    corners = {tuple(np.mod(zygmund_dilate(R.corner, 2, 2), 8.0)) for R in a.cells}
    assert corners <= {tuple(np.mod(R.corner, 8.0)) for R in b.cells}


def test_lattice_csv(tmp_path):
    g = Grid3.cube(1.0, 8, origin=(0, 0, 0))
    write_lattice_csv(build_lattice(g, 0, 0, 1), tmp_path / "lat.csv")
    rows = list(csv.reader(open(tmp_path / "lat.csv")))
    assert rows[0] == ["j", "k", "N", "corner1", "corner2", "corner3", "lI", "lJ", "lS"]
    assert len(rows) == 17


def test_cone_section_examples():
    cone = ZygmundCone((0.0, 0.0, 0.0))
    B = cone_section(cone, 1.0, 1.0)
    assert B.corner == (-1.0, -1.0, -1.0) and B.sides == (2.0, 2.0, 2.0)
    assert not B.zygmund
    assert B.volume == pytest.approx(8 * 1.0 * 1.0)
    s, t = 0.7, 2.5
    assert cone_section(cone, s, t).volume == pytest.approx(8 * s * s * s * t)
    assert cone_section(cone, 2 * s, t).contains_box(cone_section(cone, s, t))
    z = cone_section(ZygmundCone((0, 0, 0), "zygmund"), 1.0, 1.0)
    assert z.sides == (2.0, 2.0, 2.0)
    with pytest.raises(ParameterError):
        ZygmundCone((0, 0, 0), "other")


@given(st.tuples(*[st.floats(-3, 3)] * 3), st.floats(0.1, 3), st.floats(0.1, 3), st.floats(1, 4))
def test_cone_membership_monotone(y, s, t, c):
    cone = ZygmundCone((0.1, -0.2, 0.3))
    if cone.contains(y, s, t):
        assert cone.contains(y, c * s, t)
        assert cone.contains(y, s, c * t)


def test_smallest_cover():
    R = ZygmundRectangle((0, 0, 0), (1, 1, 1))
    T = ZygmundRectangle((6, 6, 48), (1, 1, 1))
    H = smallest_zygmund_cover(R, T)
    assert H.contains_box(R) and H.contains_box(T)
    assert H.sides == pytest.approx((49 / 7, 7.0, 49.0))


def test_box_contains():
    B = Box((0, 0, 0), (1, 1, 1))
    assert B.contains((0, 0, 0))
    assert not B.contains((1, 0.5, 0.5))
    assert dyadic_exponent(0.25) == -2 and dyadic_exponent(3.0) is None
