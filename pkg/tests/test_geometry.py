import json
from fractions import Fraction as F

import pytest
from hypothesis import given
from hypothesis import strategies as st

from shrinklab.geometry import (
    GeometryError,
    RadialChart,
    Simplex,
    Triangulation,
    ball_simplex,
    interval,
    lebesgue_of_union,
    radial_coordinates,
    scale_simplex,
    simplex_diameter,
    triangulate_mesh,
)

unit = st.fractions(min_value=0, max_value=1, max_denominator=64)
scale = st.fractions(min_value=F(1, 64), max_value=F(63, 64), max_denominator=64)


def test_interval_mesh():
    tri = triangulate_mesh(1, F(1, 2))
    assert len(tri) > 2
    assert all(simplex_diameter(T) < F(1, 2) for T in tri)
    assert lebesgue_of_union(list(tri)) == 1


def test_square_mesh_is_4x4_grid():
    tri = triangulate_mesh(2, F(1, 2))
    assert len(tri) == 32
    assert {simplex_diameter(T) for T in tri} == {F(1, 4)}
    assert lebesgue_of_union(list(tri)) == 1
    tri.validate()


@pytest.mark.parametrize("bad", [0, -1])
def test_mesh_rejects_nonpositive(bad):
    with pytest.raises(GeometryError):
        triangulate_mesh(1, bad)


def test_scale_examples():
    assert scale_simplex(interval(0, 1), F(1, 2)).vertices == ((F(1, 4),), (F(3, 4),))
    T = Simplex([(0, 0), (1, 0), (0, 1)])
    assert scale_simplex(T, 1) == T
    S = scale_simplex(T, F(1, 2))
    assert S.vertices == ((F(1, 6), F(1, 6)), (F(2, 3), F(1, 6)), (F(1, 6), F(2, 3)))
    assert S.centroid == (F(1, 3), F(1, 3))
    assert simplex_diameter(T) == 1


def test_scale_outside_unit_cube_rejected():
    with pytest.raises(GeometryError):
        scale_simplex(interval(0, 1), 2)


def test_degenerate_simplex_rejected():
    with pytest.raises(GeometryError):
        Simplex([(F(1, 2),), (F(1, 2),)])


def test_radial_examples():
    chart = RadialChart(interval(0, 1))
    assert radial_coordinates(chart, (F(1, 2),))[0] == 0
    assert chart.coordinates((F(0),))[0] == 1
    assert chart.coordinates((F(1),))[0] == 1
    s, theta = chart.coordinates((F(3, 4),))
    assert s == F(1, 2)
    assert chart.boundary_point(theta) == (F(1),)
    with pytest.raises(GeometryError):
        chart.coordinates((F(2),))


def test_union_examples():
    assert lebesgue_of_union([interval(0, F(1, 2)), interval(F(1, 2), 1)]) == 1
    assert lebesgue_of_union([interval(F(1, 8), F(3, 8))]) == F(1, 4)
    with pytest.raises(GeometryError):
        lebesgue_of_union([interval(0, F(1, 2)), interval(F(1, 4), 1)])


def test_ball_simplex_one_sided_at_boundary():
    B = ball_simplex((F(0),), F(1, 8))
    assert B.vertices == ((F(0),), (F(1, 8),)) and B.centroid == (F(0),)
    T = ball_simplex((F(1, 2), F(1, 2)), F(1, 16))
    assert T.centroid == (F(1, 2), F(1, 2))
    assert simplex_diameter(T) == F(3, 16)


def test_triangulation_json_round_trip():
    tri = triangulate_mesh(2, F(1, 2))
    again = Triangulation.from_json(json.dumps(tri.to_json()))
    assert list(again) == list(tri)


@given(a=unit, b=unit, lam=scale)
def test_scaled_interval_inside_and_diameter_scales(a, b, lam):
    if a == b:
        return
    T = interval(min(a, b), max(a, b))
    S = scale_simplex(T, lam)
    assert all(T.in_open(v) for v in S.vertices)
    assert simplex_diameter(S) == lam * simplex_diameter(T)


@given(lam=scale, i=st.integers(0, 31))
def test_scaled_triangle_inside_and_diameter_scales(lam, i):
    T = triangulate_mesh(2, F(1, 2))[i]
    S = scale_simplex(T, lam)
    assert all(T.in_open(v) for v in S.vertices)
    assert simplex_diameter(S) == lam * simplex_diameter(T)


@given(i=st.integers(0, 31), w=st.lists(st.integers(1, 50), min_size=3, max_size=3))
def test_radial_round_trip_square(i, w):
    T = triangulate_mesh(2, F(1, 2))[i]
    total = sum(w)
    x = T.point_from_barycentric([F(c, total) for c in w])
    chart = RadialChart(T)
    s, theta = chart.coordinates(x)
    assert 0 <= s <= 1
    assert chart.point(s, theta) == x


@given(x=unit)
def test_radial_round_trip_interval(x):
    chart = RadialChart(interval(0, 1))
    s, theta = chart.coordinates((x,))
    assert chart.point(s, theta) == (x,)


@given(n=st.integers(1, 6))
def test_triangulation_volume_is_one(n):
    assert lebesgue_of_union(list(triangulate_mesh(1, F(1, n)))) == 1
    assert lebesgue_of_union(list(triangulate_mesh(2, F(1, min(n, 3))))) == 1
