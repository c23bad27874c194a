from fractions import Fraction as F

import pytest
from hypothesis import given
from hypothesis import strategies as st

from shrinklab.geometry import lebesgue_of_union, scale_simplex, triangulate_mesh
from shrinklab.maps import CompositeMap, c0_distance, load_map
from shrinklab.perturb import (
    PerturbationFailure,
    build_pqr_perturbation,
    build_sqk_perturbation,
    radial_homeomorphism,
)
from shrinklab.shadowing import enumerate_periodic_orbits
from shrinklab.shrinking import ShrinkingCertificate, certify_periodic_shrinking, periodic_point_witness


@pytest.fixture(scope="module")
def pqr_tent():
    return build_pqr_perturbation(load_map("tent"), 8, 2, F(1, 4))


def test_sqk_identity(sqk_identity):
    rep = sqk_identity
    assert rep.adjustment == "none" and rep.targets == tuple(range(8))
    assert (rep.lam1, rep.lam2, rep.exponent) == (F(7, 8), F(1, 2), 6)
    assert rep.lam1 ** rep.exponent < rep.lam2 <= rep.lam1 ** (rep.exponent - 1)
    assert rep.covering_defect == 1 - lebesgue_of_union([c.I for c in rep.certificates]) == F(1, 8)
    assert all(c.period == 1 and c.transience == 0 for c in rep.certificates)
    assert all(c.I.diameter() < F(1, 4) for c in rep.certificates)
    assert rep.distance.hi < F(1, 2)


def test_sqk_identity_recertifies(sqk_identity):
    for T, cert in zip(sqk_identity.triangulation, sqk_identity.certificates):
        again = certify_periodic_shrinking(sqk_identity.g, scale_simplex(T, sqk_identity.lam1), 1)
        assert isinstance(again, ShrinkingCertificate)
        assert again.enclosures == cert.enclosures


def test_sqk_identity_homeo():
    rep = build_sqk_perturbation(load_map("identity"), 4, 4, F(1, 2), homeo=True)
    assert rep.distance_homeo is not None and rep.distance_homeo.hi < F(1, 2)
    assert rep.g.invertible


def test_sqk_tent(sqk_tent):
    rep = sqk_tent
    # mesh strictly below min(eps/(2 Lip), 1/q) = 1/16
    assert len(rep.certificates) == len(rep.triangulation) == 32
    assert any(c.transience > 0 for c in rep.certificates)
    for c in rep.certificates:
        assert c.transience + c.periodic.period <= len(rep.triangulation)
        assert c.I.diameter() < F(1, 8)
    assert rep.covering_defect < F(1, 8)
    assert rep.distance.hi < F(1, 4)


def test_sqk_tent_itinerary_oracle(sqk_tent):
    # simplex images of the centroids under f1 follow the target graph
    tri = sqk_tent.triangulation
    for i, T in enumerate(tri):
        y = sqk_tent.f1(T.centroid)
        assert scale_simplex(tri[sqk_tent.targets[i]], sqk_tent.lam1).in_open(y)


def test_sqk_square_identity():
    rep = build_sqk_perturbation(load_map("identity2"), 2, 2, F(1))
    assert len(rep.triangulation) == 32
    assert all(c.period == 1 for c in rep.certificates)
    assert rep.covering_defect < F(1, 2)
    assert rep.distance.hi < 1


def test_sqk_rejects_bad_parameters():
    with pytest.raises(ValueError):
        build_sqk_perturbation(load_map("identity"), 4, 4, 0)
    with pytest.raises(PerturbationFailure):
        build_sqk_perturbation(load_map("tent"), 4, 4, F(1, 2), homeo=True)


def test_radial_homeomorphism_examples():
    tri = triangulate_mesh(1, 2)
    assert len(tri) == 1
    h = CompositeMap([radial_homeomorphism(tri, 2)])
    assert h((F(3, 4),)) == (F(5, 8),)
    assert h((F(0),)) == (F(0),) and h((F(1),)) == (F(1),)
    one = CompositeMap([radial_homeomorphism(triangulate_mesh(1, F(1, 4)), 1)])
    assert all(one((F(i, 97),)) == (F(i, 97),) for i in range(98))
    d = c0_distance(one, load_map("identity"))
    assert d.lo == 0 and d.hi <= F(1, 100)


@given(n=st.integers(1, 8), x=st.fractions(min_value=0, max_value=1, max_denominator=128))
def test_exponent_monotone(n, x):
    tri = triangulate_mesh(1, F(1, 4))
    h1 = CompositeMap([radial_homeomorphism(tri, n)])
    h2 = CompositeMap([radial_homeomorphism(tri, n + 1)])
    c = tri[tri.locate((x,))].centroid[0]
    assert abs(h2((x,))[0] - c) <= abs(h1((x,))[0] - c)


def test_pqr_tent(pqr_tent):
    rep = pqr_tent
    assert set(rep.points) == {(F(0),), (F(2, 3),), (F(2, 5),), (F(4, 5),)}
    assert sorted(c.period for c in rep.certificates) == [1, 1, 2]
    assert rep.eta1 ** rep.exponent < rep.eta2 * rep.eta ** (rep.exponent - 1)
    assert rep.distance.hi < F(1, 4)
    assert rep.covered


def test_pqr_centers_are_exact_periodic_points(pqr_tent):
    for cert in pqr_tent.certificates:
        w = periodic_point_witness(cert, pqr_tent.g)
        assert w.residual == 0
        assert tuple(w.point) in pqr_tent.points


def test_pqr_single_hyperbolic_fixed_point():
    f = load_map("pl:0,1/6,2/3,1:0,0,1,1")
    assert (F(1, 3),) in [o.point for o in enumerate_periodic_orbits(f, 1).orbits]
    rep = build_pqr_perturbation(f, 4, 1, F(1, 4))
    assert (F(1, 3),) in rep.points
    cert = next(c for c in rep.certificates if c.I.contains((F(1, 3),)))
    assert cert.period == 1 and cert.I.in_open((F(1, 3),))
    assert rep.distance.hi < F(1, 4)


def test_pqr_generous_eps(pqr_tent):
    rep = build_pqr_perturbation(load_map("tent"), 8, 2, F(1))
    assert rep.points == pqr_tent.points
    assert rep.distance.hi < 1


@given(x=st.fractions(min_value=0, max_value=1, max_denominator=1024))
def test_distance_enclosure_sound(sqk_tent, pqr_tent, x):
    tent = load_map("tent")
    for rep in (sqk_tent, pqr_tent):
        assert abs(tent((x,))[0] - rep.g((x,))[0]) <= rep.distance.hi
    assert sqk_tent.distance.lo <= sqk_tent.distance.hi
