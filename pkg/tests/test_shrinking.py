from fractions import Fraction as F

import pytest
from hypothesis import given
from hypothesis import strategies as st

from shrinklab.geometry import interval, point_in_hull
from shrinklab.maps import CompositeMap, RadialContractionLayer, load_map
from shrinklab.measures import AtomicMeasure, dirac, uniform, weakstar_distance
from shrinklab.shrinking import (
    Refusal,
    ShrinkingCertificate,
    certify_periodic_shrinking,
    convex_combination_check,
    infinitely_shrinked_check,
    orbit_measure_profile,
    periodic_point_witness,
    psi_integral,
    psi_lipschitz_bound,
    psi_value,
    transport_defect,
)

HALF = interval(F(1, 4), F(3, 4))
unit = st.fractions(min_value=0, max_value=1, max_denominator=512)


def radial(n):
    return CompositeMap([RadialContractionLayer([(interval(0, 1), n)])])


@pytest.fixture(scope="module")
def swap():
    # [0,1/4] and [3/4,1] exchanged with contraction; f^2(x) = x/4 on [0,1/4]
    return load_map("pl:0,1/4,3/4,1:1,7/8,1/8,0")


@pytest.fixture(scope="module")
def swap_cert(swap):
    return certify_periodic_shrinking(swap, interval(0, F(1, 4)), 2)


def test_radial_square_certificate():
    cert = certify_periodic_shrinking(radial(2), HALF, 1)
    assert isinstance(cert, ShrinkingCertificate)
    lo, hi = F(1, 2) - F(1, 4) * F(1, 2), F(1, 2) + F(1, 4) * F(1, 2)
    assert cert.enclosures[0] == (((lo,), (hi,)),)
    assert (lo, hi) == (F(3, 8), F(5, 8))
    assert cert.margin > 0


def test_identity_refused():
    res = certify_periodic_shrinking(load_map("identity"), HALF, 1)
    assert isinstance(res, Refusal) and res.status == "refused"


@pytest.mark.parametrize("p", [1, 2, 3])
def test_tent_refused(tent, p):
    res = certify_periodic_shrinking(tent, interval(F(3, 8), F(1, 2)), p)
    assert isinstance(res, Refusal)


def test_bad_period_rejected():
    with pytest.raises(ValueError):
        certify_periodic_shrinking(radial(2), HALF, 0)


def test_witness_examples(swap, swap_cert):
    cert = certify_periodic_shrinking(radial(2), HALF, 1)
    w = periodic_point_witness(cert, radial(2))
    assert w.point == (F(1, 2),) and w.residual == 0
    aff = load_map("pl:0,1:1/4,3/4")
    cert = certify_periodic_shrinking(aff, interval(0, 1, F(1, 3)), 1)
    w = periodic_point_witness(cert, aff)
    assert w.point == (F(1, 2),) and w.residual == 0
    w = periodic_point_witness(swap_cert, swap)
    assert w.point == (F(0),) and swap.iterate(w.point, 2) == w.point


def test_witness_residual_decreases():
    aff = load_map("pl:0,1:1/4,3/4")
    cert = certify_periodic_shrinking(aff, interval(0, 1, F(1, 3)), 1)
    w = periodic_point_witness(cert, aff, tol=F(1, 2 ** 30), precision=None)
    hist = [h for h in w.history if h > 0]
    assert all(a >= b for a, b in zip(hist, hist[1:]))


def test_profile_examples(swap, swap_cert):
    mu = uniform(swap.evaluate((F(0),), 1))
    prof = orbit_measure_profile(swap_cert, mu, swap)
    assert prof.masses == (F(1, 2), F(1, 2)) and prof.defect == 0
    cert = certify_periodic_shrinking(radial(2), HALF, 1)
    assert orbit_measure_profile(cert, dirac((F(1, 2),)), radial(2)).masses == (1,)
    assert orbit_measure_profile(swap_cert, dirac((F(1, 2),))).masses == (0, 0)
    with pytest.raises(ValueError):
        orbit_measure_profile(swap_cert, dirac((F(1, 2),)), full_support=True)


def test_psi_examples():
    cert = certify_periodic_shrinking(radial(3), HALF, 1)
    assert cert.return_set == (((F(7, 16),), (F(9, 16),)),)
    assert psi_value(cert, (F(3, 8),)) == F(2, 3)
    assert psi_value(cert, (F(1, 8),)) == 0
    assert psi_value(cert, (F(1, 2),)) == 1


def test_combination_identity(swap, swap_cert):
    mu1 = uniform(swap.evaluate((F(0),), 1))
    mu2 = dirac((F(1, 2),))
    rep = convex_combination_check(swap_cert, swap, mu1, mu2, F(1, 2), samples=0)
    assert rep.psi_integral == F(1, 4) and rep.identity_holds
    assert psi_integral(swap_cert, mu1) == F(1, 2)
    assert psi_integral(swap_cert, mu2) == 0
    with pytest.raises(ValueError):
        convex_combination_check(swap_cert, swap, mu2, mu1, F(1, 2), samples=0)
    with pytest.raises(ValueError):
        convex_combination_check(swap_cert, swap, mu1, mu2, F(1), samples=0)


def test_infinitely_shrinked_examples(tent):
    aff = load_map("pl:0,1:1/4,3/4")
    found = infinitely_shrinked_check(aff, (F(1, 3),), [2, 4, 8, 16])
    assert [q for q, _ in found] == [2, 4, 8, 16]
    for q, cert in found:
        assert cert.I.diameter() < F(1, q) and cert.I.contains((F(1, 2),))
    assert infinitely_shrinked_check(tent, (F(1, 3),), [2, 4]) == []


def test_constructed_map_orbit_shrinked(sqk_identity):
    g = sqk_identity.g
    found = infinitely_shrinked_check(g, (F(3, 16),), [4, 8, 16])
    assert [q for q, _ in found] == [4, 8, 16]


@given(x=st.fractions(min_value=0, max_value=F(1, 4), max_denominator=512))
def test_certificate_soundness_swap(swap, swap_cert, x):
    y = (x,)
    for hulls in swap_cert.enclosures:
        y = swap(y)
        assert any(point_in_hull(y, h) for h in hulls)


@given(i=st.integers(0, 7), u=st.fractions(min_value=0, max_value=1, max_denominator=256))
def test_certificate_soundness_constructed(sqk_identity, i, u):
    cert = sqk_identity.certificates[i]
    a, b = cert.I.vertices[0][0], cert.I.vertices[1][0]
    y = (a + u * (b - a),)
    for hulls in cert.enclosures:
        y = sqk_identity.g(y)
        assert any(point_in_hull(y, h) for h in hulls)


@given(i=st.integers(0, 15), u=st.fractions(min_value=0, max_value=1, max_denominator=64))
def test_first_step_soundness_high_exponent(sqk_tent, i, u):
    cert = sqk_tent.certificates[i]
    a, b = cert.I.vertices[0][0], cert.I.vertices[1][0]
    y = sqk_tent.g((a + u * (b - a),))
    assert any(point_in_hull(y, h) for h in cert.enclosures[0])


@given(x=unit, y=unit)
def test_psi_range_and_lipschitz(x, y):
    cert = certify_periodic_shrinking(radial(3), HALF, 1)
    a, b = psi_value(cert, (x,)), psi_value(cert, (y,))
    assert 0 <= a <= 1 and 0 <= b <= 1
    assert abs(a - b) <= psi_lipschitz_bound(cert) * abs(x - y)


@given(a=st.integers(1, 20), b=st.integers(1, 20))
def test_extremality_of_shrinked_periodic_measure(swap, a, b):
    mu = uniform(swap.evaluate((F(0),), 1))
    mu1 = AtomicMeasure([((F(0),), F(a, a + b)), ((F(1),), F(b, a + b))])
    if transport_defect(swap, mu1) != 0:
        assert a != b
        return
    for eps in (F(1, 4), F(1, 16), F(1, 2 ** 10)):
        assert weakstar_distance(mu1, mu, 12).hi < eps
