"""Perturbations that create shrinking sets: the S(q, k) and P(q, r) constructions."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product

from .geometry import (
    GeometryError,
    Triangulation,
    as_fraction,
    ball_simplex,
    dist,
    dist_point_hulls,
    hull_in_open_simplex,
    hulls_diameter,
    hulls_disjoint,
    lebesgue_of_union,
    scale_simplex,
    triangulate_mesh,
)
from .maps import (
    CompositeMap,
    Interval,
    RadialContractionLayer,
    c0_distance,
    compose,
    contraction_layer,
    enclose_hulls,
    nudge_layer,
)
from .shadowing import enumerate_periodic_orbits, isolate_periodic_points
from .shrinking import (
    DEFAULT_TOL,
    ShrinkingCertificate,
    certify_eventually_periodic,
    certify_periodic_shrinking,
)

SCHEDULE_DEPTH = 24
NUDGE_DIVISORS = (1, 2, 3, 5, 7, 11, 13, 17)


class PerturbationFailure(RuntimeError):
    def __init__(self, constraint, detail=""):
        super().__init__(f"{constraint}: {detail}" if detail else constraint)
        self.constraint = constraint
        self.detail = detail


def radial_homeomorphism(triangulation, n: int) -> RadialContractionLayer:
    """(s, theta) -> (s^n, theta) on every simplex, about its centroid."""
    if n < 1:
        raise ValueError("exponent must be at least 1")
    return RadialContractionLayer([(T, n) for T in triangulation])


def _exponent(s1, s2):
    """Least n with s1^n < s2."""
    n, power = 1, s1
    while power >= s2:
        n += 1
        power *= s1
    return n


def _displacement(tri) -> Fraction:
    """Largest distance a radial layer on tri can move a point: centroid to farthest vertex."""
    return max(dist(T.centroid, v) for T in tri for v in T.vertices)


def _grid_lower(f, g, dim, per_axis):
    ticks = [Fraction(i, per_axis - 1) for i in range(per_axis)]
    return max(dist(f(x), g(x)) for x in product(ticks, repeat=dim))


def _factored_distance(f, f1, g, tri, mode, tol):
    """Enclosure of the distance from f to g = f1 o h with h radial on tri.

    h only moves points along rays inside their simplex, so |h - id| <= R, and
    rho(f, g) <= rho(f, f1) + Lip(f1) R while the inverses differ by at most
    rho_H(f, f1) + R.
    """
    R = _displacement(tri)
    base = c0_distance(f, f1, mode, tol)
    hi = base.hi + (f1.lipschitz * R if mode == "map" else R)
    if mode == "map":
        lo = max(base.lo - f1.lipschitz * R, _grid_lower(f, g, f.dim, 65 if f.dim == 1 else 17))
    else:
        lo = Fraction(0)
    return Interval(max(lo, Fraction(0)), min(hi, Fraction(1)))


# S(q, k) ------------------------------------------------------------------------


@dataclass
class SqkReport:
    g: CompositeMap
    f1: CompositeMap
    triangulation: Triangulation
    adjustment: str
    lam1: Fraction
    lam2: Fraction
    exponent: int
    targets: tuple
    certificates: tuple
    covering_defect: Fraction
    distance: Interval
    distance_homeo: Interval | None
    q: int
    k: int
    eps: Fraction
    center_convention: str = "centroid"

    @property
    def bound(self) -> int:
        return len(self.triangulation)

    def to_json(self):
        return {
            "q": self.q, "k": self.k, "eps": str(self.eps),
            "g": self.g.to_json(),
            "triangulation": self.triangulation.to_json(),
            "adjustment": self.adjustment,
            "lambda1": str(self.lam1), "lambda2": str(self.lam2), "exponent": self.exponent,
            "targets": list(self.targets),
            "certificates": [c.to_json() for c in self.certificates],
            "covering_defect": str(self.covering_defect),
            "distance": self.distance.to_json(),
            "distance_homeo": None if self.distance_homeo is None else self.distance_homeo.to_json(),
            "center_convention": self.center_convention,
            "bound": self.bound,
        }


def _adjustments(f: CompositeMap, eps, homeo):
    """Candidate f1 close to f, in a fixed order: f itself, nudges, then contractions."""
    yield "none", f
    for d in NUDGE_DIVISORS:
        t = eps / (13 * d)
        for sign in (1, -1):
            shift = sign * t if f.dim == 1 else (sign * t, sign * t * Fraction(2, 3))
            layer = nudge_layer(shift, f.dim)
            yield f"nudge {shift if f.dim == 1 else tuple(str(c) for c in shift)}", CompositeMap(f.layers + (layer,), dim=f.dim)
    if homeo:
        return
    for d in NUDGE_DIVISORS:
        rate = eps / (7 * d)
        center = (Fraction(1, 2),) * f.dim
        yield f"contraction {rate}", CompositeMap(f.layers + (contraction_layer(center, rate, f.dim),), dim=f.dim)


def _targets(f1, tri, lam1):
    scaled = [scale_simplex(T, lam1) for T in tri]
    out = []
    for T in tri:
        y = f1(T.centroid)
        hit = None
        for j, S in enumerate(scaled):
            if S.in_open(y):
                hit = j
                break
        if hit is None:
            return None
        out.append(hit)
    return out


def _lam2_ok(f1, tri, lam1, lam2, targets, tol):
    scaled = [scale_simplex(T, lam1) for T in tri]
    smallest = min(S.diameter() for S in scaled)
    for i, T in enumerate(tri):
        inner = scale_simplex(T, lam2)
        hulls, _ = enclose_hulls(f1, (inner.hull(),), tol)
        if hulls_diameter(hulls) >= smallest:
            return False
        for h in hulls:
            inside, _ = hull_in_open_simplex(h, scaled[targets[i]])
            if not inside:
                return False
    return True


def _cycle_structure(targets):
    """For each index: (transience, cycle entry index, cycle)."""
    out = []
    for i in range(len(targets)):
        seen = {}
        path = []
        j = i
        while j not in seen:
            seen[j] = len(path)
            path.append(j)
            j = targets[j]
        start = seen[j]
        out.append((start, path[start], tuple(path[start:])))
    return out


def build_sqk_perturbation(f: CompositeMap, q: int, k: int, eps, homeo=False, tol=DEFAULT_TOL,
                           distance_tol=None) -> SqkReport:
    eps = as_fraction(eps)
    if eps <= 0 or q < 1 or k < 1:
        raise ValueError("need eps > 0 and q, k >= 1")
    if homeo and f.rational_inverse() is None:
        raise PerturbationFailure("homeomorphism mode", "f has no rational inverse")
    mesh_bound = min(eps / (2 * f.lipschitz), Fraction(1, q))
    tri = triangulate_mesh(f.dim, mesh_bound)
    m = f.dim
    chosen = None
    last = "no adjustment keeps centroid images inside the scaled simplexes"
    for label, f1 in _adjustments(f, eps, homeo):
        for j in range(1, SCHEDULE_DEPTH + 1):
            lam1 = 1 - Fraction(1, 2 ** j)
            if 1 - lam1 ** m >= Fraction(1, k):
                continue
            targets = _targets(f1, tri, lam1)
            if targets is None:
                continue
            lam2 = None
            for i in range(1, SCHEDULE_DEPTH + 1):
                cand = Fraction(1, 2 ** i)
                if cand >= lam1:
                    continue
                if _lam2_ok(f1, tri, lam1, cand, targets, tol):
                    lam2 = cand
                    break
            if lam2 is None:
                last = "no inner scale maps into the target simplexes"
                continue
            chosen = (label, f1, lam1, lam2, targets)
            break
        if chosen:
            break
    if chosen is None:
        raise PerturbationFailure("parameter search", last)
    label, f1, lam1, lam2, targets = chosen
    n = _exponent(lam1, lam2)
    h = radial_homeomorphism(tri, n)
    g = compose(f1, CompositeMap([h], dim=m))
    return _verify_sqk(f, g, f1, tri, label, lam1, lam2, n, targets, q, k, eps, homeo, tol, distance_tol)


def _verify_sqk(f, g, f1, tri, label, lam1, lam2, n, targets, q, k, eps, homeo, tol, distance_tol):
    scaled = [scale_simplex(T, lam1) for T in tri]
    for S in scaled:
        if S.diameter() >= Fraction(1, q):
            raise PerturbationFailure("diameter", f"{S.diameter()} >= 1/{q}")
    defect = 1 - lebesgue_of_union(scaled)
    if defect >= Fraction(1, k):
        raise PerturbationFailure("covering defect", str(defect))
    structure = _cycle_structure(targets)
    cores = {}
    for _, entry, cycle in structure:
        if entry in cores:
            continue
        rot = cycle[cycle.index(entry):] + cycle[:cycle.index(entry)]
        for c in rot:
            if c in cores:
                continue
            cert = certify_periodic_shrinking(g, scaled[c], len(cycle), tol)
            if not isinstance(cert, ShrinkingCertificate):
                raise PerturbationFailure("periodic certificate", f"simplex {c}: {cert.reason}")
            cores[c] = cert
    certs = []
    for i, (trans, entry, cycle) in enumerate(structure):
        if trans == 0:
            cert = cores[i]
        else:
            cert = certify_eventually_periodic(g, scaled[i], cores[entry], trans, tol)
            if not isinstance(cert, ShrinkingCertificate):
                raise PerturbationFailure("eventually periodic certificate", f"simplex {i}: {cert.reason}")
        cert.bound = len(tri)
        if cert.total_length > len(tri):
            raise PerturbationFailure("transience bound", f"simplex {i}")
        certs.append(cert)
    dtol = distance_tol or min(eps / 8, Fraction(1, 100))
    rho = _factored_distance(f, f1, g, tri, "map", dtol)
    if rho.hi >= eps:
        raise PerturbationFailure("distance", f"rho hi {rho.hi} >= {eps}")
    rho_h = None
    if homeo:
        rho_h = _factored_distance(f, f1, g, tri, "homeo", dtol)
        if rho_h.hi >= eps:
            raise PerturbationFailure("homeomorphism distance", f"rho_H hi {rho_h.hi} >= {eps}")
    return SqkReport(g, f1, tri, label, lam1, lam2, n, tuple(targets), tuple(certs), defect, rho,
                     rho_h, q, k, eps)


# P(q, r) ------------------------------------------------------------------------


@dataclass
class PqrReport:
    g: CompositeMap
    points: tuple
    orbits: tuple
    eta: Fraction
    eta1: Fraction
    eta2: Fraction
    exponent: int
    certificates: tuple
    distance: Interval
    q: int
    r: int
    eps: Fraction
    periodic_sample: tuple = field(default_factory=tuple)
    covered: bool | None = None
    center_convention: str = "periodic point"

    def to_json(self):
        return {
            "q": self.q, "r": self.r, "eps": str(self.eps),
            "g": self.g.to_json(),
            "points": [[str(c) for c in x] for x in self.points],
            "orbits": [[[str(c) for c in x] for x in orb] for orb in self.orbits],
            "eta": str(self.eta), "eta1": str(self.eta1), "eta2": str(self.eta2),
            "exponent": self.exponent,
            "certificates": [c.to_json() for c in self.certificates],
            "distance": self.distance.to_json(),
            "periodic_sample": [[str(c) for c in x] for x in self.periodic_sample],
            "covered": self.covered,
            "center_convention": self.center_convention,
        }


def _balls(points, eta):
    try:
        return [ball_simplex(x, eta) for x in points]
    except GeometryError:
        return None


def _separated(balls):
    hulls = [B.hull() for B in balls]
    return all(hulls_disjoint(hulls[i], hulls[j]) for i in range(len(hulls)) for j in range(i + 1, len(hulls)))


def build_pqr_perturbation(f: CompositeMap, q: int, r: int, eps, tol=DEFAULT_TOL, budget=1 << 12,
                           distance_tol=None, check_periodic=True) -> PqrReport:
    eps = as_fraction(eps)
    if eps <= 0 or q < 1 or r < 1:
        raise ValueError("need eps > 0 and q, r >= 1")
    orbits = []
    seen = set()
    for p in range(1, r + 1):
        if r % p:
            continue
        found = enumerate_periodic_orbits(f, p, budget)
        if found.non_isolated:
            raise PerturbationFailure("periodic points", f"non-isolated periodic points of period {p}")
        for orb in found.orbits:
            pts = tuple(f.evaluate(orb.point, orb.period - 1))
            if seen.isdisjoint(pts):
                seen.update(pts)
                orbits.append(pts)
    if not orbits:
        raise PerturbationFailure("periodic points", f"no periodic points of period dividing {r}")
    points = tuple(x for orb in orbits for x in orb)
    scale = 3 if f.dim == 2 else 2
    limit = min(Fraction(1, q), eps / f.lipschitz)
    eta = Fraction(1, 2)
    while True:
        if scale * eta < limit:
            balls = _balls(points, eta)
            if balls is not None and _separated(balls):
                break
        eta /= 2
        if eta < Fraction(1, 2 ** SCHEDULE_DEPTH):
            raise PerturbationFailure("ball separation", "orbit points too close for every admissible radius")
    eta1 = eta / 2
    succ = {}
    for orb in orbits:
        for j, x in enumerate(orb):
            succ[x] = orb[(j + 1) % len(orb)]
    eta2 = eta1 / 2
    for _ in range(SCHEDULE_DEPTH):
        ok = True
        for x in points:
            inner = ball_simplex(x, eta2)
            target = ball_simplex(succ[x], eta1)
            hulls, _ = enclose_hulls(f, (inner.hull(),), tol)
            if not all(hull_in_open_simplex(hh, target)[0] for hh in hulls):
                ok = False
                break
            if hulls_diameter(hulls) >= target.diameter():
                ok = False
                break
        if ok:
            break
        eta2 /= 2
    else:
        raise PerturbationFailure("inner radius", "no eta2 maps balls into their successors")
    k = _exponent(eta1 / eta, eta2 / eta)
    h = RadialContractionLayer([(B, k) for B in _balls(points, eta)])
    g = compose(f, CompositeMap([h], dim=f.dim))
    certs = []
    for orb in orbits:
        cert = certify_periodic_shrinking(g, ball_simplex(orb[0], eta1), len(orb), tol)
        if not isinstance(cert, ShrinkingCertificate):
            raise PerturbationFailure("periodic certificate", f"orbit of {orb[0]}: {cert.reason}")
        if r % cert.period:
            raise PerturbationFailure("period", f"{cert.period} does not divide {r}")
        certs.append(cert)
    dtol = distance_tol or min(eps / 8, Fraction(1, 100))
    rho = c0_distance(f, g, "map", dtol)
    if rho.hi >= eps:
        raise PerturbationFailure("distance", f"rho hi {rho.hi} >= {eps}")
    sample, covered = (), None
    if check_periodic and f.dim == 1:
        cells = isolate_periodic_points(g, r, tol=min(Fraction(1, 4 * q), eta1 / 4))
        sample = tuple(((a + b) / 2,) for a, b in cells)
        sets = [hh for cert in certs for s in cert.orbit_sets for hh in s]
        covered = all(dist_point_hulls(x, sets) <= Fraction(1, q) for x in sample)
        if not covered:
            raise PerturbationFailure("covering", "a periodic point of g lies far from every shrinking set")
    return PqrReport(g, points, tuple(orbits), eta, eta1, eta2, k, tuple(certs), rho, q, r, eps,
                     sample, covered)

