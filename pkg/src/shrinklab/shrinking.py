"""Certification of periodic and eventually periodic shrinking sets."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations

import numpy as np

from .geometry import (
    GeometryError,
    Simplex,
    as_fraction,
    as_point,
    ball_simplex,
    dist,
    dist_point_hulls,
    dist_to_complement,
    hull_in_open_simplex,
    hulls_diameter,
    hulls_disjoint,
    point_in_hull,
    round_point,
)
from .kernels import orbit_statistics, float_distance, sample_points
from .maps import ROUND_BITS, BudgetExhausted, CompositeMap, enclose_hulls
from .measures import AtomicMeasure, convex_combination, family, integrals, weakstar_distance

DEFAULT_TOL = Fraction(1, 10**6)


def _hulls_json(hulls):
    return [[[str(c) for c in p] for p in h] for h in hulls]


@dataclass
class ShrinkingCertificate:
    """Verified shrinking set.

    ``enclosures[j]`` encloses the image of the closed set after j + 1 steps.
    For an eventually periodic set, ``core`` is the certificate of the
    periodic set entered after ``transience`` steps.
    """

    I: Simplex
    period: int
    transience: int
    enclosures: tuple
    diameters: tuple
    margin: Fraction
    converged: bool = True
    core: "ShrinkingCertificate | None" = None
    bound: int | None = None

    @property
    def periodic(self) -> "ShrinkingCertificate":
        return self if self.core is None else self.core.periodic

    @property
    def total_length(self) -> int:
        return self.transience + self.periodic.period

    @property
    def orbit_sets(self):
        """Enclosures of the p sets of the periodic orbit, starting with the core itself."""
        per = self.periodic
        return ((per.I.hull(),),) + tuple(per.enclosures[:per.period - 1])

    @property
    def return_set(self):
        per = self.periodic
        return per.enclosures[per.period - 1]

    def to_json(self):
        return {
            "I": self.I.to_json(),
            "period": self.period,
            "transience": self.transience,
            "enclosures": [_hulls_json(e) for e in self.enclosures],
            "diameters": [str(d) for d in self.diameters],
            "margin": str(self.margin),
            "converged": self.converged,
            "core": None if self.core is None else self.core.to_json(),
            "bound": self.bound,
        }


@dataclass
class Refusal:
    reason: str
    step: int
    deficit: Fraction | None = None
    undecided: bool = False

    @property
    def status(self) -> str:
        return "undecided" if self.undecided else "refused"

    def to_json(self):
        return {"status": self.status, "reason": self.reason, "step": self.step,
                "deficit": None if self.deficit is None else str(self.deficit)}


def _chain(f, T, steps, tol, max_depth):
    current = (T.hull(),)
    out, ok = [], True
    for _ in range(steps):
        current, conv = enclose_hulls(f, current, tol, max_depth)
        ok = ok and conv
        out.append(current)
    return out, ok


def _inside(hulls, T):
    margin = None
    for h in hulls:
        inside, m = hull_in_open_simplex(h, T)
        if not inside:
            return False, m
        margin = m if margin is None else min(margin, m)
    return True, margin


def _staged(attempt, max_depth):
    # coarse enclosures settle most cases; refine only when the answer is undecided
    res = None
    for depth in sorted({0, min(4, max_depth), max_depth}):
        res = attempt(depth)
        if not (isinstance(res, Refusal) and res.undecided):
            return res
    return res


def certify_periodic_shrinking(f: CompositeMap, I: Simplex, p: int, tol=DEFAULT_TOL, max_depth=10):
    """Certificate that I is a periodic shrinking set of period p, or a Refusal."""
    if p < 1:
        raise ValueError("period must be at least 1")
    tol = as_fraction(tol)
    if f.dim == 1:
        return _certify_periodic(f, I, p, tol, max_depth)
    return _staged(lambda d: _certify_periodic(f, I, p, tol, d), max_depth)


def _certify_periodic(f, I, p, tol, max_depth):
    try:
        encl, ok = _chain(f, I, p, tol, max_depth)
    except BudgetExhausted as exc:
        return Refusal(str(exc), 0, undecided=True)
    diam = I.diameter()
    diams = (diam,) + tuple(hulls_diameter(e) for e in encl)
    sets = [(I.hull(),)] + encl[:p - 1]

    def refuse(reason, step, deficit=None):
        return Refusal(reason, step, deficit, undecided=not ok)

    for i, j in combinations(range(len(sets)), 2):
        if not all(hulls_disjoint(a, b) for a in sets[i] for b in sets[j]):
            return refuse(f"images {i} and {j} intersect", j)
    for j in range(1, p):
        if diams[j] >= diam:
            return refuse(f"image {j} does not shrink", j, diams[j] - diam)
    inside, margin = _inside(encl[p - 1], I)
    if not inside:
        return refuse(f"image {p} not inside the open set", p, margin)
    return ShrinkingCertificate(I, p, 0, tuple(encl), diams, margin, ok)


def certify_eventually_periodic(f: CompositeMap, J: Simplex, core: ShrinkingCertificate, n: int,
                                tol=DEFAULT_TOL, max_depth=10):
    """Certificate that J enters the periodic core after n steps, diameters shrinking on the way."""
    if n < 1:
        raise ValueError("transience must be at least 1")
    tol = as_fraction(tol)
    if f.dim == 1:
        return _certify_eventual(f, J, core, n, tol, max_depth)
    return _staged(lambda d: _certify_eventual(f, J, core, n, tol, d), max_depth)


def _certify_eventual(f, J, core, n, tol, max_depth):
    try:
        encl, ok = _chain(f, J, n, tol, max_depth)
    except BudgetExhausted as exc:
        return Refusal(str(exc), 0, undecided=True)
    diam = J.diameter()
    diams = (diam,) + tuple(hulls_diameter(e) for e in encl)
    for j in range(1, n):
        if diams[j] >= diam:
            return Refusal(f"image {j} does not shrink", j, diams[j] - diam, undecided=not ok)
    inside, margin = _inside(encl[n - 1], core.periodic.I)
    if not inside:
        return Refusal(f"image {n} not inside the periodic core", n, margin, undecided=not ok)
    return ShrinkingCertificate(J, core.periodic.period, n, tuple(encl), diams, margin,
                                ok and core.converged, core.periodic)


# Periodic points ----------------------------------------------------------------


def _affine_germ(f: CompositeMap, x):
    """(A, b) of the affine pieces hit by x, or None if a radial layer is active."""
    m = f.dim
    A = [[Fraction(int(i == j)) for j in range(m)] for i in range(m)]
    b = [Fraction(0)] * m
    for layer in f.layers:
        if layer.kind != "affine":
            return None
        piece = layer.locate(x)
        M, c = piece.matrix, piece.offset
        A = [[sum(M[i][k] * A[k][j] for k in range(m)) for j in range(m)] for i in range(m)]
        b = [sum(M[i][k] * b[k] for k in range(m)) + c[i] for i in range(m)]
        x = piece.apply(x)
    return A, b


def _solve_fixed(A, b):
    m = len(b)
    rows = [[Fraction(int(i == j)) - A[i][j] for j in range(m)] for i in range(m)]
    if m == 1:
        if rows[0][0] == 0:
            return None
        return (b[0] / rows[0][0],)
    det = rows[0][0] * rows[1][1] - rows[0][1] * rows[1][0]
    if det == 0:
        return None
    return ((b[0] * rows[1][1] - rows[0][1] * b[1]) / det, (rows[0][0] * b[1] - rows[1][0] * b[0]) / det)


def _compose_germs(f, x, p):
    m = f.dim
    A = [[Fraction(int(i == j)) for j in range(m)] for i in range(m)]
    b = [Fraction(0)] * m
    for _ in range(p):
        germ = _affine_germ(f, x)
        if germ is None:
            return None
        M, c = germ
        A = [[sum(M[i][k] * A[k][j] for k in range(m)) for j in range(m)] for i in range(m)]
        b = [sum(M[i][k] * b[k] for k in range(m)) + c[i] for i in range(m)]
        x = f(x)
    return A, b


@dataclass
class PeriodicWitness:
    point: tuple
    residual: Fraction
    iterations: int
    history: tuple = field(default_factory=tuple)

    def to_json(self):
        return {"point": [str(c) for c in self.point], "residual": str(self.residual),
                "iterations": self.iterations}


def periodic_point_witness(cert: ShrinkingCertificate, f: CompositeMap, tol=Fraction(0), budget=200,
                           precision=ROUND_BITS) -> PeriodicWitness:
    """Point of the periodic core approximately fixed by f^p, found by iterating from the centroid."""
    per = cert.periodic
    p = per.period
    x = per.I.centroid
    history = []
    tol = as_fraction(tol)
    for it in range(budget + 1):
        y = f.iterate(x, p)
        res = dist(y, x)
        history.append(res)
        if res <= tol:
            return PeriodicWitness(x, res, it, tuple(history))
        germ = _compose_germs(f, x, p)
        if germ is not None:
            z = _solve_fixed(*germ)
            if z is not None and per.I.contains(z) and f.iterate(z, p) == z:
                history.append(Fraction(0))
                return PeriodicWitness(z, Fraction(0), it + 1, tuple(history))
        x = round_point(y, precision) if precision else y
    return PeriodicWitness(x, history[-1], budget, tuple(history))


def periodic_measure(f: CompositeMap, x, p: int) -> AtomicMeasure:
    orbit = f.evaluate(x, p - 1)
    return AtomicMeasure([(y, Fraction(1, p)) for y in orbit])


# Measure profile and psi --------------------------------------------------------


def _in_sets(x, hulls):
    return any(point_in_hull(x, h) for h in hulls)


def transport_defect(f: CompositeMap, mu: AtomicMeasure) -> Fraction:
    """Total variation between f_* mu and mu."""
    push = {}
    for x, w in mu.atoms:
        y = f(x)
        push[y] = push.get(y, Fraction(0)) + w
    own = dict(mu.atoms)
    keys = set(push) | set(own)
    return sum((abs(push.get(k, 0) - own.get(k, 0)) for k in keys), Fraction(0)) / 2


@dataclass
class Profile:
    masses: tuple
    defect: Fraction | None
    equal: bool

    def to_json(self):
        return {"masses": [str(m) for m in self.masses],
                "defect": None if self.defect is None else str(self.defect), "equal": self.equal}


def orbit_measure_profile(cert: ShrinkingCertificate, mu: AtomicMeasure, f: CompositeMap | None = None,
                          full_support=False) -> Profile:
    """Masses of the p orbit sets; equal to mu(K)/p when mu is invariant."""
    sets = cert.orbit_sets
    masses = tuple(mu.mass(lambda x, s=s: _in_sets(x, s)) for s in sets)
    total = sum(masses)
    if full_support and total != 1:
        raise ValueError("measure is not supported on the orbit of the shrinking set")
    defect = transport_defect(f, mu) if f is not None else None
    equal = all(m == total / len(sets) for m in masses)
    if defect == 0 and not equal:
        raise AssertionError("invariant measure with unequal orbit profile")
    return Profile(masses, defect, equal)


def psi_value(cert: ShrinkingCertificate, x) -> Fraction:
    """1 on the return enclosure, 0 off the core, ratio of distances between."""
    x = as_point(x)
    I = cert.periodic.I
    out = dist_to_complement(x, I)
    if out == 0:
        return Fraction(0)
    ret = cert.return_set
    if _in_sets(x, ret):
        return Fraction(1)
    d = dist_point_hulls(x, ret)
    return out / (d + out)


def psi_integral(cert: ShrinkingCertificate, mu: AtomicMeasure) -> Fraction:
    return mu.integrate(lambda x: psi_value(cert, x))


def psi_lipschitz_bound(cert: ShrinkingCertificate) -> Fraction:
    """2 / dist(return enclosure, complement of the core)."""
    I = cert.periodic.I
    gap = min(dist_to_complement(v, I) for h in cert.return_set for v in h)
    return 2 / gap if gap > 0 else None


# Monte Carlo helpers -------------------------------------------------------------


def tail_integrals(f: CompositeMap, seed, samples, horizon, depth, workers=1, start=0):
    """Start points and float test-function averages over the late half of each orbit."""
    X = sample_points(seed, start, samples, f.dim)
    stats = orbit_statistics(f, X, family(f.dim).functions(depth), horizon, workers=workers)
    return X, stats


def float_integrals(mu: AtomicMeasure, depth):
    return np.array([float(v) for v in integrals(mu, depth)])


def separation_threshold(nu: AtomicMeasure, limits, depth) -> Fraction:
    """Half the smallest distance from nu to any candidate limit measure."""
    return min(weakstar_distance(nu, m, depth).lo for m in limits) / 2


@dataclass
class CombinationReport:
    lam: Fraction
    period: int
    psi_integral: Fraction
    expected: Fraction
    identity_holds: bool
    eps: Fraction
    threshold: Fraction | None
    hits_upper: int
    hits_lower: int
    samples: int

    @property
    def fraction(self) -> float:
        return self.hits_upper / self.samples if self.samples else 0.0

    def to_json(self):
        return {"lambda": str(self.lam), "period": self.period, "psi_integral": str(self.psi_integral),
                "expected": str(self.expected), "identity_holds": self.identity_holds,
                "eps": str(self.eps), "threshold": None if self.threshold is None else str(self.threshold),
                "hits_upper": self.hits_upper, "hits_lower": self.hits_lower, "samples": self.samples}


def check_combination_hypotheses(cert: ShrinkingCertificate, mu1: AtomicMeasure, mu2: AtomicMeasure, lam):
    if not 0 < lam < 1:
        raise ValueError("lambda must lie strictly between 0 and 1")
    sets = [h for s in cert.orbit_sets for h in s]
    if any(not _in_sets(x, sets) for x in mu1.support):
        raise ValueError("first measure is not supported on the orbit of the shrinking set")
    if any(_in_sets(x, sets) or cert.periodic.I.in_open(x) for x in mu2.support):
        raise ValueError("second measure charges the orbit of the shrinking set")


def convex_combination_check(cert: ShrinkingCertificate, f: CompositeMap, mu1: AtomicMeasure,
                             mu2: AtomicMeasure, lam, samples=10_000, eps=None, seed=0, horizon=1000,
                             depth=20, limits=None, workers=1, stats=None) -> CombinationReport:
    """Exact psi integral of the combination and a Monte Carlo count of orbits near it."""
    lam = as_fraction(lam)
    check_combination_hypotheses(cert, mu1, mu2, lam)
    p = cert.periodic.period
    nu = convex_combination(lam, mu1, mu2)
    val = psi_integral(cert, nu)
    expected = lam / p
    threshold = separation_threshold(nu, limits, depth) if limits else None
    if eps is None:
        eps = threshold if threshold is not None else Fraction(1, 2 ** 10)
    eps = as_fraction(eps)
    hits_upper = hits_lower = 0
    if samples:
        if stats is None:
            _, stats = tail_integrals(f, seed, samples, horizon, depth, workers)
        d = float_distance(stats.tail, float_integrals(nu, depth))
        slack = 1e-9
        hits_upper = int(np.sum(d - slack < float(eps)))
        hits_lower = int(np.sum(d + 2.0 ** -depth + slack < float(eps)))
    return CombinationReport(lam, p, val, expected, val == expected, eps, threshold,
                             hits_upper, hits_lower, samples)


# Infinitely shrinked orbits -----------------------------------------------------


def _dyadic_below(bound):
    eta = Fraction(1)
    while eta >= bound:
        eta /= 2
    return eta


def infinitely_shrinked_check(f: CompositeMap, x, q_list, tol=DEFAULT_TOL, burn_in=64, max_period=8,
                              attempts=6, precision=ROUND_BITS):
    """Certified periodic shrinking sets of diameter < 1/q around the tail of the orbit of x."""
    y = as_point(x)
    for _ in range(burn_in):
        y = round_point(f(y), precision)
    found = []
    for q in q_list:
        cert = _shrinking_near(f, y, q, tol, max_period, attempts, precision)
        if cert is not None:
            found.append((q, cert))
    return found


def _shrinking_near(f, y, q, tol, max_period, attempts, precision):
    scale = 3 if f.dim == 2 else 2
    eta0 = _dyadic_below(Fraction(1, q * scale))
    for p in range(1, max_period + 1):
        z = y
        for _ in range(4):
            z = round_point(f.iterate(z, p), precision)
        germ = _compose_germs(f, z, p)
        exact = _solve_fixed(*germ) if germ is not None else None
        if exact is not None and all(0 <= c <= 1 for c in exact) and f.iterate(exact, p) == exact:
            z = exact
        eta = eta0
        for _ in range(attempts):
            try:
                B = ball_simplex(z, eta)
            except GeometryError:
                break
            if B.diameter() < Fraction(1, q):
                res = certify_periodic_shrinking(f, B, p, tol)
                if isinstance(res, ShrinkingCertificate):
                    return res
            eta /= 2
    return None
