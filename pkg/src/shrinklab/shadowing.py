"""Pseudo-orbits, exact periodic-orbit enumeration and periodic shadowing."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from math import gcd

from .geometry import (
    as_fraction,
    as_point,
    clip_halfplane,
    convex_hull,
    dist,
    point_in_hull,
    round_point,
    simplex_halfplanes,
)
from .maps import ROUND_BITS, BudgetExhausted, CompositeMap, MapError
from .measures import DEFAULT_DEPTH, AtomicMeasure, MetricResult, family, uniform, weakstar_distance


@dataclass
class PseudoOrbit:
    points: tuple
    delta: Fraction
    period: int
    gaps: tuple

    def to_json(self):
        return {"points": [[str(c) for c in x] for x in self.points], "delta": str(self.delta),
                "period": self.period, "gaps": [str(g) for g in self.gaps]}


@dataclass
class PseudoOrbitRefusal:
    index: int
    gap: Fraction
    delta: Fraction


def validate_pseudo_orbit(f: CompositeMap, candidate, delta, periodic=True):
    """Exact check of every step gap dist(f(y_n), y_{n+1}) < delta, wrapping when periodic."""
    pts = tuple(as_point(y) for y in candidate)
    if not pts:
        raise ValueError("empty pseudo-orbit")
    delta = as_fraction(delta)
    if delta <= 0:
        raise ValueError("delta must be positive")
    n = len(pts)
    steps = n if periodic else n - 1
    gaps = []
    for i in range(steps):
        gap = dist(f(pts[i]), pts[(i + 1) % n])
        if gap >= delta:
            return PseudoOrbitRefusal(i, gap, delta)
        gaps.append(gap)
    return PseudoOrbit(pts, delta, n if periodic else 0, tuple(gaps))


@dataclass
class PeriodicOrbit:
    point: tuple
    period: int
    residual: Fraction = Fraction(0)
    width: Fraction = Fraction(0)

    def points(self, f: CompositeMap):
        return tuple(f.evaluate(self.point, self.period - 1))

    def measure(self, f: CompositeMap) -> AtomicMeasure:
        return uniform(self.points(f))

    def to_json(self):
        return {"point": [str(c) for c in self.point], "period": self.period,
                "residual": str(self.residual), "width": str(self.width)}


@dataclass
class PeriodicEnumeration:
    period: int
    orbits: tuple
    non_isolated: bool
    nodes: int
    fixed_points: tuple = field(default_factory=tuple)

    def points(self):
        return self.fixed_points


# Affine itinerary search --------------------------------------------------------


def _identity(m):
    return [[Fraction(int(i == j)) for j in range(m)] for i in range(m)]


def _pull_back(region, A, b, a, c):
    """Clip region to {x : a.(A x + b) >= c}."""
    m = len(b)
    alpha = [sum(a[i] * A[i][j] for i in range(m)) for j in range(m)]
    beta = c - sum(a[i] * b[i] for i in range(m))
    if m == 1:
        lo, hi = region
        if alpha[0] == 0:
            return region if beta <= 0 else None
        bound = beta / alpha[0]
        if alpha[0] > 0:
            lo = max(lo, bound)
        else:
            hi = min(hi, bound)
        return (lo, hi) if lo <= hi else None
    if all(v == 0 for v in alpha):
        return region if beta <= 0 else None
    poly = clip_halfplane(list(region), alpha, beta)
    if not poly:
        return None
    return convex_hull(poly)


def _tube(region, A, b, y, eps):
    m = len(b)
    for i in range(m):
        e = [Fraction(int(i == j)) for j in range(m)]
        region = _pull_back(region, A, b, e, y[i] - eps)
        if region is None:
            return None
        region = _pull_back(region, A, b, [-v for v in e], -y[i] - eps)
        if region is None:
            return None
    return region


def _in_region(x, region):
    if len(x) == 1:
        return region[0] <= x[0] <= region[1]
    return point_in_hull(x, region)


def _fixed_set(A, b, region):
    """Fixed points of x -> A x + b in region: (point or None, non_isolated flag)."""
    m = len(b)
    R = [[Fraction(int(i == j)) - A[i][j] for j in range(m)] for i in range(m)]
    if m == 1:
        if R[0][0] != 0:
            x = (b[0] / R[0][0],)
            return (x, False) if _in_region(x, region) else (None, False)
        return None, b[0] == 0
    det = R[0][0] * R[1][1] - R[0][1] * R[1][0]
    if det != 0:
        x = ((b[0] * R[1][1] - R[0][1] * b[1]) / det, (R[0][0] * b[1] - R[1][0] * b[0]) / det)
        return (x, False) if _in_region(x, region) else (None, False)
    rows = [(R[i], b[i]) for i in range(2) if any(R[i])]
    if not rows:
        return None, all(v == 0 for v in b)
    r, c = rows[0]
    for r2, c2 in rows[1:]:
        if r[0] * r2[1] - r[1] * r2[0] != 0 or r[0] * c2 - r2[0] * c != 0 or r[1] * c2 - r2[1] * c != 0:
            return None, False
    if any(not any(R[i]) and b[i] != 0 for i in range(2)):
        return None, False
    poly = clip_halfplane(list(region), r, c)
    poly = clip_halfplane(poly, [-v for v in r], -c) if poly else poly
    return None, bool(poly)


def _affine_fixed_points(f: CompositeMap, p, budget, tube=None):
    m = f.dim
    layers = f.layers
    L = len(layers)
    if L == 0:
        return [], True, 0
    if m == 1:
        region = (Fraction(0), Fraction(1))
    else:
        region = ((Fraction(0), Fraction(0)), (Fraction(1), Fraction(0)), (Fraction(1), Fraction(1)), (Fraction(0), Fraction(1)))
    planes = [[simplex_halfplanes(piece.domain) for piece in layer.pieces] for layer in layers]
    found, nodes, non_isolated = [], 0, False
    eps = tube[1] if tube else None
    ys = tube[0] if tube else None
    if tube:
        region = _tube(region, _identity(m), [Fraction(0)] * m, ys[0], eps)
        if region is None:
            return [], False, 0
    stack = [(0, region, _identity(m), [Fraction(0)] * m)]
    while stack:
        depth, region, A, b = stack.pop()
        nodes += 1
        if nodes > budget:
            raise BudgetExhausted(f"itinerary search exceeded {budget} nodes")
        if depth == p * L:
            x, flat = _fixed_set(A, b, region)
            non_isolated = non_isolated or flat
            if x is not None and f.iterate(x, p) == x:
                found.append(x)
            continue
        if depth and depth % L == 0 and tube:
            region = _tube(region, A, b, ys[(depth // L) % len(ys)], eps)
            if region is None:
                continue
        layer = layers[depth % L]
        children = []
        for piece, pl in zip(layer.pieces, planes[depth % L]):
            sub = region
            for a, c in pl:
                sub = _pull_back(sub, A, b, a, c)
                if sub is None:
                    break
            if sub is None:
                continue
            M, off = piece.matrix, piece.offset
            A2 = [[sum(M[i][k] * A[k][j] for k in range(m)) for j in range(m)] for i in range(m)]
            b2 = [sum(M[i][k] * b[k] for k in range(m)) + off[i] for i in range(m)]
            children.append((depth + 1, sub, A2, b2))
        stack.extend(reversed(children))
    out, seen = [], set()
    for x in found:
        if x not in seen:
            seen.add(x)
            out.append(x)
    return out, non_isolated, nodes


# Root isolation for one-dimensional composites ---------------------------------


def isolate_periodic_points(f: CompositeMap, p: int, tol=Fraction(1, 2 ** 12), lo=Fraction(0), hi=Fraction(1),
                            max_cells=1 << 16):
    """Merged cells [a, b] of width-tol grid that may contain solutions of f^p(x) = x."""
    if f.dim != 1:
        raise MapError("root isolation is implemented for the interval only")
    tol = as_fraction(tol)
    lo, hi = max(Fraction(0), as_fraction(lo)), min(Fraction(1), as_fraction(hi))
    if lo > hi:
        return []
    lip = f.lipschitz ** p + 1

    def phi(x):
        return round_point(f.iterate((x,), p), ROUND_BITS)[0] - x

    slack = Fraction(2 * p, 2 ** ROUND_BITS) * (f.lipschitz ** p + 1)
    keep, stack, cells = [], [(lo, hi, phi(lo), phi(hi))], 0
    while stack:
        a, b, fa, fb = stack.pop()
        cells += 1
        if cells > max_cells:
            raise BudgetExhausted("root isolation exceeded its cell budget")
        if abs(fa) + abs(fb) > lip * (b - a) + 2 * slack:
            continue
        if b - a <= tol:
            keep.append((a, b))
            continue
        mid = (a + b) / 2
        fm = phi(mid)
        stack.append((mid, b, fm, fb))
        stack.append((a, mid, fa, fm))
    keep.sort()
    merged = []
    for a, b in keep:
        if merged and a <= merged[-1][1]:
            merged[-1] = (merged[-1][0], b)
        else:
            merged.append((a, b))
    return merged


def _radial_candidates(f):
    pts = set()
    for layer in f.layers:
        if layer.kind == "affine":
            for piece in layer.pieces:
                pts.update(v[0] for v in piece.domain.vertices)
        else:
            for T, _ in layer.charts:
                pts.update(v[0] for v in T.vertices)
                pts.add(T.centroid[0])
    return pts


def _radial_fixed_points(f, p, tol, budget, tube=None):
    lo, hi = Fraction(0), Fraction(1)
    if tube:
        y0, eps = tube[0][0][0], tube[1]
        lo, hi = y0 - eps, y0 + eps
    cells = isolate_periodic_points(f, p, tol, lo, hi, max_cells=budget)
    special = sorted(_radial_candidates(f))
    out, non_isolated = [], False
    for a, b in cells:
        exact = None
        cands = [c for c in special if a <= c <= b] + [a, b, (a + b) / 2]
        for c in cands:
            if f.iterate((c,), p) == (c,):
                exact = c
                break
        if b - a > 2 * tol:
            non_isolated = True
        if exact is not None:
            out.append(((exact,), Fraction(0)))
        else:
            out.append((((a + b) / 2,), b - a))
    return out, non_isolated


def _minimal_period(f, x, p, exact):
    for d in range(1, p + 1):
        if p % d:
            continue
        y = f.iterate(x, d)
        if (exact and y == x) or (not exact and d == p):
            return d
    return p


def enumerate_periodic_orbits(f: CompositeMap, p: int, budget=1 << 16, tol=Fraction(1, 2 ** 20),
                              tube=None) -> PeriodicEnumeration:
    """All solutions of f^p(x) = x grouped into orbits, ordered by first itinerary."""
    if p < 1:
        raise ValueError("period must be at least 1")
    if f.is_affine:
        pts, flat, nodes = _affine_fixed_points(f, p, budget, tube)
        approx = [(x, Fraction(0)) for x in pts]
    elif f.dim == 1:
        approx, flat = _radial_fixed_points(f, p, tol, budget, tube)
        nodes = len(approx)
    else:
        raise MapError("periodic points of radial composites on the square are not enumerated")
    orbits, covered = [], set()
    for x, width in approx:
        if width == 0:
            d = _minimal_period(f, x, p, True)
            if tube is None and x in covered:
                continue
            orb = f.evaluate(x, d - 1)
            covered.update(orb)
            orbits.append(PeriodicOrbit(x, d, Fraction(0)))
        else:
            if tube is None and any(abs(x[0] - c[0]) <= width for c in covered):
                continue
            y = round_point(f.iterate(x, p), ROUND_BITS)
            orbits.append(PeriodicOrbit(x, p, dist(x, y), width))
            covered.update(round_point(z, ROUND_BITS) for z in f.evaluate(x, p - 1))
    return PeriodicEnumeration(p, tuple(orbits), flat, nodes, tuple(x for x, _ in approx))


def count_fixed_points(f: CompositeMap, p: int, budget=1 << 16) -> int:
    return len(enumerate_periodic_orbits(f, p, budget).fixed_points)


# Shadowing ----------------------------------------------------------------------


@dataclass
class ShadowResult:
    status: str  # "found", "not-found" or "budget"
    orbit: PeriodicOrbit | None
    distance: Fraction | None
    bound: Fraction | None
    checked: dict

    def to_json(self):
        return {"status": self.status, "orbit": None if self.orbit is None else self.orbit.to_json(),
                "distance": None if self.distance is None else str(self.distance),
                "bound": None if self.bound is None else str(self.bound),
                "checked": {str(k): v for k, v in self.checked.items()}}


def _sup_distance(f, x, ys, period):
    p0 = len(ys)
    span = period * p0 // gcd(period, p0)
    best = Fraction(0)
    z = x
    for n in range(span):
        best = max(best, dist(z, ys[n % p0]))
        z = f(z)
    return best


def shadow_periodic_pseudo_orbit(f: CompositeMap, po: PseudoOrbit, eps, max_multiple=4, budget=1 << 16,
                                 tol=Fraction(1, 2 ** 20)) -> ShadowResult:
    """Periodic orbit staying within eps of the periodic pseudo-orbit at every step."""
    eps = as_fraction(eps)
    if po.period < 1:
        raise ValueError("pseudo-orbit must be periodic")
    ys = po.points
    checked = {}
    lip = f.lipschitz
    for mult in range(1, max_multiple + 1):
        P = po.period * mult
        best = None
        y0 = ys[0]
        cands = []
        if f.iterate(y0, P) == y0:
            cands.append(PeriodicOrbit(y0, _minimal_period(f, y0, P, True)))
        try:
            found = enumerate_periodic_orbits(f, P, budget, tol, tube=(ys, eps))
        except BudgetExhausted:
            return ShadowResult("budget", None, None, None, checked)
        cands.extend(found.orbits)
        checked[P] = len(cands)
        for orb in cands:
            d = _sup_distance(f, orb.point, ys, orb.period)
            span = orb.period * len(ys) // gcd(orb.period, len(ys))
            slack = orb.width * max(Fraction(1), lip) ** span + orb.residual
            bound = d + slack
            if bound < eps and (best is None or bound < best[2]):
                best = (orb, d, bound)
        if best is not None:
            return ShadowResult("found", best[0], best[1], best[2], checked)
    return ShadowResult("not-found", None, None, None, checked)


# Ergodic measures approximated by periodic ones --------------------------------


@dataclass
class ErgodicApproximation:
    nu: AtomicMeasure
    bound: MetricResult
    eps0: Fraction
    eps: Fraction
    delta: Fraction
    start: int
    recurrence: int
    pseudo_orbit: PseudoOrbit
    shadow: ShadowResult

    @property
    def meets_thresholds(self) -> bool:
        return self.shadow.bound < self.eps and max(self.pseudo_orbit.gaps) < self.delta

    def to_json(self):
        return {"nu": self.nu.to_json(), "bound": self.bound.to_json(), "eps0": str(self.eps0),
                "eps": str(self.eps), "delta": str(self.delta), "start": self.start,
                "recurrence": self.recurrence, "pseudo_orbit": self.pseudo_orbit.to_json(),
                "shadow_orbit": self.shadow.to_json()}


class NoRecurrence(RuntimeError):
    pass


class ShadowNotFound(RuntimeError):
    pass


def shadow_thresholds(eps0, dim=1):
    """(n, eps, delta) for the chain eps0 -> eps -> delta."""
    eps0 = as_fraction(eps0)
    n = 1
    while Fraction(1, 2 ** n) >= eps0 / 2:
        n += 1
    fns = family(dim).functions(n)
    weight = sum((psi.lipschitz / 2 ** (i + 1) for i, psi in enumerate(fns)), Fraction(0))
    weight = max(weight, Fraction(1, 2 ** n))
    eps = eps0 / (2 * weight)
    return n, eps, eps / 4


def ergodic_to_periodic_measure(f: CompositeMap, x, eps0, horizon=1000, depth=DEFAULT_DEPTH,
                                precision=ROUND_BITS, max_multiple=4, budget=1 << 16) -> ErgodicApproximation:
    """Close a recurrent orbit segment into a periodic pseudo-orbit and shadow it."""
    eps0 = as_fraction(eps0)
    _, eps, delta = shadow_thresholds(eps0, f.dim)
    orbit = [as_point(x)]
    rounding = None if f.is_affine else precision
    found = None
    for t in range(1, horizon + 1):
        y = f(orbit[-1])
        if rounding:
            y = round_point(y, rounding)
        orbit.append(y)
        for a in range(t):
            if dist(y, orbit[a]) < delta:
                found = (a, t)
                break
        if found:
            break
    if found is None:
        raise NoRecurrence(f"no return closer than {delta} within {horizon} steps")
    a, t = found
    segment = orbit[a:t]
    po = validate_pseudo_orbit(f, segment, delta)
    if isinstance(po, PseudoOrbitRefusal):
        raise NoRecurrence(f"rounded orbit segment is not a {delta}-pseudo-orbit")
    res = shadow_periodic_pseudo_orbit(f, po, eps, max_multiple, budget)
    if res.status != "found":
        raise ShadowNotFound(f"shadowing {res.status} for period {po.period}")
    nu = res.orbit.measure(f)
    emp = uniform(segment)
    bound = weakstar_distance(nu, emp, depth)
    if bound.hi >= 2 * eps0:
        raise AssertionError("approximation bound exceeds twice eps0")
    return ErgodicApproximation(nu, bound, eps0, eps, delta, a, t, po, res)
