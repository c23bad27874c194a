"""Simplexes, triangulations and radial charts on M = [0,1] or [0,1]^2.

All coordinates are exact ``Fraction`` values and distances use the max-norm.
Convex polytopes that are not simplexes (images of simplexes, clipped
regions) are handled as "hulls": tuples of vertices in convex position.
"""

from __future__ import annotations

import json
from fractions import Fraction
from itertools import combinations, product
from math import factorial


class GeometryError(ValueError):
    pass


def as_fraction(v) -> Fraction:
    if isinstance(v, Fraction):
        return v
    if isinstance(v, str):
        return Fraction(v.strip())
    return Fraction(v)


def as_point(x) -> tuple:
    if isinstance(x, (tuple, list)):
        return tuple(as_fraction(c) for c in x)
    return (as_fraction(x),)


def dist(a, b) -> Fraction:
    return max(abs(p - q) for p, q in zip(a, b))


def in_unit_cube(x) -> bool:
    return all(0 <= c <= 1 for c in x)


def _det(rows):
    if len(rows) == 1:
        return rows[0][0]
    if len(rows) == 2:
        return rows[0][0] * rows[1][1] - rows[0][1] * rows[1][0]
    raise GeometryError("only dimensions 1 and 2 are supported")


def inverse_matrix(rows):
    d = _det(rows)
    if d == 0:
        raise GeometryError("singular matrix")
    if len(rows) == 1:
        return ((1 / d,),)
    (a, b), (c, e) = rows
    return ((e / d, -b / d), (-c / d, a / d))


def mat_vec(rows, v):
    return tuple(sum((r[j] * v[j] for j in range(len(v))), Fraction(0)) for r in rows)


def _sub(a, b):
    return tuple(p - q for p, q in zip(a, b))


def _add(a, b):
    return tuple(p + q for p, q in zip(a, b))


def _scale(t, a):
    return tuple(t * p for p in a)


class Simplex:
    """Closed m-simplex with a chosen centroid.

    The centroid must lie in the closed simplex with positive barycentric
    weight on every facet that is not contained in the boundary of M.  The
    default centroid is the barycenter.
    """

    __slots__ = ("vertices", "centroid", "_inv", "_gamma", "_on_boundary")

    def __init__(self, vertices, centroid=None):
        verts = tuple(as_point(v) for v in vertices)
        if not verts:
            raise GeometryError("empty simplex")
        m = len(verts[0])
        if m not in (1, 2) or len(verts) != m + 1 or any(len(v) != m for v in verts):
            raise GeometryError("a simplex in dimension m needs m+1 vertices of length m")
        edges = [_sub(v, verts[0]) for v in verts[1:]]
        cols = tuple(tuple(edges[j][i] for j in range(m)) for i in range(m))
        if _det(cols) == 0:
            raise GeometryError("degenerate simplex")
        self.vertices = verts
        self._inv = inverse_matrix(cols)
        self._on_boundary = tuple(self._facet_on_boundary(k) for k in range(m + 1))
        if centroid is None:
            c = tuple(sum(v[i] for v in verts) / (m + 1) for i in range(m))
        else:
            c = as_point(centroid)
        gamma = self.barycentric(c)
        for k, g in enumerate(gamma):
            if g < 0 or (g == 0 and not self._on_boundary[k]):
                raise GeometryError("centroid must lie in the relative interior")
        self.centroid = c
        self._gamma = gamma

    @property
    def dim(self) -> int:
        return len(self.vertices[0])

    def _facet_on_boundary(self, k) -> bool:
        facet = [v for j, v in enumerate(self.vertices) if j != k]
        for d in range(self.dim):
            vals = {v[d] for v in facet}
            if vals == {Fraction(0)} or vals == {Fraction(1)}:
                return True
        return False

    def facet_on_boundary(self, k) -> bool:
        return self._on_boundary[k]

    def facet(self, k):
        return tuple(v for j, v in enumerate(self.vertices) if j != k)

    def barycentric(self, x):
        lam = mat_vec(self._inv, _sub(as_point(x), self.vertices[0]))
        return (1 - sum(lam),) + lam

    @property
    def gamma(self):
        return self._gamma

    def contains(self, x) -> bool:
        return all(b >= 0 for b in self.barycentric(x))

    def in_open(self, x) -> bool:
        """Membership in the simplex interior taken relative to M."""
        for k, b in enumerate(self.barycentric(x)):
            if b < 0 or (b == 0 and not self._on_boundary[k]):
                return False
        return True

    def volume(self) -> Fraction:
        edges = [_sub(v, self.vertices[0]) for v in self.vertices[1:]]
        return abs(_det(edges)) / factorial(self.dim)

    def diameter(self) -> Fraction:
        return max(dist(a, b) for a, b in combinations(self.vertices, 2))

    def point_from_barycentric(self, beta):
        m = self.dim
        return tuple(sum(beta[j] * self.vertices[j][i] for j in range(m + 1)) for i in range(m))

    def gradient_l1(self, k) -> Fraction:
        """L1 norm of the gradient of the k-th barycentric coordinate."""
        if k == 0:
            return sum(abs(sum(self._inv[r][i] for r in range(self.dim))) for i in range(self.dim))
        return sum(abs(c) for c in self._inv[k - 1])

    def gauge(self, x):
        """Normalized radial coordinate s and the facet realising it."""
        beta = self.barycentric(x)
        best = None
        for k, g in enumerate(self._gamma):
            if g > 0:
                val = 1 - beta[k] / g
                if best is None or val > best[0]:
                    best = (val, k)
        return best

    def hull(self):
        return convex_hull(self.vertices)

    def __eq__(self, other):
        return isinstance(other, Simplex) and self.vertices == other.vertices and self.centroid == other.centroid

    def __hash__(self):
        return hash((self.vertices, self.centroid))

    def __repr__(self):
        vs = ", ".join("(" + ", ".join(str(c) for c in v) + ")" for v in self.vertices)
        return f"Simplex([{vs}], centroid=({', '.join(str(c) for c in self.centroid)}))"

    def to_json(self):
        return {"vertices": [[str(c) for c in v] for v in self.vertices],
                "centroid": [str(c) for c in self.centroid]}

    @classmethod
    def from_json(cls, data):
        return cls(data["vertices"], data.get("centroid"))


def interval(a, b, centroid=None) -> Simplex:
    return Simplex([(a,), (b,)], None if centroid is None else (centroid,))


def scale_simplex(T: Simplex, lam) -> Simplex:
    lam = as_fraction(lam)
    if lam <= 0:
        raise GeometryError("scale factor must be positive")
    c = T.centroid
    verts = [_add(c, _scale(lam, _sub(v, c))) for v in T.vertices]
    if not all(in_unit_cube(v) for v in verts):
        raise GeometryError("scaled simplex leaves M")
    return Simplex(verts, c)


def simplex_diameter(T: Simplex) -> Fraction:
    return T.diameter()


def ball_simplex(x, eta) -> Simplex:
    """Simplex with centroid x playing the role of a small ball of radius eta.

    In dimension 1 this is [x - eta, x + eta] cut to M (one-sided at the
    boundary).  In dimension 2 it is a triangle of diameter 3 eta with
    barycenter x, which must fit inside M.
    """
    x = as_point(x)
    eta = as_fraction(eta)
    if eta <= 0:
        raise GeometryError("radius must be positive")
    if len(x) == 1:
        a, b = max(Fraction(0), x[0] - eta), min(Fraction(1), x[0] + eta)
        return Simplex([(a,), (b,)], x)
    verts = [(x[0] + eta * u, x[1] + eta * v) for u, v in ((-1, -1), (2, -1), (-1, 2))]
    if not all(in_unit_cube(v) for v in verts):
        raise GeometryError("ball leaves M")
    return Simplex(verts, x)


class RadialChart:
    """Normalized radial coordinates (s, theta) on a simplex about its centroid.

    theta is (facet id, barycentric coordinates of the boundary point on that
    facet); s is 0 at the centroid and 1 on the facets that carry the chart.
    """

    def __init__(self, base: Simplex):
        self.base = base

    def coordinates(self, x):
        x = as_point(x)
        T = self.base
        if not T.contains(x):
            raise GeometryError("point outside the simplex")
        s, k = T.gauge(x)
        if s == 0:
            return Fraction(0), None
        beta = T.barycentric(x)
        g = T.gamma
        b = tuple(g[j] + (beta[j] - g[j]) / s for j in range(len(beta)))
        return s, (k, tuple(b[j] for j in range(len(b)) if j != k))

    def boundary_point(self, theta):
        k, coords = theta
        beta = list(coords)
        beta.insert(k, Fraction(0))
        return self.base.point_from_barycentric(beta)

    def radius(self, theta) -> Fraction:
        return dist(self.boundary_point(theta), self.base.centroid)

    def point(self, s, theta):
        c = self.base.centroid
        if theta is None:
            return c
        b = self.boundary_point(theta)
        return _add(c, _scale(as_fraction(s), _sub(b, c)))

    def radius_ratio(self) -> Fraction:
        """Max distance from the centroid to a vertex over the distance to the nearest charted facet line."""
        T = self.base
        rmax = max(dist(v, T.centroid) for v in T.vertices)
        rmin = min(g / T.gradient_l1(k) for k, g in enumerate(T.gamma) if g > 0)
        return rmax / rmin


def radial_coordinates(chart: RadialChart, x):
    return chart.coordinates(x)


class Triangulation:
    def __init__(self, simplexes):
        self.simplexes = tuple(simplexes)
        if not self.simplexes:
            raise GeometryError("empty triangulation")
        self.dimension = self.simplexes[0].dim

    @property
    def mesh(self) -> Fraction:
        return max(T.diameter() for T in self.simplexes)

    def __len__(self):
        return len(self.simplexes)

    def __iter__(self):
        return iter(self.simplexes)

    def __getitem__(self, i):
        return self.simplexes[i]

    def locate(self, x):
        x = as_point(x)
        for i, T in enumerate(self.simplexes):
            if T.contains(x):
                return i
        raise GeometryError("point outside the triangulation")

    def validate(self):
        if lebesgue_of_union(self.simplexes) != 1:
            raise GeometryError("simplexes do not cover M")
        return True

    def skeleton_contains(self, x) -> bool:
        x = as_point(x)
        return any(_on_any_facet(T, x) for T in self.simplexes)

    def to_json(self):
        return {"dimension": self.dimension,
                "simplexes": [[[str(c) for c in v] for v in T.vertices] for T in self.simplexes],
                "centroids": [[str(c) for c in T.centroid] for T in self.simplexes]}

    @classmethod
    def from_json(cls, data):
        if isinstance(data, str):
            data = json.loads(data)
        tri = cls(Simplex(v, c) for v, c in zip(data["simplexes"], data["centroids"]))
        tri.validate()
        return tri


def _on_any_facet(T, x):
    return T.contains(x) and any(b == 0 for b in T.barycentric(x))


def triangulate_mesh(dimension, max_diam) -> Triangulation:
    """Uniform dyadic triangulation with mesh strictly below max_diam."""
    max_diam = as_fraction(max_diam)
    if max_diam <= 0:
        raise GeometryError("max_diam must be positive")
    if dimension not in (1, 2):
        raise GeometryError("dimension must be 1 or 2")
    n = 1
    while Fraction(1, n) >= max_diam:
        n *= 2
    h = Fraction(1, n)
    if dimension == 1:
        return Triangulation(interval(i * h, (i + 1) * h) for i in range(n))
    simplexes = []
    for j, i in product(range(n), range(n)):
        a, b = i * h, j * h
        simplexes.append(Simplex([(a, b), (a + h, b), (a + h, b + h)]))
        simplexes.append(Simplex([(a, b), (a + h, b + h), (a, b + h)]))
    return Triangulation(simplexes)


# Convex hull utilities ----------------------------------------------------


def _cross(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull(points) -> tuple:
    pts = sorted(set(as_point(p) for p in points))
    if not pts:
        raise GeometryError("empty point set")
    if len(pts[0]) == 1:
        return (pts[0],) if pts[0] == pts[-1] else (pts[0], pts[-1])
    if len(pts) <= 2:
        return tuple(pts)
    lower, upper = [], []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    for p in reversed(pts):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return tuple(lower[:-1] + upper[:-1])


def hull_bbox(hulls):
    pts = [p for h in hulls for p in h]
    m = len(pts[0])
    return tuple(min(p[i] for p in pts) for i in range(m)), tuple(max(p[i] for p in pts) for i in range(m))


def hulls_diameter(hulls) -> Fraction:
    lo, hi = hull_bbox(hulls)
    return max(b - a for a, b in zip(lo, hi))


def _axes(h):
    axes = []
    if len(h) >= 2:
        for i in range(len(h)):
            a, b = h[i], h[(i + 1) % len(h)]
            if a != b:
                axes.append((b[1] - a[1], a[0] - b[0]))
    return axes


def hulls_disjoint(h1, h2) -> bool:
    """Closed convex hulls are disjoint (strict separating axis exists)."""
    if len(h1[0]) == 1:
        a1, b1 = h1[0][0], h1[-1][0]
        a2, b2 = h2[0][0], h2[-1][0]
        return b1 < a2 or b2 < a1
    axes = [(Fraction(1), Fraction(0)), (Fraction(0), Fraction(1))] + _axes(h1) + _axes(h2)
    for ax in axes:
        p1 = [ax[0] * p[0] + ax[1] * p[1] for p in h1]
        p2 = [ax[0] * p[0] + ax[1] * p[1] for p in h2]
        if max(p1) < min(p2) or max(p2) < min(p1):
            return True
    return False


def interiors_disjoint(h1, h2) -> bool:
    if len(h1[0]) == 1:
        a1, b1 = h1[0][0], h1[-1][0]
        a2, b2 = h2[0][0], h2[-1][0]
        return b1 <= a2 or b2 <= a1
    for ax in _axes(h1) + _axes(h2):
        p1 = [ax[0] * p[0] + ax[1] * p[1] for p in h1]
        p2 = [ax[0] * p[0] + ax[1] * p[1] for p in h2]
        if max(p1) <= min(p2) or max(p2) <= min(p1):
            return True
    return False


def point_in_hull(x, h) -> bool:
    x = as_point(x)
    if len(x) == 1:
        return h[0][0] <= x[0] <= h[-1][0]
    if len(h) == 1:
        return x == h[0]
    if len(h) == 2:
        return _cross(h[0], h[1], x) == 0 and dist_point_segment(x, h[0], h[1]) == 0
    return all(_cross(h[i], h[(i + 1) % len(h)], x) >= 0 for i in range(len(h)))


def dist_point_segment(x, a, b) -> Fraction:
    u = _sub(a, x)
    d = _sub(b, a)
    ts = {Fraction(0), Fraction(1)}
    for i in range(len(u)):
        if d[i] != 0:
            ts.add(-u[i] / d[i])
    if len(u) == 2:
        for sgn in (1, -1):
            den = d[0] - sgn * d[1]
            if den != 0:
                ts.add((sgn * u[1] - u[0]) / den)
    best = None
    for t in ts:
        if 0 <= t <= 1:
            val = max(abs(u[i] + t * d[i]) for i in range(len(u)))
            if best is None or val < best:
                best = val
    return best


def dist_point_hull(x, h) -> Fraction:
    x = as_point(x)
    if point_in_hull(x, h):
        return Fraction(0)
    if len(x) == 1:
        return min(abs(x[0] - h[0][0]), abs(x[0] - h[-1][0]))
    if len(h) == 1:
        return dist(x, h[0])
    return min(dist_point_segment(x, h[i], h[(i + 1) % len(h)]) for i in range(len(h)))


def dist_point_hulls(x, hulls) -> Fraction:
    return min(dist_point_hull(x, h) for h in hulls)


def dist_to_complement(x, T: Simplex) -> Fraction:
    """Distance from x to M minus the relative interior of T."""
    x = as_point(x)
    if not T.in_open(x):
        return Fraction(0)
    best = None
    for k in range(T.dim + 1):
        if T.facet_on_boundary(k):
            continue
        f = T.facet(k)
        d = dist(x, f[0]) if len(f) == 1 else dist_point_segment(x, f[0], f[1])
        if best is None or d < best:
            best = d
    return best if best is not None else Fraction(1)


def hull_in_open_simplex(h, T: Simplex):
    """Whether a convex hull lies in the relative interior of T, with a barycentric margin."""
    margin = None
    for v in h:
        beta = T.barycentric(v)
        for k, b in enumerate(beta):
            if T.facet_on_boundary(k):
                if b < 0:
                    return False, b
                continue
            if margin is None or b < margin:
                margin = b
    if margin is None:
        return True, Fraction(1)
    return margin > 0, margin


def clip_halfplane(poly, a, b):
    """Clip a convex 2D polygon (CCW vertex list) to {x : a.x >= b}."""
    out = []
    n = len(poly)
    for i in range(n):
        p, q = poly[i], poly[(i + 1) % n]
        fp = a[0] * p[0] + a[1] * p[1] - b
        fq = a[0] * q[0] + a[1] * q[1] - b
        if fp >= 0:
            out.append(p)
        if (fp > 0 and fq < 0) or (fp < 0 and fq > 0):
            t = fp / (fp - fq)
            out.append((p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])))
    return out


def simplex_halfplanes(T: Simplex):
    """Barycentric constraints beta_k >= 0 written as (a, b) with a.x >= b."""
    inv = T._inv
    v0 = T.vertices[0]
    m = T.dim
    planes = []
    total = tuple(sum(inv[r][i] for r in range(m)) for i in range(m))
    a = tuple(-c for c in total)
    planes.append((a, -1 + sum(a[i] * v0[i] for i in range(m))))
    for k in range(m):
        a = tuple(inv[k])
        planes.append((a, sum(a[i] * v0[i] for i in range(m))))
    return planes


def clip_hull_to_simplex(h, T: Simplex):
    """Intersection of a convex hull with a closed simplex, as a hull or None."""
    if len(h[0]) == 1:
        a, b = T.vertices[0][0], T.vertices[1][0]
        lo, hi = max(h[0][0], min(a, b)), min(h[-1][0], max(a, b))
        if lo > hi:
            return None
        return convex_hull([(lo,), (hi,)])
    if len(h) == 1:
        return h if T.contains(h[0]) else None
    if len(h) == 2:
        p, q = h
        bp, bq = T.barycentric(p), T.barycentric(q)
        t0, t1 = Fraction(0), Fraction(1)
        for u, w in zip(bp, bq):
            d = w - u
            if d == 0:
                if u < 0:
                    return None
            elif d > 0:
                t0 = max(t0, -u / d)
            else:
                t1 = min(t1, -u / d)
        if t0 > t1:
            return None
        return convex_hull([_add(p, _scale(t, _sub(q, p))) for t in (t0, t1)])
    poly = list(h)
    for k in range(3):
        poly = _clip_bary(poly, T, k)
        if not poly:
            return None
    return convex_hull(poly)


def _clip_bary(poly, T, k):
    out = []
    n = len(poly)
    vals = [T.barycentric(p)[k] for p in poly]
    for i in range(n):
        p, q = poly[i], poly[(i + 1) % n]
        fp, fq = vals[i], vals[(i + 1) % n]
        if fp >= 0:
            out.append(p)
        if (fp > 0 and fq < 0) or (fp < 0 and fq > 0):
            t = fp / (fp - fq)
            out.append((p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])))
    return out


def hull_volume(h) -> Fraction:
    if len(h[0]) == 1:
        return h[-1][0] - h[0][0]
    if len(h) < 3:
        return Fraction(0)
    s = Fraction(0)
    for i in range(len(h)):
        p, q = h[i], h[(i + 1) % len(h)]
        s += p[0] * q[1] - q[0] * p[1]
    return abs(s) / 2


def lebesgue_of_union(sets) -> Fraction:
    sets = list(sets)
    hulls = [T.hull() for T in sets]
    for i, j in combinations(range(len(hulls)), 2):
        if not interiors_disjoint(hulls[i], hulls[j]):
            raise GeometryError(f"simplexes {i} and {j} have overlapping interiors")
    return sum((T.volume() for T in sets), Fraction(0))


def round_outward(hull, bits):
    """Replace a hull by a dyadic box containing it when coordinates get large."""
    scale = 1 << bits
    if all(c.denominator <= scale for p in hull for c in p):
        return hull
    lo, hi = hull_bbox([hull])
    lo = tuple(max(Fraction(0), Fraction((c * scale).__floor__(), scale)) for c in lo)
    hi = tuple(min(Fraction(1), Fraction((c * scale).__ceil__(), scale)) for c in hi)
    if len(lo) == 1:
        return convex_hull([lo, hi])
    return convex_hull([lo, (hi[0], lo[1]), hi, (lo[0], hi[1])])


def round_point(x, bits):
    scale = 1 << bits
    return tuple(Fraction(round(c * scale), scale) for c in x)
