"""Self-maps of M built from piecewise-affine and radial-contraction layers."""

from __future__ import annotations

import bisect
import heapq
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import product

from .geometry import (
    GeometryError,
    RadialChart,
    Simplex,
    as_fraction,
    as_point,
    clip_halfplane,
    clip_hull_to_simplex,
    convex_hull,
    dist,
    hull_bbox,
    hulls_diameter,
    in_unit_cube,
    interiors_disjoint,
    interval,
    round_outward,
    round_point,
)

ROUND_BITS = 96


class MapError(ValueError):
    pass


class BudgetExhausted(RuntimeError):
    pass


def _affine(matrix, offset, x):
    return tuple(sum((row[j] * x[j] for j in range(len(x))), Fraction(0)) + offset[i]
                 for i, row in enumerate(matrix))


class AffinePiece:
    __slots__ = ("domain", "matrix", "offset")

    def __init__(self, domain: Simplex, matrix, offset):
        self.domain = domain
        self.matrix = tuple(tuple(as_fraction(c) for c in row) for row in matrix)
        self.offset = tuple(as_fraction(c) for c in offset)
        for v in domain.vertices:
            if not in_unit_cube(self.apply(v)):
                raise MapError("affine piece maps its domain outside M")

    def apply(self, x):
        return _affine(self.matrix, self.offset, x)

    def row_sum_norm(self) -> Fraction:
        return max(sum(abs(c) for c in row) for row in self.matrix)

    def __eq__(self, other):
        return (isinstance(other, AffinePiece) and self.domain == other.domain
                and self.matrix == other.matrix and self.offset == other.offset)

    def __hash__(self):
        return hash((self.domain, self.matrix, self.offset))

    @classmethod
    def from_vertex_images(cls, domain: Simplex, images):
        """Affine piece sending the vertices of domain to the given points."""
        images = [as_point(p) for p in images]
        m = domain.dim
        v0, w0 = domain.vertices[0], images[0]
        inv = domain._inv
        dw = [tuple(images[j + 1][i] - w0[i] for i in range(m)) for j in range(m)]
        # x -> w0 + sum_j lam_j(x) dw_j with lam = inv (x - v0)
        matrix = tuple(tuple(sum(dw[j][i] * inv[j][k] for j in range(m)) for k in range(m)) for i in range(m))
        offset = tuple(w0[i] - sum(matrix[i][k] * v0[k] for k in range(m)) for i in range(m))
        return cls(domain, matrix, offset)


class PiecewiseAffineLayer:
    kind = "affine"

    def __init__(self, pieces, inverse: "PiecewiseAffineLayer | None" = None, check=True):
        self.pieces = tuple(pieces)
        if not self.pieces:
            raise MapError("empty affine layer")
        self.dim = self.pieces[0].domain.dim
        self.inverse = inverse
        self._lefts = None
        if self.dim == 1:
            order = sorted(range(len(self.pieces)), key=lambda i: min(v[0] for v in self.pieces[i].domain.vertices))
            self._order = order
            self._lefts = [min(v[0] for v in self.pieces[i].domain.vertices) for i in order]
        if check:
            self._check_continuity()

    def _check_continuity(self):
        seen = {}
        for p in self.pieces:
            for v in p.domain.vertices:
                img = p.apply(v)
                if seen.setdefault(v, img) != img:
                    raise MapError("affine pieces disagree on a shared vertex")

    def locate(self, x):
        if self.dim == 1:
            i = bisect.bisect_right(self._lefts, x[0]) - 1
            for j in (i, i - 1):
                if 0 <= j < len(self._order):
                    p = self.pieces[self._order[j]]
                    if p.domain.contains(x):
                        return p
        else:
            for p in self.pieces:
                if p.domain.contains(x):
                    return p
        raise MapError("point outside the layer domain")

    def __call__(self, x):
        return self.locate(x).apply(x)

    def lipschitz(self) -> Fraction:
        return max(p.row_sum_norm() for p in self.pieces)

    @property
    def invertible(self) -> bool:
        return self.inverse is not None

    def rational_inverse(self):
        return self.inverse

    def __eq__(self, other):
        return isinstance(other, PiecewiseAffineLayer) and self.pieces == other.pieces

    def __hash__(self):
        return hash(self.pieces)

    def to_json(self):
        data = {"pieces": [{"domain": p.domain.to_json(),
                            "matrix": [[str(c) for c in row] for row in p.matrix],
                            "offset": [str(c) for c in p.offset]} for p in self.pieces]}
        if self.inverse is not None:
            data["inverse"] = self.inverse.to_json()
        return {"kind": self.kind, "data": data}

    @classmethod
    def from_json(cls, data):
        pieces = [AffinePiece(Simplex.from_json(p["domain"]), p["matrix"], p["offset"]) for p in data["pieces"]]
        inv = cls.from_json(data["inverse"]["data"]) if "inverse" in data else None
        return cls(pieces, inv)


class RadialContractionLayer:
    """h(s, theta) = (s^n, theta) on each chart, identity elsewhere."""

    kind = "radial"

    def __init__(self, charts):
        self.charts = tuple((T, int(n)) for T, n in charts)
        if not self.charts:
            raise MapError("radial layer needs at least one chart")
        for _, n in self.charts:
            if n < 1:
                raise MapError("exponent must be at least 1")
        self.dim = self.charts[0][0].dim
        hulls = [T.hull() for T, _ in self.charts]
        if self.dim == 1:
            order = sorted(range(len(self.charts)), key=lambda i: hulls[i][0][0])
            for a, b in zip(order, order[1:]):
                if hulls[a][-1][0] > hulls[b][0][0]:
                    raise MapError("chart interiors overlap")
            self._order = order
            self._lefts = [hulls[i][0][0] for i in order]
        else:
            for i in range(len(hulls)):
                for j in range(i + 1, len(hulls)):
                    if not interiors_disjoint(hulls[i], hulls[j]):
                        raise MapError("chart interiors overlap")
        self.covers = sum((T.volume() for T, _ in self.charts), Fraction(0)) == 1

    def locate(self, x):
        if self.dim == 1:
            i = bisect.bisect_right(self._lefts, x[0]) - 1
            for j in (i, i - 1):
                if 0 <= j < len(self._order):
                    T, n = self.charts[self._order[j]]
                    if T.contains(x):
                        return T, n
            return None
        for T, n in self.charts:
            if T.contains(x):
                return T, n
        return None

    def __call__(self, x):
        hit = self.locate(x)
        if hit is None:
            return x
        T, n = hit
        if n == 1:
            return x
        s, _ = T.gauge(x)
        if s == 0:
            return x
        c = T.centroid
        f = s ** (n - 1)
        return tuple(c[i] + f * (x[i] - c[i]) for i in range(len(x)))

    def lipschitz(self) -> Fraction:
        best = Fraction(1)
        for T, n in self.charts:
            if self.dim == 1:
                lip = Fraction(n)
            else:
                lip = 1 + (n - 1) * RadialChart(T).radius_ratio()
            best = max(best, lip)
        return best

    @property
    def invertible(self) -> bool:
        return True

    def rational_inverse(self):
        if all(n == 1 for _, n in self.charts):
            return self
        return None

    def __eq__(self, other):
        return isinstance(other, RadialContractionLayer) and self.charts == other.charts

    def __hash__(self):
        return hash(self.charts)

    def to_json(self):
        return {"kind": self.kind,
                "data": {"charts": [{"simplex": T.to_json(), "exponent": n} for T, n in self.charts]}}

    @classmethod
    def from_json(cls, data):
        return cls([(Simplex.from_json(c["simplex"]), c["exponent"]) for c in data["charts"]])


class CompositeMap:
    """Layers applied left to right; ``lipschitz`` is a certified upper bound."""

    def __init__(self, layers=(), dim=None, lipschitz=None, name=None):
        self.layers = tuple(layers)
        if dim is None:
            if not self.layers:
                raise MapError("dimension required for an empty composite")
            dim = self.layers[0].dim
        self.dim = dim
        if any(layer.dim != dim for layer in self.layers):
            raise MapError("layer dimensions differ")
        bound = Fraction(1)
        for layer in self.layers:
            bound *= layer.lipschitz()
        if lipschitz is not None:
            lipschitz = as_fraction(lipschitz)
            if lipschitz < bound:
                raise MapError("declared Lipschitz constant is below the layer product")
            bound = lipschitz
        self.lipschitz = bound
        self.name = name

    def __call__(self, x):
        x = as_point(x)
        for layer in self.layers:
            x = layer(x)
        return x

    def evaluate(self, x, iterates=1, precision=None):
        x = as_point(x)
        orbit = [x]
        for _ in range(iterates):
            x = self(x)
            if precision is not None:
                x = round_point(x, precision)
            orbit.append(x)
        return orbit

    def iterate(self, x, n):
        x = as_point(x)
        for _ in range(n):
            x = self(x)
        return x

    @property
    def invertible(self) -> bool:
        return all(layer.invertible for layer in self.layers)

    @property
    def is_affine(self) -> bool:
        return all(layer.kind == "affine" for layer in self.layers)

    def rational_inverse(self):
        inv = []
        for layer in reversed(self.layers):
            r = layer.rational_inverse()
            if r is None:
                return None
            inv.append(r)
        return CompositeMap(inv, dim=self.dim)

    def __eq__(self, other):
        return isinstance(other, CompositeMap) and self.dim == other.dim and self.layers == other.layers

    def __hash__(self):
        return hash((self.dim, self.layers))

    def to_json(self):
        return {"dimension": self.dim, "layers": [layer.to_json() for layer in self.layers],
                "lipschitz": str(self.lipschitz)}

    @classmethod
    def from_json(cls, data):
        if isinstance(data, str):
            data = json.loads(data)
        layers = []
        for item in data["layers"]:
            if item["kind"] == "affine":
                layers.append(PiecewiseAffineLayer.from_json(item["data"]))
            elif item["kind"] == "radial":
                layers.append(RadialContractionLayer.from_json(item["data"]))
            else:
                raise MapError(f"unknown layer kind {item['kind']!r}")
        return cls(layers, dim=data.get("dimension"), lipschitz=data.get("lipschitz"))


def lipschitz_bound(f: CompositeMap) -> Fraction:
    return f.lipschitz


def evaluate(f: CompositeMap, x, iterates=1):
    return f.evaluate(x, iterates)


def compose(f: CompositeMap, g: CompositeMap) -> CompositeMap:
    """f after g."""
    if f.dim != g.dim:
        raise MapError("dimension mismatch")
    return CompositeMap(g.layers + f.layers, dim=f.dim)


def identity(dim=1) -> CompositeMap:
    return CompositeMap((), dim=dim, name="identity")


def interpolating_layer(nodes, values, invert=True) -> PiecewiseAffineLayer:
    """Continuous piecewise-affine interval map through (nodes[i], values[i])."""
    nodes = [as_fraction(v) for v in nodes]
    values = [as_fraction(v) for v in values]
    pieces = []
    for a, b, fa, fb in zip(nodes, nodes[1:], values, values[1:]):
        slope = (fb - fa) / (b - a)
        pieces.append(AffinePiece(interval(a, b), [[slope]], [fa - slope * a]))
    inverse = None
    slopes = [p.matrix[0][0] for p in pieces]
    if invert and all(s > 0 for s in slopes) and values[0] == 0 and values[-1] == 1:
        inverse = interpolating_layer(values, nodes, invert=False)
    return PiecewiseAffineLayer(pieces, inverse)


def tent() -> CompositeMap:
    return CompositeMap([interpolating_layer([0, Fraction(1, 2), 1], [0, 1, 0])], name="tent")


def logistic_pw(nodes=8) -> CompositeMap:
    xs = [Fraction(i, nodes) for i in range(nodes + 1)]
    return CompositeMap([interpolating_layer(xs, [4 * x * (1 - x) for x in xs])], name="logistic-pw")


def halving() -> CompositeMap:
    return CompositeMap([interpolating_layer([0, 1], [0, Fraction(1, 2)])], name="halving")


def nudge_layer(shift, dim=1) -> PiecewiseAffineLayer:
    """Homeomorphism fixing the boundary of M that moves the center by ``shift``."""
    half = Fraction(1, 2)
    if dim == 1:
        t = as_fraction(shift[0] if isinstance(shift, (tuple, list)) else shift)
        return interpolating_layer([0, half, 1], [0, half + t, 1])
    t = as_point(shift)
    center = (half, half)
    moved = (half + t[0], half + t[1])
    corners = [(Fraction(0), Fraction(0)), (Fraction(1), Fraction(0)), (Fraction(1), Fraction(1)), (Fraction(0), Fraction(1))]

    def fan(src, dst):
        pieces = []
        for a, b in zip(corners, corners[1:] + corners[:1]):
            pieces.append(AffinePiece.from_vertex_images(Simplex([a, b, src]), [a, b, dst]))
        return pieces

    inverse = PiecewiseAffineLayer(fan(moved, center))
    return PiecewiseAffineLayer(fan(center, moved), inverse)


def contraction_layer(center, rate, dim=1) -> PiecewiseAffineLayer:
    """y -> c + (1 - rate)(y - c) on all of M; not onto, so not invertible."""
    c = as_point(center)
    k = 1 - as_fraction(rate)
    if dim == 1:
        return PiecewiseAffineLayer([AffinePiece(interval(0, 1), [[k]], [c[0] * (1 - k)])])
    pieces = []
    for T in (Simplex([(0, 0), (1, 0), (1, 1)]), Simplex([(0, 0), (1, 1), (0, 1)])):
        pieces.append(AffinePiece(T, [[k, 0], [0, k]], [c[0] * (1 - k), c[1] * (1 - k)]))
    return PiecewiseAffineLayer(pieces)


def tent2() -> CompositeMap:
    """Product tent map on the square, piecewise affine on a 2x2 triangle grid."""
    half = Fraction(1, 2)
    t = {Fraction(0): Fraction(0), half: Fraction(1), Fraction(1): Fraction(0)}
    pieces = []
    for i, j in product(range(2), range(2)):
        a, b = i * half, j * half
        for tri in ([(a, b), (a + half, b), (a + half, b + half)], [(a, b), (a + half, b + half), (a, b + half)]):
            T = Simplex(tri)
            pieces.append(AffinePiece.from_vertex_images(T, [(t[v[0]], t[v[1]]) for v in T.vertices]))
    return CompositeMap([PiecewiseAffineLayer(pieces)], name="tent2")


PRESETS = {
    "identity": lambda: identity(1),
    "identity2": lambda: identity(2),
    "tent": tent,
    "tent2": tent2,
    "logistic-pw": logistic_pw,
    "halving": halving,
}


def parse_builder(text: str) -> CompositeMap:
    """Interval maps written as ``pl:x0,x1,...:y0,y1,...``; ``*`` composes, leftmost applied last."""
    maps = []
    for part in text.split("*"):
        part = part.strip()
        if part in PRESETS:
            maps.append(PRESETS[part]())
            continue
        kind, _, rest = part.partition(":")
        if kind != "pl" or rest.count(":") != 1:
            raise MapError(f"cannot parse map {part!r}")
        xs, ys = ([Fraction(v) for v in s.split(",")] for s in rest.split(":"))
        if len(xs) != len(ys) or len(xs) < 2 or xs[0] != 0 or xs[-1] != 1 or any(a >= b for a, b in zip(xs, xs[1:])):
            raise MapError("nodes must increase from 0 to 1 and match the values")
        if any(not 0 <= y <= 1 for y in ys):
            raise MapError("values must lie in [0, 1]")
        maps.append(CompositeMap([interpolating_layer(xs, ys)]))
    out = maps[-1]
    for m in reversed(maps[:-1]):
        out = compose(m, out)
    return out


def load_map(source) -> CompositeMap:
    """Preset name, builder text or path to a JSON map document."""
    if isinstance(source, CompositeMap):
        return source
    if source in PRESETS:
        return PRESETS[source]()
    if source.startswith("pl:") or "*" in source:
        return parse_builder(source)
    with open(source) as fh:
        return CompositeMap.from_json(json.load(fh))


# C0 distance ----------------------------------------------------------------


@dataclass(frozen=True)
class Interval:
    lo: Fraction
    hi: Fraction

    def __contains__(self, v):
        return self.lo <= as_fraction(v) <= self.hi

    def to_json(self):
        return {"lo": str(self.lo), "hi": str(self.hi)}


def _dyadic_interval(lo, hi, bits=64):
    """Round an interval outward to the 2^-bits grid."""
    scale = 1 << bits
    return Interval(Fraction(math.floor(lo * scale), scale), Fraction(math.ceil(hi * scale), scale))


def _sup_distance(F, G, lip, dim, tol, max_cells):
    """Sound enclosure of sup_x dist(F(x), G(x)) by branch and bound on a grid."""
    cache = {}

    def phi(x):
        if x not in cache:
            cache[x] = dist(F(x), G(x))
        return cache[x]

    def corners(cell):
        lo, side = cell
        if dim == 1:
            return [(lo[0],), (lo[0] + side,)]
        return [(lo[0] + a * side, lo[1] + b * side) for a, b in product((0, 1), repeat=2)]

    def bound(cell):
        vals = [phi(c) for c in corners(cell)]
        return max(vals), max(vals) + lip * cell[1] / 2

    start = 8 if dim == 1 else 4
    side = Fraction(1, start)
    heap = []
    lo = Fraction(0)
    for idx in product(range(start), repeat=dim):
        cell = (tuple(i * side for i in idx), side)
        v, b = bound(cell)
        lo = max(lo, v)
        heapq.heappush(heap, (-b, cell))
    cells = len(heap)
    while True:
        negb, cell = heap[0]
        hi = -negb
        if hi - lo <= tol:
            return _dyadic_interval(lo, min(hi, Fraction(1)))
        heapq.heappop(heap)
        base, s = cell
        half = s / 2
        for off in product((0, 1), repeat=dim):
            sub = (tuple(base[i] + off[i] * half for i in range(dim)), half)
            v, b = bound(sub)
            lo = max(lo, v)
            heapq.heappush(heap, (-b, sub))
        cells += 2 ** dim
        if cells > max_cells:
            raise BudgetExhausted("C0 distance refinement exceeded its cell budget")


def c0_distance(f: CompositeMap, g: CompositeMap, mode="map", tol=Fraction(1, 100), max_cells=400000) -> Interval:
    tol = as_fraction(tol)
    if tol <= 0:
        raise MapError("tol must be positive")
    if mode not in ("map", "homeo"):
        raise MapError("mode must be 'map' or 'homeo'")
    if f.dim != g.dim:
        raise MapError("dimension mismatch")
    if f.layers == g.layers:
        return Interval(Fraction(0), Fraction(0))
    rho = _sup_distance(f, g, f.lipschitz + g.lipschitz, f.dim, tol, max_cells)
    if mode == "map":
        return rho
    if not (f.invertible and g.invertible):
        raise MapError("homeo mode requires invertible maps")
    finv, ginv = f.rational_inverse(), g.rational_inverse()
    # sup_y |f^-1(y) - g^-1(y)| = sup_x |f^-1(g(x)) - x|, evaluated on whichever side inverts exactly
    if finv is not None:
        F, lip = compose(finv, g), finv.lipschitz * g.lipschitz + 1
    elif ginv is not None:
        F, lip = compose(ginv, f), ginv.lipschitz * f.lipschitz + 1
    else:
        raise MapError("homeo mode needs an exact inverse for one of the maps")
    ident = identity(f.dim)
    inv_part = _sup_distance(F, ident, lip, f.dim, tol, max_cells)
    return Interval(max(rho.lo, inv_part.lo), max(rho.hi, inv_part.hi))


# Image enclosures ---------------------------------------------------------------


@dataclass
class Enclosure:
    hulls: tuple
    witnesses: tuple
    converged: bool = True

    def diameter(self) -> Fraction:
        return hulls_diameter(self.hulls)

    def to_json(self):
        return {"hulls": [[[str(c) for c in p] for p in h] for h in self.hulls],
                "converged": self.converged}


def _merge_intervals(hulls):
    ivs = sorted((h[0][0], h[-1][0]) for h in hulls)
    out = []
    for a, b in ivs:
        if out and a <= out[-1][1]:
            out[-1] = (out[-1][0], max(out[-1][1], b))
        else:
            out.append((a, b))
    return [convex_hull([(a,), (b,)]) for a, b in out]


def _affine_hull_image(layer, h):
    out = []
    for p in layer.pieces:
        part = h if all(p.domain.contains(v) for v in h) else clip_hull_to_simplex(h, p.domain)
        if part is None:
            continue
        out.append(convex_hull([p.apply(v) for v in part]))
        if part is h:
            break
    if not out:
        raise MapError("hull outside the layer domain")
    return out


def _split_hull(h):
    lo, hi = hull_bbox([h])
    axis = 0 if hi[0] - lo[0] >= hi[1] - lo[1] else 1
    mid = (lo[axis] + hi[axis]) / 2
    a = (Fraction(1), Fraction(0)) if axis == 0 else (Fraction(0), Fraction(1))
    left = clip_halfplane(list(h), (-a[0], -a[1]), -mid)
    right = clip_halfplane(list(h), a, mid)
    return [convex_hull(p) for p in (left, right) if p]


def _radial_piece_image(T, n, part, tol, depth, max_depth):
    """Enclosure of h(part) for part inside a single cone of chart T."""
    c = T.centroid
    svals = [T.gauge(v)[0] for v in part]
    smin, smax = max(min(svals), Fraction(0)), min(max(svals), Fraction(1))
    lo, hi = smin ** (n - 1), smax ** (n - 1)
    rmax = max(dist(v, c) for v in part)
    if (hi - lo) * rmax > tol and depth < max_depth and len(part) > 1:
        out, ok = [], True
        for sub in _split_hull(part):
            imgs, sub_ok = _radial_piece_image(T, n, sub, tol, depth + 1, max_depth)
            out.extend(imgs)
            ok = ok and sub_ok
        return out, ok
    pts = []
    for sigma in {lo, hi}:
        pts.extend(tuple(c[i] + sigma * (v[i] - c[i]) for i in range(len(v))) for v in part)
    return [convex_hull(pts)], (hi - lo) * rmax <= tol or len(part) == 1


def _radial_hull_image(layer, h, tol, max_depth):
    if layer.dim == 1:
        return [convex_hull([layer(h[0]), layer(h[-1])])], True
    out, ok = [], True
    for T, n in layer.charts:
        part = clip_hull_to_simplex(h, T)
        if part is None:
            continue
        if n == 1:
            out.append(part)
            continue
        c = T.centroid
        for k, g in enumerate(T.gamma):
            if g <= 0:
                continue
            verts = [v for j, v in enumerate(T.vertices) if j != k]
            cone = Simplex([c] + verts) if _nondegenerate([c] + verts) else None
            if cone is None:
                continue
            piece = clip_hull_to_simplex(part, cone)
            if piece is None:
                continue
            imgs, sub_ok = _radial_piece_image(T, n, piece, tol, 0, max_depth)
            out.extend(imgs)
            ok = ok and sub_ok
    if not layer.covers:
        out.append(h)
    return out, ok


def _nondegenerate(pts):
    try:
        Simplex(pts)
        return True
    except GeometryError:
        return False


def _dedupe(hulls):
    seen, out = set(), []
    for h in hulls:
        if h not in seen:
            seen.add(h)
            out.append(h)
    return out


def enclose_hulls(f: CompositeMap, hulls, tol=Fraction(1, 10**6), max_depth=10, max_hulls=20000):
    """Propagate a union of convex hulls through every layer of f."""
    tol = as_fraction(tol)
    current = list(hulls)
    converged = True
    for layer in f.layers:
        nxt = []
        for h in current:
            if layer.kind == "affine":
                nxt.extend(_affine_hull_image(layer, h))
            else:
                imgs, ok = _radial_hull_image(layer, h, tol, max_depth)
                nxt.extend(imgs)
                converged = converged and ok
        nxt = [round_outward(h, ROUND_BITS) for h in nxt]
        current = _merge_intervals(nxt) if f.dim == 1 else _dedupe(nxt)
        if len(current) > max_hulls:
            raise BudgetExhausted("enclosure produced too many pieces")
    if f.dim == 1:
        current = _merge_intervals(current)
    return tuple(current), converged


def image_enclosure(f: CompositeMap, S, tol=Fraction(1, 10**6), max_depth=10) -> Enclosure:
    if isinstance(S, Simplex):
        hulls, verts = [S.hull()], S.vertices
    else:
        hulls = list(S)
        verts = tuple(p for h in hulls for p in h)
    tol = as_fraction(tol)
    if tol <= 0:
        raise MapError("tol must be positive")
    out, ok = enclose_hulls(f, hulls, tol, max_depth)
    witnesses = tuple(f(v) for v in verts)
    return Enclosure(out, witnesses, ok)
