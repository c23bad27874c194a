"""Atomic probability measures and the weak* distance over a dyadic test family."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from itertools import combinations, product

from .geometry import GeometryError, Simplex, as_fraction, as_point, hulls_disjoint

DEFAULT_DEPTH = 20


class MeasureError(ValueError):
    pass


class AtomicMeasure:
    """Finitely supported probability measure with exact rational weights."""

    __slots__ = ("atoms",)

    def __init__(self, atoms, normalize=False):
        merged = {}
        for x, w in atoms:
            x = as_point(x)
            w = as_fraction(w)
            if w < 0 or (w == 0 and not normalize):
                raise MeasureError("weights must be positive")
            if w:
                merged[x] = merged.get(x, Fraction(0)) + w
        if not merged:
            raise MeasureError("empty measure")
        total = sum(merged.values())
        if normalize:
            merged = {x: w / total for x, w in merged.items()}
        elif total != 1:
            raise MeasureError("weights must sum to 1")
        dims = {len(x) for x in merged}
        if len(dims) != 1:
            raise MeasureError("atoms of mixed dimension")
        self.atoms = tuple(sorted(merged.items()))

    @property
    def dim(self) -> int:
        return len(self.atoms[0][0])

    @property
    def support(self):
        return tuple(x for x, _ in self.atoms)

    def mass(self, predicate) -> Fraction:
        return sum((w for x, w in self.atoms if predicate(x)), Fraction(0))

    def integrate(self, fn) -> Fraction:
        return sum((w * fn(x) for x, w in self.atoms), Fraction(0))

    def pushforward(self, f) -> "AtomicMeasure":
        return AtomicMeasure([(f(x), w) for x, w in self.atoms])

    def __eq__(self, other):
        return isinstance(other, AtomicMeasure) and self.atoms == other.atoms

    def __hash__(self):
        return hash(self.atoms)

    def __repr__(self):
        parts = ", ".join(f"{w}*d({', '.join(str(c) for c in x)})" for x, w in self.atoms)
        return f"AtomicMeasure({parts})"

    def to_json(self):
        return {"atoms": [[str(c) for c in x] + [w.numerator, w.denominator] for x, w in self.atoms]}

    @classmethod
    def from_json(cls, data):
        if isinstance(data, str):
            data = json.loads(data)
        atoms = [(row[:-2], Fraction(int(row[-2]), int(row[-1]))) for row in data["atoms"]]
        return cls(atoms)


def dirac(x) -> AtomicMeasure:
    return AtomicMeasure([(x, 1)])


def uniform(points) -> AtomicMeasure:
    points = list(points)
    w = Fraction(1, len(points))
    return AtomicMeasure([(p, w) for p in points])


def convex_combination(lam, mu: AtomicMeasure, nu: AtomicMeasure) -> AtomicMeasure:
    lam = as_fraction(lam)
    if not 0 <= lam <= 1:
        raise MeasureError("lambda must lie in [0, 1]")
    if lam == 1:
        return mu
    if lam == 0:
        return nu
    return AtomicMeasure([(x, lam * w) for x, w in mu.atoms] + [(x, (1 - lam) * w) for x, w in nu.atoms])


# Test family ------------------------------------------------------------------


@dataclass(frozen=True)
class TestFunction:
    """Dyadic piecewise-linear function with node values v / 2^level.

    In dimension 2 the nodes form a (2^level + 1)^2 grid in row-major order
    (first coordinate fastest) and values are interpolated bilinearly.
    """

    __test__ = False

    dim: int
    level: int
    values: tuple

    @property
    def size(self) -> int:
        return (1 << self.level) + 1

    def __call__(self, x) -> Fraction:
        n = 1 << self.level
        if self.dim == 1:
            u = x[0] * n
            k = min(int(u), n - 1)
            t = u - k
            v0, v1 = self.values[k], self.values[k + 1]
            return (v0 + (v1 - v0) * t) / n
        u, w = x[0] * n, x[1] * n
        i, j = min(int(u), n - 1), min(int(w), n - 1)
        s, t = u - i, w - j
        row = self.size
        v00 = self.values[j * row + i]
        v10 = self.values[j * row + i + 1]
        v01 = self.values[(j + 1) * row + i]
        v11 = self.values[(j + 1) * row + i + 1]
        val = v00 * (1 - s) * (1 - t) + v10 * s * (1 - t) + v01 * (1 - s) * t + v11 * s * t
        return val / n

    @property
    def lipschitz(self) -> Fraction:
        """Exact Lipschitz constant for the max-norm on M."""
        v = self.values
        if self.dim == 1:
            return Fraction(max((abs(a - b) for a, b in zip(v, v[1:])), default=0))
        row = self.size
        best = 0
        for j in range(row - 1):
            for i in range(row - 1):
                dx = max(abs(v[j * row + i + 1] - v[j * row + i]), abs(v[(j + 1) * row + i + 1] - v[(j + 1) * row + i]))
                dy = max(abs(v[(j + 1) * row + i] - v[j * row + i]), abs(v[(j + 1) * row + i + 1] - v[j * row + i + 1]))
                best = max(best, dx + dy)
        return Fraction(best)


def _coarsens(dim, level, values) -> bool:
    """Whether the level-L function already appears at level L-1."""
    if level == 0:
        return False
    n = 1 << level
    if dim == 1:
        for k in range(0, n + 1, 2):
            if values[k] % 2:
                return False
        return all(2 * values[k] == values[k - 1] + values[k + 1] for k in range(1, n, 2))
    row = n + 1
    val = lambda i, j: values[j * row + i]  # noqa: E731
    for j in range(0, row):
        for i in range(0, row):
            if i % 2 == 0 and j % 2 == 0:
                if val(i, j) % 2:
                    return False
            elif j % 2 == 0:
                if 2 * val(i, j) != val(i - 1, j) + val(i + 1, j):
                    return False
            elif i % 2 == 0:
                if 2 * val(i, j) != val(i, j - 1) + val(i, j + 1):
                    return False
            elif 4 * val(i, j) != val(i - 1, j - 1) + val(i + 1, j - 1) + val(i - 1, j + 1) + val(i + 1, j + 1):
                return False
    return True


def _enumerate(dim):
    level = 0
    while True:
        n = 1 << level
        nodes = (n + 1) ** dim
        for values in product(range(n + 1), repeat=nodes):
            if not _coarsens(dim, level, values):
                yield TestFunction(dim, level, values)
        level += 1


@lru_cache(maxsize=None)
def _family_prefix(dim, count):
    gen = _enumerate(dim)
    return tuple(next(gen) for _ in range(count))


class TestFunctionFamily:
    """Level-ordered, lexicographically enumerated dyadic test functions."""

    __test__ = False

    def __init__(self, dim=1):
        if dim not in (1, 2):
            raise MeasureError("dimension must be 1 or 2")
        self.dim = dim

    def functions(self, count):
        return _family_prefix(self.dim, count)

    def __getitem__(self, i):
        """1-based index, matching Psi_1, Psi_2, ..."""
        if i < 1:
            raise IndexError("test functions are indexed from 1")
        return self.functions(i)[i - 1]

    def max_lipschitz(self, n) -> Fraction:
        return max((psi.lipschitz for psi in self.functions(n)), default=Fraction(0))

    def weighted_lipschitz(self, n) -> Fraction:
        return sum((psi.lipschitz / 2 ** (i + 1) for i, psi in enumerate(self.functions(n))), Fraction(0))


@lru_cache(maxsize=None)
def family(dim=1) -> TestFunctionFamily:
    return TestFunctionFamily(dim)


# Distances ----------------------------------------------------------------------


@dataclass(frozen=True)
class MetricResult:
    lo: Fraction
    hi: Fraction
    depth: int

    def to_json(self):
        return {"lo": str(self.lo), "hi": str(self.hi), "depth": self.depth}


def _node_masses(mu: AtomicMeasure, level):
    """Mass each grid node receives when atoms are split by (bi)linear interpolation weights."""
    n = 1 << level
    row = n + 1
    out = [Fraction(0)] * (row ** mu.dim)
    for x, w in mu.atoms:
        if mu.dim == 1:
            u = x[0] * n
            k = min(int(u), n - 1)
            t = u - k
            out[k] += w * (1 - t)
            out[k + 1] += w * t
        else:
            u, v = x[0] * n, x[1] * n
            i, j = min(int(u), n - 1), min(int(v), n - 1)
            s, t = u - i, v - j
            out[j * row + i] += w * (1 - s) * (1 - t)
            out[j * row + i + 1] += w * s * (1 - t)
            out[(j + 1) * row + i] += w * (1 - s) * t
            out[(j + 1) * row + i + 1] += w * s * t
    return out


def integrals(mu: AtomicMeasure, depth=DEFAULT_DEPTH):
    fns = family(mu.dim).functions(depth)
    masses = {}
    out = []
    for psi in fns:
        if psi.level not in masses:
            masses[psi.level] = _node_masses(mu, psi.level)
        m = masses[psi.level]
        out.append(sum((v * c for v, c in zip(psi.values, m) if v), Fraction(0)) / (1 << psi.level))
    return tuple(out)


def distance_from_integrals(a, b, depth) -> MetricResult:
    lo = sum((abs(x - y) / 2 ** (i + 1) for i, (x, y) in enumerate(zip(a, b))), Fraction(0))
    return MetricResult(lo, min(Fraction(1), lo + Fraction(1, 2 ** depth)), depth)


def weakstar_distance(mu: AtomicMeasure, nu: AtomicMeasure, N=DEFAULT_DEPTH) -> MetricResult:
    if N < 1:
        raise MeasureError("truncation depth must be at least 1")
    if mu.dim != nu.dim:
        raise MeasureError("dimension mismatch")
    return distance_from_integrals(integrals(mu, N), integrals(nu, N), N)


def _tail_depth(eps):
    n = 1
    while Fraction(1, 2 ** n) >= eps / 2:
        n += 1
    return n


def approach_parameter_q(eps, fam: TestFunctionFamily | None = None) -> int:
    """Smallest q with 1/q < min(delta, eps/4) for the approximation criterion."""
    eps = as_fraction(eps)
    if not 0 < eps <= 1:
        raise MeasureError("eps must lie in (0, 1]")
    fam = fam or family(1)
    n = _tail_depth(eps)
    lip = max(fam.max_lipschitz(n), Fraction(1))
    delta = eps / (4 * lip)
    bound = max(1 / delta, 4 / eps)
    return int(bound) + 1


def epsilon_for_q(q, fam: TestFunctionFamily | None = None, max_terms=64) -> Fraction:
    """Infimum of the eps for which q satisfies the approximation criterion."""
    fam = fam or family(1)
    best = Fraction(1)
    for n in range(1, max_terms + 1):
        tail = Fraction(2, 2 ** n)
        cand = max(tail, 4 * max(fam.max_lipschitz(n), Fraction(1)) / q)
        best = min(best, cand)
        if tail <= Fraction(4, q):
            break
    return best


@dataclass
class MassMatchVerdict:
    holds: bool
    reason: str
    eps_q: Fraction
    distance: MetricResult | None = None

    @property
    def consistent(self) -> bool:
        return self.distance is None or self.distance.lo <= self.eps_q


def lemma_dist_check(mu: AtomicMeasure, nu: AtomicMeasure, pieces, q, N=DEFAULT_DEPTH) -> MassMatchVerdict:
    """Check the piecewise mass-matching hypotheses and, when they hold, the distance."""
    pieces = list(pieces)
    q = int(q)
    hulls = [T.hull() for T in pieces]
    for i, j in combinations(range(len(hulls)), 2):
        if not hulls_disjoint(hulls[i], hulls[j]):
            raise GeometryError(f"pieces {i} and {j} overlap")
    eps_q = epsilon_for_q(q, family(mu.dim))
    for x in mu.support + nu.support:
        if not any(T.contains(x) for T in pieces):
            return MassMatchVerdict(False, "support not covered", eps_q)
    for j, T in enumerate(pieces):
        if T.diameter() > Fraction(1, q):
            return MassMatchVerdict(False, f"piece {j} has diameter above 1/q", eps_q)
    gap = Fraction(1, q * len(pieces))
    for j, T in enumerate(pieces):
        if abs(mu.mass(T.contains) - nu.mass(T.contains)) > gap:
            return MassMatchVerdict(False, f"mass gap on piece {j} above 1/(q m)", eps_q)
    return MassMatchVerdict(True, "hypotheses hold", eps_q, weakstar_distance(mu, nu, N))


def empirical_measure(f, x, n, precision=None) -> AtomicMeasure:
    if n < 1:
        raise MeasureError("n must be at least 1")
    orbit = f.evaluate(x, n - 1, precision=precision)
    w = Fraction(1, n)
    return AtomicMeasure([(p, w) for p in orbit])


@dataclass
class PomegaEstimate:
    candidates: tuple
    dispersion: Fraction
    times: tuple


def _cluster(measures, tol, depth):
    reps = []
    ints = [integrals(m, depth) for m in measures]
    for m, a in zip(measures, ints):
        if not any(distance_from_integrals(a, b, depth).hi <= tol for _, b in reps):
            reps.append((m, a))
    return tuple(m for m, _ in reps)


def pomega_estimate(f, x, horizon, stride, N=DEFAULT_DEPTH, precision=None) -> PomegaEstimate:
    if stride < 1 or horizon < 2 * stride:
        raise MeasureError("need horizon >= 2 * stride >= 2")
    orbit = f.evaluate(x, horizon - 1, precision=precision)
    times = tuple(range(stride, horizon + 1, stride))
    measures = [AtomicMeasure([(p, Fraction(1, t)) for p in orbit[:t]]) for t in times]
    ints = [integrals(m, N) for m in measures]
    disp = Fraction(0)
    for a, b in combinations(ints, 2):
        disp = max(disp, distance_from_integrals(a, b, N).hi)
    cands = _cluster(measures, Fraction(2, 2 ** N), N)
    return PomegaEstimate(cands, disp, times)


@dataclass(frozen=True)
class HausdorffResult:
    lo: Fraction
    hi: Fraction
    forward: tuple
    backward: tuple

    def to_json(self):
        return {"lo": str(self.lo), "hi": str(self.hi),
                "forward": [str(v) for v in self.forward], "backward": [str(v) for v in self.backward]}


def _directed(da, db_pairs):
    lo = max(min(r.lo for r in row) for row in db_pairs)
    hi = max(min(r.hi for r in row) for row in db_pairs)
    return lo, hi


def measure_set_hausdorff(A, B, N=DEFAULT_DEPTH) -> HausdorffResult:
    A, B = list(A), list(B)
    if not A or not B:
        raise MeasureError("empty measure set")
    ia = [integrals(m, N) for m in A]
    ib = [integrals(m, N) for m in B]
    table = [[distance_from_integrals(a, b, N) for b in ib] for a in ia]
    fwd = _directed(None, table)
    bwd = _directed(None, [list(col) for col in zip(*table)])
    return HausdorffResult(max(fwd[0], bwd[0]), max(fwd[1], bwd[1]), fwd, bwd)


def distance_table_csv(rows) -> str:
    """rows of (time, MetricResult) as CSV text."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["time", "distance_lo", "distance_hi"])
    for t, r in rows:
        w.writerow([t, float(r.lo), float(r.hi)])
    return buf.getvalue()


def simplex_mass(mu: AtomicMeasure, T: Simplex) -> Fraction:
    return mu.mass(T.contains)
