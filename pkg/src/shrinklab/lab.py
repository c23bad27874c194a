"""Experiment harness: Monte Carlo probes of pseudo-physical measures and report bundles."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field, fields
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from . import __version__
from .kernels import BACKEND, float_distance, orbit_statistics, sample_points
from .maps import BudgetExhausted, CompositeMap, MapError, load_map
from .measures import (
    AtomicMeasure,
    MetricResult,
    convex_combination,
    epsilon_for_q,
    family,
    integrals,
    weakstar_distance,
)
from .perturb import build_pqr_perturbation, build_sqk_perturbation
from .shadowing import NoRecurrence, ShadowNotFound, enumerate_periodic_orbits, ergodic_to_periodic_measure
from .shrinking import (
    convex_combination_check,
    periodic_point_witness,
    psi_integral,
)

SCHEMA_VERSION = 1
FLOAT_SLACK = 1e-9


class ConfigError(ValueError):
    pass


class VerificationFailure(RuntimeError):
    pass


def _frac(v) -> Fraction:
    return Fraction(str(v).strip())


def _frac_list(v):
    return tuple(_frac(p) for p in str(v).replace(",", " ").split())


@dataclass
class ExperimentConfig:
    experiment: str
    map: str
    seed: int
    samples: int = 10_000
    horizon: int = 1000
    depth: int = 20
    eps_grid: tuple = (Fraction(1, 4), Fraction(1, 8), Fraction(1, 16))
    workers: int = 1
    perturb: str | None = None
    q: int = 4
    k: int = 4
    r: int = 1
    eps: Fraction = Fraction(1, 2)
    alpha: Fraction | None = None
    aa_tol: Fraction = Fraction(1, 16)
    max_period: int = 2
    lambdas: tuple = tuple(1 - Fraction(1, 2 ** n) for n in range(1, 7))
    x: tuple | None = None
    eps0: Fraction = Fraction(1, 2)
    runs: int = 1

    def validate(self):
        for name in ("samples", "horizon", "depth", "workers", "q", "k", "r", "max_period", "runs"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1")
        if self.horizon < 4:
            raise ConfigError("horizon must be at least 4")
        if self.perturb not in (None, "sqk", "pqr"):
            raise ConfigError(f"unknown perturbation {self.perturb!r}")
        if any(e <= 0 for e in self.eps_grid) or self.eps <= 0 or self.eps0 <= 0:
            raise ConfigError("eps values must be positive")
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        return self

    def to_json(self):
        out = {}
        for fld in fields(self):
            if fld.name == "workers":
                continue
            v = getattr(self, fld.name)
            if isinstance(v, Fraction):
                v = str(v)
            elif isinstance(v, tuple):
                v = [str(c) for c in v]
            out[fld.name] = v
        return out


_CONVERTERS = {
    "experiment": str, "map": str, "seed": int, "samples": int, "horizon": int, "depth": int,
    "eps_grid": _frac_list, "workers": int, "perturb": lambda v: None if v in ("", "none") else v,
    "q": int, "k": int, "r": int, "eps": _frac, "alpha": _frac, "aa_tol": _frac, "max_period": int,
    "lambdas": _frac_list, "x": _frac_list, "eps0": _frac, "runs": int,
}


def parse_config(text: str, base_dir=None) -> ExperimentConfig:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _CONVERTERS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            values[key] = _CONVERTERS[key](val)
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from None
    for key in ("experiment", "map", "seed"):
        if key not in values:
            raise ConfigError(f"missing required key {key!r}")
    if base_dir is not None and values["map"].endswith(".json"):
        path = Path(values["map"])
        if not path.is_absolute():
            values["map"] = str(Path(base_dir) / path)
    return ExperimentConfig(**values).validate()


# Map context --------------------------------------------------------------------


@dataclass
class MapContext:
    base: CompositeMap
    g: CompositeMap
    report: object = None

    @property
    def certificates(self):
        return () if self.report is None else self.report.certificates


def resolve_map(config: ExperimentConfig) -> MapContext:
    try:
        base = load_map(config.map)
    except (MapError, OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot load map {config.map!r}: {exc}") from None
    if config.perturb == "sqk":
        rep = build_sqk_perturbation(base, config.q, config.k, config.eps)
        return MapContext(base, rep.g, rep)
    if config.perturb == "pqr":
        rep = build_pqr_perturbation(base, config.q, config.r, config.eps)
        return MapContext(base, rep.g, rep)
    return MapContext(base, base)


@dataclass
class CertifiedMeasure:
    measure: AtomicMeasure
    certificate: object
    residual: Fraction
    diameter: Fraction


def certified_periodic_measures(g: CompositeMap, certificates) -> list:
    """Witness periodic measures of the distinct periodic cores, in certificate order."""
    out, seen = [], set()
    for cert in certificates:
        core = cert.periodic
        key = core.I
        if key in seen:
            continue
        seen.add(key)
        wit = periodic_point_witness(core, g)
        orbit = g.evaluate(wit.point, core.period - 1)
        mu = AtomicMeasure([(y, Fraction(1, core.period)) for y in orbit])
        out.append(CertifiedMeasure(mu, core, wit.residual, core.I.diameter()))
    return out


def _float_ints(mu: AtomicMeasure, depth):
    return np.array([float(v) for v in integrals(mu, depth)])


def _stats(g, config, checkpoints=None):
    X = sample_points(config.seed, 0, config.samples, g.dim)
    fns = family(g.dim).functions(config.depth)
    stats = orbit_statistics(g, X, fns, config.horizon, checkpoints, workers=config.workers)
    return X, stats


def _interval(lo_float, depth):
    lo = max(0.0, lo_float - FLOAT_SLACK)
    hi = min(1.0, lo_float + 2.0 ** -depth + FLOAT_SLACK)
    return lo, hi


def _certificate_index(certs, x):
    xf = tuple(Fraction(float(c)) for c in x)
    for i, cert in enumerate(certs):
        if cert.I.in_open(xf):
            return i
    return -1


# Birkhoff convergence -----------------------------------------------------------


@dataclass
class SampleReport:
    samples: int
    checkpoints: tuple
    starts: list
    dispersion: list
    certificate: list
    aa_tol: Fraction
    aa_count: int
    coverage_count: int | None
    alpha: Fraction | None
    nonexpansive_count: int | None
    bound_checked: int
    bound_violations: int
    bound_eps: Fraction | None
    profile: list = field(default_factory=list)

    @property
    def aa_fraction(self) -> float:
        return self.aa_count / self.samples

    @property
    def coverage_fraction(self):
        return None if self.coverage_count is None else self.coverage_count / self.samples

    @property
    def nonexpansive_fraction(self):
        return None if self.nonexpansive_count is None else self.nonexpansive_count / self.samples

    def to_json(self):
        return {
            "samples": self.samples, "checkpoints": list(self.checkpoints),
            "aa_tol": str(self.aa_tol), "aa_count": self.aa_count, "aa_fraction": self.aa_fraction,
            "coverage_count": self.coverage_count, "coverage_fraction": self.coverage_fraction,
            "alpha": None if self.alpha is None else str(self.alpha),
            "nonexpansive_count": self.nonexpansive_count, "nonexpansive_fraction": self.nonexpansive_fraction,
            "bound_checked": self.bound_checked, "bound_violations": self.bound_violations,
            "bound_eps": None if self.bound_eps is None else str(self.bound_eps),
            "max_dispersion": max(self.dispersion) if self.dispersion else None,
        }

    def rows(self):
        for i in range(self.samples):
            yield [i] + [repr(float(c)) for c in self.starts[i]] + [repr(self.dispersion[i]), self.certificate[i]]


def _checkpoints(horizon):
    return sorted({max(1, horizon * j // 4) for j in range(1, 5)})


def birkhoff_convergence_report(g: CompositeMap, config: ExperimentConfig, certificates=(), q=None) -> SampleReport:
    cps = _checkpoints(config.horizon)
    X, stats = _stats(g, config, cps)
    late = [i for i, t in enumerate(cps) if 2 * t >= config.horizon]
    ints = stats.integrals
    disp = np.zeros(len(X))
    for a in late:
        for b in late:
            if a < b:
                disp = np.maximum(disp, float_distance(ints[:, a], ints[:, b]))
    disp_hi = disp + 2.0 ** -config.depth
    aa = int(np.sum(disp_hi <= float(config.aa_tol)))
    cert_idx = [_certificate_index(certificates, x) for x in X] if certificates else [-1] * len(X)
    coverage = nonexp = None
    checked = violations = 0
    bound_eps = None
    if certificates:
        coverage = sum(1 for i in cert_idx if i >= 0)
        alpha = config.alpha if config.alpha is not None else Fraction(1, q or config.q)
        nonexp = sum(1 for i in cert_idx if i >= 0 and certificates[i].I.diameter() < alpha)
        witnesses = {}
        for cm in certified_periodic_measures(g, certificates):
            witnesses[cm.certificate.I] = _float_ints(cm.measure, config.depth)
        bound_eps = 2 * epsilon_for_q(q or config.q, family(g.dim))
        for s, i in enumerate(cert_idx):
            if i < 0:
                continue
            cert = certificates[i]
            p = cert.periodic.period
            n0 = (q or config.q) * p * (cert.transience + p)
            w = witnesses[cert.periodic.I]
            for c, t in enumerate(cps):
                if t < n0:
                    continue
                checked += 1
                if float_distance(ints[s, c], w) + 2.0 ** -config.depth >= float(bound_eps):
                    violations += 1
    else:
        alpha = config.alpha
    return SampleReport(len(X), tuple(cps), X.tolist(), disp_hi.tolist(), cert_idx, config.aa_tol, aa,
                        coverage, alpha, nonexp, checked, violations, bound_eps)


# Pseudo-physical evidence -------------------------------------------------------


@dataclass
class PseudoPhysicalReport:
    eps_grid: tuple
    upper_counts: tuple
    lower_counts: tuple
    physical_counts: tuple
    samples: int

    @property
    def fractions(self):
        return tuple(c / self.samples for c in self.lower_counts)

    @property
    def verdict(self) -> str:
        if all(c > 0 for c in self.lower_counts):
            return "positive-fraction evidence"
        if all(c == 0 for c in self.upper_counts):
            return "no evidence"
        return "inconclusive"

    def to_json(self):
        return {"eps_grid": [str(e) for e in self.eps_grid], "upper_counts": list(self.upper_counts),
                "lower_counts": list(self.lower_counts), "physical_counts": list(self.physical_counts),
                "samples": self.samples, "fractions": list(self.fractions), "verdict": self.verdict}


def _limit_distances(stats, mu, depth):
    return float_distance(stats.tail, _float_ints(mu, depth))


def pseudo_physical_fraction(g: CompositeMap, mu: AtomicMeasure, config: ExperimentConfig, stats=None,
                             eps_grid=None) -> PseudoPhysicalReport:
    """Counts of samples whose late empirical measure is within eps of mu, for each eps in the grid."""
    if stats is None:
        _, stats = _stats(g, config, _checkpoints(config.horizon))
    grid = tuple(eps_grid or config.eps_grid)
    d = _limit_distances(stats, mu, config.depth)
    tail_disp = _tail_dispersion(stats, config)
    upper, lower, phys = [], [], []
    for e in grid:
        e = float(e)
        upper.append(int(np.sum(d - FLOAT_SLACK < e)))
        close = d + 2.0 ** -config.depth + FLOAT_SLACK < e
        lower.append(int(np.sum(close)))
        phys.append(int(np.sum(close & (tail_disp <= float(config.aa_tol)))))
    return PseudoPhysicalReport(grid, tuple(upper), tuple(lower), tuple(phys), len(stats.tail))


def basin_fractions(certificates, X) -> list:
    """Sample counts of the certified sets feeding each periodic core."""
    counts = {}
    for x in X:
        i = _certificate_index(certificates, x)
        if i >= 0:
            key = certificates[i].periodic.I
            counts[key] = counts.get(key, 0) + 1
    cores, seen = [], set()
    for cert in certificates:
        key = cert.periodic.I
        if key not in seen:
            seen.add(key)
            cores.append(key)
    return [{"core": k.to_json(), "count": counts.get(k, 0), "samples": len(X),
             "fraction": counts.get(k, 0) / len(X)} for k in cores]


def _tail_dispersion(stats, config):
    ints = stats.integrals
    cps = list(stats.checkpoints)
    late = [i for i, t in enumerate(cps) if 2 * t >= config.horizon]
    disp = np.zeros(ints.shape[0])
    for a in late:
        for b in late:
            if a < b:
                disp = np.maximum(disp, float_distance(ints[:, a], ints[:, b]))
    return disp + 2.0 ** -config.depth


# Unique ergodicity --------------------------------------------------------------


@dataclass
class ErgodicityReport:
    verdict: str
    witnesses: tuple
    distance: MetricResult | None
    candidates: int

    def to_json(self):
        return {"verdict": self.verdict, "witnesses": [m.to_json() for m in self.witnesses],
                "distance": None if self.distance is None else self.distance.to_json(),
                "candidates": self.candidates}


def candidate_periodic_measures(g: CompositeMap, config: ExperimentConfig, certificates=()):
    if certificates:
        return [cm.measure for cm in certified_periodic_measures(g, certificates)]
    out, seen = [], set()
    for p in range(1, config.max_period + 1):
        try:
            found = enumerate_periodic_orbits(g, p)
        except (BudgetExhausted, MapError):
            break
        for orb in found.orbits:
            if orb.width or orb.period != p:
                continue
            mu = orb.measure(g)
            if mu not in seen:
                seen.add(mu)
                out.append(mu)
    return out


def unique_ergodicity_probe(g: CompositeMap, config: ExperimentConfig, certificates=()) -> ErgodicityReport:
    """Two invariant measures at distance above the metric resolution, if any are found."""
    cands = candidate_periodic_measures(g, config, certificates)
    if len(cands) < 2:
        return ErgodicityReport("inconclusive", tuple(cands), None, len(cands))
    first = cands[0]
    gap = 3 * Fraction(1, 2 ** config.depth)
    for mu in reversed(cands[1:]):
        d = weakstar_distance(first, mu, config.depth)
        if d.lo > gap:
            return ErgodicityReport("not uniquely ergodic", (first, mu), d, len(cands))
    return ErgodicityReport("inconclusive", (first,), None, len(cands))


# Closure comparison -------------------------------------------------------------


def cluster_limits(tail, depth):
    """Single-linkage clusters of late empirical measures at radius 2 * 2^-depth."""
    weights = 0.5 ** np.arange(1, tail.shape[1] + 1)
    pts = np.round(tail * weights, 15)
    uniq, inverse, counts = np.unique(pts, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.ravel()
    parent = list(range(len(uniq)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    if len(uniq) > 1:
        for a, b in sorted(cKDTree(uniq).query_pairs(2.0 * 2.0 ** -depth, p=1)):
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)
    groups = {}
    for i in range(len(uniq)):
        groups.setdefault(find(i), []).append(i)
    clusters = []
    for root in sorted(groups):
        members = groups[root]
        size = int(sum(counts[i] for i in members))
        rep = tail[int(np.flatnonzero(inverse == root)[0])]
        clusters.append((rep, size))
    return clusters


@dataclass
class MeasureSetComparison:
    periodic: list
    shrinked: list
    clusters: list
    forward: tuple
    backward: tuple
    forward_shrinked: tuple | None
    table: list
    eps_q: Fraction | None

    def to_json(self):
        return {
            "periodic_count": len(self.periodic), "shrinked_count": sum(self.shrinked),
            "cluster_count": len(self.clusters), "cluster_sizes": [c[1] for c in self.clusters],
            "o_to_per": list(self.forward), "per_to_o": list(self.backward),
            "o_to_shrinked": None if self.forward_shrinked is None else list(self.forward_shrinked),
            "eps_q": None if self.eps_q is None else str(self.eps_q),
            "periodic": [m.to_json() for m in self.periodic],
        }


def closure_comparison(g: CompositeMap, config: ExperimentConfig, certificates=(), q=None) -> MeasureSetComparison:
    """Directed Hausdorff distances between sampled empirical limits and periodic measures."""
    q = q or config.q
    per = candidate_periodic_measures(g, config, certificates)
    if certificates:
        shrinked = [cm.diameter < Fraction(1, q) for cm in certified_periodic_measures(g, certificates)]
    else:
        shrinked = [False] * len(per)
    if not per:
        raise VerificationFailure("no periodic measures found")
    _, stats = _stats(g, config, _checkpoints(config.horizon))
    clusters = cluster_limits(stats.tail, config.depth)
    per_ints = np.array([_float_ints(m, config.depth) for m in per])
    reps = np.array([c[0] for c in clusters])
    table = np.array([float_distance(reps, row) for row in per_ints]).T  # clusters x periodic
    nearest = table.min(axis=1)
    forward = _interval(float(nearest.max()), config.depth)
    backward = _interval(float(table.min(axis=0).max()), config.depth)
    fwd_shr = None
    if any(shrinked):
        sub = table[:, [i for i, s in enumerate(shrinked) if s]]
        fwd_shr = _interval(float(sub.min(axis=1).max()), config.depth)
    eps_q = epsilon_for_q(q, family(g.dim)) if certificates else None
    rows = [[i, c[1], repr(float(nearest[i])), int(np.argmin(table[i]))] for i, c in enumerate(clusters)]
    return MeasureSetComparison(per, shrinked, clusters, forward, backward, fwd_shr, rows, eps_q)


# Empty interior -----------------------------------------------------------------


@dataclass
class EmptyInteriorReport:
    mu1: AtomicMeasure
    nu: AtomicMeasure
    period: int
    threshold: Fraction
    rows: list
    sanity_one: PseudoPhysicalReport
    psi_zero: Fraction
    samples: int

    @property
    def all_zero(self) -> bool:
        return all(r["hits_upper"] == 0 for r in self.rows)

    @property
    def identities_hold(self) -> bool:
        return all(r["identity_holds"] for r in self.rows)

    def to_json(self):
        return {"mu1": self.mu1.to_json(), "nu": self.nu.to_json(), "period": self.period,
                "threshold": str(self.threshold), "rows": self.rows, "sanity_lambda_one": self.sanity_one.to_json(),
                "psi_lambda_zero": str(self.psi_zero), "samples": self.samples,
                "all_zero": self.all_zero, "identities_hold": self.identities_hold}


def empty_interior_probe(g: CompositeMap, config: ExperimentConfig, certificates) -> EmptyInteriorReport:
    """Convex combinations approaching a certified periodic measure that carry no pseudo-physical evidence."""
    if not certificates:
        raise VerificationFailure("empty-interior probe needs certified shrinking sets")
    certified = certified_periodic_measures(g, certificates)
    probe = unique_ergodicity_probe(g, config, certificates)
    if len(probe.witnesses) < 2:
        raise VerificationFailure("no second invariant measure off the shrinking orbit")
    mu1, nu = probe.witnesses
    cert = next(cm.certificate for cm in certified if cm.measure == mu1)
    limits = [cm.measure for cm in certified]
    _, stats = _stats(g, config, _checkpoints(config.horizon))
    rows, thresholds = [], []
    for lam in config.lambdas:
        if not 0 < lam < 1:
            raise ConfigError("lambdas must lie strictly between 0 and 1")
        rep = convex_combination_check(cert, g, mu1, nu, lam, samples=config.samples, depth=config.depth,
                                       limits=limits, stats=stats)
        mix = convex_combination(lam, mu1, nu)
        d = weakstar_distance(mix, mu1, config.depth)
        thresholds.append(rep.threshold)
        row = rep.to_json()
        row.update({"distance_to_mu1": d.to_json()})
        rows.append(row)
    sanity = pseudo_physical_fraction(g, mu1, config, stats)
    psi0 = psi_integral(cert, nu)
    return EmptyInteriorReport(mu1, nu, cert.period, min(thresholds), rows, sanity, psi0, config.samples)


# Bundles ------------------------------------------------------------------------


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow(row)
    return buf.getvalue()


def _exp_birkhoff(config, ctx):
    rep = birkhoff_convergence_report(ctx.g, config, ctx.certificates, config.q)
    tables = {"samples.csv": _csv(["index"] + [f"x{i}" for i in range(ctx.g.dim)] + ["dispersion_hi", "certificate"],
                                  rep.rows())}
    ok = rep.bound_violations == 0
    return rep.to_json(), tables, ok


def _exp_pseudo(config, ctx):
    cands = candidate_periodic_measures(ctx.g, config, ctx.certificates)
    if not cands:
        raise VerificationFailure("no periodic measure to test")
    X, stats = _stats(ctx.g, config, _checkpoints(config.horizon))
    out = []
    for mu in cands:
        rep = pseudo_physical_fraction(ctx.g, mu, config, stats)
        out.append({"measure": mu.to_json(), **rep.to_json()})
    rows = [[i, str(e), c] for i, r in enumerate(out) for e, c in zip(r["eps_grid"], r["lower_counts"])]
    body = {"measures": out}
    if ctx.certificates:
        body["basins"] = basin_fractions(ctx.certificates, X)
    return body, {"fractions.csv": _csv(["measure", "eps", "lower_count"], rows)}, True


def _exp_unique(config, ctx):
    rep = unique_ergodicity_probe(ctx.g, config, ctx.certificates)
    return rep.to_json(), {}, True


def _exp_closure(config, ctx):
    rep = closure_comparison(ctx.g, config, ctx.certificates, config.q)
    ok = True
    if ctx.certificates and rep.forward_shrinked is not None:
        ok = rep.forward_shrinked[1] < float(rep.eps_q)
    return rep.to_json(), {"clusters.csv": _csv(["cluster", "size", "nearest_distance", "nearest_periodic"],
                                                rep.table)}, ok


def _exp_empty(config, ctx):
    rep = empty_interior_probe(ctx.g, config, ctx.certificates)
    rows = [[r["lambda"], r["distance_to_mu1"]["lo"], r["distance_to_mu1"]["hi"]] for r in rep.rows]
    ok = rep.all_zero and rep.identities_hold
    return rep.to_json(), {"distances.csv": _csv(["lambda", "distance_lo", "distance_hi"], rows)}, ok


def _exp_shadow(config, ctx):
    starts = [config.x] if config.x else [
        tuple(Fraction(float(c)) for c in row) for row in sample_points(config.seed, 0, config.runs, ctx.g.dim)]
    results, rows, ok = [], [], True
    for i, x in enumerate(starts):
        try:
            res = ergodic_to_periodic_measure(ctx.g, x, config.eps0, config.horizon, config.depth)
            results.append(res.to_json())
            rows.append([i, res.recurrence, str(res.bound.lo), str(res.bound.hi)])
            ok = ok and res.bound.hi < 2 * config.eps0
        except (NoRecurrence, ShadowNotFound) as exc:
            results.append({"status": "failed", "reason": str(exc)})
            rows.append([i, "", "", ""])
    return {"runs": results}, {"bounds.csv": _csv(["run", "time", "distance_lo", "distance_hi"], rows)}, ok


def _exp_perturb(config, ctx):
    if ctx.report is None:
        raise ConfigError("perturb experiment needs perturb = sqk or pqr")
    return ctx.report.to_json(), {}, True


EXPERIMENTS = {
    "birkhoff": _exp_birkhoff,
    "pseudo-physical": _exp_pseudo,
    "unique-ergodicity": _exp_unique,
    "closure-compare": _exp_closure,
    "empty-interior": _exp_empty,
    "shadow": _exp_shadow,
    "perturb": _exp_perturb,
}


@dataclass
class Bundle:
    directory: Path
    files: dict
    verified: bool


def _sha(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def run_experiment(config: ExperimentConfig, out_dir, config_text: str | None = None) -> Bundle:
    """Run the configured experiment and write report.json, CSV tables and manifest.json."""
    ctx = resolve_map(config)
    report, tables, ok = EXPERIMENTS[config.experiment](config, ctx)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    body = {"schema_version": SCHEMA_VERSION, "experiment": config.experiment, "verified": ok,
            "config": config.to_json(), "report": report}
    files = {"report.json": _dumps(_jsonable(body))}
    files.update(tables)
    for name, text in files.items():
        (out / name).write_text(text)
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "seed": config.seed,
        "versions": {"shrinklab": __version__, "numpy": np.__version__, "backend": BACKEND},
        "inputs": {"config": _sha(config_text) if config_text is not None else _sha(_dumps(config.to_json())),
                   "map": _sha(_dumps(ctx.base.to_json()))},
        "outputs": {name: _sha(text) for name, text in sorted(files.items())},
    }
    (out / "manifest.json").write_text(_dumps(manifest))
    files["manifest.json"] = _dumps(manifest)
    return Bundle(out, files, ok)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, Fraction):
        return str(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj
