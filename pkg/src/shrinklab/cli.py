"""Command line interface."""

from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction
from pathlib import Path

from .geometry import Simplex, interval
from .lab import (
    EXPERIMENTS,
    SCHEMA_VERSION,
    ConfigError,
    ExperimentConfig,
    VerificationFailure,
    _dumps,
    _jsonable,
    parse_config,
    pseudo_physical_fraction,
    resolve_map,
    run_experiment,
)
from .maps import BudgetExhausted, MapError, load_map
from .measures import AtomicMeasure, MeasureError, empirical_measure, pomega_estimate
from .perturb import PerturbationFailure, build_pqr_perturbation, build_sqk_perturbation
from .shadowing import NoRecurrence, ShadowNotFound, ergodic_to_periodic_measure
from .shrinking import Refusal, certify_periodic_shrinking

EXIT_OK, EXIT_CONFIG, EXIT_VERIFY, EXIT_BUDGET = 0, 2, 3, 4


def _point(text):
    return tuple(Fraction(c) for c in text.replace(",", " ").split())


def _emit(body, out=None):
    text = _dumps(_jsonable({"schema_version": SCHEMA_VERSION, **body}))
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _load(source):
    try:
        return load_map(source)
    except (MapError, OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot load map {source!r}: {exc}") from None


def cmd_perturb(args):
    f = _load(args.map)
    if args.kind == "sqk":
        rep = build_sqk_perturbation(f, args.q, args.k, Fraction(args.eps), homeo=args.homeo)
    else:
        rep = build_pqr_perturbation(f, args.q, args.r, Fraction(args.eps))
    _emit({"report": rep.to_json(), "map": rep.g.to_json()}, args.out)
    return EXIT_OK


def cmd_certify(args):
    f = _load(args.map)
    if args.simplex:
        T = Simplex.from_json(json.loads(Path(args.simplex).read_text()))
    else:
        a, b = _point(args.interval)
        T = interval(a, b)
    res = certify_periodic_shrinking(f, T, args.period)
    _emit({"certificate": res.to_json()}, args.out)
    return EXIT_VERIFY if isinstance(res, Refusal) else EXIT_OK


def cmd_empirical(args):
    f = _load(args.map)
    x = _point(args.x)
    mu = empirical_measure(f, x, args.n)
    body = {"empirical": mu.to_json()}
    if args.stride:
        est = pomega_estimate(f, x, args.n, args.stride, args.depth)
        body["pomega"] = {"candidates": [m.to_json() for m in est.candidates], "dispersion": est.dispersion,
                          "times": list(est.times)}
    _emit(body, args.out)
    return EXIT_OK


def cmd_shadow(args):
    f = _load(args.map)
    try:
        res = ergodic_to_periodic_measure(f, _point(args.x), Fraction(args.eps0), args.horizon, args.depth)
    except (NoRecurrence, ShadowNotFound) as exc:
        _emit({"status": "failed", "reason": str(exc)}, args.out)
        return EXIT_VERIFY
    j = res.to_json()
    _emit({"nu": j["nu"], "bound": j["bound"], "pseudo_orbit": j["pseudo_orbit"],
           "shadow_orbit": j["shadow_orbit"], "details": j}, args.out)
    return EXIT_OK


def _config_from_args(args, experiment):
    values = {"experiment": experiment, "map": args.map, "seed": args.seed}
    for key in ("samples", "horizon", "depth", "workers", "perturb", "q", "k", "r", "max_period"):
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    for key in ("eps", "aa_tol", "alpha"):
        v = getattr(args, key, None)
        if v is not None:
            values[key] = Fraction(v)
    if args.eps_grid:
        values["eps_grid"] = tuple(Fraction(e) for e in args.eps_grid.replace(",", " ").split())
    return ExperimentConfig(**values).validate()


def _sampling_command(experiment):
    def run(args):
        config = _config_from_args(args, experiment)
        if args.out:
            bundle = run_experiment(config, args.out)
            for name in sorted(bundle.files):
                print(name)
            return EXIT_OK if bundle.verified else EXIT_VERIFY
        ctx = resolve_map(config)
        if experiment == "pseudo-physical" and args.measure:
            mu = AtomicMeasure.from_json(json.loads(Path(args.measure).read_text()))
            rep = pseudo_physical_fraction(ctx.g, mu, config)
            _emit({"measure": mu.to_json(), **rep.to_json()})
            return EXIT_OK
        report, _, ok = EXPERIMENTS[experiment](config, ctx)
        _emit({"experiment": experiment, "verified": ok, "report": report})
        return EXIT_OK if ok else EXIT_VERIFY
    return run


def cmd_run(args):
    path = Path(args.config)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    config = parse_config(text, base_dir=path.parent)
    if args.workers is not None:
        if args.workers < 1:
            raise ConfigError("workers must be at least 1")
        config.workers = args.workers
    bundle = run_experiment(config, args.out, config_text=text)
    for name in sorted(bundle.files):
        print(name)
    return EXIT_OK if bundle.verified else EXIT_VERIFY


def _sampling_args(p):
    p.add_argument("--map", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--samples", type=int)
    p.add_argument("--horizon", type=int)
    p.add_argument("--depth", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--eps-grid")
    p.add_argument("--perturb", choices=["sqk", "pqr"])
    p.add_argument("--q", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--r", type=int)
    p.add_argument("--eps")
    p.add_argument("--aa-tol")
    p.add_argument("--alpha")
    p.add_argument("--max-period", type=int)
    p.add_argument("--out", help="write a report bundle to this directory")


def build_parser():
    parser = argparse.ArgumentParser(prog="shrinklab")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("perturb", help="build a perturbation with certified shrinking sets")
    p.add_argument("kind", choices=["sqk", "pqr"])
    p.add_argument("--map", required=True)
    p.add_argument("--q", type=int, required=True)
    p.add_argument("--k", type=int, default=4)
    p.add_argument("--r", type=int, default=1)
    p.add_argument("--eps", required=True)
    p.add_argument("--homeo", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_perturb)

    p = sub.add_parser("certify", help="certify a periodic shrinking set")
    p.add_argument("--map", required=True)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--interval", help="endpoints 'a,b' in dimension one")
    g.add_argument("--simplex", help="JSON file with a simplex")
    p.add_argument("--period", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("empirical", help="exact empirical measure of an orbit")
    p.add_argument("--map", required=True)
    p.add_argument("--x", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--stride", type=int, default=0)
    p.add_argument("--depth", type=int, default=20)
    p.add_argument("--out")
    p.set_defaults(func=cmd_empirical)

    p = sub.add_parser("shadow", help="periodic measure near a recurrent orbit segment")
    p.add_argument("--map", required=True)
    p.add_argument("--x", required=True)
    p.add_argument("--eps0", required=True)
    p.add_argument("--horizon", type=int, default=1000)
    p.add_argument("--depth", type=int, default=20)
    p.add_argument("--out")
    p.set_defaults(func=cmd_shadow)

    for name, helptext in (("pseudo-physical", "Monte Carlo fractions near periodic measures"),
                           ("birkhoff", "Birkhoff convergence statistics"),
                           ("unique-ergodicity", "search for two distinct invariant measures"),
                           ("closure-compare", "sampled limits against periodic measures"),
                           ("empty-interior", "convex combinations without pseudo-physical evidence")):
        p = sub.add_parser(name, help=helptext)
        _sampling_args(p)
        if name == "pseudo-physical":
            p.add_argument("--measure", help="JSON file with an atomic measure")
        p.set_defaults(func=_sampling_command(name))

    p = sub.add_parser("run", help="run an experiment from a config file")
    p.add_argument("config")
    p.add_argument("--out", default="out")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_run)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, MapError, MeasureError, ValueError, ZeroDivisionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BudgetExhausted as exc:
        print(f"budget exhausted: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (PerturbationFailure, VerificationFailure, NoRecurrence, ShadowNotFound, AssertionError) as exc:
        print(f"verification failed: {exc}", file=sys.stderr)
        return EXIT_VERIFY


if __name__ == "__main__":
    sys.exit(main())
