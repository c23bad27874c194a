"""Float Monte Carlo kernels: orbit iteration and test-function averages.

The numba backend is used when available unless ``SHRINKLAB_DISABLE_NUMBA=1``;
the numpy backend computes the same quantities vectorized over samples.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .geometry import Simplex
from .maps import CompositeMap
from .measures import family

LOCATE_TOL = 1e-12

try:
    if os.environ.get("SHRINKLAB_DISABLE_NUMBA", "") not in ("", "0"):
        raise ImportError("disabled")
    from numba import njit
    BACKEND = "numba"
except ImportError:
    njit = None
    BACKEND = "numpy"


@dataclass(frozen=True)
class MapProgram:
    """Flat float encoding of a composite map."""

    dim: int
    kinds: np.ndarray   # 0 affine, 1 radial, per layer
    starts: np.ndarray  # piece index range per layer
    v0: np.ndarray
    inv: np.ndarray
    A: np.ndarray
    b: np.ndarray
    gamma: np.ndarray
    centroid: np.ndarray
    expo: np.ndarray


def _simplex_arrays(T: Simplex):
    m = T.dim
    v0 = [float(c) for c in T.vertices[0]]
    inv = [[float(c) for c in row] for row in T._inv]
    gamma = [float(g) for g in T.gamma]
    cen = [float(c) for c in T.centroid]
    return v0, inv, gamma + [0.0] * (m + 1 - len(gamma)), cen


def compile_map(f: CompositeMap) -> MapProgram:
    m = f.dim
    kinds, starts = [], [0]
    v0s, invs, As, bs, gams, cens, expos = [], [], [], [], [], [], []
    for layer in f.layers:
        if layer.kind == "affine":
            kinds.append(0)
            for piece in layer.pieces:
                v0, inv, gam, cen = _simplex_arrays(piece.domain)
                v0s.append(v0), invs.append(inv), gams.append(gam), cens.append(cen)
                As.append([[float(c) for c in row] for row in piece.matrix])
                bs.append([float(c) for c in piece.offset])
                expos.append(1)
        else:
            kinds.append(1)
            for T, n in layer.charts:
                v0, inv, gam, cen = _simplex_arrays(T)
                v0s.append(v0), invs.append(inv), gams.append(gam), cens.append(cen)
                As.append([[0.0] * m for _ in range(m)])
                bs.append([0.0] * m)
                expos.append(n)
        starts.append(len(v0s))
    if not v0s:
        z = np.zeros((0, m))
        return MapProgram(m, np.zeros(0, np.int64), np.zeros(1, np.int64), z, np.zeros((0, m, m)),
                          np.zeros((0, m, m)), z, np.zeros((0, m + 1)), z, np.zeros(0, np.int64))
    return MapProgram(m, np.array(kinds, np.int64), np.array(starts, np.int64), np.array(v0s, float),
                      np.array(invs, float), np.array(As, float), np.array(bs, float),
                      np.array(gams, float), np.array(cens, float), np.array(expos, np.int64))


@dataclass(frozen=True)
class FamilyTable:
    dim: int
    size: np.ndarray    # nodes per axis per function
    values: np.ndarray  # node values in [0, 1], padded


def compile_family(functions) -> FamilyTable:
    functions = list(functions)
    dim = functions[0].dim
    width = max(len(psi.values) for psi in functions)
    vals = np.zeros((len(functions), width))
    for i, psi in enumerate(functions):
        vals[i, :len(psi.values)] = np.array(psi.values, float) / (1 << psi.level)
    size = np.array([psi.size for psi in functions], np.int64)
    return FamilyTable(dim, size, vals)


# numpy backend ------------------------------------------------------------------


def _apply_numpy(prog: MapProgram, X):
    m = prog.dim
    for li, kind in enumerate(prog.kinds):
        out = X.copy()
        done = np.zeros(len(X), bool)
        for p in range(prog.starts[li], prog.starts[li + 1]):
            beta = (X - prog.v0[p]) @ prog.inv[p].T
            beta0 = 1.0 - beta.sum(axis=1)
            mask = ~done & (beta0 >= -LOCATE_TOL) & np.all(beta >= -LOCATE_TOL, axis=1)
            if not mask.any():
                continue
            done |= mask
            Y = X[mask]
            if kind == 0:
                out[mask] = Y @ prog.A[p].T + prog.b[p]
            else:
                n = prog.expo[p]
                if n == 1:
                    continue
                full = np.column_stack([beta0[mask], beta[mask]])
                s = np.zeros(len(Y))
                for k in range(m + 1):
                    g = prog.gamma[p, k]
                    if g > 0:
                        s = np.maximum(s, 1.0 - full[:, k] / g)
                c = prog.centroid[p]
                out[mask] = c + (s ** (n - 1))[:, None] * (Y - c)
        X = np.clip(out, 0.0, 1.0)
    return X


def _family_numpy(fam: FamilyTable, X):
    nf = len(fam.size)
    res = np.empty((len(X), nf))
    for i in range(nf):
        row = fam.size[i]
        n = row - 1
        v = fam.values[i]
        if fam.dim == 1:
            u = X[:, 0] * n
            k = np.minimum(u.astype(np.int64), n - 1)
            t = u - k
            res[:, i] = v[k] + (v[k + 1] - v[k]) * t
        else:
            u, w = X[:, 0] * n, X[:, 1] * n
            a = np.minimum(u.astype(np.int64), n - 1)
            c = np.minimum(w.astype(np.int64), n - 1)
            s, t = u - a, w - c
            res[:, i] = (v[c * row + a] * (1 - s) * (1 - t) + v[c * row + a + 1] * s * (1 - t)
                         + v[(c + 1) * row + a] * (1 - s) * t + v[(c + 1) * row + a + 1] * s * t)
    return res


def _orbits_numpy(X, prog, fam, steps, checkpoints, tail_start):
    S = len(X)
    nf = len(fam.size)
    acc = np.zeros((S, nf))
    tail = np.zeros((S, nf))
    ints = np.zeros((S, len(checkpoints), nf))
    ci = 0
    for t in range(steps):
        vals = _family_numpy(fam, X)
        acc += vals
        if t >= tail_start:
            tail += vals
        while ci < len(checkpoints) and checkpoints[ci] == t + 1:
            ints[:, ci] = acc / (t + 1)
            ci += 1
        X = _apply_numpy(prog, X)
    return ints, tail / (steps - tail_start), X


# numba backend ------------------------------------------------------------------

if njit is not None:

    @njit(cache=True, nogil=True)
    def _apply_point(x, m, kinds, starts, v0, inv, A, b, gamma, cen, expo, out, beta):
        for li in range(kinds.shape[0]):
            for d in range(m):
                out[d] = x[d]
            for p in range(starts[li], starts[li + 1]):
                total = 0.0
                inside = True
                for k in range(m):
                    acc = 0.0
                    for d in range(m):
                        acc += inv[p, k, d] * (x[d] - v0[p, d])
                    beta[k + 1] = acc
                    total += acc
                    if acc < -LOCATE_TOL:
                        inside = False
                beta[0] = 1.0 - total
                if beta[0] < -LOCATE_TOL:
                    inside = False
                if not inside:
                    continue
                if kinds[li] == 0:
                    for d in range(m):
                        acc = b[p, d]
                        for e in range(m):
                            acc += A[p, d, e] * x[e]
                        out[d] = acc
                elif expo[p] > 1:
                    s = 0.0
                    for k in range(m + 1):
                        g = gamma[p, k]
                        if g > 0.0:
                            r = 1.0 - beta[k] / g
                            if r > s:
                                s = r
                    f = s ** (expo[p] - 1)
                    for d in range(m):
                        out[d] = cen[p, d] + f * (x[d] - cen[p, d])
                break
            for d in range(m):
                v = out[d]
                x[d] = 0.0 if v < 0.0 else (1.0 if v > 1.0 else v)

    @njit(cache=True, nogil=True)
    def _family_point(x, dim, size, values, res):
        for i in range(size.shape[0]):
            row = size[i]
            n = row - 1
            if dim == 1:
                u = x[0] * n
                k = min(int(u), n - 1)
                t = u - k
                res[i] = values[i, k] + (values[i, k + 1] - values[i, k]) * t
            else:
                u = x[0] * n
                w = x[1] * n
                a = min(int(u), n - 1)
                c = min(int(w), n - 1)
                s = u - a
                t = w - c
                res[i] = (values[i, c * row + a] * (1 - s) * (1 - t) + values[i, c * row + a + 1] * s * (1 - t)
                          + values[i, (c + 1) * row + a] * (1 - s) * t
                          + values[i, (c + 1) * row + a + 1] * s * t)

    @njit(cache=True, nogil=True)
    def _orbits_numba(X, m, kinds, starts, v0, inv, A, b, gamma, cen, expo,
                      dim, size, values, steps, checkpoints, tail_start):
        S = X.shape[0]
        nf = size.shape[0]
        nc = checkpoints.shape[0]
        ints = np.zeros((S, nc, nf))
        tail = np.zeros((S, nf))
        final = np.empty((S, m))
        x = np.empty(m)
        out = np.empty(m)
        beta = np.empty(m + 1)
        res = np.empty(nf)
        acc = np.empty(nf)
        for s in range(S):
            for d in range(m):
                x[d] = X[s, d]
            acc[:] = 0.0
            ci = 0
            for t in range(steps):
                _family_point(x, dim, size, values, res)
                for i in range(nf):
                    acc[i] += res[i]
                    if t >= tail_start:
                        tail[s, i] += res[i]
                while ci < nc and checkpoints[ci] == t + 1:
                    for i in range(nf):
                        ints[s, ci, i] = acc[i] / (t + 1)
                    ci += 1
                _apply_point(x, m, kinds, starts, v0, inv, A, b, gamma, cen, expo, out, beta)
            for i in range(nf):
                tail[s, i] /= steps - tail_start
            for d in range(m):
                final[s, d] = x[d]
        return ints, tail, final


def _run_chunk(X, prog, fam, steps, checkpoints, tail_start, backend):
    if backend == "numba":
        return _orbits_numba(X, prog.dim, prog.kinds, prog.starts, prog.v0, prog.inv, prog.A, prog.b,
                             prog.gamma, prog.centroid, prog.expo, fam.dim, fam.size, fam.values,
                             steps, checkpoints, tail_start)
    return _orbits_numpy(X, prog, fam, steps, checkpoints, tail_start)


@dataclass
class OrbitStats:
    checkpoints: np.ndarray
    integrals: np.ndarray  # (samples, checkpoints, functions)
    tail: np.ndarray       # (samples, functions) averages over [tail_start, steps)
    final: np.ndarray      # (samples, dim) point after `steps` iterations


def orbit_statistics(f: CompositeMap, X, functions, steps, checkpoints=None, tail_start=None,
                     workers=1, chunk=1024, backend=None) -> OrbitStats:
    """Float orbit averages of the test functions for each start point in X."""
    backend = backend or BACKEND
    if backend == "numba" and njit is None:
        raise RuntimeError("numba backend unavailable")
    X = np.ascontiguousarray(np.asarray(X, float).reshape(-1, f.dim))
    steps = int(steps)
    if steps < 1:
        raise ValueError("steps must be at least 1")
    cps = np.array(sorted(set(checkpoints or [steps])), np.int64)
    if cps[0] < 1 or cps[-1] > steps:
        raise ValueError("checkpoints must lie in 1..steps")
    tail_start = steps // 2 if tail_start is None else int(tail_start)
    prog = compile_map(f)
    fam = compile_family(functions)
    parts = [X[i:i + chunk] for i in range(0, len(X), chunk)] or [X]
    args = (prog, fam, steps, cps, tail_start, backend)
    if workers > 1 and len(parts) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda part: _run_chunk(part, *args), parts))
    else:
        results = [_run_chunk(part, *args) for part in parts]
    ints = np.concatenate([r[0] for r in results])
    tail = np.concatenate([r[1] for r in results])
    final = np.concatenate([r[2] for r in results])
    return OrbitStats(cps, ints, tail, final)


def iterate_points(f: CompositeMap, X, steps, backend=None):
    """Float images f^steps(x) for each row of X."""
    stats = orbit_statistics(f, X, family(f.dim).functions(1), steps, backend=backend)
    return stats.final


def sample_points(seed: int, start: int, count: int, dim: int):
    """Uniform points of [0,1)^dim keyed by (seed, sample index)."""
    out = np.empty((count, dim))
    for j in range(count):
        gen = np.random.Generator(np.random.Philox(np.random.SeedSequence((int(seed), start + j))))
        out[j] = gen.random(dim)
    return out


def float_distance(a, b):
    """Truncated weak* sum for float integral vectors (last axis)."""
    a, b = np.asarray(a), np.asarray(b)
    w = 0.5 ** np.arange(1, a.shape[-1] + 1)
    return np.sum(w * np.abs(a - b), axis=-1)
