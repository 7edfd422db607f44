"""Independent reference implementations used only by the tests."""
import functools
import itertools
import math

import numpy as np

SPEED_OF_LIGHT = 3e8


@functools.lru_cache(maxsize=None)
def _combinations(k, n):
    return np.array(list(itertools.combinations(range(k), n)), dtype=np.int16).reshape(-1, n)


def vertex_enumeration(c, A, b, chunk=50000, tol=1e-9):
    """min c'x s.t. Ax <= b, x >= 0 by visiting every basic solution.

    Returns (objective, x) or (None, None) when no vertex is feasible. Bases
    whose rows leave some column uncovered are singular and skipped before
    any factorization. Only suitable for a handful of variables.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    m, n = A.shape
    G = np.vstack([A, -np.eye(n)])
    h = np.concatenate([b, np.zeros(n)])
    scale = np.maximum(np.abs(G).max(axis=1), np.abs(h))
    scale[scale == 0] = 1.0
    support = ((G != 0) * (1 << np.arange(n))).sum(axis=1).astype(np.int64)
    full = (1 << n) - 1
    best, best_x = None, None
    combos = _combinations(m + n, n)
    for s in range(0, len(combos), chunk):
        block = combos[s:s + chunk]
        block = block[np.bitwise_or.reduce(support[block], axis=1) == full]
        if not len(block):
            continue
        M = G[block]
        det = np.linalg.det(M)
        ok = np.abs(det) > 1e-12 * np.prod(np.abs(M).max(axis=2), axis=1)
        if not ok.any():
            continue
        xs = np.linalg.solve(M[ok], h[block[ok]][..., None])[..., 0]
        feas = np.all(xs @ G.T <= h + tol * scale, axis=1)
        if not feas.any():
            continue
        xs = xs[feas]
        vals = xs @ c
        k = int(np.argmin(vals))
        if best is None or vals[k] < best:
            best, best_x = float(vals[k]), xs[k]
    return best, best_x


def free_space_gain(A_d, f_c, d, d_e):
    return A_d * (SPEED_OF_LIGHT / (4 * math.pi * f_c * d)) ** d_e


def double_factorial(k):
    out = 1
    while k > 1:
        out *= k
        k -= 2
    return out


def brute_force_partitions(N):
    """Every (SD, AD) pairing of N labelled devices, orientation ignored, by recursion on sets."""
    out = set()

    def rec(free, pairs):
        out.add(frozenset(pairs))
        free = sorted(free)
        for i, a in enumerate(free):
            for b in free[i + 1:]:
                rec(set(free) - {a, b}, pairs | {frozenset((a, b))})

    rec(set(range(N)), frozenset())
    return out
