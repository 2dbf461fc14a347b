"""Slow, independent reference implementations used as test oracles."""

import itertools
import math

import numpy as np


def sse(values):
    values = [float(v) for v in values]
    if not values:
        return 0.0
    mean = sum(values) / len(values)
    return sum((v - mean) ** 2 for v in values)


def midpoint(a, b):
    t = (a + b) / 2
    return t if t < b else a


def enumerate_splits(X, y, n_levels, min_leaf=1):
    """Every admissible split as (feature, key, rule, gain) in canonical order.

    ``rule`` is ("num", threshold) or ("cat", frozenset of left levels);
    ``key`` sorts candidates in the documented tie-break order.
    """
    n, p = X.shape
    parent = sse(y)
    out = []
    for f in range(p):
        col = X[:, f]
        if n_levels[f] > 0:
            present = sorted({int(v) for v in col})
            first, rest = present[0], present[1:]
            subsets = []
            for r in range(len(rest)):
                for extra in itertools.combinations(rest, r):
                    subsets.append((first,) + extra)
            for left in sorted(subsets):
                mask = np.isin(col.astype(int), left)
                nl = int(mask.sum())
                if nl < min_leaf or n - nl < min_leaf:
                    continue
                gain = parent - sse(y[mask]) - sse(y[~mask])
                out.append((f, left, ("cat", frozenset(left)), gain))
        else:
            distinct = sorted(set(col.tolist()))
            for a, b in zip(distinct, distinct[1:]):
                t = midpoint(a, b)
                mask = col <= t
                nl = int(mask.sum())
                if nl < min_leaf or n - nl < min_leaf:
                    continue
                gain = parent - sse(y[mask]) - sse(y[~mask])
                out.append((f, (t,), ("num", t), gain))
    return out


def brute_force_best(X, y, n_levels, min_leaf=1, tie_rel=1e-12, accept_rel=1e-13):
    """Best split under max gain, first in canonical order among ties; None if no gain."""
    cands = enumerate_splits(X, y, n_levels, min_leaf)
    if not cands:
        return None
    top = max(c[3] for c in cands)
    if not top > accept_rel * float(np.dot(y, y)):
        return None
    tied = [c for c in cands if c[3] >= top - tie_rel * abs(top)]
    tied.sort(key=lambda c: (c[0], c[1]))
    f, _, rule, gain = tied[0]
    return f, rule, gain


def newton_objective(w, G, H, lam, gamma=0.0):
    return G * w + 0.5 * (H + lam) * w * w + gamma


def golden_section_min(fun, lo, hi, tol=1e-9):
    phi = (math.sqrt(5) - 1) / 2
    a, b = lo, hi
    c = b - phi * (b - a)
    d = a + phi * (b - a)
    fc, fd = fun(c), fun(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - phi * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + phi * (b - a)
            fd = fun(d)
    return (a + b) / 2


def mse_two_pass(pred, obs):
    total = 0.0
    for a, b in zip(pred, obs):
        total += (float(a) - float(b)) ** 2
    return total / len(pred)


def normal_equations(D, y):
    return np.linalg.solve(D.T @ D, D.T @ y)
