"""Compiled inner loops for split search and tree evaluation.

Split quality is expressed through a single score shared by both leaf modes::

    score = G_L^2/(H_L+lam) + G_R^2/(H_R+lam) - G^2/(H+lam)

With centred responses, unit hessians and ``lam = 0`` this is exactly the
reduction in squared error; in Newton mode the gain is ``score/2 - gamma``.
"""

import numpy as np
from numba import njit

NOGIL = True
CACHE = True
# Exhaustive categorical subsets up to this many levels; single-level splits beyond.
MAX_EXHAUSTIVE_LEVELS = 12
NO_FEATURE = -1


@njit(nogil=NOGIL, cache=CACHE)
def _score(gl, hl, g, h, lam):
    gr = g - gl
    hr = h - hl
    return gl * gl / (hl + lam) + gr * gr / (hr + lam) - g * g / (h + lam)


@njit(nogil=NOGIL, cache=CACHE)
def _lex_less(a, b):
    """Lexicographic order of two level subsets given as bitmasks."""
    d = a ^ b
    if d == 0:
        return False
    low = d & -d
    above = ~((low << 1) - 1)
    if a & low:
        return (b & above) != 0
    return (a & above) == 0


@njit(nogil=NOGIL, cache=CACHE)
def _numeric_best(X, rows, g, h, f, min_leaf, lam, g_tot, h_tot, cutoff):
    """Best threshold on numeric feature ``f``.

    Returns (score, threshold) of the lowest threshold whose score is at
    least ``cutoff``; with ``cutoff = -inf`` the maximum score is returned
    together with its first threshold.
    """
    m = rows.shape[0]
    vals = np.empty(m)
    for i in range(m):
        vals[i] = X[rows[i], f]
    order = np.argsort(vals, kind="mergesort")
    best = -np.inf
    best_t = np.nan
    gl = 0.0
    hl = 0.0
    for i in range(m - 1):
        k = order[i]
        gl += g[k]
        hl += h[k]
        a = vals[k]
        b = vals[order[i + 1]]
        if a == b:
            continue
        nl = i + 1
        if nl < min_leaf:
            continue
        if m - nl < min_leaf:
            break
        s = _score(gl, hl, g_tot, h_tot, lam)
        if cutoff == -np.inf:
            if s > best:
                best = s
                t = 0.5 * (a + b)
                best_t = t if t < b else a
        elif s >= cutoff:
            t = 0.5 * (a + b)
            return s, (t if t < b else a)
    return best, best_t


@njit(nogil=NOGIL, cache=CACHE)
def _categorical_best(X, rows, g, h, f, n_levels, min_leaf, lam, g_tot, h_tot, cutoff):
    """Best level subset on categorical feature ``f``.

    Candidates are subsets of the levels present in the node that contain
    the smallest present level (so each partition appears once). With
    ``cutoff = -inf`` returns the max score and the lexicographically
    smallest subset attaining it; otherwise the lexicographically smallest
    subset scoring at least ``cutoff``.
    """
    gs = np.zeros(n_levels)
    hs = np.zeros(n_levels)
    cs = np.zeros(n_levels, dtype=np.int64)
    for i in range(rows.shape[0]):
        lv = np.int64(X[rows[i], f])
        gs[lv] += g[i]
        hs[lv] += h[i]
        cs[lv] += 1
    present = np.empty(n_levels, dtype=np.int64)
    k = 0
    for lv in range(n_levels):
        if cs[lv] > 0:
            present[k] = lv
            k += 1
    best = -np.inf
    best_mask = np.int64(0)
    if k < 2:
        return best, best_mask
    m = rows.shape[0]
    use_cutoff = cutoff != -np.inf
    if n_levels <= MAX_EXHAUSTIVE_LEVELS:
        n_sub = np.int64(1) << (k - 1)
        # bit j of `code` selects present[j + 1]; present[0] is always on the left
        for code in range(n_sub - 1):
            mask = np.int64(1) << present[0]
            gl = gs[present[0]]
            hl = hs[present[0]]
            cl = cs[present[0]]
            for j in range(k - 1):
                if (code >> j) & 1:
                    lv = present[j + 1]
                    mask |= np.int64(1) << lv
                    gl += gs[lv]
                    hl += hs[lv]
                    cl += cs[lv]
            if cl < min_leaf or m - cl < min_leaf:
                continue
            s = _score(gl, hl, g_tot, h_tot, lam)
            if use_cutoff:
                if s >= cutoff and (best_mask == 0 or _lex_less(mask, best_mask)):
                    best = s
                    best_mask = mask
            elif s > best or (s == best and _lex_less(mask, best_mask)):
                best = s
                best_mask = mask
    else:
        for j in range(k):
            lv = present[j]
            cl = cs[lv]
            if cl < min_leaf or m - cl < min_leaf:
                continue
            s = _score(gs[lv], hs[lv], g_tot, h_tot, lam)
            mask = np.int64(1) << lv
            if use_cutoff:
                if s >= cutoff:
                    return s, mask
            elif s > best:
                best = s
                best_mask = mask
    return best, best_mask


@njit(nogil=NOGIL, cache=CACHE)
def find_split(X, rows, g, h, features, n_levels, min_leaf, lam, tie_rel):
    """Search ``features`` for the best split of the node holding ``rows``.

    ``g`` and ``h`` are aligned with ``rows``. Returns
    ``(feature, threshold, left_mask, score)``; ``feature == -1`` when no
    split respects ``min_leaf``. The winner is the maximum score, ties
    within ``tie_rel * |max|`` broken by feature index, then threshold or
    lexicographic level subset.
    """
    g_tot = 0.0
    h_tot = 0.0
    for i in range(rows.shape[0]):
        g_tot += g[i]
        h_tot += h[i]
    nf = features.shape[0]
    fbest = np.full(nf, -np.inf)
    for q in range(nf):
        f = features[q]
        if n_levels[f] > 0:
            s, _ = _categorical_best(X, rows, g, h, f, n_levels[f], min_leaf, lam, g_tot, h_tot, -np.inf)
        else:
            s, _ = _numeric_best(X, rows, g, h, f, min_leaf, lam, g_tot, h_tot, -np.inf)
        fbest[q] = s
    top = -np.inf
    for q in range(nf):
        if fbest[q] > top:
            top = fbest[q]
    if top == -np.inf:
        return NO_FEATURE, np.nan, np.int64(0), -np.inf
    cutoff = top - tie_rel * abs(top)
    # candidate features are visited in ascending index order
    order = np.argsort(features, kind="mergesort")
    for oq in range(nf):
        q = order[oq]
        if fbest[q] < cutoff:
            continue
        f = features[q]
        if n_levels[f] > 0:
            s, mask = _categorical_best(X, rows, g, h, f, n_levels[f], min_leaf, lam, g_tot, h_tot, cutoff)
            return f, np.nan, mask, s
        s, t = _numeric_best(X, rows, g, h, f, min_leaf, lam, g_tot, h_tot, cutoff)
        return f, t, np.int64(0), s
    return NO_FEATURE, np.nan, np.int64(0), -np.inf


@njit(nogil=NOGIL, cache=CACHE)
def _route(X, i, root, feature, threshold, left_mask, is_cat, left, right):
    node = root
    while feature[node] >= 0:
        f = feature[node]
        x = X[i, f]
        if is_cat[node]:
            go_left = False
            if x >= 0 and x < 63:
                go_left = ((left_mask[node] >> np.int64(x)) & 1) == 1
        else:
            go_left = x <= threshold[node]
        node = root + (left[node] if go_left else right[node])
    return node


@njit(nogil=NOGIL, cache=CACHE)
def apply_tree(X, feature, threshold, left_mask, is_cat, left, right):
    """Leaf index reached by every row of ``X``."""
    out = np.empty(X.shape[0], dtype=np.int64)
    for i in range(X.shape[0]):
        out[i] = _route(X, i, 0, feature, threshold, left_mask, is_cat, left, right)
    return out


@njit(nogil=NOGIL, cache=CACHE)
def predict_trees(X, offsets, feature, threshold, left_mask, is_cat, left, right, value):
    """Per-tree predictions, shape ``(n, B)``, for trees packed at ``offsets``."""
    n = X.shape[0]
    B = offsets.shape[0] - 1
    out = np.empty((n, B))
    for i in range(n):
        for b in range(B):
            leaf = _route(X, i, offsets[b], feature, threshold, left_mask, is_cat, left, right)
            out[i, b] = value[leaf]
    return out


@njit(nogil=NOGIL, cache=CACHE)
def sum_trees(X, offsets, feature, threshold, left_mask, is_cat, left, right, value):
    """Left-to-right sum over trees of their predictions, per row."""
    n = X.shape[0]
    B = offsets.shape[0] - 1
    out = np.zeros(n)
    for i in range(n):
        acc = 0.0
        for b in range(B):
            leaf = _route(X, i, offsets[b], feature, threshold, left_mask, is_cat, left, right)
            acc += value[leaf]
        out[i] = acc
    return out
