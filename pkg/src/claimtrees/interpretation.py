"""Permutation variable importance and partial dependence.

Both work with any fitted model exposing ``predict(X)`` on an ``(n, p)``
matrix in schema column order; a ``feature_names`` attribute, when present,
is checked against the data.
"""

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .ensembles import BAGGING, RANDOM_FOREST
from .errors import DuplicateFeature, InvalidRepeats, NotApplicable, SchemaMismatch, UnknownFeature

MAX_BACKGROUND = 5000
DEFAULT_GRID = 25
DEFAULT_REPEATS = 20


def _rmse(pred, y):
    d = pred - y
    return float(np.sqrt(np.mean(d * d)))


def _check(model, data):
    names = getattr(model, "feature_names", None)
    if names is not None and tuple(names) != data.schema.names:
        raise SchemaMismatch(f"model features {tuple(names)} differ from data features {data.schema.names}")


def _perm_rng(seed, feature, repeat):
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(feature), int(repeat)]))


@dataclass
class ImportanceReport:
    """Importance samples, shape ``(p, repeats)``, in RMSE units above baseline."""

    features: tuple
    samples: np.ndarray
    baseline_rmse: float
    repeats: int
    seed: int
    data_slice: str = "train"
    mode: str = "model"

    @property
    def mean(self):
        return self.samples.mean(axis=1)

    def as_dict(self):
        return dict(zip(self.features, self.mean.tolist()))

    def ranking(self):
        """Feature names by decreasing mean importance (stable for ties)."""
        order = np.argsort(-self.mean, kind="mergesort")
        return [self.features[i] for i in order]

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["feature", "repeat", "vi"])
            for f, row in zip(self.features, self.samples):
                for r, v in enumerate(row):
                    w.writerow([f, r, repr(float(v))])


def permutation_importance(model, data, repeats=DEFAULT_REPEATS, seed=0, *, data_slice="train",
                           n_jobs=1, metric=_rmse):
    """Increase in error after shuffling each feature column.

    The baseline error is computed once. For feature ``j`` and repeat ``r``
    column ``j`` is shuffled with a stream seeded by ``(seed, j, r)``, the
    model is re-scored and ``metric(permuted) - baseline`` recorded. The
    input dataset is never modified.
    """
    if int(repeats) != repeats or repeats < 1:
        raise InvalidRepeats(f"repeats must be a positive integer, got {repeats}")
    _check(model, data)
    X = np.array(data.X)
    y = data.response
    base = metric(model.predict(X), y)

    def one_feature(j):
        Xp = X.copy()
        out = np.empty(repeats)
        for r in range(repeats):
            perm = _perm_rng(seed, j, r).permutation(data.n)
            Xp[:, j] = X[perm, j]
            out[r] = metric(model.predict(Xp), y) - base
        return out

    if n_jobs and n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            rows = list(pool.map(one_feature, range(data.p)))
    else:
        rows = [one_feature(j) for j in range(data.p)]
    return ImportanceReport(data.schema.names, np.vstack(rows), base, int(repeats), int(seed), data_slice)


def oob_permutation_importance(model, train, repeats=DEFAULT_REPEATS, seed=0):
    """Per-tree out-of-bag importance averaged over the trees.

    For each tree the error on its out-of-bag rows is compared before and
    after shuffling feature ``j`` among those rows. A tree that never
    splits on ``j`` contributes exactly zero.
    """
    if model.kind not in (BAGGING, RANDOM_FOREST) or model.oob_indices is None:
        raise NotApplicable("out-of-bag importance needs a bagging or random forest model")
    if int(repeats) != repeats or repeats < 1:
        raise InvalidRepeats(f"repeats must be a positive integer, got {repeats}")
    _check(model, train)
    X = train.X
    y = train.response
    p = train.p
    total = np.zeros((p, repeats))
    used = 0
    for b, (tree, oob) in enumerate(zip(model.trees, model.oob_indices)):
        if len(oob) == 0:
            continue
        used += 1
        Xo = np.array(X[oob])
        yo = y[oob]
        base = _rmse(tree.predict(Xo), yo)
        splits_on = set(tree.used_features())
        for j in splits_on:
            col = Xo[:, j].copy()
            for r in range(repeats):
                perm = np.random.default_rng(np.random.SeedSequence([int(seed), b, j, r])).permutation(len(oob))
                Xo[:, j] = col[perm]
                total[j, r] += _rmse(tree.predict(Xo), yo) - base
            Xo[:, j] = col
    if used == 0:
        raise NotApplicable("no tree has out-of-bag rows")
    return ImportanceReport(train.schema.names, total / used, float("nan"), int(repeats), int(seed),
                            "train", mode="oob")


# --- partial dependence ------------------------------------------------------------

@dataclass
class PdpSurface:
    """Averaged predictions over a grid.

    ``grids`` holds one axis per feature (level indices for categoricals);
    ``values`` has shape ``(len(grids[0]),)`` or ``(len(grids[0]), len(grids[1]))``.
    """

    features: tuple
    grids: tuple
    values: np.ndarray
    n_background: int
    labels: tuple = ()

    @property
    def grid(self):
        """Grid points as a list of tuples, row-major over the axes."""
        if len(self.grids) == 1:
            return [(v,) for v in self.grids[0]]
        return [(a, b) for a in self.grids[0] for b in self.grids[1]]

    def _fmt(self, k, v):
        levels = self.labels[k] if self.labels else None
        return levels[int(v)] if levels else repr(float(v))

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            if len(self.features) == 1:
                w.writerow(["feature", "feature_value", "pdp_value"])
                for v, f in zip(self.grids[0], self.values):
                    w.writerow([self.features[0], self._fmt(0, v), repr(float(f))])
            else:
                w.writerow(["feature_a", "feature_a_value", "feature_b", "feature_b_value", "pdp_value"])
                for i, a in enumerate(self.grids[0]):
                    for k, b in enumerate(self.grids[1]):
                        w.writerow([self.features[0], self._fmt(0, a), self.features[1],
                                    self._fmt(1, b), repr(float(self.values[i, k]))])


def feature_grid(data, name, grid_size=DEFAULT_GRID):
    """Equally spaced points over the observed range, or every level."""
    spec = data.schema[name]
    if spec.is_categorical:
        return np.arange(spec.n_levels, dtype=np.float64)
    if grid_size < 2:
        raise ValueError("grid_size must be >= 2 for numeric features")
    col = data.columns[name]
    lo, hi = float(col.min()), float(col.max())
    if lo == hi:
        return np.array([lo])
    return np.linspace(lo, hi, int(grid_size))


def _background(data, max_background, seed):
    X = data.X
    if data.n > max_background:
        rows = np.sort(np.random.default_rng(seed).choice(data.n, size=max_background, replace=False))
        X = X[rows]
    return np.array(X)


def _resolve(data, name):
    if name not in data.schema.names:
        raise UnknownFeature(name)
    return data.schema.index(name)


def _labels(data, names):
    return tuple(data.schema[n].levels for n in names)


def partial_dependence(model, data, feature, grid_size=DEFAULT_GRID, *,
                       max_background=MAX_BACKGROUND, seed=0):
    """Mean prediction with ``feature`` clamped to each grid value."""
    k = _resolve(data, feature)
    _check(model, data)
    grid = feature_grid(data, feature, grid_size)
    Xb = _background(data, max_background, seed)
    m = len(Xb)
    stacked = np.tile(Xb, (len(grid), 1))
    stacked[:, k] = np.repeat(grid, m)
    values = model.predict(stacked).reshape(len(grid), m).mean(axis=1)
    return PdpSurface((feature,), (grid,), values, m, _labels(data, [feature]))


def partial_dependence_2way(model, data, feature_a, feature_b, grid_size=DEFAULT_GRID, *,
                            max_background=MAX_BACKGROUND, seed=0):
    """Mean prediction over the cross product of two feature grids."""
    ka = _resolve(data, feature_a)
    kb = _resolve(data, feature_b)
    if ka == kb:
        raise DuplicateFeature(f"feature {feature_a!r} given twice")
    _check(model, data)
    ga = feature_grid(data, feature_a, grid_size)
    gb = feature_grid(data, feature_b, grid_size)
    Xb = _background(data, max_background, seed)
    m = len(Xb)
    values = np.empty((len(ga), len(gb)))
    stacked = np.tile(Xb, (len(gb), 1))
    stacked[:, kb] = np.repeat(gb, m)
    for i, a in enumerate(ga):
        stacked[:, ka] = a
        values[i] = model.predict(stacked).reshape(len(gb), m).mean(axis=1)
    return PdpSurface((feature_a, feature_b), (ga, gb), values, m, _labels(data, [feature_a, feature_b]))
