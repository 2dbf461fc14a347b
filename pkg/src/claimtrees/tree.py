"""CART regression trees with squared-error or second-order (Newton) leaves.

Numeric splits send ``x <= threshold`` left, thresholds being midpoints
between consecutive distinct values. Categorical splits send a subset of
levels left; the subset always contains the smallest level present in the
node, and levels absent from the node at training time are routed right.
Categorical features with at most 12 levels are searched exhaustively, wider
ones by single-level-versus-rest candidates.

Ties between candidate splits are broken by lowest feature index, then the
lowest threshold or the lexicographically smallest level subset.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import EmptyDataset, InvalidConfig, InvalidMtry, SchemaMismatch

MEAN = "mean"
NEWTON = "newton"
# Relative width of the band of scores treated as tied.
TIE_REL = 1e-12
# A split must improve on float noise relative to the node's target scale.
ACCEPT_REL = 1e-13
NODE_KEYS = ("id", "kind", "feature", "threshold", "levels", "left", "right", "value", "n_samples")


@dataclass(frozen=True)
class TreeConfig:
    """Growth controls. ``max_depth=None`` grows until the other rules stop it;
    ``mtry=None`` uses every feature at every node."""

    max_depth: int | None = None
    min_leaf: int = 1
    min_split: int = 2
    mtry: int | None = None
    leaf_mode: str = MEAN
    lam: float = 0.0
    gamma: float = 0.0

    def __post_init__(self):
        if self.max_depth is not None and self.max_depth < 1:
            raise InvalidConfig("max_depth", "must be >= 1 or None")
        if self.min_leaf < 1:
            raise InvalidConfig("min_leaf", "must be >= 1")
        if self.min_split < 2:
            raise InvalidConfig("min_split", "must be >= 2")
        if self.leaf_mode not in (MEAN, NEWTON):
            raise InvalidConfig("leaf_mode", f"must be {MEAN!r} or {NEWTON!r}")
        if self.lam < 0 or not math.isfinite(self.lam):
            raise InvalidConfig("lam", "must be finite and >= 0")
        if self.gamma < 0 or not math.isfinite(self.gamma):
            raise InvalidConfig("gamma", "must be finite and >= 0")
        if self.leaf_mode == MEAN and (self.lam or self.gamma):
            raise InvalidConfig("leaf_mode", "lam/gamma only apply to newton leaves")

    def resolved_mtry(self, p):
        mtry = p if self.mtry is None else self.mtry
        if not 1 <= mtry <= p:
            raise InvalidMtry(f"mtry must lie in [1, {p}], got {mtry}")
        return mtry

    def to_dict(self):
        return {"max_depth": self.max_depth, "min_leaf": self.min_leaf,
                "min_split": self.min_split, "mtry": self.mtry,
                "leaf_mode": self.leaf_mode, "lam": self.lam, "gamma": self.gamma}


@dataclass(frozen=True)
class SplitRule:
    feature: int
    threshold: float | None = None
    left_levels: frozenset | None = None

    @property
    def is_categorical(self):
        return self.left_levels is not None

    def goes_left(self, x):
        if self.is_categorical:
            return int(x) in self.left_levels
        return x <= self.threshold


@dataclass(frozen=True)
class SplitCandidate:
    rule: SplitRule
    gain: float


def _mask_to_levels(mask):
    mask = int(mask)
    return frozenset(i for i in range(mask.bit_length()) if mask >> i & 1)


def _levels_to_mask(levels):
    return sum(1 << int(lv) for lv in levels)


def _as_matrix(X):
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    return X


def _node_targets(y, grad, hess, rows, config):
    """Node-local (g, h) in the form consumed by the split kernel."""
    if config.leaf_mode == MEAN:
        yr = y[rows]
        g = yr - yr.mean()
        h = np.ones(len(rows))
        scale = float(np.dot(yr, yr))
    else:
        g = grad[rows]
        h = hess[rows]
        scale = float(np.sum(g * g / h))
    return g, h, scale


def _split_gain(score, config):
    if config.leaf_mode == MEAN:
        return score
    return 0.5 * score - config.gamma


def _leaf_value(y, grad, hess, rows, config):
    if config.leaf_mode == MEAN:
        return float(np.mean(y[rows]))
    return float(-np.sum(grad[rows]) / (np.sum(hess[rows]) + config.lam))


def best_split(X, targets, candidate_features, config, *, rows=None, n_levels=None, hess=None):
    """Best split of ``rows`` over ``candidate_features``, or ``None``.

    In mean mode ``targets`` is the response and the gain is the reduction
    in the sum of squared errors. In Newton mode ``targets`` are gradients
    (``hess`` defaults to ones) and the gain is
    ``(G_L^2/(H_L+lam) + G_R^2/(H_R+lam) - G^2/(H+lam))/2 - gamma``.
    ``None`` means no admissible split with positive gain exists.
    """
    X = _as_matrix(X)
    n, p = X.shape
    rows = np.arange(n, dtype=np.int64) if rows is None else np.asarray(rows, dtype=np.int64)
    n_levels = np.zeros(p, dtype=np.int64) if n_levels is None else np.asarray(n_levels, dtype=np.int64)
    targets = np.asarray(targets, dtype=np.float64)
    if config.leaf_mode == MEAN:
        g, h, scale = _node_targets(targets, None, None, rows, config)
    else:
        hess = np.ones(n) if hess is None else np.asarray(hess, dtype=np.float64)
        g, h, scale = _node_targets(None, targets, hess, rows, config)
    if len(rows) < config.min_split or len(rows) < 2 * config.min_leaf:
        return None
    feats = np.asarray(sorted(candidate_features), dtype=np.int64)
    return _search(X, rows, g, h, scale, feats, n_levels, config)


def _search(X, rows, g, h, scale, feats, n_levels, config):
    lam = config.lam if config.leaf_mode == NEWTON else 0.0
    f, t, mask, score = _kernels.find_split(X, rows, g, h, feats, n_levels, config.min_leaf, lam, TIE_REL)
    if f < 0:
        return None
    gain = _split_gain(score, config)
    if not gain > ACCEPT_REL * scale:
        return None
    if n_levels[f] > 0:
        rule = SplitRule(int(f), left_levels=_mask_to_levels(mask))
    else:
        rule = SplitRule(int(f), threshold=float(t))
    return SplitCandidate(rule, float(gain))


@dataclass(eq=False)
class RegressionTree:
    """Fitted binary tree stored as flat node arrays in preorder.

    Leaves have ``feature == -1``. ``left``/``right`` are node ids within
    this tree. Categorical nodes keep their left level set as a bitmask.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left_mask: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_samples: np.ndarray
    n_levels: tuple
    feature_names: tuple | None = None
    is_cat: np.ndarray = field(init=False)

    def __post_init__(self):
        self.feature = np.asarray(self.feature, dtype=np.int64)
        self.threshold = np.asarray(self.threshold, dtype=np.float64)
        self.left_mask = np.asarray(self.left_mask, dtype=np.int64)
        self.left = np.asarray(self.left, dtype=np.int64)
        self.right = np.asarray(self.right, dtype=np.int64)
        self.value = np.asarray(self.value, dtype=np.float64)
        self.n_samples = np.asarray(self.n_samples, dtype=np.int64)
        self.n_levels = tuple(int(k) for k in self.n_levels)
        nl = np.asarray(self.n_levels, dtype=np.int64)
        self.is_cat = (self.feature >= 0) & (nl[np.maximum(self.feature, 0)] > 0)
        for a in (self.feature, self.threshold, self.left_mask, self.left, self.right,
                  self.value, self.n_samples, self.is_cat):
            a.setflags(write=False)

    @property
    def n_nodes(self):
        return len(self.feature)

    @property
    def n_features(self):
        return len(self.n_levels)

    @property
    def is_leaf(self):
        return self.feature < 0

    @property
    def n_leaves(self):
        return int(self.is_leaf.sum())

    @property
    def leaf_values(self):
        return self.value[self.is_leaf]

    @property
    def depth(self):
        depth = np.zeros(self.n_nodes, dtype=np.int64)
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def used_features(self):
        return sorted(set(int(f) for f in self.feature if f >= 0))

    def rule(self, node):
        f = int(self.feature[node])
        if f < 0:
            return None
        if self.is_cat[node]:
            return SplitRule(f, left_levels=_mask_to_levels(self.left_mask[node]))
        return SplitRule(f, threshold=float(self.threshold[node]))

    def _check(self, X):
        X = _as_matrix(X)
        if X.shape[1] != self.n_features:
            raise SchemaMismatch(f"tree expects {self.n_features} features, got {X.shape[1]}")
        return X

    def apply(self, X):
        X = self._check(X)
        return _kernels.apply_tree(X, self.feature, self.threshold, self.left_mask,
                                   self.is_cat, self.left, self.right)

    def predict(self, X):
        return self.value[self.apply(X)]

    def to_nodes(self):
        """Node records in preorder with the documented key order."""
        nodes = []
        for i in range(self.n_nodes):
            if self.feature[i] < 0:
                nodes.append({"id": i, "kind": "leaf", "value": float(self.value[i]),
                              "n_samples": int(self.n_samples[i])})
                continue
            rec = {"id": i, "kind": "split", "feature": int(self.feature[i])}
            if self.is_cat[i]:
                rec["levels"] = sorted(_mask_to_levels(self.left_mask[i]))
            else:
                rec["threshold"] = float(self.threshold[i])
            rec.update(left=int(self.left[i]), right=int(self.right[i]),
                       value=float(self.value[i]), n_samples=int(self.n_samples[i]))
            nodes.append(rec)
        return nodes

    def to_dict(self):
        return {"n_levels": list(self.n_levels),
                "feature_names": None if self.feature_names is None else list(self.feature_names),
                "nodes": self.to_nodes()}

    @classmethod
    def from_dict(cls, d):
        nodes = d["nodes"]
        k = len(nodes)
        cols = {name: np.zeros(k, dtype=np.int64) for name in ("feature", "left_mask", "n_samples")}
        cols["left"] = np.full(k, -1, dtype=np.int64)
        cols["right"] = np.full(k, -1, dtype=np.int64)
        threshold = np.full(k, np.nan)
        value = np.zeros(k)
        for i, rec in enumerate(nodes):
            if rec["id"] != i:
                raise ValueError("node records must be listed in id order")
            value[i] = rec["value"]
            cols["n_samples"][i] = rec["n_samples"]
            if rec["kind"] == "leaf":
                cols["feature"][i] = -1
                continue
            cols["feature"][i] = rec["feature"]
            cols["left"][i] = rec["left"]
            cols["right"][i] = rec["right"]
            if "levels" in rec:
                cols["left_mask"][i] = _levels_to_mask(rec["levels"])
            else:
                threshold[i] = rec["threshold"]
        names = d.get("feature_names")
        return cls(threshold=threshold, value=value, n_levels=tuple(d["n_levels"]),
                   feature_names=None if names is None else tuple(names), **cols)

    def to_json(self):
        return json.dumps(self.to_dict(), separators=(",", ":"))


def _resolve_inputs(X, y, n_levels, feature_names):
    if hasattr(X, "schema"):
        data = X
        y = data.response if y is None else y
        n_levels = [s.n_levels for s in data.schema]
        feature_names = data.schema.names
        X = data.X
    X = _as_matrix(X)
    if n_levels is None:
        n_levels = [0] * X.shape[1]
    if len(n_levels) != X.shape[1]:
        raise SchemaMismatch("n_levels length differs from the number of columns")
    if any(k > 62 for k in n_levels):
        raise InvalidConfig("n_levels", "categorical features are limited to 62 levels")
    return X, y, np.asarray(n_levels, dtype=np.int64), feature_names


def fit_tree(X, y=None, config=TreeConfig(), rng=None, *, n_levels=None, grad=None,
             hess=None, sample_index=None, feature_names=None):
    """Grow a regression tree greedily.

    ``X`` is a :class:`~claimtrees.dataset.Dataset` or an ``(n, p)`` array
    (then ``n_levels`` marks categorical columns by their level count, 0 for
    numeric). Mean-mode leaves hold the mean response; Newton-mode leaves
    hold ``-G/(H + lam)`` computed from ``grad``/``hess``. ``sample_index``
    selects (possibly repeated) training rows, e.g. a bootstrap sample.
    ``rng`` is required when ``config.mtry`` is below the feature count.
    """
    X, y, n_levels, feature_names = _resolve_inputs(X, y, n_levels, feature_names)
    n, p = X.shape
    if config.leaf_mode == MEAN:
        if y is None:
            raise InvalidConfig("y", "mean-mode trees need a response")
        y = np.asarray(y, dtype=np.float64)
    else:
        if grad is None:
            raise InvalidConfig("grad", "newton-mode trees need gradients")
        grad = np.asarray(grad, dtype=np.float64)
        hess = np.ones(n) if hess is None else np.asarray(hess, dtype=np.float64)
        if np.any(hess <= 0):
            raise InvalidConfig("hess", "hessians must be positive")
    rows = np.arange(n, dtype=np.int64) if sample_index is None else np.asarray(sample_index, dtype=np.int64)
    if n == 0 or len(rows) == 0:
        raise EmptyDataset("cannot fit a tree on zero rows")
    mtry = config.resolved_mtry(p)
    if mtry < p and rng is None:
        raise InvalidConfig("rng", "a random generator is required when mtry < p")
    all_features = np.arange(p, dtype=np.int64)

    feature, threshold, mask, left, right, value, count = [], [], [], [], [], [], []
    # stack entries: (rows, depth, parent id, is_left_child)
    stack = [(rows, 0, -1, False)]
    while stack:
        node_rows, depth, parent, is_left = stack.pop()
        node = len(feature)
        if parent >= 0:
            (left if is_left else right)[parent] = node
        feature.append(-1)
        threshold.append(math.nan)
        mask.append(0)
        left.append(-1)
        right.append(-1)
        value.append(_leaf_value(y, grad, hess, node_rows, config))
        count.append(len(node_rows))

        m = len(node_rows)
        if m < config.min_split or m < 2 * config.min_leaf:
            continue
        if config.max_depth is not None and depth >= config.max_depth:
            continue
        if mtry < p:
            feats = np.sort(rng.choice(p, size=mtry, replace=False)).astype(np.int64)
        else:
            feats = all_features
        g, h, scale = _node_targets(y, grad, hess, node_rows, config)
        cand = _search(X, node_rows, g, h, scale, feats, n_levels, config)
        if cand is None:
            continue
        rule = cand.rule
        xs = X[node_rows, rule.feature]
        if rule.is_categorical:
            mask[node] = _levels_to_mask(rule.left_levels)
            go_left = np.isin(xs.astype(np.int64), sorted(rule.left_levels))
        else:
            threshold[node] = rule.threshold
            go_left = xs <= rule.threshold
        feature[node] = rule.feature
        stack.append((node_rows[~go_left], depth + 1, node, False))
        stack.append((node_rows[go_left], depth + 1, node, True))

    return RegressionTree(feature, threshold, mask, left, right, value, count,
                          tuple(int(k) for k in n_levels),
                          None if feature_names is None else tuple(feature_names))


def predict_tree(tree, X):
    """Predictions for a matrix of records, or a scalar for a single record."""
    X = np.asarray(X, dtype=np.float64)
    out = tree.predict(X)
    return float(out[0]) if X.ndim == 1 else out
