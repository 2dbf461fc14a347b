"""Bagging, random forests and second-order gradient boosting.

Bagging and random forests average ``B`` trees grown on bootstrap samples;
a forest additionally draws ``mtry`` candidate features at every node. Each
tree ``b`` owns a random stream seeded from ``(seed, b)`` so trees can be
grown in any order, or concurrently, with identical results.

Boosting minimises the penalised squared-error objective

    sum_i (yhat_i - y_i)^2 / 2 + sum_b (gamma * T_b + lam/2 * ||w_b||^2)

one tree per round, each grown on the gradients ``yhat - y`` with unit
hessians, and adds ``learning_rate * tree(x)`` to the running prediction.
"""

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .errors import (
    EmptyDataset,
    InvalidConfig,
    InvalidMtry,
    NonFiniteObjective,
    NoOobRows,
    NotApplicable,
    SchemaMismatch,
)
from .tree import NEWTON, RegressionTree, TreeConfig, fit_tree

BAGGING = "bagging"
RANDOM_FOREST = "random_forest"
BOOSTING = "boosting"
SINGLE_TREE = "tree"
KINDS = (BAGGING, RANDOM_FOREST, BOOSTING, SINGLE_TREE)
FORMAT_VERSION = 1

DEFAULT_FOREST_TREE = TreeConfig(min_leaf=5)


def tree_rng(seed, index):
    """Random stream for tree ``index`` of an ensemble seeded with ``seed``."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))


def bootstrap_sample(n, rng):
    """Draw ``n`` row indices with replacement; return ``(in_bag, oob)``."""
    if n < 1:
        raise EmptyDataset("cannot bootstrap zero rows")
    in_bag = rng.integers(0, n, size=n)
    oob = np.setdiff1d(np.arange(n), in_bag)
    return in_bag, oob


@dataclass(frozen=True)
class BoostConfig:
    n_rounds: int = 300
    learning_rate: float = 0.1
    lam: float = 1.0
    gamma: float = 0.0
    max_depth: int | None = 3
    min_leaf: int = 5
    min_split: int = 2

    def __post_init__(self):
        if self.n_rounds < 1:
            raise InvalidConfig("n_rounds", "must be >= 1")
        if not 0 < self.learning_rate <= 1:
            raise InvalidConfig("learning_rate", "must lie in (0, 1]")
        self.tree_config()

    def tree_config(self):
        return TreeConfig(max_depth=self.max_depth, min_leaf=self.min_leaf,
                          min_split=self.min_split, leaf_mode=NEWTON,
                          lam=self.lam, gamma=self.gamma)

    def to_dict(self):
        return {"n_rounds": self.n_rounds, "learning_rate": self.learning_rate,
                "lam": self.lam, "gamma": self.gamma, "max_depth": self.max_depth,
                "min_leaf": self.min_leaf, "min_split": self.min_split}


@dataclass(frozen=True)
class OobRecord:
    prediction: np.ndarray
    n_trees: np.ndarray


@dataclass(eq=False)
class EnsembleModel:
    kind: str
    trees: list
    feature_names: tuple
    n_levels: tuple
    config: dict = field(default_factory=dict)
    seed: int | None = None
    base_score: float = 0.0
    learning_rate: float = 1.0
    oob_indices: list | None = None
    history: list = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidConfig("kind", f"unknown ensemble kind {self.kind!r}")
        if not self.trees:
            raise InvalidConfig("trees", "an ensemble needs at least one tree")
        self.feature_names = tuple(self.feature_names)
        self.n_levels = tuple(self.n_levels)
        self._packed = None

    @property
    def B(self):
        return len(self.trees)

    @property
    def weights(self):
        if self.kind == BOOSTING:
            return np.full(self.B, self.learning_rate)
        return np.full(self.B, 1.0 / self.B)

    def _pack(self):
        if self._packed is None:
            offsets = np.zeros(self.B + 1, dtype=np.int64)
            offsets[1:] = np.cumsum([t.n_nodes for t in self.trees])
            cat = lambda name: np.ascontiguousarray(np.concatenate([getattr(t, name) for t in self.trees]))
            self._packed = (offsets, cat("feature"), cat("threshold"), cat("left_mask"),
                            cat("is_cat"), cat("left"), cat("right"), cat("value"))
        return self._packed

    def _matrix(self, X):
        if hasattr(X, "schema"):
            X.check_schema(self.feature_names)
            X = X.X
        X = np.ascontiguousarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != len(self.feature_names):
            raise SchemaMismatch(f"model expects {len(self.feature_names)} features, got {X.shape[1]}")
        return X

    def member_predictions(self, X):
        """Raw per-tree outputs, shape ``(n, B)``."""
        return _kernels.predict_trees(self._matrix(X), *self._pack())

    def predict(self, X):
        """Combined prediction; trees are summed left to right in fitting order."""
        total = _kernels.sum_trees(self._matrix(X), *self._pack())
        if self.kind == BOOSTING:
            return self.base_score + self.learning_rate * total
        return total / self.B

    def used_features(self):
        return sorted(set().union(*(t.used_features() for t in self.trees)))

    def to_dict(self):
        return {
            "format_version": FORMAT_VERSION,
            "kind": self.kind,
            "feature_names": list(self.feature_names),
            "n_levels": list(self.n_levels),
            "config": self.config,
            "seed": self.seed,
            "base_score": self.base_score,
            "learning_rate": self.learning_rate,
            "trees": [t.to_nodes() for t in self.trees],
            "oob_indices": None if self.oob_indices is None else [o.tolist() for o in self.oob_indices],
            "history": self.history,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), separators=(",", ":")) + "\n"

    @classmethod
    def from_dict(cls, d):
        if d.get("format_version") != FORMAT_VERSION:
            raise InvalidConfig("format_version", f"unsupported model format {d.get('format_version')!r}")
        names = tuple(d["feature_names"])
        n_levels = tuple(d["n_levels"])
        trees = [RegressionTree.from_dict({"n_levels": n_levels, "feature_names": names, "nodes": nodes})
                 for nodes in d["trees"]]
        oob = d.get("oob_indices")
        return cls(kind=d["kind"], trees=trees, feature_names=names, n_levels=n_levels,
                   config=d["config"], seed=d["seed"], base_score=d["base_score"],
                   learning_rate=d["learning_rate"],
                   oob_indices=None if oob is None else [np.asarray(o, dtype=np.int64) for o in oob],
                   history=d.get("history", []))


def predict(model, X):
    """Prediction of ``model`` for a Dataset, a matrix, or a single record (scalar)."""
    out = model.predict(X)
    if not hasattr(X, "schema") and np.ndim(X) == 1:
        return float(out[0])
    return out


# --- bootstrap ensembles -------------------------------------------------------

def _meta(train):
    return train.X, train.response, [s.n_levels for s in train.schema], train.schema.names


def _grow_bootstrap_tree(X, y, n_levels, names, config, seed, b):
    rng = tree_rng(seed, b)
    in_bag, oob = bootstrap_sample(len(y), rng)
    tree = fit_tree(X, y, config, rng, n_levels=n_levels, sample_index=in_bag, feature_names=names)
    return tree, oob


def _fit_bootstrap(kind, train, B, config, seed, n_jobs):
    if B < 1:
        raise InvalidConfig("B", "must be >= 1")
    if train.n == 0:
        raise EmptyDataset("training data is empty")
    X, y, n_levels, names = _meta(train)
    mtry = config.resolved_mtry(train.p)
    config = replace(config, mtry=mtry)
    work = lambda b: _grow_bootstrap_tree(X, y, n_levels, names, config, seed, b)
    if n_jobs and n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(work, range(B)))
    else:
        results = [work(b) for b in range(B)]
    return EnsembleModel(
        kind=kind,
        trees=[r[0] for r in results],
        feature_names=names,
        n_levels=tuple(n_levels),
        config={"B": B, "mtry": mtry, "tree": config.to_dict()},
        seed=int(seed),
        oob_indices=[r[1] for r in results],
    )


def fit_bagging(train, B=500, tree_config=DEFAULT_FOREST_TREE, seed=0, n_jobs=1):
    """Average of ``B`` trees, each grown on all features of a bootstrap sample."""
    return _fit_bootstrap(BAGGING, train, B, replace(tree_config, mtry=None), seed, n_jobs)


def default_mtry(p):
    return max(1, math.ceil(p / 3))


def fit_random_forest(train, B=500, mtry=None, tree_config=DEFAULT_FOREST_TREE, seed=0, n_jobs=1):
    """Bagging with ``mtry`` features drawn afresh at every node (default ``ceil(p/3)``)."""
    mtry = default_mtry(train.p) if mtry is None else int(mtry)
    if not 1 <= mtry <= train.p:
        raise InvalidMtry(f"mtry must lie in [1, {train.p}], got {mtry}")
    return _fit_bootstrap(RANDOM_FOREST, train, B, replace(tree_config, mtry=mtry), seed, n_jobs)


def fit_single_tree(train, tree_config=DEFAULT_FOREST_TREE, seed=0):
    """One tree on the full training data, packaged as a one-member ensemble."""
    X, y, n_levels, names = _meta(train)
    if train.n == 0:
        raise EmptyDataset("training data is empty")
    rng = tree_rng(seed, 0)
    tree = fit_tree(X, y, tree_config, rng, n_levels=n_levels, feature_names=names)
    return EnsembleModel(SINGLE_TREE, [tree], names, tuple(n_levels),
                         config={"B": 1, "tree": tree_config.to_dict()}, seed=int(seed))


def oob_predictions(model, train):
    """Per-row mean over the trees whose bootstrap sample excluded the row."""
    if model.kind not in (BAGGING, RANDOM_FOREST):
        raise NotApplicable(f"out-of-bag predictions need a bootstrap ensemble, not {model.kind!r}")
    if model.oob_indices is None:
        raise NotApplicable("model does not retain out-of-bag indices")
    per_tree = model.member_predictions(train)
    n = train.n
    total = np.zeros(n)
    count = np.zeros(n, dtype=np.int64)
    for b, oob in enumerate(model.oob_indices):
        if len(oob) and oob.max() >= n:
            raise SchemaMismatch("out-of-bag indices exceed the training data size")
        total[oob] += per_tree[oob, b]
        count[oob] += 1
    with np.errstate(invalid="ignore", divide="ignore"):
        pred = np.where(count > 0, total / np.maximum(count, 1), np.nan)
    return OobRecord(pred, count)


def oob_error(model, train):
    """Out-of-bag RMSE over rows with at least one contributing tree."""
    rec = oob_predictions(model, train)
    use = rec.n_trees > 0
    if not use.any():
        raise NoOobRows("every row is in every bootstrap sample")
    resid = rec.prediction[use] - train.response[use]
    return float(np.sqrt(np.mean(resid * resid)))


# --- boosting -------------------------------------------------------------------

def fit_gradient_boosting(train, config=BoostConfig(), seed=0):
    """Sequential Newton boosting on squared error.

    The intercept is the mean response. ``history`` records, per round, the
    unpenalised loss, the accumulated penalty and their sum.
    """
    if train.n == 0:
        raise EmptyDataset("training data is empty")
    X, y, n_levels, names = _meta(train)
    tcfg = config.tree_config()
    base = float(np.mean(y))
    yhat = np.full(len(y), base)
    hess = np.ones(len(y))
    trees, history = [], []
    penalty = 0.0
    for b in range(config.n_rounds):
        grad = yhat - y
        tree = fit_tree(X, None, tcfg, None, n_levels=n_levels, grad=grad, hess=hess, feature_names=names)
        yhat = yhat + config.learning_rate * tree.predict(X)
        w = tree.leaf_values
        penalty += config.gamma * len(w) + 0.5 * config.lam * float(np.dot(w, w))
        resid = yhat - y
        loss = 0.5 * float(np.dot(resid, resid))
        if not (math.isfinite(loss) and math.isfinite(penalty)):
            raise NonFiniteObjective(f"objective is not finite at round {b + 1}")
        trees.append(tree)
        history.append({"round": b + 1, "loss": loss, "penalty": penalty, "objective": loss + penalty})
    return EnsembleModel(BOOSTING, trees, names, tuple(n_levels), config=config.to_dict(),
                         seed=int(seed), base_score=base, learning_rate=config.learning_rate,
                         history=history)


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        return EnsembleModel.from_dict(json.load(fh))


def save_model(model, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(model.to_json())
