import numpy as np
import pytest

from claimtrees.dataset import Dataset, filter_positive_claims, log_transform_response, split_by_year
from claimtrees.schema import CATEGORICAL, CONTINUOUS, FeatureSpec, Schema
from claimtrees.synthetic import GeneratorConfig, generate_synthetic
from claimtrees.tree import TreeConfig, best_split

from oracles import brute_force_best

BENCH_SEED = 2018


def toy_schema(p_num=1, cat_levels=()):
    feats = [FeatureSpec(f"x{j}", CONTINUOUS) for j in range(p_num)]
    feats += [FeatureSpec(f"c{j}", CATEGORICAL, tuple(f"l{i}" for i in range(k)))
              for j, k in enumerate(cat_levels)]
    return Schema(tuple(feats))


def toy_data(X, y, cat_levels=(), years=None):
    """Dataset with numeric columns first, then categorical ones."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    p_num = X.shape[1] - len(cat_levels)
    schema = toy_schema(p_num, cat_levels)
    cols = {name: X[:, j] for j, name in enumerate(schema.names)}
    aux = {} if years is None else {"contract_year": years}
    return Dataset(schema, cols, np.asarray(y, dtype=float), aux)


def random_problem(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 51))
    p = int(rng.integers(1, 5))
    n_levels = [int(rng.choice([0, 0, 2, 3, 4])) for _ in range(p)]
    X = np.empty((n, p))
    for j, k in enumerate(n_levels):
        if k:
            X[:, j] = rng.integers(0, k, size=n)
        elif rng.random() < 0.5:
            X[:, j] = rng.integers(0, 6, size=n)
        else:
            X[:, j] = rng.normal(size=n)
    if rng.random() < 0.5:
        y = rng.integers(0, 10, size=n).astype(float)
    else:
        y = rng.normal(size=n) * 5
    min_leaf = int(rng.choice([1, 1, 2, 3]))
    return X, y, n_levels, min_leaf


def agree_with_oracle(X, y, n_levels, min_leaf):
    cand = best_split(X, y, range(X.shape[1]), TreeConfig(min_leaf=min_leaf), n_levels=n_levels)
    ref = brute_force_best(X, y, n_levels, min_leaf)
    if ref is None:
        return cand is None
    f, (kind, val), gain = ref
    if cand is None or cand.rule.feature != f:
        return False
    if abs(cand.gain - gain) > 1e-9 * max(1.0, abs(gain)):
        return False
    if kind == "cat":
        return cand.rule.left_levels == val
    return cand.rule.threshold == val


def replay_leaves(model, data):
    """Yield (tree, leaf, G, H) for every leaf of every boosting round."""
    X, y = data.X, data.response
    yhat = np.full(data.n, model.base_score)
    for tree in model.trees:
        grad = yhat - y
        leaves = tree.apply(X)
        for leaf in np.flatnonzero(tree.is_leaf):
            sel = leaves == leaf
            yield tree, leaf, grad[sel].sum(), float(sel.sum())
        yhat = yhat + model.learning_rate * tree.predict(X)


@pytest.fixture
def step_data():
    return toy_data([1.0, 2.0, 3.0, 4.0], [0.0, 0.0, 10.0, 10.0])


@pytest.fixture(scope="session")
def benchmark_split():
    """Default synthetic benchmark prepared the standard way: positive, log, 2016 held out."""
    raw = generate_synthetic(GeneratorConfig(n_rows=20_000, seed=BENCH_SEED))
    data = log_transform_response(filter_positive_claims(raw))
    return split_by_year(data, {2016})


@pytest.fixture(scope="session")
def small_claims():
    """A small prepared synthetic sample for fast model tests."""
    raw = generate_synthetic(GeneratorConfig(n_rows=4000, seed=11))
    return log_transform_response(filter_positive_claims(raw))
