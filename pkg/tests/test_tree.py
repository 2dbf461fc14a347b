import json

import numpy as np
import pytest
from hypothesis import example, given, settings
from hypothesis import strategies as st

from claimtrees.errors import EmptyDataset, InvalidConfig, InvalidMtry, SchemaMismatch
from claimtrees.tree import (
    MEAN,
    NEWTON,
    RegressionTree,
    SplitRule,
    TreeConfig,
    best_split,
    fit_tree,
    predict_tree,
)

from conftest import agree_with_oracle, random_problem
from oracles import brute_force_best, golden_section_min, newton_objective

STEP_X = np.array([[1.0], [2.0], [3.0], [4.0]])
STEP_Y = np.array([0.0, 0.0, 10.0, 10.0])


# --- split search ----------------------------------------------------------------

def test_step_split_hand_oracle():
    cand = best_split(STEP_X, STEP_Y, [0], TreeConfig())
    assert cand.rule == SplitRule(0, threshold=2.5)
    assert cand.gain == pytest.approx(100.0, abs=1e-12)


def test_constant_response_has_no_split():
    X = np.arange(10.0)[:, None]
    assert best_split(X, np.full(10, 3.0), [0], TreeConfig()) is None


def test_min_leaf_and_min_split_block_splits():
    assert best_split(STEP_X, STEP_Y, [0], TreeConfig(min_leaf=3)) is None
    assert best_split(STEP_X, STEP_Y, [0], TreeConfig(min_split=5)) is None
    cand = best_split(STEP_X, [0.0, 10.0, 10.0, 10.0], [0], TreeConfig(min_leaf=2))
    assert cand.rule.threshold == 2.5


def test_tie_break_prefers_lowest_feature_then_threshold():
    # both features separate the classes identically
    X = np.array([[1.0, 1.0], [2.0, 2.0], [3.0, 3.0], [4.0, 4.0]])
    cand = best_split(X, STEP_Y, [1, 0], TreeConfig())
    assert cand.rule.feature == 0
    # symmetric response: thresholds 1.5 and 3.5 tie, the lower one wins
    X1 = np.array([[1.0], [2.0], [3.0], [4.0]])
    cand = best_split(X1, [0.0, 5.0, 5.0, 0.0], [0], TreeConfig())
    assert cand.rule.threshold == 1.5


def test_categorical_subset_split():
    X = np.array([[0], [1], [2], [0], [1], [2]], dtype=float)
    y = np.array([1.0, 9.0, 1.0, 1.0, 9.0, 1.0])
    cand = best_split(X, y, [0], TreeConfig(), n_levels=[3])
    assert cand.rule.left_levels == frozenset({0, 2})
    assert cand.gain == pytest.approx(256.0 / 3.0, rel=1e-12)


def test_midpoint_falls_back_to_lower_value():
    a = 1.0
    b = np.nextafter(a, 2.0)
    X = np.array([[a], [b]])
    cand = best_split(X, [0.0, 1.0], [0], TreeConfig())
    assert cand.rule.threshold == a
    assert cand.rule.goes_left(a) and not cand.rule.goes_left(b)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**31))
def test_best_split_matches_brute_force(seed):
    assert agree_with_oracle(*random_problem(seed))


def test_best_split_on_row_subset():
    X, y, n_levels, _ = random_problem(5)
    rows = np.arange(0, len(y), 2)
    cand = best_split(X, y, range(X.shape[1]), TreeConfig(), rows=rows, n_levels=n_levels)
    ref = brute_force_best(X[rows], y[rows], n_levels)
    assert (cand is None) == (ref is None)
    if ref is not None:
        assert cand.rule.feature == ref[0]


def test_newton_gain_formula():
    g = np.array([-1.0, -2.0, 3.0, 4.0])
    lam, gamma = 1.0, 0.25
    cand = best_split(STEP_X, g, [0], TreeConfig(leaf_mode=NEWTON, lam=lam, gamma=gamma))
    GL, HL, GR, HR = -3.0, 2.0, 7.0, 2.0
    expected = 0.5 * (GL**2 / (HL + lam) + GR**2 / (HR + lam) - (GL + GR) ** 2 / (HL + HR + lam)) - gamma
    assert cand.rule.threshold == 2.5
    assert cand.gain == pytest.approx(expected, rel=1e-12)


def test_gamma_suppresses_weak_splits():
    g = np.array([-1.0, -1.0, 1.0, 1.0])
    # score = 4/2 + 4/2 - 0 = 4; gain = 2 - gamma
    assert best_split(STEP_X, g, [0], TreeConfig(leaf_mode=NEWTON, gamma=1.9)) is not None
    assert best_split(STEP_X, g, [0], TreeConfig(leaf_mode=NEWTON, gamma=2.1)) is None


# --- fitting ----------------------------------------------------------------------

def test_constant_response_single_leaf():
    tree = fit_tree(np.arange(5.0)[:, None], np.full(5, 7.3))
    assert tree.n_nodes == 1
    assert predict_tree(tree, [123.0]) == 7.3


def test_stump_on_step_data():
    tree = fit_tree(STEP_X, STEP_Y, TreeConfig(max_depth=1))
    assert tree.depth == 1 and tree.n_leaves == 2
    assert sorted(tree.leaf_values.tolist()) == [0.0, 10.0]
    assert predict_tree(tree, [1.0]) == 0.0
    assert predict_tree(tree, [3.0]) == 10.0


def test_categorical_stump_routing():
    X = np.array([[0], [1], [2], [0], [1], [2]], dtype=float)
    y = np.array([1.0, 9.0, 1.0, 1.0, 9.0, 1.0])
    tree = fit_tree(X, y, TreeConfig(max_depth=1), n_levels=[3])
    assert tree.rule(0).left_levels == frozenset({0, 2})
    np.testing.assert_array_equal(tree.predict([[0], [2], [1]]), [1.0, 1.0, 9.0])


def test_absent_level_routes_right():
    X = np.array([[0], [1], [0], [1]], dtype=float)
    tree = fit_tree(X, [0.0, 5.0, 0.0, 5.0], TreeConfig(), n_levels=[3])
    assert predict_tree(tree, [2.0]) == 5.0


def test_newton_leaves_equal_mean_residual():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(60, 3))
    r = rng.normal(size=60)
    mean_tree = fit_tree(X, r, TreeConfig(min_leaf=4))
    newton_tree = fit_tree(X, None, TreeConfig(min_leaf=4, leaf_mode=NEWTON), grad=-r)
    np.testing.assert_array_equal(mean_tree.feature, newton_tree.feature)
    np.testing.assert_array_equal(mean_tree.threshold, newton_tree.threshold)
    np.testing.assert_allclose(newton_tree.value, mean_tree.value, atol=1e-12)


def test_fit_errors():
    with pytest.raises(EmptyDataset):
        fit_tree(np.zeros((0, 1)), np.zeros(0))
    with pytest.raises(InvalidMtry):
        fit_tree(STEP_X, STEP_Y, TreeConfig(mtry=2))
    with pytest.raises(InvalidConfig):
        fit_tree(np.zeros((4, 2)), STEP_Y, TreeConfig(mtry=1))
    with pytest.raises(InvalidConfig):
        TreeConfig(max_depth=0)
    with pytest.raises(InvalidConfig):
        TreeConfig(lam=1.0)


def test_predict_schema_mismatch():
    tree = fit_tree(STEP_X, STEP_Y)
    with pytest.raises(SchemaMismatch):
        tree.predict(np.zeros((2, 3)))


def test_fit_on_dataset(step_data):
    tree = fit_tree(step_data, config=TreeConfig(max_depth=1))
    assert tree.feature_names == ("x0",)
    np.testing.assert_array_equal(tree.predict(step_data.X), STEP_Y)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31))
@example(seed=123)  # two rows, min_leaf 3: the root stays a leaf
def test_tree_invariants(seed):
    X, y, n_levels, min_leaf = random_problem(seed)
    tree = fit_tree(X, y, TreeConfig(min_leaf=min_leaf), n_levels=n_levels)
    leaves = tree.apply(X)
    assert tree.is_leaf[leaves].all()
    assert tree.n_samples[tree.is_leaf].sum() == len(y)
    if tree.n_nodes > 1:
        assert (tree.n_samples[tree.is_leaf] >= min_leaf).all()
    counts = np.bincount(leaves, minlength=tree.n_nodes)
    np.testing.assert_array_equal(counts[tree.is_leaf], tree.n_samples[tree.is_leaf])
    for leaf in np.flatnonzero(tree.is_leaf):
        assert tree.value[leaf] == pytest.approx(y[leaves == leaf].mean(), abs=1e-12)
    internal = ~tree.is_leaf
    assert ((tree.left[internal] >= 0) & (tree.right[internal] >= 0)).all()


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31))
def test_zero_training_error_on_distinct_rows(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 60))
    X = np.column_stack([rng.normal(size=n), rng.integers(0, 3, size=n)])
    y = rng.normal(size=n)
    tree = fit_tree(X, y, TreeConfig(min_leaf=1), n_levels=[0, 3])
    assert np.sum((tree.predict(X) - y) ** 2) == pytest.approx(0.0, abs=1e-18)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31), st.floats(-1.0, 1.0))
def test_prediction_is_piecewise_constant(seed, frac):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(40, 2))
    y = rng.normal(size=40)
    tree = fit_tree(X, y, TreeConfig(min_leaf=3))
    x = X[int(rng.integers(40))].copy()
    # interval of feature 0 consistent with the root-to-leaf path
    lo, hi, node = -np.inf, np.inf, 0
    while tree.feature[node] >= 0:
        t = tree.threshold[node]
        go_left = x[tree.feature[node]] <= t
        if tree.feature[node] == 0:
            lo, hi = (lo, t) if go_left else (t, hi)
        node = tree.left[node] if go_left else tree.right[node]
    lo_f = max(lo, x[0] - 1.0)
    hi_f = min(hi, x[0] + 1.0)
    z = x.copy()
    z[0] = x[0] + frac * ((hi_f - x[0]) if frac > 0 else (x[0] - lo_f))
    if lo < z[0] <= hi:
        assert predict_tree(tree, z) == predict_tree(tree, x)


@pytest.mark.parametrize("lam", [0.0, 1.0, 10.0])
def test_newton_leaf_weight_is_optimal(lam):
    rng = np.random.default_rng(int(lam) + 1)
    X = rng.normal(size=(80, 2))
    grad = rng.normal(size=80)
    hess = rng.uniform(0.5, 2.0, size=80)
    tree = fit_tree(X, None, TreeConfig(min_leaf=5, leaf_mode=NEWTON, lam=lam), grad=grad, hess=hess)
    leaves = tree.apply(X)
    for leaf in np.flatnonzero(tree.is_leaf):
        G = grad[leaves == leaf].sum()
        H = hess[leaves == leaf].sum()
        w = golden_section_min(lambda v: newton_objective(v, G, H, lam), -50.0, 50.0)
        assert tree.value[leaf] == pytest.approx(-G / (H + lam), abs=1e-12)
        assert abs(tree.value[leaf] - w) <= 1e-6


# --- serialisation ------------------------------------------------------------------

def test_node_records_and_round_trip():
    rng = np.random.default_rng(9)
    X = np.column_stack([rng.normal(size=50), rng.integers(0, 4, size=50)])
    y = rng.normal(size=50) + 3 * (X[:, 1] == 2)
    tree = fit_tree(X, y, TreeConfig(min_leaf=3), n_levels=[0, 4], feature_names=("a", "b"))
    nodes = tree.to_nodes()
    split = next(n for n in nodes if n["kind"] == "split")
    assert list(split)[:3] == ["id", "kind", "feature"]
    leaf = next(n for n in nodes if n["kind"] == "leaf")
    assert list(leaf) == ["id", "kind", "value", "n_samples"]
    text = tree.to_json()
    back = RegressionTree.from_dict(json.loads(text))
    assert back.to_json() == text
    np.testing.assert_array_equal(back.predict(X), tree.predict(X))
    np.testing.assert_array_equal(back.left, tree.left)


def test_leaf_mode_constants():
    assert TreeConfig().leaf_mode == MEAN
