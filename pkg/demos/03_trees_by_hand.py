"""
Trees by hand
=============

Small cases whose answers can be worked out by hand, from single splits up
to the closed-form weight of a boosting leaf.
"""

# %%
import numpy as np

from claimtrees import BoostConfig, fit_gradient_boosting, fit_tree
from claimtrees.schema import CATEGORICAL, CONTINUOUS, FeatureSpec, Schema
from claimtrees.dataset import Dataset
from claimtrees.tree import TreeConfig, best_split

# %%
# A step
# ------
# Four points, y jumps from 0 to 10 between x=2 and x=3. The best cut is
# the midpoint 2.5 and it removes all 100 units of squared error.
X = np.array([[1.0], [2.0], [3.0], [4.0]])
y = np.array([0.0, 0.0, 10.0, 10.0])
cand = best_split(X, y, [0], TreeConfig(), n_levels=[0])
print(f"threshold {cand.rule.threshold}, gain {cand.gain}")

# %%
# Categories
# ----------
# Levels are grouped, not ordered. Here levels a and c behave alike.
schema = Schema((FeatureSpec("colour", CATEGORICAL, ("a", "b", "c")),))
codes = np.array([0, 0, 1, 1, 2, 2])
data = Dataset(schema, {"colour": codes}, np.array([1.0, 1.2, 5.0, 5.2, 0.8, 1.0]))
tree = fit_tree(data, config=TreeConfig(max_depth=1, min_leaf=1))
left = sorted(tree.rule(0).left_levels)
print("left group:", [schema["colour"].levels[i] for i in left])

# %%
# A boosting leaf
# ---------------
# With squared loss each row contributes gradient yhat - y and hessian 1.
# The leaf weight minimising G*w + (H + lam)*w^2/2 is -G/(H + lam).
x = np.linspace(0, 1, 8)
schema = Schema((FeatureSpec("x", CONTINUOUS),))
data = Dataset(schema, {"x": x}, 3.0 * x)
lam = 2.0
model = fit_gradient_boosting(data, BoostConfig(n_rounds=1, learning_rate=1.0, lam=lam, max_depth=1, min_leaf=1))
first = model.trees[0]
g = model.base_score - data.response
for leaf in np.flatnonzero(first.is_leaf):
    rows = first.apply(data.X) == leaf
    G, H = g[rows].sum(), rows.sum()
    print(f"leaf {leaf}: stored {first.value[leaf]:+.4f}, formula {-G / (H + lam):+.4f}")
