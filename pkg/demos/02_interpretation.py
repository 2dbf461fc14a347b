"""
What drives claim size
======================

Permutation importance ranks the predictors of a fitted random forest;
partial dependence shows the shape of the premium effect and how it changes
with vehicle usage.
"""

# %%
import numpy as np

import claimtrees as ct

raw = ct.generate_synthetic(ct.GeneratorConfig(n_rows=20_000, seed=2018))
train, test = ct.split_by_year(ct.log_transform_response(ct.filter_positive_claims(raw)), {2016})
forest = ct.fit_random_forest(train, B=300, seed=0)

# %%
# Permutation importance
# ----------------------
# Each column is shuffled 20 times; the score is the rise in RMSE.
# Season, insurance type and vehicle type play no part in the generator.
vi = ct.permutation_importance(forest, train, repeats=20, seed=1)
for name in vi.ranking():
    j = vi.features.index(name)
    s = vi.samples[j]
    mark = "  (noise)" if name in raw.truth.noise_features else ""
    print(f"{name:16s} {s.mean():.4f} +- {s.std(ddof=1):.4f}{mark}")

# %%
# One-way partial dependence
# --------------------------
# Average prediction with premium pinned at each grid value.
pdp = ct.partial_dependence(forest, train, "premium", grid_size=12)
for v, f in zip(pdp.grids[0], pdp.values):
    print(f"premium {v:9.0f} -> log claim {f:.3f}")

# %%
# Two-way partial dependence
# --------------------------
# Usage by premium. General cartage pulls away from the other usages once
# the premium is high.
two = ct.partial_dependence_2way(forest, train, "usage", "premium", grid_size=8)
levels = train.schema["usage"].levels
print("\n" + " " * 18 + " ".join(f"{v:8.0f}" for v in two.grids[1]))
for i, level in enumerate(levels):
    print(f"{level:18s}" + " ".join(f"{x:8.3f}" for x in two.values[i]))

top = two.values[:, -2:].mean(axis=1)
print(f"\nhighest at top premiums: {levels[int(np.argmax(top))]}")
