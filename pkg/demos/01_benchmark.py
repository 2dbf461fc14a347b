"""
Claim severity benchmark
========================

Generate a synthetic book of vehicle contracts, keep the ones with a claim,
and compare a linear baseline with a single tree and three tree ensembles on
a held-out contract year.

Run with ``python demos/01_benchmark.py`` (about 15 seconds).
"""

# %%
# Data
# ----
# Most contracts never claim. The modelling convention is: drop the zero
# claims, take logs, and hold out contract year 2016.
import numpy as np

import claimtrees as ct

raw = ct.generate_synthetic(ct.GeneratorConfig(n_rows=20_000, seed=2018))
print(f"{raw.n} contracts, {np.mean(raw.response > 0):.1%} with a positive claim")

claims = ct.log_transform_response(ct.filter_positive_claims(raw))
train, test = ct.split_by_year(claims, {2016})
print(f"train {train.n} claims, test {test.n} claims")

# %%
# A quick look
# ------------
# Pearson correlation of log claim size with the numeric predictors.
eda = ct.summary_stats(claims)
for name, r in eda.correlations.items():
    print(f"  corr(log claim, {name:15s}) = {r:+.3f}")

# %%
# Five models
# -----------
models = {
    "ols": ct.fit_ols(train),
    "tree": ct.fit_single_tree(train, seed=0),
    "bagging": ct.fit_bagging(train, B=500, seed=0),
    "rf": ct.fit_random_forest(train, B=500, seed=0),
    "boosting": ct.fit_gradient_boosting(train, seed=0),
}
report = ct.compare_models(models, train, test)

print(f"\n{'model':10s} {'train rmse':>11s} {'test rmse':>10s}")
for name in models:
    tr = report.metric(name, "train")["rmse"]
    te = report.metric(name, "test")["rmse"]
    print(f"{name:10s} {tr:11.4f} {te:10.4f}")

# %%
# The forests also give an error estimate for free: each tree is scored on
# the rows its bootstrap sample left out.
print(f"\nrandom forest OOB rmse {ct.oob_error(models['rf'], train):.4f}")

# %%
# Large claims
# ------------
# Back on the money scale, no model gets near the biggest claims.
observed = test.raw_response().max()
print(f"\nlargest test claim {observed:,.0f}")
for name, model in models.items():
    print(f"  {name:10s} largest prediction {np.exp(model.predict(test.X)).max():,.0f}")
