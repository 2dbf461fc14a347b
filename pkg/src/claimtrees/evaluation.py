"""Error metrics, the least-squares baseline, model comparison and EDA tables."""

import csv
from dataclasses import dataclass, field

import numpy as np

from .dataset import LOG, RAW
from .errors import EmptyInput, LengthMismatch, RankDeficient, SchemaMismatch

# Relative size of an R diagonal entry below which a design column is collinear.
RANK_TOL = 1e-10


@dataclass(frozen=True)
class Metrics:
    mse: float
    rmse: float
    n_eval: int
    scale: str = LOG


def mse(predicted, observed, scale=LOG):
    """Mean squared error (and its root) of ``predicted`` against ``observed``."""
    predicted = np.asarray(predicted, dtype=np.float64).ravel()
    observed = np.asarray(observed, dtype=np.float64).ravel()
    if predicted.shape != observed.shape:
        raise LengthMismatch(f"{predicted.size} predictions for {observed.size} observations")
    if predicted.size == 0:
        raise EmptyInput("cannot score zero observations")
    d = predicted - observed
    m = float(np.mean(d * d))
    return Metrics(m, float(np.sqrt(m)), int(d.size), scale)


# --- ordinary least squares ---------------------------------------------------

@dataclass(eq=False)
class LinearModel:
    """OLS fit on an intercept, numeric columns and one-hot categoricals.

    The first declared level of every categorical feature is the dropped
    reference. ``columns`` names the design columns after the intercept;
    ``encoding`` maps feature name to its design column names.
    """

    intercept: float
    coefficients: np.ndarray
    columns: tuple
    encoding: dict
    feature_names: tuple
    n_levels: tuple
    kind: str = field(default="ols", init=False)

    def design(self, X):
        return _design(_matrix(X, self.feature_names), self.n_levels)[0]

    def predict(self, X):
        D = self.design(X)
        return self.intercept + D @ self.coefficients

    def to_dict(self):
        return {"format_version": 1, "kind": "ols", "feature_names": list(self.feature_names),
                "n_levels": list(self.n_levels), "intercept": self.intercept,
                "columns": list(self.columns), "coefficients": self.coefficients.tolist()}

    @classmethod
    def from_dict(cls, d):
        names = tuple(d["feature_names"])
        n_levels = tuple(d["n_levels"])
        _, cols, enc = _design(np.zeros((0, len(names))), n_levels, names)
        return cls(d["intercept"], np.asarray(d["coefficients"], dtype=np.float64),
                   tuple(d["columns"]), enc, names, n_levels)


def _matrix(X, feature_names):
    if hasattr(X, "schema"):
        X.check_schema(feature_names)
        X = X.X
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != len(feature_names):
        raise SchemaMismatch(f"model expects {len(feature_names)} features, got {X.shape[1]}")
    return X


def _design(X, n_levels, names=None):
    names = names or [f"x{j}" for j in range(len(n_levels))]
    blocks, cols, enc = [], [], {}
    for j, (name, k) in enumerate(zip(names, n_levels)):
        if k > 0:
            lv = X[:, j].astype(np.int64)
            block = (lv[:, None] == np.arange(1, k)[None, :]).astype(np.float64)
            enc[name] = [f"{name}[{i}]" for i in range(1, k)]
        else:
            block = X[:, j:j + 1]
            enc[name] = [name]
        blocks.append(block)
        cols.extend(enc[name])
    D = np.hstack(blocks) if blocks else np.zeros((len(X), 0))
    return D, tuple(cols), enc


def fit_ols(train):
    """Least-squares fit via a Householder QR of the column-scaled design."""
    names = train.schema.names
    n_levels = tuple(s.n_levels for s in train.schema)
    D, cols, enc = _design(train.X, n_levels, names)
    full = np.hstack([np.ones((train.n, 1)), D])
    labels = ("(intercept)",) + cols
    if full.shape[0] < full.shape[1]:
        raise RankDeficient(labels[train.n:])
    norms = np.linalg.norm(full, axis=0)
    zero = norms == 0
    if zero.any():
        raise RankDeficient([labels[i] for i in np.flatnonzero(zero)])
    Q, R = np.linalg.qr(full / norms)
    diag = np.abs(np.diag(R))
    weak = diag < RANK_TOL * diag.max()
    if weak.any():
        raise RankDeficient([labels[i] for i in np.flatnonzero(weak)])
    beta = np.linalg.solve(R, Q.T @ train.response) / norms
    return LinearModel(float(beta[0]), beta[1:], cols, enc, names, n_levels)


# --- comparison ---------------------------------------------------------------

@dataclass
class ComparisonReport:
    """``metrics`` rows are dicts (model, slice, scale, mse, rmse, n_eval);
    ``pairs`` rows are (model, observed, predicted) on the raw claim scale
    for the test slice, in test-row order."""

    metrics: list
    pairs: list

    def metric(self, model, slice_, scale=LOG):
        for row in self.metrics:
            if (row["model"], row["slice"], row["scale"]) == (model, slice_, scale):
                return row
        raise KeyError((model, slice_, scale))

    def write_metrics_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["model", "slice", "scale", "mse", "rmse", "n_eval"])
            for r in self.metrics:
                w.writerow([r["model"], r["slice"], r["scale"], repr(r["mse"]), repr(r["rmse"]), r["n_eval"]])

    def write_pairs_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["model", "observed", "predicted"])
            for name, obs, pred in self.pairs:
                w.writerow([name, repr(float(obs)), repr(float(pred))])


def _scored(name, slice_, pred, data):
    rows = []
    if data.scale == LOG:
        for scale, p, y in ((LOG, pred, data.response), (RAW, np.exp(pred), np.exp(data.response))):
            m = mse(p, y, scale)
            rows.append({"model": name, "slice": slice_, "scale": scale, "mse": m.mse,
                         "rmse": m.rmse, "n_eval": m.n_eval})
    else:
        m = mse(pred, data.response, RAW)
        rows.append({"model": name, "slice": slice_, "scale": RAW, "mse": m.mse,
                     "rmse": m.rmse, "n_eval": m.n_eval})
    return rows


def compare_models(models, train, test):
    """Train/test metrics on both scales for every model in ``models``.

    ``models`` is a mapping of display name to fitted model (anything with
    ``predict`` and ``feature_names``). Raw-scale values come from
    exponentiating log-scale predictions without bias correction.
    """
    if train.schema.names != test.schema.names:
        raise SchemaMismatch("train and test schemas differ")
    metrics, pairs = [], []
    for name, model in models.items():
        if tuple(model.feature_names) != train.schema.names:
            raise SchemaMismatch(f"model {name!r} was trained on a different schema")
        metrics += _scored(name, "train", model.predict(train.X), train)
        pred = model.predict(test.X)
        metrics += _scored(name, "test", pred, test)
        raw_pred = np.exp(pred) if test.scale == LOG else pred
        pairs += [(name, o, p) for o, p in zip(test.raw_response(), raw_pred)]
    return ComparisonReport(metrics, pairs)


# --- exploratory summaries ----------------------------------------------------

def pearson(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    dx = x - x.mean()
    dy = y - y.mean()
    return float(np.dot(dx, dy) / np.sqrt(np.dot(dx, dx) * np.dot(dy, dy)))


@dataclass
class EdaTable:
    """Response correlations with numeric features and per-level quartiles.

    ``quartiles[feature]`` lists (level, n, min, q1, median, q3, max) rows.
    """

    correlations: dict
    quartiles: dict
    scale: str

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["feature", "level", "statistic", "value"])
            for f, r in self.correlations.items():
                w.writerow([f, "", "pearson", repr(r)])
            for f, rows in self.quartiles.items():
                for level, n, *qs in rows:
                    w.writerow([f, level, "n", n])
                    for stat, v in zip(("min", "q1", "median", "q3", "max"), qs):
                        w.writerow([f, level, stat, repr(v)])


def summary_stats(data):
    corr, quart = {}, {}
    y = data.response
    for spec in data.schema:
        col = data.columns[spec.name]
        if spec.is_categorical:
            rows = []
            for i, level in enumerate(spec.levels):
                sel = y[col == i]
                if sel.size:
                    qs = np.percentile(sel, [0, 25, 50, 75, 100])
                    rows.append((level, int(sel.size), *(float(q) for q in qs)))
                else:
                    rows.append((level, 0, *([float("nan")] * 5)))
            quart[spec.name] = rows
        else:
            corr[spec.name] = pearson(y, col)
    return EdaTable(corr, quart, data.scale)
