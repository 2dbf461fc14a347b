"""Command-line interface.

Subcommands: generate, train, evaluate, importance, pdp, compare.
Every subcommand accepts ``--seed``, ``--threads``, ``--schema``, ``--out``
and ``--config`` (a JSON object keyed by option name). Flags override the
config file, which overrides the defaults.

Exit codes: 0 success, 2 configuration, 3 data, 4 fitting, 5 query.
"""

import argparse
import csv
import json
import os
import sys
from pathlib import Path

from . import dataset as ds
from .ensembles import (
    BoostConfig,
    EnsembleModel,
    fit_bagging,
    fit_gradient_boosting,
    fit_random_forest,
    fit_single_tree,
    oob_error,
)
from .errors import ClaimTreesError, ConfigError, DataError, InvalidConfig
from .evaluation import LinearModel, compare_models, fit_ols
from .interpretation import (
    oob_permutation_importance,
    partial_dependence,
    partial_dependence_2way,
    permutation_importance,
)
from .schema import Schema, insurance_schema
from .synthetic import GeneratorConfig, generate_synthetic
from .tree import TreeConfig

MODEL_KINDS = ("ols", "tree", "bagging", "rf", "boosting")

DEFAULTS = {
    "seed": None,
    "threads": None,
    "schema": None,
    "out": None,
    # generate
    "n": 20_000,
    "zero_inflation": 0.925,
    "interaction": 1.0,
    "noise_sd": 0.6,
    "total_loss_rate": 0.005,
    # data handling
    "data": None,
    "train": None,
    "test": None,
    "test_years": "2016",
    # models
    "model": "boosting",
    "trees": 500,
    "mtry": None,
    "rounds": 300,
    "learning_rate": 0.1,
    "lam": 1.0,
    "gamma": 0.0,
    "max_depth": None,
    "min_leaf": 5,
    # interpretation
    "repeats": 20,
    "slice": "train",
    "mode": "model",
    "features": None,
    "grid_size": 25,
}

STOCHASTIC = {"generate", "train", "importance", "pdp", "compare"}


def _common():
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, help="random seed (required for stochastic subcommands)")
    p.add_argument("--threads", type=int, help="worker threads (default: available CPUs)")
    p.add_argument("--schema", help="schema JSON file (default: built-in insurance schema)")
    p.add_argument("--out", help="output file (generate, train) or directory (reports)")
    p.add_argument("--config", help="JSON file of option values")
    return p


def _model_flags(p):
    p.add_argument("--trees", type=int, help="number of trees for bagging / rf")
    p.add_argument("--mtry", type=int, help="features tried per split (rf)")
    p.add_argument("--rounds", type=int, help="boosting rounds")
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--lam", type=float, help="L2 penalty on boosting leaf weights")
    p.add_argument("--gamma", type=float, help="penalty per boosting leaf")
    p.add_argument("--max-depth", type=int)
    p.add_argument("--min-leaf", type=int)


def _data_flags(p):
    p.add_argument("--data", help="claims CSV; split into train/test by contract year")
    p.add_argument("--train", help="training CSV (instead of --data)")
    p.add_argument("--test", help="test CSV (instead of --data)")
    p.add_argument("--test-years", help="comma-separated contract years held out (default 2016)")


def build_parser():
    common = _common()
    parser = argparse.ArgumentParser(prog="claimtrees", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", parents=[common], help="write a synthetic claims CSV")
    g.add_argument("--n", type=int, help="number of contracts")
    g.add_argument("--zero-inflation", type=float, help="fraction of contracts without a claim")
    g.add_argument("--interaction", type=float, help="usage x premium interaction strength")
    g.add_argument("--noise-sd", type=float, help="log-scale noise standard deviation")
    g.add_argument("--total-loss-rate", type=float)

    t = sub.add_parser("train", parents=[common], help="fit one model and save it")
    _data_flags(t)
    t.add_argument("--model", choices=MODEL_KINDS)
    _model_flags(t)

    e = sub.add_parser("evaluate", parents=[common], help="train/test metrics of a saved model")
    _data_flags(e)
    e.add_argument("--model", help="model file")

    i = sub.add_parser("importance", parents=[common], help="permutation variable importance")
    _data_flags(i)
    i.add_argument("--model", help="model file")
    i.add_argument("--repeats", type=int)
    i.add_argument("--slice", choices=("train", "test"))
    i.add_argument("--mode", choices=("model", "oob"))

    d = sub.add_parser("pdp", parents=[common], help="one- or two-way partial dependence")
    _data_flags(d)
    d.add_argument("--model", help="model file")
    d.add_argument("--features", help="feature or comma-separated pair")
    d.add_argument("--grid-size", type=int)
    d.add_argument("--slice", choices=("train", "test"))

    c = sub.add_parser("compare", parents=[common], help="fit and compare ols, tree and ensembles")
    _data_flags(c)
    _model_flags(c)
    return parser


def resolve(args):
    """Merge defaults, config file and flags (flags win)."""
    opts = dict(DEFAULTS)
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        if not isinstance(cfg, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = set(cfg) - set(DEFAULTS)
        if unknown:
            raise InvalidConfig(sorted(unknown)[0], "unknown option")
        opts.update(cfg)
    opts.update({k: v for k, v in vars(args).items() if v is not None and k != "config"})
    if opts["threads"] is None:
        opts["threads"] = os.cpu_count() or 1
    if opts["command"] in STOCHASTIC and opts["seed"] is None:
        raise InvalidConfig("seed", "--seed is required for this subcommand")
    return opts


# --- helpers -------------------------------------------------------------------

def _schema(opts):
    if opts["schema"] is None:
        return insurance_schema()
    try:
        return Schema.load(opts["schema"])
    except OSError as exc:
        raise DataError(f"cannot read schema: {exc}") from exc


def _load(path, schema):
    try:
        return ds.load_csv(path, schema)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc


def _prepare(data):
    return ds.log_transform_response(ds.filter_positive_claims(data))


def _test_years(opts):
    try:
        return {int(y) for y in str(opts["test_years"]).split(",") if y.strip()}
    except ValueError:
        raise InvalidConfig("test_years", "expected comma-separated integers") from None


def _splits(opts):
    schema = _schema(opts)
    if opts["train"] or opts["test"]:
        if not (opts["train"] and opts["test"]):
            raise InvalidConfig("train", "--train and --test must be given together")
        return _prepare(_load(opts["train"], schema)), _prepare(_load(opts["test"], schema))
    if not opts["data"]:
        raise InvalidConfig("data", "a data file is required")
    return ds.split_by_year(_prepare(_load(opts["data"], schema)), _test_years(opts))


def _out_dir(opts):
    if not opts["out"]:
        raise InvalidConfig("out", "--out is required")
    path = Path(opts["out"])
    path.mkdir(parents=True, exist_ok=True)
    return path


def _fit(kind, train, opts):
    seed, threads = opts["seed"], opts["threads"]
    if kind == "ols":
        return fit_ols(train)
    if kind == "boosting":
        cfg = BoostConfig(n_rounds=opts["rounds"], learning_rate=opts["learning_rate"],
                          lam=opts["lam"], gamma=opts["gamma"],
                          max_depth=opts["max_depth"] or BoostConfig.max_depth,
                          min_leaf=opts["min_leaf"])
        return fit_gradient_boosting(train, cfg, seed)
    tcfg = TreeConfig(max_depth=opts["max_depth"], min_leaf=opts["min_leaf"])
    if kind == "tree":
        return fit_single_tree(train, tcfg, seed)
    if kind == "bagging":
        return fit_bagging(train, opts["trees"], tcfg, seed, threads)
    return fit_random_forest(train, opts["trees"], opts["mtry"], tcfg, seed, threads)


def model_to_json(model):
    if isinstance(model, LinearModel):
        return json.dumps(model.to_dict(), separators=(",", ":")) + "\n"
    return model.to_json()


def load_any_model(path):
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read model {path}: {exc}") from exc
    if doc.get("kind") == "ols":
        return LinearModel.from_dict(doc)
    return EnsembleModel.from_dict(doc)


def _write_rows(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


# --- subcommands ---------------------------------------------------------------

def cmd_generate(opts):
    cfg = GeneratorConfig(n_rows=opts["n"], zero_inflation_rate=opts["zero_inflation"],
                          seed=opts["seed"], interaction_strength=opts["interaction"],
                          noise_sd=opts["noise_sd"], total_loss_rate=opts["total_loss_rate"])
    if not opts["out"]:
        raise InvalidConfig("out", "--out is required")
    data = generate_synthetic(cfg)
    out = Path(opts["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    ds.write_csv(data, out)
    meta = {"generator": cfg.to_dict(), "truth": data.truth.to_dict(),
            "schema": json.loads(data.schema.to_json())}
    with open(str(out) + ".meta.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2)
        fh.write("\n")
    n_pos = int((data.response > 0).sum())
    print(f"wrote {data.n} contracts ({n_pos} with a positive claim) to {out}")


def cmd_train(opts):
    if opts["model"] not in MODEL_KINDS:
        raise InvalidConfig("model", f"must be one of {MODEL_KINDS}")
    if not opts["out"]:
        raise InvalidConfig("out", "--out is required")
    train, test = _splits(opts)
    model = _fit(opts["model"], train, opts)
    out = Path(opts["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(model_to_json(model), encoding="utf-8")
    log = str(out) + ".log.csv"
    if opts["model"] == "boosting":
        _write_rows(log, ["round", "loss", "penalty", "objective"],
                    [[h["round"], repr(h["loss"]), repr(h["penalty"]), repr(h["objective"])]
                     for h in model.history])
    else:
        rows = [["n_train", train.n], ["n_test", test.n]]
        if opts["model"] in ("bagging", "rf"):
            rows.append(["oob_rmse", repr(oob_error(model, train))])
        _write_rows(log, ["statistic", "value"], rows)
    print(f"wrote {opts['model']} model to {out}")


def cmd_evaluate(opts):
    model = load_any_model(opts["model"])
    train, test = _splits(opts)
    out = _out_dir(opts)
    report = compare_models({Path(opts["model"]).stem: model}, train, test)
    report.write_metrics_csv(out / "metrics.csv")
    report.write_pairs_csv(out / "pairs.csv")


def cmd_importance(opts):
    model = load_any_model(opts["model"])
    train, test = _splits(opts)
    data = train if opts["slice"] == "train" else test
    if opts["mode"] == "oob":
        report = oob_permutation_importance(model, train, opts["repeats"], opts["seed"])
    else:
        report = permutation_importance(model, data, opts["repeats"], opts["seed"],
                                        data_slice=opts["slice"], n_jobs=opts["threads"])
    report.write_csv(_out_dir(opts) / "importance.csv")


def cmd_pdp(opts):
    if not opts["features"]:
        raise InvalidConfig("features", "--features is required")
    names = [f.strip() for f in opts["features"].split(",")]
    if len(names) not in (1, 2):
        raise InvalidConfig("features", "give one feature or a pair")
    model = load_any_model(opts["model"])
    train, test = _splits(opts)
    data = train if opts["slice"] == "train" else test
    if len(names) == 1:
        surface = partial_dependence(model, data, names[0], opts["grid_size"], seed=opts["seed"])
    else:
        surface = partial_dependence_2way(model, data, names[0], names[1], opts["grid_size"], seed=opts["seed"])
    surface.write_csv(_out_dir(opts) / "pdp.csv")


def cmd_compare(opts):
    train, test = _splits(opts)
    models = {kind: _fit(kind, train, opts) for kind in MODEL_KINDS}
    report = compare_models(models, train, test)
    out = _out_dir(opts)
    report.write_metrics_csv(out / "metrics.csv")
    report.write_pairs_csv(out / "pairs.csv")
    rows = []
    for kind in MODEL_KINDS:
        rows.append([kind, repr(report.metric(kind, "train")["rmse"]),
                     repr(report.metric(kind, "test")["rmse"]),
                     repr(report.metric(kind, "test", ds.RAW)["rmse"])])
    _write_rows(out / "comparison.csv", ["model", "train_rmse", "test_rmse", "test_rmse_raw"], rows)


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "importance": cmd_importance,
    "pdp": cmd_pdp,
    "compare": cmd_compare,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        opts = resolve(args)
        COMMANDS[opts["command"]](opts)
    except ClaimTreesError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
