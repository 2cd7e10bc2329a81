"""Batch command-line interface.

Subcommands: ``fit`` (sample a model and write draws, summaries and a
manifest), ``prior-sample`` (simulate from the priors), ``predict``
(posterior mean or posterior predictive on the training or new data), and
``pcorr`` (partial-correlation transform of slope draws).  All artifacts
are plain UTF-8 CSV/JSON; re-running with the same flags and seed
reproduces them byte-identically.
"""

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import diagnostics, posthoc, predict as predict_mod, priors as priors_mod
from .errors import GlmmkitError
from .model import build_model, from_manifest, load_manifest, write_manifest
from .sampler import PosteriorDraws, fit as fit_model
from .tabular import DataTable, read_csv, write_csv
from .design import dump_design
from .formula import collect_variables

DEFAULT_SEED = 1234


def _add_model_flags(parser):
    parser.add_argument("--formula", required=True, help="model formula, e.g. 'y ~ x + (1|g)'")
    parser.add_argument("--data", required=True, help="path to a CSV file with a header row")
    parser.add_argument("--family", default="gaussian", help="response family (default: gaussian)")
    parser.add_argument("--link", default=None, help="link function (default: family default)")
    parser.add_argument("--dropna", action="store_true",
                        help="drop rows with missing values in any model column")
    parser.add_argument("--priors", default=None, metavar="PATH",
                        help="JSON file with prior overrides "
                             "({'common': ..., 'group_specific': ..., 'terms': {...}})")


def _build_parser():
    parser = argparse.ArgumentParser(prog="glmmkit",
                                     description="Bayesian GLMMs from model formulas")
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="sample a model's posterior")
    _add_model_flags(p_fit)
    p_fit.add_argument("--draws", type=int, default=1000)
    p_fit.add_argument("--tune", type=int, default=1000)
    p_fit.add_argument("--chains", type=int, default=None)
    p_fit.add_argument("--target-accept", type=float, default=0.8, dest="target_accept")
    p_fit.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p_fit.add_argument("--out", default="out", help="output directory (default: out)")
    p_fit.add_argument("--dump-design", action="store_true", dest="dump_design",
                       help="also write the design matrices as CSV")

    p_prior = sub.add_parser("prior-sample", help="simulate draws from the priors")
    _add_model_flags(p_prior)
    p_prior.add_argument("--n", type=int, default=5000,
                         help="draws per parameter (default: 5000)")
    p_prior.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p_prior.add_argument("--out", default="out")

    p_pred = sub.add_parser("predict", help="posterior mean or predictive draws")
    p_pred.add_argument("--fit", required=True, metavar="DIR",
                        help="directory written by 'glmmkit fit'")
    p_pred.add_argument("--data", default=None,
                        help="CSV of new predictor values (default: training data)")
    p_pred.add_argument("--kind", choices=("mean", "pps"), default="mean")
    p_pred.add_argument("--ndraws", type=int, default=None,
                        help="random draws per chain for --kind pps")
    p_pred.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p_pred.add_argument("--out", default=None, help="output directory (default: fit dir)")

    p_pcorr = sub.add_parser("pcorr", help="partial-correlation transform of slopes")
    p_pcorr.add_argument("--fit", required=True, metavar="DIR")
    p_pcorr.add_argument("--predictors", required=True,
                         help="comma-separated predictor (column) names")
    p_pcorr.add_argument("--out", default=None)
    return parser


def _load_priors(path):
    if path is None:
        return None
    with open(path, "r", encoding="utf-8") as handle:
        return json.load(handle)


def _write_rows(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        writer.writerows(rows)


def _fmt(value):
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def _write_draws_csv(path, draws):
    header = ["chain", "draw"] + draws.param_names
    rows = []
    for c in range(draws.n_chains):
        for d in range(draws.n_draws):
            rows.append([c, d] + [_fmt(v) for v in draws.values[c, d]])
    _write_rows(path, header, rows)


def _read_draws_csv(path):
    with open(path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader)
        body = list(reader)
    if header[:2] != ["chain", "draw"]:
        raise GlmmkitError(f"{path} is not a draws file")
    names = header[2:]
    chains = 1 + max(int(row[0]) for row in body)
    draws = 1 + max(int(row[1]) for row in body)
    values = np.empty((chains, draws, len(names)))
    for row in body:
        c, d = int(row[0]), int(row[1])
        values[c, d] = [float(v) for v in row[2:]]
    return PosteriorDraws(values=values, param_names=names)


def cmd_fit(args):
    data = read_csv(args.data)
    model = build_model(
        args.formula, data, family=args.family, link=args.link,
        priors=_load_priors(args.priors), dropna=args.dropna,
    )
    if model.dropped_rows:
        print(f"dropped {model.dropped_rows} incomplete row(s)", file=sys.stderr)
    draws = fit_model(model, draws=args.draws, tune=args.tune, chains=args.chains,
                      target_accept=args.target_accept, seed=args.seed)

    out = args.out
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "model.txt"), "w", encoding="utf-8") as handle:
        handle.write(model.describe())
    _write_draws_csv(os.path.join(out, "draws.csv"), draws)

    table = diagnostics.summarize(draws)
    table.to_csv(os.path.join(out, "summary.csv"))
    with open(os.path.join(out, "summary.txt"), "w", encoding="utf-8") as handle:
        handle.write(table.to_text())

    stats = draws.stats
    rows = []
    for c in range(draws.n_chains):
        for d in range(draws.n_draws):
            rows.append([
                c, d,
                _fmt(stats["divergent"][c, d]),
                _fmt(stats["tree_depth"][c, d]),
                _fmt(stats["energy"][c, d]),
                _fmt(stats["accept_stat"][c, d]),
                _fmt(stats["n_leapfrog"][c, d]),
            ])
    _write_rows(
        os.path.join(out, "sampler_stats.csv"),
        ["chain", "draw", "divergent", "tree_depth", "energy", "accept_stat",
         "n_leapfrog"],
        rows,
    )

    write_manifest(model, os.path.join(out, "manifest.json"))
    training = {v: model.data[v] for v in collect_variables(model.terms)
                if v in model.data}
    write_csv(DataTable(training, model.data.n_rows),
              os.path.join(out, "training_data.csv"))
    if args.dump_design:
        dump_design(model.design, os.path.join(out, "design_X.csv"),
                    os.path.join(out, "design_Z.csv"))
    print(model.describe(), end="")
    print(f"\n{draws.metadata['divergences']} divergent transition(s); "
          f"artifacts written to {out}/")
    return 0


def cmd_prior_sample(args):
    model = build_model(
        args.formula, read_csv(args.data), family=args.family, link=args.link,
        priors=_load_priors(args.priors), dropna=args.dropna,
    )
    sampled = priors_mod.sample_priors(
        model.priors, model.group_coef_layout(), args.n, seed=args.seed
    )
    # emit under the reported parameter names, in draws.csv column order
    resp = model.design.response.name
    renames = {name: f"{resp}_{name}" for name in model.layout.aux_names}
    columns = {renames.get(k, k): v for k, v in sampled.items()}
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "prior_draws.csv")
    names = [n for n in model.layout.names if n in columns]
    rows = [[_fmt(columns[n][i]) for n in names] for i in range(args.n)]
    _write_rows(path, names, rows)
    print(f"wrote {args.n} prior draws per parameter to {path}")
    return 0


def _load_fit_dir(fit_dir):
    manifest = load_manifest(os.path.join(fit_dir, "manifest.json"))
    training = read_csv(os.path.join(fit_dir, "training_data.csv"))
    model = from_manifest(manifest, training)
    draws = _read_draws_csv(os.path.join(fit_dir, "draws.csv"))
    if draws.param_names != manifest["param_names"]:
        raise GlmmkitError(
            "draws.csv does not match manifest.json (parameter columns differ)"
        )
    return model, draws


def cmd_predict(args):
    model, draws = _load_fit_dir(args.fit)
    new_data = read_csv(args.data) if args.data else None
    if args.kind == "mean":
        result = predict_mod.predict_mean(model, draws, new_data)
        label = f"{model.design.response.name}_mean"
    else:
        result = predict_mod.predict_pps(model, draws, new_data,
                                         ndraws=args.ndraws, seed=args.seed)
        label = f"{model.design.response.name}_pps"

    out = args.out or args.fit
    os.makedirs(out, exist_ok=True)
    n_chains, n_draws, n_obs = result.shape
    rows = []
    for c in range(n_chains):
        for d in range(n_draws):
            for r in range(n_obs):
                rows.append([c, d, r, _fmt(result[c, d, r])])
    _write_rows(os.path.join(out, "predictions.csv"),
                ["chain", "draw", "row", label], rows)

    summary_rows = []
    for r in range(n_obs):
        flat = result[:, :, r].ravel()
        lo, hi = diagnostics.hdi(flat)
        summary_rows.append([r, _fmt(float(flat.mean())), _fmt(lo), _fmt(hi)])
    _write_rows(os.path.join(out, "predictions_summary.csv"),
                ["row", "mean", "hdi_3%", "hdi_97%"], summary_rows)
    print(f"wrote predictions with shape (chains={n_chains}, draws={n_draws}, "
          f"obs={n_obs}) to {out}/")
    return 0


def cmd_pcorr(args):
    model, draws = _load_fit_dir(args.fit)
    predictors = [p.strip() for p in args.predictors.split(",") if p.strip()]
    slope_names = model.slope_names()
    unknown = [p for p in predictors if p not in slope_names]
    if unknown:
        raise GlmmkitError(
            f"predictor(s) {unknown} are not slope columns of this model; "
            f"available: {slope_names}"
        )
    # statistics come from the training design columns (transform-aware)
    X_raw = model.design.uncentered_X()
    col = {name: X_raw[:, model.design.x_names.index(name)] for name in predictors}
    y = model.design.response.values
    stats_table = DataTable.from_dict(
        {**{k: np.asarray(v) for k, v in col.items()}, "__response__": y}
    )
    slope_draws = {name: draws.get(name) for name in predictors}
    result = posthoc.partial_corr_transform(slope_draws, stats_table, predictors,
                                            "__response__")

    out = args.out or args.fit
    os.makedirs(out, exist_ok=True)
    for fname, mapping in (("pcorr_draws.csv", result.draws),
                           ("pcorr_squared_draws.csv", result.squared())):
        rows = []
        n_chains, n_draws = mapping[predictors[0]].shape
        for c in range(n_chains):
            for d in range(n_draws):
                rows.append([c, d] + [_fmt(mapping[p][c, d]) for p in predictors])
        _write_rows(os.path.join(out, fname), ["chain", "draw"] + predictors, rows)

    summary_rows = []
    for scale, mapping in (("rho", result.draws), ("rho_squared", result.squared())):
        for p in predictors:
            flat = mapping[p].ravel()
            lo, hi = diagnostics.hdi(flat)
            summary_rows.append([p, scale, _fmt(float(flat.mean())), _fmt(lo), _fmt(hi)])
    _write_rows(os.path.join(out, "pcorr_summary.csv"),
                ["predictor", "scale", "mean", "hdi_3%", "hdi_97%"], summary_rows)
    print(f"wrote partial-correlation draws for {len(predictors)} predictor(s) "
          f"to {out}/")
    return 0


_COMMANDS = {
    "fit": cmd_fit,
    "prior-sample": cmd_prior_sample,
    "predict": cmd_predict,
    "pcorr": cmd_pcorr,
}


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except GlmmkitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
