"""Command-line entry point.

Subcommands:

* ``experiment <name>`` -- run a named benchmark experiment and write
  report.json / params.json / predictions_<output>.csv / timings.json.
* ``fit``      -- fit the configured structure to a CSV dataset.
* ``predict``  -- rebuild a fitted spec from params.json and predict a grid.
* ``select``   -- pairwise fits plus related-output selection on a dataset.
* ``cv``       -- cross-validated lambda selection over a grid.

All commands accept ``--config`` (flat key = value file) plus the common
overrides ``--seed``, ``--out-dir``, and ``--jobs``.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .bench import (
    EXPERIMENTS,
    ExperimentConfig,
    ExperimentReport,
    load_config,
    load_csv,
    run_experiment,
    spec_from_jsonable,
    spec_to_jsonable,
    write_report,
    _fit_requested_structure,
)
from .infer import FittedModel, PairwiseFitSet, cv_select_lambda, fit_pairwise_set
from .objective import penalized_nll
from .prediction import predict_grid, select_related
from .structures import Dataset, make_arrowhead_spec, make_full_spec, make_pairwise_spec


def _build_config(args, **extra) -> ExperimentConfig:
    overrides = dict(extra)
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out_dir is not None:
        overrides["out_dir"] = args.out_dir
    if getattr(args, "jobs", None) is not None:
        overrides["jobs"] = args.jobs
    if getattr(args, "replications", None) is not None:
        overrides["replications"] = args.replications
    if args.config:
        return load_config(args.config, **overrides)
    return ExperimentConfig(**overrides)


def _load_dataset(cfg: ExperimentConfig) -> Dataset:
    if cfg.data_csv:
        return load_csv(cfg.data_csv, standardize=cfg.standardize)
    raise SystemExit("this command needs data_csv in the config")


def _cmd_experiment(args) -> int:
    cfg = _build_config(args, experiment=args.name)
    report = run_experiment(cfg)
    print(f"wrote {Path(cfg.out_dir) / 'report.json'}")
    for row in report.payload["rows"][:1]:
        print(json.dumps(row, indent=2, sort_keys=True))
    return 0


def _cmd_fit(args) -> int:
    cfg = _build_config(args, experiment="custom")
    data = _load_dataset(cfg)
    model = _fit_requested_structure(cfg, data, cfg.seed)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if isinstance(model, PairwiseFitSet):
        params = {
            f"pair_{model.target}_{other}": spec_to_jsonable(m.spec)
            for other, m in model.fitted()
        }
        objective = {k: m.final_objective.total for (k, m) in zip(params, [m for _, m in model.fitted()])}
    elif isinstance(model, list):
        params = {data.labels[i]: spec_to_jsonable(m.spec) for i, m in enumerate(model)}
        objective = {data.labels[i]: m.final_objective.total for i, m in enumerate(model)}
    else:
        params = spec_to_jsonable(model.spec)
        objective = model.final_objective.total
    (out / "params.json").write_text(json.dumps(params, indent=2, sort_keys=True) + "\n")
    report = {
        "schema": 1,
        "command": "fit",
        "structure": cfg.structure,
        "seed": cfg.seed,
        "objective": objective,
    }
    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    print(f"wrote {out / 'params.json'}")
    return 0


def _cmd_predict(args) -> int:
    cfg = _build_config(args, experiment="custom")
    data = _load_dataset(cfg)
    payload = json.loads(Path(args.params).read_text())
    if "topology" not in payload:
        raise SystemExit("params.json holds multiple specs; pass a single-spec dump")
    spec = spec_from_jsonable(payload)
    objective = penalized_nll(spec, data)
    model = FittedModel(
        spec=spec,
        data=data,
        final_objective=objective,
        restart_objectives=(objective.total,),
        converged=True,
        iterations=0,
    )
    if args.grid:
        lo, hi, n = args.grid.split(":")
        xs = np.linspace(float(lo), float(hi), int(n))
    else:
        lo = min(float(x.min()) for x in data.inputs)
        hi = max(float(x.max()) for x in data.inputs)
        xs = np.linspace(lo, hi, 100)
    predictions = {}
    for i in range(data.n_outputs):
        means, variances = predict_grid(model, xs, i)
        predictions[data.labels[i]] = (xs, means, variances)
    report = ExperimentReport(
        payload={"schema": 1, "command": "predict", "n_outputs": data.n_outputs},
        params=payload,
        predictions=predictions,
        timings={},
    )
    write_report(report, cfg.out_dir)
    print(f"wrote predictions for {data.n_outputs} outputs to {cfg.out_dir}")
    return 0


def _cmd_select(args) -> int:
    cfg = _build_config(args, experiment="custom")
    data = _load_dataset(cfg)
    pen = cfg.penalty_spec() if cfg.penalty != "none" else None
    fit_set = fit_pairwise_set(
        data,
        target=cfg.target,
        variant="b" if cfg.structure != "pairwise_a" else "a",
        family=cfg.kernel,
        pen=pen,
        opts=cfg.fit_options(cfg.seed),
    )
    selection = select_related(fit_set, tau=cfg.tau)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report = {
        "schema": 1,
        "command": "select",
        "target": selection.target,
        "tau": selection.tau,
        "scores": {data.labels[i]: s for i, s in selection.scores.items()},
        "related": [data.labels[i] for i in selection.related],
    }
    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0


def _cmd_cv(args) -> int:
    cfg = _build_config(args, experiment="custom")
    data = _load_dataset(cfg)
    if not cfg.cv_grid:
        raise SystemExit("cv needs cv_grid in the config (comma-separated lambdas)")
    if cfg.structure == "full_q":
        template = make_full_spec(data.n_outputs, cfg.q, family=cfg.kernel)
    elif cfg.structure == "arrowhead":
        template = make_arrowhead_spec(data.n_outputs, target=cfg.target, family=cfg.kernel)
    elif cfg.structure in ("pairwise_a", "pairwise_b"):
        if data.n_outputs != 2:
            raise SystemExit("pairwise cv expects a two-output dataset")
        template = make_pairwise_spec(variant=cfg.structure[-1], family=cfg.kernel)
    else:
        raise SystemExit(f"cv does not support structure {cfg.structure!r}")
    result = cv_select_lambda(
        template,
        data,
        cfg.penalty if cfg.penalty != "none" else "ridge",
        cfg.cv_grid,
        folds=cfg.cv_folds,
        opts=cfg.fit_options(cfg.seed),
        gamma=cfg.gamma,
    )
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report = {
        "schema": 1,
        "command": "cv",
        "grid": list(result.grid),
        "scores": list(result.scores),
        "chosen": result.chosen,
    }
    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="convmgp", description="multi-output GP experiments and fitting"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out-dir", default=None)

    p_exp = sub.add_parser("experiment", help="run a named experiment")
    p_exp.add_argument("name", choices=EXPERIMENTS)
    common(p_exp)
    p_exp.add_argument("--jobs", type=int, default=None, help="replication worker count")
    p_exp.add_argument("--replications", type=int, default=None)
    p_exp.set_defaults(func=_cmd_experiment)

    p_fit = sub.add_parser("fit", help="fit a structure to a CSV dataset")
    common(p_fit)
    p_fit.set_defaults(func=_cmd_fit)

    p_pred = sub.add_parser("predict", help="predict from a params.json dump")
    common(p_pred)
    p_pred.add_argument("--params", required=True, help="params.json from fit")
    p_pred.add_argument("--grid", help="lo:hi:n prediction grid")
    p_pred.set_defaults(func=_cmd_predict)

    p_sel = sub.add_parser("select", help="related-output selection via pairwise fits")
    common(p_sel)
    p_sel.set_defaults(func=_cmd_select)

    p_cv = sub.add_parser("cv", help="cross-validated lambda selection")
    common(p_cv)
    p_cv.set_defaults(func=_cmd_cv)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
