"""Synthetic generators, CSV ingestion, metrics, and the experiment runner.

Experiments are fully determined by (config, seed): generators use seeded
``numpy`` generators, replication r uses ``seed + r``, and reports are
serialized with sorted keys so a rerun produces byte-identical
``report.json`` / ``params.json`` / prediction CSVs.  Wall-clock numbers are
volatile, so they go to a separate ``timings.json`` that is excluded from
the determinism contract.
"""

from __future__ import annotations

import csv
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .exceptions import EmptyFile, LengthMismatch, ParseError
from .infer import FitOptions, FittedModel, PairwiseFitSet, fit, fit_pairwise_set
from .kernels import SEKernel, SpectralComponent, SpectralKernel
from .numerics import cholesky_with_jitter
from .objective import PenaltySpec
from .prediction import information_transfer, predict_grid, predict_pairwise
from .structures import (
    Dataset,
    MgpSpec,
    TopologyKind,
    arrowhead,
    full_q,
    make_arrowhead_spec,
    make_full_spec,
    make_pairwise_spec,
    pairwise_shared_private,
    pairwise_two_latent,
)

REPORT_SCHEMA = 1

# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------

SINE_MEANS = (
    lambda x: 5.0 * np.sin(1.5 * x),
    lambda x: 5.0 * np.sin(x) - 3.0,
    lambda x: x**2 / 10.0 - 5.0,
)

# four group functions, two outputs each; first group is the noisy one
GROUP_FUNCS = (
    lambda x: x**2 / (0.8 * (1.0 - x)),
    lambda x: x / (1.0 - x),
    lambda x: 2.0 * x**2,
    lambda x: x**3,
)
GROUP_OF_OUTPUT = (0, 0, 1, 1, 2, 2, 3, 3)

# (output count, amplitude, length-scale, noise sd) blocks for the GP-draw settings
GP_BLOCKS = {
    "n20": ((5, 4.0, 1.0, 0.005), (7, 1.0, 4.0, 0.0001), (8, 4.0, 1.0, 0.001)),
    "n50": (
        (9, 4.0, 1.0, 0.001),
        (10, 1.0, 4.0, 0.0001),
        (10, 1.0, 8.0, 0.0001),
        (10, 8.0, 1.0, 0.001),
        (11, 3.0, 1.0, 0.005),
    ),
}


def sine_mean(output: int, x):
    return SINE_MEANS[output](np.asarray(x, dtype=float))


def gen_sines(seed: int, p: int = 20, noise: float = 0.05) -> Dataset:
    """Three sinusoid-family outputs on an even grid over [0, 10]."""
    if p < 2:
        raise ValueError("need at least two points per output")
    rng = np.random.default_rng(seed)
    x = np.linspace(0.0, 10.0, p)
    ys = tuple(sine_mean(i, x) + noise * rng.standard_normal(p) for i in range(3))
    return Dataset(inputs=(x, x, x), values=ys)


def group_mean(output: int, x):
    return GROUP_FUNCS[GROUP_OF_OUTPUT[output]](np.asarray(x, dtype=float))


def gen_groups(
    seed: int,
    p: int = 7,
    noise_first_group: float = 0.1,
    noise_rest: float = 0.01,
    x_max: float = 0.8,
) -> Dataset:
    """Eight outputs in four correlated pairs, sampled on [0, x_max].

    The input range stays below 1 where two of the group functions blow up.
    """
    rng = np.random.default_rng(seed)
    x = np.linspace(0.0, x_max, p)
    ys = []
    for i in range(8):
        sd = noise_first_group if GROUP_OF_OUTPUT[i] == 0 else noise_rest
        ys.append(group_mean(i, x) + sd * rng.standard_normal(p))
    return Dataset(inputs=(x,) * 8, values=tuple(ys))


@dataclass(frozen=True)
class SplitDataset:
    train: Dataset
    test: Dataset
    train_idx: tuple
    test_idx: tuple


def gp_draw_cov(alpha: float, ell: float, x: np.ndarray) -> np.ndarray:
    # negative exponent: the only valid covariance for this family
    lags = x[:, None] - x[None, :]
    return alpha**2 * np.exp(-(lags**2) / (2.0 * ell**2))


def gen_gp_draws(
    seed: int, setting: str = "n20", p: int = 15, n_train: int = 8
) -> SplitDataset:
    """Independent GP draws per output with block-wise parameters.

    15 evenly spaced points on [0, 3]; a seeded random subset of 8 points is
    train, the remaining 7 test (one shared split across outputs).
    """
    if setting not in GP_BLOCKS:
        raise ValueError(f"unknown setting {setting!r}; choose from {sorted(GP_BLOCKS)}")
    rng = np.random.default_rng(seed)
    x = np.linspace(0.0, 3.0, p)
    ys = []
    for count, alpha, ell, noise_sd in GP_BLOCKS[setting]:
        cov = gp_draw_cov(alpha, ell, x)
        lower = cholesky_with_jitter(cov).lower
        for _ in range(count):
            f_vals = lower @ rng.standard_normal(p)
            ys.append(f_vals + noise_sd * rng.standard_normal(p))
    train_idx = np.sort(rng.choice(p, size=n_train, replace=False))
    test_idx = np.setdiff1d(np.arange(p), train_idx)
    n = len(ys)
    train = Dataset(inputs=(x[train_idx],) * n, values=tuple(y[train_idx] for y in ys))
    test = Dataset(inputs=(x[test_idx],) * n, values=tuple(y[test_idx] for y in ys))
    return SplitDataset(
        train=train,
        test=test,
        train_idx=tuple(int(i) for i in train_idx),
        test_idx=tuple(int(i) for i in test_idx),
    )


# ---------------------------------------------------------------------------
# metrics and file formats
# ---------------------------------------------------------------------------


def mse(pred, truth) -> float:
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if pred.shape != truth.shape:
        raise LengthMismatch(f"length {pred.shape} vs {truth.shape}")
    if pred.size == 0:
        raise LengthMismatch("empty sequences")
    return float(np.mean((pred - truth) ** 2))


def load_csv(path, standardize: bool = False) -> Dataset:
    """Read `output_id,x,y` rows, grouping outputs in first-appearance order."""
    path = Path(path)
    with open(path, newline="") as handle:
        rows = list(csv.reader(handle))
    if not rows:
        raise EmptyFile(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    cols = {}
    for name in ("output_id", "x", "y"):
        if name not in header:
            raise ParseError(f"missing column {name!r}", line=1)
        cols[name] = header.index(name)
    groups: dict[str, list] = {}
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) < len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(row)}", line=lineno)
        out_id = row[cols["output_id"]].strip()
        try:
            x = float(row[cols["x"]])
            y = float(row[cols["y"]])
        except ValueError as exc:
            raise ParseError(str(exc), line=lineno) from None
        groups.setdefault(out_id, []).append((x, y))
    if not groups:
        raise EmptyFile(f"{path} has a header but no data rows")
    labels = tuple(groups)
    xs, ys = [], []
    for label in labels:
        pts = groups[label]
        xs.append(np.array([p[0] for p in pts]))
        y = np.array([p[1] for p in pts])
        if standardize:
            y = (y - y.mean()) / max(float(y.std()), 1e-12)
        ys.append(y)
    return Dataset(inputs=tuple(xs), values=tuple(ys), labels=labels)


def spec_to_jsonable(spec: MgpSpec) -> dict:
    kernels = []
    for (q, i), k in sorted(spec.kernels.items()):
        if isinstance(k, SEKernel):
            kernels.append(
                {"q": q, "i": i, "family": "se", "alpha": k.alpha, "ell": k.ell, "shift": k.shift}
            )
        else:
            kernels.append(
                {
                    "q": q,
                    "i": i,
                    "family": "spectral",
                    "components": [
                        {"a": c.a, "sigma": c.sigma, "mu": c.mu} for c in k.components
                    ],
                }
            )
    return {
        "schema": REPORT_SCHEMA,
        "topology": spec.topology.kind.value,
        "n_outputs": spec.topology.n_outputs,
        "n_latents": spec.topology.n_latents,
        "target": spec.topology.target,
        "active": sorted([q, i] for (q, i) in spec.topology.active),
        "kernels": kernels,
        "noise": list(spec.noise),
    }


def spec_from_jsonable(payload: dict) -> MgpSpec:
    kind = TopologyKind(payload["topology"])
    n_outputs = payload["n_outputs"]
    if kind == TopologyKind.FULL_Q:
        topo = full_q(
            n_outputs,
            payload["n_latents"],
            active={(q, i) for q, i in payload["active"]},
        )
    elif kind == TopologyKind.ARROWHEAD:
        topo = arrowhead(n_outputs, payload["target"])
    elif kind == TopologyKind.PAIRWISE_SHARED_PRIVATE:
        topo = pairwise_shared_private()
    else:
        topo = pairwise_two_latent()
    kernels = {}
    for entry in payload["kernels"]:
        key = (entry["q"], entry["i"])
        if entry["family"] == "se":
            kernels[key] = SEKernel(
                alpha=entry["alpha"], ell=entry["ell"], shift=entry.get("shift", 0.0)
            )
        else:
            kernels[key] = SpectralKernel(
                components=tuple(
                    SpectralComponent(a=c["a"], sigma=c["sigma"], mu=c["mu"])
                    for c in entry["components"]
                )
            )
    return MgpSpec(topology=topo, kernels=kernels, noise=tuple(payload["noise"]))


# ---------------------------------------------------------------------------
# experiment configuration
# ---------------------------------------------------------------------------

EXPERIMENTS = (
    "table1_sines",
    "table2_shrinkage",
    "lowdim_groups",
    "gp_groups_20",
    "gp_groups_50",
    "custom",
)


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str = "custom"
    structure: str = "full_q"  # full_q|arrowhead|pairwise_a|pairwise_b|independent
    q: int = 1
    kernel: str = "se"
    penalty: str = "none"
    lam: float = 1.0
    cv_grid: tuple = ()
    cv_folds: int = 5
    gamma: float = 3.7
    restarts: int = 5
    max_iters: int = 500
    seed: int = 0
    replications: int = 0  # 0 = experiment default
    target: int = 0
    models: tuple = ()  # empty = experiment default
    poe_weighting: str = "uniform"
    data_csv: str = ""
    standardize: bool = False
    out_dir: str = "."
    jobs: int = 1
    tau: float = 1e-3
    noise: float = 0.05
    train_points: int = 20

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(
                f"unknown experiment {self.experiment!r}; choose from {EXPERIMENTS}"
            )
        if self.structure == "full_q" and self.q < 1:
            raise ValueError("q must be >= 1 for the full_q structure")
        object.__setattr__(self, "cv_grid", tuple(float(v) for v in self.cv_grid))
        object.__setattr__(self, "models", tuple(str(m) for m in self.models))

    def fit_options(self, seed: int) -> FitOptions:
        return FitOptions(restarts=self.restarts, max_iters=self.max_iters, seed=seed)

    def penalty_spec(self) -> PenaltySpec:
        return PenaltySpec(kind=self.penalty, lam=self.lam, gamma=self.gamma)


def _parse_value(raw: str, hint):
    raw = raw.strip()
    if hint is bool:
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"cannot parse boolean from {raw!r}")
    if hint is int:
        return int(raw)
    if hint is float:
        return float(raw)
    if hint is tuple:
        if not raw:
            return ()
        return tuple(item.strip() for item in raw.split(","))
    return raw


def load_config(path, **overrides) -> ExperimentConfig:
    """Parse a flat `key = value` config file; '#' starts a comment."""
    known = {f.name: f.type for f in fields(ExperimentConfig)}
    hints = {
        name: (tuple if "tuple" in str(t) else bool if "bool" in str(t) else int
               if "int" in str(t) else float if "float" in str(t) else str)
        for name, t in known.items()
    }
    values: dict = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"expected key = value, got {line!r}", line=lineno)
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in known:
            raise ParseError(f"unknown config key {key!r}", line=lineno)
        try:
            values[key] = _parse_value(raw, hints[key])
        except ValueError as exc:
            raise ParseError(str(exc), line=lineno) from None
    values.update(overrides)
    return ExperimentConfig(**values)


# ---------------------------------------------------------------------------
# experiment runner
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentReport:
    payload: dict  # deterministic content written to report.json
    params: dict  # fitted parameter dump written to params.json
    predictions: dict  # label -> (xs, means, variances)
    timings: dict  # label -> seconds; written separately, excluded from determinism


class _Timer:
    def __init__(self):
        self.laps: dict[str, float] = {}

    def time(self, label: str, fn, *args, **kwargs):
        start = time.perf_counter()
        result = fn(*args, **kwargs)
        self.laps[label] = self.laps.get(label, 0.0) + time.perf_counter() - start
        return result


def _fit_full(data: Dataset, q: int, cfg: ExperimentConfig, seed: int) -> FittedModel:
    spec = make_full_spec(data.n_outputs, q, family=cfg.kernel)
    return fit(spec, data, opts=cfg.fit_options(seed))


def _fit_single(data: Dataset, output: int, cfg: ExperimentConfig, seed: int) -> FittedModel:
    sub = data.select_outputs((output,))
    spec = make_full_spec(1, 1, family=cfg.kernel)
    return fit(spec, sub, opts=cfg.fit_options(seed))


def _model_params(model) -> dict:
    if isinstance(model, PairwiseFitSet):
        return {
            f"pair_{model.target}_{other}": spec_to_jsonable(m.spec)
            for other, m in model.fitted()
        }
    if isinstance(model, (list, tuple)):
        return {f"output_{i}": spec_to_jsonable(m.spec) for i, m in enumerate(model)}
    return spec_to_jsonable(model.spec)


def _rep_table1(cfg: ExperimentConfig, rep: int) -> dict:
    seed = cfg.seed + rep
    data = gen_sines(seed, p=cfg.train_points, noise=cfg.noise)
    xs = np.linspace(0.0, 10.0, 70)
    timer = _Timer()
    row: dict = {"replication": rep, "seed": seed, "mse": {}}
    models = {}
    for q in (1, 2, 3, 4):
        model = timer.time(f"fit_q{q}", _fit_full, data, q, cfg, seed)
        models[f"q{q}"] = model
        per_output = [
            mse(predict_grid(model, xs, i)[0], sine_mean(i, xs)) for i in range(3)
        ]
        row["mse"][f"q{q}"] = float(np.mean(per_output))
        row[f"mse_per_output_q{q}"] = per_output
    gp_y1 = timer.time("fit_gp_y1", _fit_single, data, 0, cfg, seed)
    it = information_transfer(
        models["q1"], gp_y1, (xs, sine_mean(0, xs)), target=0, partition=(0,)
    )
    row["it_y1_q1_vs_gp"] = it.it_value
    row["risk_full_q1_y1"] = it.risk_full
    row["risk_gp_y1"] = it.risk_subset
    preds = {}
    if rep == 0:
        for i in range(3):
            means, variances = predict_grid(models["q3"], xs, i)
            preds[data.labels[i]] = (xs, means, variances)
    return {
        "row": row,
        "preds": preds,
        "params": {name: _model_params(m) for name, m in models.items()} if rep == 0 else {},
        "timings": timer.laps,
    }


def _rep_table2(cfg: ExperimentConfig, rep: int) -> dict:
    seed = cfg.seed + rep
    data = gen_sines(seed, p=cfg.train_points, noise=cfg.noise)
    pen = PenaltySpec(kind="ridge" if cfg.penalty == "none" else cfg.penalty, lam=cfg.lam)
    timer = _Timer()
    fit_set = timer.time(
        "fit_pairwise",
        fit_pairwise_set,
        data,
        0,
        "b",
        cfg.kernel,
        pen,
        cfg.fit_options(seed),
    )
    row: dict = {"replication": rep, "seed": seed, "pairs": {}}
    for other, model in fit_set.fitted():
        shared_target = model.spec.kernels[(0, 0)]
        shared_other = model.spec.kernels[(0, 1)]
        row["pairs"][f"y1_y{other + 1}"] = {
            "alpha_shared_target": shared_target.alpha,
            "alpha_shared_other": shared_other.alpha,
            "ell_shared_target": shared_target.ell,
            "ell_shared_other": shared_other.ell,
        }
    preds = {}
    params = {}
    if rep == 0:
        xs = np.linspace(0.0, 10.0, 70)
        means, variances = predict_pairwise(fit_set, xs, weighting=cfg.poe_weighting)
        preds[data.labels[0]] = (xs, means, variances)
        for other, model in fit_set.fitted():
            m, v = predict_grid(model, xs, 1)
            preds[data.labels[other]] = (xs, m, v)
        params = _model_params(fit_set)
    return {"row": row, "preds": preds, "params": params, "timings": timer.laps}


_LOWDIM_DEFAULT_MODELS = ("mgp_1", "pairwise", "arrowhead", "gp", "mgp_sub")


def _rep_lowdim(cfg: ExperimentConfig, rep: int) -> dict:
    seed = cfg.seed + rep
    data = gen_groups(seed)
    xs = np.linspace(0.0, 0.8, 30)
    truth = group_mean(0, xs)
    wanted = cfg.models or _LOWDIM_DEFAULT_MODELS
    timer = _Timer()
    row: dict = {"replication": rep, "seed": seed, "mse_y1": {}}
    fitted: dict = {}
    for name in wanted:
        if name.startswith("mgp_") and name != "mgp_sub":
            q = int(name.split("_", 1)[1])
            model = timer.time(f"fit_{name}", _fit_full, data, q, cfg, seed)
            means, _ = predict_grid(model, xs, 0)
        elif name == "mgp_sub":
            sub = data.select_outputs((0, 1))
            spec = make_full_spec(2, 2, family=cfg.kernel)
            model = timer.time(f"fit_{name}", fit, spec, sub, None, cfg.fit_options(seed))
            means, _ = predict_grid(model, xs, 0)
        elif name == "gp":
            model = timer.time(f"fit_{name}", _fit_single, data, 0, cfg, seed)
            means, _ = predict_grid(model, xs, 0)
        elif name == "pairwise":
            model = timer.time(
                f"fit_{name}",
                fit_pairwise_set,
                data,
                0,
                "b",
                cfg.kernel,
                None,
                cfg.fit_options(seed),
            )
            means, _ = predict_pairwise(model, xs, weighting=cfg.poe_weighting)
        elif name == "arrowhead":
            spec = make_arrowhead_spec(data.n_outputs, target=0, family=cfg.kernel)
            model = timer.time(f"fit_{name}", fit, spec, data, None, cfg.fit_options(seed))
            means, _ = predict_grid(model, xs, 0)
        else:
            raise ValueError(f"unknown model {name!r} for lowdim_groups")
        fitted[name] = model
        row["mse_y1"][name] = mse(means, truth)
    preds = {}
    params = {}
    if rep == 0:
        headline = "arrowhead" if "arrowhead" in fitted else next(iter(fitted))
        model = fitted[headline]
        if isinstance(model, PairwiseFitSet):
            means, variances = predict_pairwise(model, xs, weighting=cfg.poe_weighting)
            preds[data.labels[0]] = (xs, means, variances)
        else:
            for i in range(data.n_outputs):
                m, v = predict_grid(model, xs, i)
                preds[data.labels[i]] = (xs, m, v)
        row["headline_model"] = headline
        params = {name: _model_params(m) for name, m in fitted.items()}
    return {"row": row, "preds": preds, "params": params, "timings": timer.laps}


def _rep_gp_groups(cfg: ExperimentConfig, rep: int, setting: str) -> dict:
    seed = cfg.seed + rep
    sample = gen_gp_draws(seed, setting=setting)
    timer = _Timer()
    fit_set = timer.time(
        "fit_pairwise",
        fit_pairwise_set,
        sample.train,
        cfg.target,
        "b",
        cfg.kernel,
        None,
        cfg.fit_options(seed),
    )
    xs = sample.test.inputs[cfg.target]
    means, variances = predict_pairwise(fit_set, xs, weighting=cfg.poe_weighting)
    row = {
        "replication": rep,
        "seed": seed,
        "n_outputs": sample.train.n_outputs,
        "n_submodels_fitted": len(fit_set.fitted()),
        "train_idx": list(sample.train_idx),
        "test_idx": list(sample.test_idx),
        "mse_y1": {"pairwise": mse(means, sample.test.values[cfg.target])},
    }
    preds = {}
    params = {}
    if rep == 0:
        preds[sample.train.labels[cfg.target]] = (xs, means, variances)
        params = _model_params(fit_set)
    return {"row": row, "preds": preds, "params": params, "timings": timer.laps}


def _fit_requested_structure(cfg: ExperimentConfig, data: Dataset, seed: int):
    pen = cfg.penalty_spec() if cfg.penalty != "none" else None
    opts = cfg.fit_options(seed)
    if cfg.structure == "full_q":
        spec = make_full_spec(data.n_outputs, cfg.q, family=cfg.kernel)
        return fit(spec, data, pen, opts)
    if cfg.structure == "arrowhead":
        spec = make_arrowhead_spec(data.n_outputs, target=cfg.target, family=cfg.kernel)
        return fit(spec, data, pen, opts)
    if cfg.structure in ("pairwise_a", "pairwise_b"):
        variant = cfg.structure[-1]
        return fit_pairwise_set(data, cfg.target, variant, cfg.kernel, pen, opts)
    if cfg.structure == "independent":
        return [_fit_single(data, i, cfg, seed) for i in range(data.n_outputs)]
    raise ValueError(f"unknown structure {cfg.structure!r}")


def _rep_custom(cfg: ExperimentConfig, rep: int) -> dict:
    if not cfg.data_csv:
        raise ValueError("custom experiment requires data_csv")
    seed = cfg.seed + rep
    data = load_csv(cfg.data_csv, standardize=cfg.standardize)
    timer = _Timer()
    model = timer.time("fit", _fit_requested_structure, cfg, data, seed)
    lo = min(float(x.min()) for x in data.inputs)
    hi = max(float(x.max()) for x in data.inputs)
    xs = np.linspace(lo, hi, 100)
    preds = {}
    row: dict = {"replication": rep, "seed": seed, "structure": cfg.structure}
    if isinstance(model, PairwiseFitSet):
        means, variances = predict_pairwise(model, xs, weighting=cfg.poe_weighting)
        preds[data.labels[cfg.target]] = (xs, means, variances)
        row["objective"] = {
            f"pair_{model.target}_{other}": m.final_objective.total
            for other, m in model.fitted()
        }
    elif isinstance(model, list):
        for i, m in enumerate(model):
            means, variances = predict_grid(m, xs, 0)
            preds[data.labels[i]] = (xs, means, variances)
        row["objective"] = {data.labels[i]: m.final_objective.total for i, m in enumerate(model)}
    else:
        for i in range(data.n_outputs):
            means, variances = predict_grid(model, xs, i)
            preds[data.labels[i]] = (xs, means, variances)
        row["objective"] = model.final_objective.total
    out = {"row": row, "preds": preds if rep == 0 else {}, "params": {}, "timings": timer.laps}
    if rep == 0:
        out["params"] = _model_params(model)
    return out


_DEFAULT_REPLICATIONS = {
    "table1_sines": 1,
    "table2_shrinkage": 1,
    "lowdim_groups": 10,
    "gp_groups_20": 1,
    "gp_groups_50": 1,
    "custom": 1,
}


def _rep_dispatch(cfg: ExperimentConfig, rep: int) -> dict:
    name = cfg.experiment
    if name == "table1_sines":
        return _rep_table1(cfg, rep)
    if name == "table2_shrinkage":
        return _rep_table2(cfg, rep)
    if name == "lowdim_groups":
        return _rep_lowdim(cfg, rep)
    if name == "gp_groups_20":
        return _rep_gp_groups(cfg, rep, "n20")
    if name == "gp_groups_50":
        return _rep_gp_groups(cfg, rep, "n50")
    return _rep_custom(cfg, rep)


def _median_over(rows: list, path: str) -> dict:
    """Median per key of a nested one-level dict found at ``path`` in each row."""
    keys = rows[0][path].keys()
    return {k: float(np.median([r[path][k] for r in rows])) for k in keys}


def run_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    """Run one configured experiment and write its report artifacts."""
    reps = cfg.replications or _DEFAULT_REPLICATIONS[cfg.experiment]
    if cfg.jobs > 1 and reps > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(_rep_dispatch, [cfg] * reps, range(reps)))
    else:
        results = [_rep_dispatch(cfg, rep) for rep in range(reps)]

    rows = [r["row"] for r in results]
    payload: dict = {
        "schema": REPORT_SCHEMA,
        "experiment": cfg.experiment,
        "seed": cfg.seed,
        "replications": reps,
        "config": asdict(cfg),
        "rows": rows,
    }
    if cfg.experiment == "table1_sines":
        payload["mse_median"] = _median_over(rows, "mse")
        payload["it_y1_positive_fraction"] = float(
            np.mean([r["it_y1_q1_vs_gp"] > 0.0 for r in rows])
        )
    elif cfg.experiment in ("lowdim_groups", "gp_groups_20", "gp_groups_50"):
        payload["mse_y1_median"] = _median_over(rows, "mse_y1")
    params: dict = {}
    predictions: dict = {}
    timings: dict = {}
    for r in results:
        params.update(r["params"])
        predictions.update(r["preds"])
        for label, seconds in r["timings"].items():
            timings[label] = timings.get(label, 0.0) + seconds
    report = ExperimentReport(
        payload=payload, params=params, predictions=predictions, timings=timings
    )
    if cfg.out_dir:
        write_report(report, cfg.out_dir)
    return report


def write_report(report: ExperimentReport, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(
        json.dumps(report.payload, indent=2, sort_keys=True) + "\n"
    )
    (out / "params.json").write_text(
        json.dumps(report.params, indent=2, sort_keys=True) + "\n"
    )
    (out / "timings.json").write_text(
        json.dumps(report.timings, indent=2, sort_keys=True) + "\n"
    )
    for label, (xs, means, variances) in report.predictions.items():
        path = out / f"predictions_{label}.csv"
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["x", "mean", "variance"])
            for x, m, v in zip(xs, means, variances):
                writer.writerow([f"{x:.17g}", f"{m:.17g}", f"{v:.17g}"])
