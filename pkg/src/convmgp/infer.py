"""Multi-restart fitting, pairwise batch fitting, and cross-validated lambda.

Fitting minimizes the (optionally penalized) negative log marginal
likelihood with L-BFGS-B from several perturbed initializations and keeps
the best restart.  Everything is deterministic given the seed: restart
perturbations come from a seeded generator and pairwise submodels derive
their seeds from (seed, pair index) so results do not depend on evaluation
order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize

from .exceptions import (
    AllRestartsFailed,
    GradientCheckFailed,
    InsufficientData,
    NonFiniteObjective,
    NotPositiveDefinite,
)
from .kernels import SEKernel
from .numerics import finite_diff_grad
from .objective import (
    ObjectiveValue,
    Parameterization,
    PenaltySpec,
    build_objective,
    parameterize,
    penalized_nll,
)
from .structures import Dataset, MgpSpec, make_pairwise_spec

_FAILED_VALUE = 1e15


@dataclass(frozen=True)
class FitOptions:
    restarts: int = 5
    max_iters: int = 500
    rel_tol: float = 1e-8
    seed: int = 0
    init_scale: float = 0.5
    gradient_mode: str = "analytic"  # analytic | fd | check
    init_from_data: bool = True
    free_shifts: bool = False
    trace: bool = False

    def __post_init__(self):
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if not self.rel_tol > 0.0:
            raise ValueError("rel_tol must be positive")
        if self.gradient_mode not in ("analytic", "fd", "check"):
            raise ValueError(f"unknown gradient_mode {self.gradient_mode!r}")


@dataclass(frozen=True)
class FittedModel:
    spec: MgpSpec
    data: Dataset
    final_objective: ObjectiveValue
    restart_objectives: tuple
    converged: bool
    iterations: int
    traces: tuple = ()

    def __post_init__(self):
        finite = [v for v in self.restart_objectives if math.isfinite(v)]
        if finite and self.final_objective.total > min(finite) + 1e-9:
            raise ValueError("final objective must be the best restart")


def _median_spacing(x: np.ndarray) -> float:
    xs = np.unique(x)
    if xs.size < 2:
        return 1.0
    return float(np.median(np.diff(xs)))


def _data_init(param: Parameterization, data: Dataset) -> np.ndarray:
    """Amplitudes from per-output spread, length-scales from input spacing.

    Length-scales alternate between 1x and 4x the median spacing across
    latents so restarts start from both rough and smooth hypotheses; noise
    starts at 5% of each output's variance.
    """
    spec = param.template
    sd = [max(float(np.std(y)), 1e-3) for y in data.values]
    var = [max(float(np.var(y)), 1e-6) for y in data.values]
    spacing = [_median_spacing(x) for x in data.inputs]
    n_latents_for = [len(spec.topology.latents_for(i)) for i in range(data.n_outputs)]
    theta = np.empty(param.n_params)
    for idx, e in enumerate(param.entries):
        if e.kind == "log_noise":
            theta[idx] = math.log(0.05 * var[e.key])
            continue
        q, i = e.key
        if e.kind in ("alpha", "a"):
            theta[idx] = sd[i] / math.sqrt(n_latents_for[i])
        elif e.kind == "ell":
            theta[idx] = spacing[i] * (1.0 if q % 2 == 0 else 4.0)
        elif e.kind == "sigma":
            ell = spacing[i] * (1.0 if q % 2 == 0 else 4.0)
            theta[idx] = 1.0 / (math.sqrt(2.0) * ell)
        elif e.kind in ("shift", "mu"):
            theta[idx] = 0.0
        else:  # pragma: no cover
            raise AssertionError(e.kind)
    return theta


def _perturb(
    param: Parameterization, base: np.ndarray, rng: np.random.Generator, scale: float
) -> np.ndarray:
    factors = np.exp(scale * rng.standard_normal(base.size))
    theta = base * factors
    # multiplicative noise cannot move exactly-zero slots (shifts, frequencies)
    for idx, e in enumerate(param.entries):
        if base[idx] == 0.0 and e.kind in ("shift", "mu"):
            theta[idx] = scale * rng.standard_normal()
    return theta


def _check_gradient(objective, theta: np.ndarray, rel_tol: float = 1e-4):
    value_only = lambda th: objective(th)[0]
    _, analytic = objective(theta)
    numeric = finite_diff_grad(value_only, theta)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-6)
    worst = float(np.max(np.abs(analytic - numeric) / denom))
    if worst > rel_tol:
        bad = int(np.argmax(np.abs(analytic - numeric) / denom))
        raise GradientCheckFailed(
            f"coordinate {bad}: analytic {analytic[bad]:.8g} vs "
            f"finite difference {numeric[bad]:.8g} (rel err {worst:.2e})"
        )


def fit(
    spec: MgpSpec,
    data: Dataset,
    pen: PenaltySpec | None = None,
    opts: FitOptions | None = None,
) -> FittedModel:
    """Minimize the penalized NLL over kernel and noise parameters."""
    opts = opts or FitOptions()
    pen = pen or PenaltySpec()
    if data.n_outputs != spec.topology.n_outputs:
        raise ValueError("dataset does not match spec outputs")
    param = parameterize(spec, free_shifts=opts.free_shifts)
    analytic = param.all_se() and opts.gradient_mode in ("analytic", "check")
    objective = build_objective(param, data, pen, analytic=analytic)

    def guarded(theta):
        # line searches probe wild parameter values; report those as a large
        # finite objective so L-BFGS backs off instead of crashing
        try:
            value, grad = objective(theta)
        except (NotPositiveDefinite, NonFiniteObjective, OverflowError, ValueError):
            return _FAILED_VALUE, np.zeros_like(theta)
        if not np.isfinite(value) or not np.all(np.isfinite(grad)):
            return _FAILED_VALUE, np.zeros_like(theta)
        return value, grad

    base = _data_init(param, data) if opts.init_from_data else param.pack(spec)
    if opts.gradient_mode == "check" and analytic:
        _check_gradient(objective, base)

    rng = np.random.default_rng(opts.seed)
    best = None
    restart_values = []
    traces = []
    for r in range(opts.restarts):
        theta0 = base if r == 0 else _perturb(param, base, rng, opts.init_scale)
        trace: list[float] = []
        callback = None
        if opts.trace:
            callback = lambda xk, _t=trace: _t.append(guarded(xk)[0])
        res = minimize(
            guarded,
            theta0,
            jac=True,
            method="L-BFGS-B",
            callback=callback,
            options={"maxiter": opts.max_iters, "ftol": opts.rel_tol, "gtol": 1e-9},
        )
        ok = np.isfinite(res.fun) and res.fun < _FAILED_VALUE / 2
        restart_values.append(float(res.fun) if ok else float("inf"))
        if opts.trace:
            traces.append(tuple([float(guarded(theta0)[0])] + trace))
        if ok and (best is None or res.fun < best.fun):
            best = res
    if best is None:
        raise AllRestartsFailed(
            f"all {opts.restarts} restarts ended non-finite or non-factorizable"
        )
    fitted = param.unpack(best.x)
    return FittedModel(
        spec=fitted,
        data=data,
        final_objective=penalized_nll(fitted, data, pen),
        restart_objectives=tuple(restart_values),
        converged=bool(best.status == 0),
        iterations=int(best.nit),
        traces=tuple(traces),
    )


@dataclass(frozen=True)
class PairwiseFitSet:
    """Bivariate fits of (target, other) for every non-target output."""

    target: int
    others: tuple
    models: tuple  # FittedModel or None per pair
    errors: tuple  # message or None per pair
    variant: str = "b"

    def fitted(self):
        return [
            (other, model)
            for other, model in zip(self.others, self.models)
            if model is not None
        ]


def fit_pairwise_set(
    data: Dataset,
    target: int = 0,
    variant: str = "b",
    family: str = "se",
    pen: PenaltySpec | None = None,
    opts: FitOptions | None = None,
) -> PairwiseFitSet:
    """Fit one bivariate model per non-target output (target is output 0 inside).

    Submodel fits are independent; each derives its seed from (seed, pair
    index), so any subset can run concurrently with identical results.
    """
    opts = opts or FitOptions()
    if data.n_outputs < 2:
        raise InsufficientData("pairwise fitting needs at least two outputs")
    others = tuple(i for i in range(data.n_outputs) if i != target)
    seeds = np.random.SeedSequence(opts.seed).spawn(len(others))
    models = []
    errors = []
    for k, other in enumerate(others):
        sub_data = data.select_outputs((target, other))
        sub_spec = make_pairwise_spec(variant=variant, family=family)
        sub_opts = replace(opts, seed=int(seeds[k].generate_state(1)[0]))
        try:
            models.append(fit(sub_spec, sub_data, pen, sub_opts))
            errors.append(None)
        except (AllRestartsFailed, NotPositiveDefinite) as exc:
            models.append(None)
            errors.append(f"{type(exc).__name__}: {exc}")
    if all(m is None for m in models):
        raise AllRestartsFailed("every pairwise submodel failed: " + "; ".join(
            e for e in errors if e
        ))
    return PairwiseFitSet(
        target=target,
        others=others,
        models=tuple(models),
        errors=tuple(errors),
        variant=variant,
    )


@dataclass(frozen=True)
class CvResult:
    chosen: float
    grid: tuple
    scores: tuple  # mean held-out squared error per grid value


def _fold_blocks(data: Dataset, folds: int):
    """Contiguous blocks of input-sorted indices per output, per fold."""
    per_output = []
    for x in data.inputs:
        order = np.argsort(x, kind="stable")
        per_output.append([np.sort(b) for b in np.array_split(order, folds)])
    return per_output


def cv_select_lambda(
    spec_template: MgpSpec,
    data: Dataset,
    pen_kind: str,
    grid,
    folds: int = 5,
    opts: FitOptions | None = None,
    gamma: float = 3.7,
    bridge_exponent: float = 0.5,
) -> CvResult:
    """Pick lambda by k-fold CV on held-out predictive MSE.

    Folds are contiguous blocks in input order (random folds leak smoothness
    information in 1-D).  Ties go to the larger lambda, i.e. more shrinkage.
    """
    from .prediction import predict_grid

    grid = tuple(float(g) for g in grid)
    if not grid:
        raise InsufficientData("empty lambda grid")
    if folds < 2:
        raise InsufficientData("need at least 2 folds")
    if min(data.sizes) < folds:
        raise InsufficientData(
            f"smallest output has {min(data.sizes)} points; cannot make {folds} folds"
        )
    opts = opts or FitOptions()
    blocks = _fold_blocks(data, folds)
    scores = []
    for lam in grid:
        pen = PenaltySpec(
            kind=pen_kind, lam=lam, gamma=gamma, bridge_exponent=bridge_exponent
        )
        sq_errors = []
        for f in range(folds):
            keep = [
                np.setdiff1d(np.arange(x.size), blocks[i][f])
                for i, x in enumerate(data.inputs)
            ]
            train = data.take(keep)
            model = fit(spec_template, train, pen, opts)
            for i in range(data.n_outputs):
                held = blocks[i][f]
                if held.size == 0:
                    continue
                means, _ = predict_grid(model, data.inputs[i][held], i)
                sq_errors.extend((means - data.values[i][held]) ** 2)
        scores.append(float(np.mean(sq_errors)))
    best_score = min(scores)
    chosen = max(lam for lam, s in zip(grid, scores) if s == best_score)
    return CvResult(chosen=chosen, grid=grid, scores=tuple(scores))
