"""Predictive distributions, product-of-experts fusion, and output selection.

``predict`` evaluates the joint-model posterior for one output at new
inputs: mean c' (C + Sigma)^-1 y and variance c_00 + sigma_i^2 - c' (C +
Sigma)^-1 c.  Pairwise submodels each produce such a posterior for the
target; ``poe_combine`` fuses them by precision-weighted averaging, with
either uniform weights (1/K) or differential-entropy weights
0.5 (log prior variance - log posterior variance).

The information-transfer number for a target output is the held-out risk of
the full joint model minus the risk of a subset model; a positive value
means the extra outputs hurt (negative transfer).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import (
    DegenerateWeights,
    EmptyExpertSet,
    EmptyTestSet,
    WrongTopology,
)
from .infer import FittedModel, PairwiseFitSet
from .kernels import SEKernel
from .numerics import chol_solve, cholesky_with_jitter
from .structures import (
    Dataset,
    TopologyKind,
    build_gram,
    cross_cov_block,
    cross_cov_fn,
)


@dataclass(frozen=True)
class PredictiveGaussian:
    mean: float
    variance: float

    def __post_init__(self):
        if not (np.isfinite(self.mean) and np.isfinite(self.variance)):
            raise ValueError("predictive moments must be finite")
        if self.variance <= 0.0:
            raise ValueError("predictive variance must be positive")


def predict_grid(model: FittedModel, xs, output: int):
    """Posterior mean and variance of one output at many query inputs."""
    spec, data = model.spec, model.data
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    gram = build_gram(spec, data)
    f = cholesky_with_jitter(gram.values)
    avec = chol_solve(f, data.stacked_values())
    cross = np.vstack(
        [
            cross_cov_block(spec, output, j, xs, data.inputs[j]).T
            for j in range(data.n_outputs)
        ]
    )
    means = cross.T @ avec
    solved = chol_solve(f, cross)
    quad = np.sum(cross * solved, axis=0)
    prior = np.array([cross_cov_fn(spec, output, output, x, x) for x in xs])
    variances = prior + spec.noise[output] - quad
    # quad is a nonnegative quadratic form; tiny negative variances are float
    # cancellation near interpolation and are clipped to stay positive
    np.clip(variances, 1e-300, None, out=variances)
    return means, variances


def predict(model: FittedModel, x0: float, output: int) -> PredictiveGaussian:
    means, variances = predict_grid(model, [x0], output)
    return PredictiveGaussian(mean=float(means[0]), variance=float(variances[0]))


def poe_combine(preds, weights=None) -> PredictiveGaussian:
    """Precision-weighted fusion of expert Gaussians (default: uniform 1/K)."""
    preds = list(preds)
    if not preds:
        raise EmptyExpertSet("no experts to combine")
    if weights is None:
        weights = np.full(len(preds), 1.0 / len(preds))
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (len(preds),):
        raise DegenerateWeights("need one weight per expert")
    if np.any(weights < 0.0) or not np.any(weights > 0.0):
        raise DegenerateWeights("weights must be nonnegative and not all zero")
    variances = np.array([p.variance for p in preds])
    means = np.array([p.mean for p in preds])
    precision = float(np.sum(weights / variances))
    mean = float(np.sum(weights * means / variances)) / precision
    return PredictiveGaussian(mean=mean, variance=1.0 / precision)


def differential_entropy_weights(prior_variances, posterior_variances) -> np.ndarray:
    """Expert weights 0.5 (log prior var - log posterior var), elementwise."""
    prior = np.asarray(prior_variances, dtype=float)
    post = np.asarray(posterior_variances, dtype=float)
    return 0.5 * (np.log(prior) - np.log(post))


def predict_pairwise(fit_set: PairwiseFitSet, xs, weighting: str = "uniform"):
    """Fuse the target predictions of all fitted pairwise submodels.

    Returns (means, variances) over the query grid.  With ``entropy``
    weighting an expert's weight at a point grows with how much its
    posterior tightened relative to its prior; if no expert learned
    anything at a point the fusion falls back to uniform there.
    """
    if weighting not in ("uniform", "entropy"):
        raise ValueError(f"unknown weighting {weighting!r}")
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    experts = fit_set.fitted()
    if not experts:
        raise EmptyExpertSet("no fitted pairwise submodels")
    mean_rows, var_rows, beta_rows = [], [], []
    for _, model in experts:
        means, variances = predict_grid(model, xs, 0)
        mean_rows.append(means)
        var_rows.append(variances)
        if weighting == "entropy":
            prior = np.array(
                [
                    cross_cov_fn(model.spec, 0, 0, x, x) + model.spec.noise[0]
                    for x in xs
                ]
            )
            beta_rows.append(np.maximum(differential_entropy_weights(prior, variances), 0.0))
        else:
            beta_rows.append(np.full(xs.size, 1.0 / len(experts)))
    mus = np.vstack(mean_rows)
    sig2 = np.vstack(var_rows)
    betas = np.vstack(beta_rows)
    if weighting == "entropy":
        # normalize per point so fusing identical experts stays calibrated;
        # points where no expert tightened its prior fall back to uniform
        dead = betas.sum(axis=0) <= 0.0
        if np.any(dead):
            betas[:, dead] = 1.0
        betas = betas / betas.sum(axis=0)
    precision = np.sum(betas / sig2, axis=0)
    means = np.sum(betas * mus / sig2, axis=0) / precision
    return means, 1.0 / precision


@dataclass(frozen=True)
class ITReport:
    """Held-out risk gap between the full model and a subset model."""

    target: int
    partition: tuple | None
    risk_full: float
    risk_subset: float

    @property
    def it_value(self) -> float:
        return self.risk_full - self.risk_subset

    @property
    def negative_transfer(self) -> bool:
        return self.it_value > 0.0


def _test_points(test, target: int, n_outputs: int):
    if isinstance(test, Dataset):
        idx = target if test.n_outputs == n_outputs else 0
        return test.inputs[idx], test.values[idx]
    xs, ys = test
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    ys = np.atleast_1d(np.asarray(ys, dtype=float))
    return xs, ys


def information_transfer(
    full_model: FittedModel,
    subset_model: FittedModel,
    test,
    target: int,
    subset_target: int | None = None,
    partition=None,
) -> ITReport:
    """Squared-error risk of the full model minus the subset model on held-out data.

    ``test`` is a single-output Dataset (or an ``(xs, ys)`` pair) holding the
    target's true values at held-out inputs.
    """
    xs, ys = _test_points(test, target, full_model.data.n_outputs)
    if xs.size == 0:
        raise EmptyTestSet("no held-out points")
    if xs.size != ys.size:
        raise EmptyTestSet("held-out inputs and values differ in length")
    if subset_target is None:
        n_sub = subset_model.data.n_outputs
        if n_sub == full_model.data.n_outputs:
            subset_target = target
        elif n_sub == 1:
            subset_target = 0
        else:
            raise ValueError("subset_target is ambiguous; pass it explicitly")
    mean_full, _ = predict_grid(full_model, xs, target)
    mean_sub, _ = predict_grid(subset_model, xs, subset_target)
    risk_full = float(np.mean((mean_full - ys) ** 2))
    risk_subset = float(np.mean((mean_sub - ys) ** 2))
    return ITReport(
        target=target,
        partition=tuple(partition) if partition is not None else None,
        risk_full=risk_full,
        risk_subset=risk_subset,
    )


def _amplitude_norm(kernel) -> float:
    if isinstance(kernel, SEKernel):
        return abs(kernel.alpha)
    return float(np.linalg.norm([c.a for c in kernel.components]))


@dataclass(frozen=True)
class SelectionReport:
    target: int
    tau: float
    scores: dict  # other output index -> relatedness score
    related: tuple  # output indices with score > tau


def pair_score(model: FittedModel) -> float:
    """Relatedness score of one bivariate fit.

    Shared+private variant: |a_shared,1 * a_shared,i| normalized by the
    geometric mean of the two lag-zero auto-covariances.  Two-latent
    variant: the group norm of the two cross-channel amplitudes.
    """
    spec = model.spec
    kind = spec.topology.kind
    if kind == TopologyKind.PAIRWISE_SHARED_PRIVATE:
        num = _amplitude_norm(spec.kernels[(0, 0)]) * _amplitude_norm(spec.kernels[(0, 1)])
        denom = math.sqrt(
            cross_cov_fn(spec, 0, 0, 0.0, 0.0) * cross_cov_fn(spec, 1, 1, 0.0, 0.0)
        )
        return num / denom if denom > 0.0 else 0.0
    if kind == TopologyKind.PAIRWISE_TWO_LATENT:
        return math.hypot(
            _amplitude_norm(spec.kernels[(0, 1)]), _amplitude_norm(spec.kernels[(1, 0)])
        )
    raise WrongTopology(f"pair scores need a pairwise topology, got {kind.value}")


def select_related(fit_set: PairwiseFitSet, tau: float = 1e-3) -> SelectionReport:
    """Outputs whose pairwise relatedness score exceeds ``tau``."""
    scores = {}
    for other, model in fit_set.fitted():
        scores[other] = pair_score(model)
    related = tuple(i for i in sorted(scores) if scores[i] > tau)
    return SelectionReport(target=fit_set.target, tau=tau, scores=scores, related=related)
