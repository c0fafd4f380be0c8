"""Latent topologies, model specs, datasets, and Gram-matrix assembly.

A model is a set of latent white-noise processes, a boolean assignment of
latents to outputs, one smoothing kernel per active (latent, output) pair,
and a noise variance per output.  The cross-covariance between outputs i and
j sums the closed-form kernel convolutions over latents feeding both.

Supported topologies:

* full_q      -- Q latents, by default all connected to every output.
* arrowhead   -- N latents for N outputs; latent 0 is private to the target,
                 every other latent feeds exactly one non-target output plus
                 the target.  All non-target pairs have identically zero
                 cross-covariance, giving the arrowhead sparsity pattern.
* pairwise_shared_private -- 2 outputs, one shared latent plus one private
                 latent each (the regularization-friendly bivariate layout).
* pairwise_two_latent     -- 2 outputs, two latents each feeding both.

Specs and datasets are immutable after construction and safe to share across
concurrent fitters.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import kernels as _k
from .exceptions import InvalidTarget, UnsupportedPair
from .kernels import KernelSpec, SEKernel, SpectralComponent, SpectralKernel
from .numerics import record_dense_dim


class TopologyKind(enum.Enum):
    FULL_Q = "full_q"
    ARROWHEAD = "arrowhead"
    PAIRWISE_SHARED_PRIVATE = "pairwise_shared_private"
    PAIRWISE_TWO_LATENT = "pairwise_two_latent"


@dataclass(frozen=True)
class LatentTopology:
    kind: TopologyKind
    n_outputs: int
    n_latents: int
    active: frozenset  # of (latent q, output i) pairs
    target: int | None = None

    def __post_init__(self):
        if self.n_outputs < 1 or self.n_latents < 1:
            raise ValueError("need at least one output and one latent")
        for q, i in self.active:
            if not (0 <= q < self.n_latents and 0 <= i < self.n_outputs):
                raise ValueError(f"active pair {(q, i)} out of range")
        for i in range(self.n_outputs):
            if not any((q, i) in self.active for q in range(self.n_latents)):
                raise ValueError(f"output {i} has no active latent connection")

    def latents_for(self, i: int) -> tuple[int, ...]:
        return tuple(q for q in range(self.n_latents) if (q, i) in self.active)

    def shared_latents(self, i: int, j: int) -> tuple[int, ...]:
        return tuple(
            q
            for q in range(self.n_latents)
            if (q, i) in self.active and (q, j) in self.active
        )


def full_q(n_outputs: int, q_count: int, active=None) -> LatentTopology:
    """Fully shared topology; pass ``active`` to prune latent connections."""
    if active is None:
        active = {(q, i) for q in range(q_count) for i in range(n_outputs)}
    return LatentTopology(
        kind=TopologyKind.FULL_Q,
        n_outputs=n_outputs,
        n_latents=q_count,
        active=frozenset(active),
    )


def arrowhead(n_outputs: int, target: int = 0) -> LatentTopology:
    if n_outputs < 2:
        raise InvalidTarget("arrowhead needs at least two outputs")
    if not 0 <= target < n_outputs:
        raise InvalidTarget(f"target {target} out of range for {n_outputs} outputs")
    others = [i for i in range(n_outputs) if i != target]
    active = {(0, target)}
    for q, i in enumerate(others, start=1):
        active.add((q, i))
        active.add((q, target))
    return LatentTopology(
        kind=TopologyKind.ARROWHEAD,
        n_outputs=n_outputs,
        n_latents=n_outputs,
        active=frozenset(active),
        target=target,
    )


def pairwise_shared_private() -> LatentTopology:
    # latent 0 shared, latent 1 private to output 0, latent 2 private to output 1
    active = {(0, 0), (0, 1), (1, 0), (2, 1)}
    return LatentTopology(
        kind=TopologyKind.PAIRWISE_SHARED_PRIVATE,
        n_outputs=2,
        n_latents=3,
        active=frozenset(active),
        target=0,
    )


def pairwise_two_latent() -> LatentTopology:
    active = {(0, 0), (0, 1), (1, 0), (1, 1)}
    return LatentTopology(
        kind=TopologyKind.PAIRWISE_TWO_LATENT,
        n_outputs=2,
        n_latents=2,
        active=frozenset(active),
        target=0,
    )


@dataclass(frozen=True)
class MgpSpec:
    """Topology plus kernel parameters and per-output noise variances."""

    topology: LatentTopology
    kernels: dict  # (q, i) -> KernelSpec for every active pair
    noise: tuple  # per-output variance, strictly positive

    def __post_init__(self):
        object.__setattr__(self, "kernels", dict(self.kernels))
        object.__setattr__(self, "noise", tuple(float(v) for v in self.noise))
        if set(self.kernels) != set(self.topology.active):
            missing = set(self.topology.active) - set(self.kernels)
            extra = set(self.kernels) - set(self.topology.active)
            raise ValueError(
                f"kernel map does not match active pairs "
                f"(missing {sorted(missing)}, extra {sorted(extra)})"
            )
        if len(self.noise) != self.topology.n_outputs:
            raise ValueError("need one noise variance per output")
        if any(not np.isfinite(v) or v <= 0.0 for v in self.noise):
            raise ValueError("noise variances must be strictly positive and finite")

    @property
    def n_outputs(self) -> int:
        return self.topology.n_outputs


@dataclass(frozen=True)
class Dataset:
    """Per-output input/observation sequences (sizes may differ)."""

    inputs: tuple
    values: tuple
    labels: tuple = ()

    def __post_init__(self):
        xs = tuple(np.ascontiguousarray(x, dtype=float) for x in self.inputs)
        ys = tuple(np.ascontiguousarray(y, dtype=float) for y in self.values)
        if len(xs) != len(ys) or not xs:
            raise ValueError("need matching, nonempty input/value sequences")
        for i, (x, y) in enumerate(zip(xs, ys)):
            if x.ndim != 1 or y.ndim != 1 or x.size != y.size or x.size < 1:
                raise ValueError(f"output {i}: inputs/values must be equal-length 1-D")
            if not (np.isfinite(x).all() and np.isfinite(y).all()):
                raise ValueError(f"output {i}: non-finite data")
        for a in xs + ys:
            a.flags.writeable = False
        labels = self.labels or tuple(f"y{i + 1}" for i in range(len(xs)))
        if len(labels) != len(xs):
            raise ValueError("one label per output required")
        object.__setattr__(self, "inputs", xs)
        object.__setattr__(self, "values", ys)
        object.__setattr__(self, "labels", tuple(str(s) for s in labels))

    @property
    def n_outputs(self) -> int:
        return len(self.inputs)

    @property
    def sizes(self) -> tuple:
        return tuple(x.size for x in self.inputs)

    @property
    def total_points(self) -> int:
        return int(sum(self.sizes))

    def stacked_values(self) -> np.ndarray:
        return np.concatenate(self.values)

    def select_outputs(self, indices) -> "Dataset":
        idx = tuple(indices)
        return Dataset(
            inputs=tuple(self.inputs[i] for i in idx),
            values=tuple(self.values[i] for i in idx),
            labels=tuple(self.labels[i] for i in idx),
        )

    def take(self, keep_per_output) -> "Dataset":
        """Restrict each output to the given point indices (used by CV folds)."""
        return Dataset(
            inputs=tuple(x[np.asarray(k)] for x, k in zip(self.inputs, keep_per_output)),
            values=tuple(y[np.asarray(k)] for y, k in zip(self.values, keep_per_output)),
            labels=self.labels,
        )


def cross_cov_block(spec: MgpSpec, i: int, j: int, xi, xj) -> np.ndarray:
    """Cross-covariance block between outputs i and j over input grids."""
    xi = np.asarray(xi, dtype=float)
    xj = np.asarray(xj, dtype=float)
    lags = xi[:, None] - xj[None, :]
    out = np.zeros_like(lags)
    for q in spec.topology.shared_latents(i, j):
        out += _k.cross_cov(spec.kernels[(q, i)], spec.kernels[(q, j)], lags)
    return out


def cross_cov_fn(spec: MgpSpec, i: int, j: int, x: float, x_prime: float) -> float:
    """Scalar covariance between f_i(x) and f_j(x'); zero if no shared latent."""
    n = spec.topology.n_outputs
    if not (0 <= i < n and 0 <= j < n):
        raise InvalidTarget(f"output index out of range: {(i, j)}")
    return float(cross_cov_block(spec, i, j, [x], [x_prime])[0, 0])


@dataclass(frozen=True)
class Gram:
    """Joint covariance of the observations (noise included) with block index."""

    values: np.ndarray
    slices: tuple

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def block(self, i: int, j: int) -> np.ndarray:
        return self.values[self.slices[i], self.slices[j]]


def build_gram(spec: MgpSpec, data: Dataset) -> Gram:
    """Assemble C + Sigma over all outputs' training inputs."""
    if data.n_outputs != spec.topology.n_outputs:
        raise ValueError(
            f"spec has {spec.topology.n_outputs} outputs, data has {data.n_outputs}"
        )
    sizes = data.sizes
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    total = int(offsets[-1])
    slices = tuple(slice(int(offsets[i]), int(offsets[i + 1])) for i in range(len(sizes)))
    record_dense_dim(total)
    out = np.zeros((total, total))
    for i in range(data.n_outputs):
        for j in range(i, data.n_outputs):
            block = cross_cov_block(spec, i, j, data.inputs[i], data.inputs[j])
            out[slices[i], slices[j]] = block
            if i != j:
                out[slices[j], slices[i]] = block.T
            else:
                out[slices[i], slices[i]] += spec.noise[i] * np.eye(sizes[i])
    # exact symmetry: diagonal blocks are even in the lag, off-diagonals mirrored
    out[np.tril_indices(total, -1)] = out.T[np.tril_indices(total, -1)]
    return Gram(values=out, slices=slices)


def _default_kernel(family: str, alpha: float, ell: float) -> KernelSpec:
    if family == "se":
        return SEKernel(alpha=alpha, ell=ell)
    if family == "spectral":
        return SpectralKernel(
            components=(SpectralComponent(a=alpha, sigma=1.0 / (2.0 * ell), mu=0.0),)
        )
    raise UnsupportedPair(f"unknown kernel family {family!r}")


def make_full_spec(
    n_outputs: int,
    q_count: int,
    family: str = "se",
    alpha: float = 1.0,
    ell: float = 1.0,
    noise: float = 0.1,
    active=None,
) -> MgpSpec:
    topo = full_q(n_outputs, q_count, active=active)
    kernel_map = {pair: _default_kernel(family, alpha, ell) for pair in topo.active}
    return MgpSpec(topology=topo, kernels=kernel_map, noise=(noise,) * n_outputs)


def make_arrowhead_spec(
    n_outputs: int,
    target: int = 0,
    family: str = "se",
    alpha: float = 1.0,
    ell: float = 1.0,
    noise: float = 0.1,
) -> MgpSpec:
    """Arrowhead spec: (2N - 1) kernels plus N noise variances."""
    topo = arrowhead(n_outputs, target)
    kernel_map = {pair: _default_kernel(family, alpha, ell) for pair in sorted(topo.active)}
    return MgpSpec(topology=topo, kernels=kernel_map, noise=(noise,) * n_outputs)


def make_pairwise_spec(
    variant: str = "b",
    family: str = "se",
    alpha: float = 1.0,
    ell: float = 1.0,
    noise: float = 0.1,
) -> MgpSpec:
    """Bivariate spec: variant "a" = two fully shared latents, "b" = shared + private.

    Both variants carry 4 kernels and 2 noise variances.  SE kernels keep a
    shift slot (input offset on a channel); whether shifts are optimized is
    decided by the fit options, not here.
    """
    if variant == "a":
        topo = pairwise_two_latent()
    elif variant == "b":
        topo = pairwise_shared_private()
    else:
        raise ValueError(f"unknown pairwise variant {variant!r}")
    kernel_map = {pair: _default_kernel(family, alpha, ell) for pair in sorted(topo.active)}
    return MgpSpec(topology=topo, kernels=kernel_map, noise=(noise, noise))
