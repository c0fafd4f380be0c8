import numpy as np
import pytest

from convmgp.infer import FittedModel
from convmgp.kernels import SEKernel, SpectralComponent, SpectralKernel
from convmgp.objective import penalized_nll
from convmgp.structures import Dataset


def rand_se_kernel(rng, with_shift=False):
    return SEKernel(
        alpha=float(rng.uniform(0.2, 2.0) * rng.choice([-1.0, 1.0])),
        ell=float(rng.uniform(0.3, 2.5) * rng.choice([-1.0, 1.0])),
        shift=float(rng.uniform(-1.0, 1.0)) if with_shift else 0.0,
    )


def rand_spectral_kernel(rng, max_components=2):
    n = int(rng.integers(1, max_components + 1))
    comps = tuple(
        SpectralComponent(
            a=float(rng.uniform(0.2, 2.0) * rng.choice([-1.0, 1.0])),
            sigma=float(rng.uniform(0.4, 2.0)),
            mu=float(rng.uniform(0.0, 3.0)),
        )
        for _ in range(n)
    )
    return SpectralKernel(components=comps)


def rand_dataset(rng, n_outputs, p_max=8, x_range=(0.0, 5.0)):
    sizes = rng.integers(3, p_max + 1, size=n_outputs)
    return Dataset(
        inputs=tuple(np.sort(rng.uniform(*x_range, size=p)) for p in sizes),
        values=tuple(rng.normal(0.0, 1.0, size=p) for p in sizes),
    )


def as_fitted(spec, data) -> FittedModel:
    """Wrap a hand-built spec as a FittedModel without running the optimizer."""
    objective = penalized_nll(spec, data)
    return FittedModel(
        spec=spec,
        data=data,
        final_objective=objective,
        restart_objectives=(objective.total,),
        converged=True,
        iterations=0,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)
