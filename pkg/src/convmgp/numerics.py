"""Dense symmetric linear algebra, quadrature oracle, and finite differences.

Everything here is pure given its inputs.  The dimension tracker is test
instrumentation only (not thread-safe): it records the size of every dense
factorization/assembly so structural contracts ("never builds the full joint
matrix") can be asserted.
"""

from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

from .exceptions import (
    DimensionMismatch,
    NonFiniteObjective,
    NonIntegrableKernel,
    NotPositiveDefinite,
)
from .kernels import KernelSpec, effective_length_scale, kernel_center, kernel_values

# Diagonal loadings tried in order until the factorization succeeds.
JITTER_LADDER = (0.0, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2)

_active_dim_logs: list[list[int]] = []


@contextmanager
def track_dense_dims():
    """Collect the dimensions of dense matrices factorized/assembled inside."""
    log: list[int] = []
    _active_dim_logs.append(log)
    try:
        yield log
    finally:
        _active_dim_logs.remove(log)


def record_dense_dim(n: int):
    for log in _active_dim_logs:
        log.append(int(n))


@dataclass(frozen=True)
class CholFactor:
    """Lower Cholesky factor of a (possibly jittered) symmetric matrix."""

    lower: np.ndarray
    jitter_used: float

    @property
    def n(self) -> int:
        return self.lower.shape[0]


def cholesky_with_jitter(m: np.ndarray) -> CholFactor:
    """Factor ``m + jitter*I``, escalating jitter through ``JITTER_LADDER``.

    Raises NotPositiveDefinite if the factorization still fails at the
    largest jitter.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
        raise DimensionMismatch(f"expected a square matrix, got shape {m.shape}")
    if not np.array_equal(m, m.T):
        scale = max(1.0, float(np.abs(m).max()))
        if np.abs(m - m.T).max() > 1e-10 * scale:
            raise ValueError("matrix is not symmetric")
        m = 0.5 * (m + m.T)
    record_dense_dim(m.shape[0])
    eye = np.eye(m.shape[0])
    for jitter in JITTER_LADDER:
        try:
            lower = np.linalg.cholesky(m + jitter * eye)
        except np.linalg.LinAlgError:
            continue
        return CholFactor(lower=lower, jitter_used=jitter)
    raise NotPositiveDefinite(
        f"Cholesky failed for {m.shape[0]}x{m.shape[0]} matrix even with "
        f"jitter {JITTER_LADDER[-1]:g}"
    )


def chol_solve(f: CholFactor, b: np.ndarray) -> np.ndarray:
    """Solve (L L^T) x = b."""
    b = np.asarray(b, dtype=float)
    if b.shape[0] != f.n:
        raise DimensionMismatch(f"factor is {f.n}x{f.n} but rhs has leading dim {b.shape[0]}")
    from scipy.linalg import cho_solve as _cho_solve

    return _cho_solve((f.lower, True), b, check_finite=False)


def chol_logdet(f: CholFactor) -> float:
    """log det of the factored matrix: 2 * sum(log diag(L))."""
    return 2.0 * float(np.sum(np.log(np.diag(f.lower))))


def quadrature_cross_cov(ki: KernelSpec, kj: KernelSpec, d: float) -> float:
    """Brute-force evaluation of ``int K_i(u) K_j(u - d) du`` by trapezoid rule.

    The grid spans 10 effective length-scales beyond both kernel centers and
    is refined by doubling until the result moves by less than 1e-9.  This is
    the independent oracle the closed forms are tested against; it must stay
    quadrature-based.
    """
    ls_i = effective_length_scale(ki)
    ls_j = effective_length_scale(kj)
    half_width = 10.0 * max(ls_i, ls_j)
    if not np.isfinite(half_width) or half_width <= 0.0:
        raise NonIntegrableKernel("cannot truncate integral: no finite scale")
    ci = kernel_center(ki)
    cj = float(d) + kernel_center(kj)
    lo = min(ci, cj) - half_width
    hi = max(ci, cj) + half_width

    def integral(n_points: int) -> float:
        u = np.linspace(lo, hi, n_points)
        vals = kernel_values(ki, u) * kernel_values(kj, u - d)
        return float(np.trapezoid(vals, u))

    n = 4097
    prev = integral(n)
    while n < 2_097_153:
        n = 2 * n - 1
        cur = integral(n)
        if abs(cur - prev) < 1e-9:
            return cur
        prev = cur
    raise RuntimeError("quadrature did not stabilize below 1e-9")


def finite_diff_grad(f, theta: np.ndarray) -> np.ndarray:
    """Central finite differences with per-coordinate step 1e-5*max(1, |t_i|)."""
    theta = np.asarray(theta, dtype=float)
    grad = np.empty_like(theta)
    for i in range(theta.size):
        h = 1e-5 * max(1.0, abs(theta[i]))
        up = theta.copy()
        dn = theta.copy()
        up[i] += h
        dn[i] -= h
        fu = float(f(up))
        fd = float(f(dn))
        if not (np.isfinite(fu) and np.isfinite(fd)):
            raise NonFiniteObjective(
                f"objective not finite when perturbing coordinate {i}"
            )
        grad[i] = (fu - fd) / (2.0 * h)
    return grad
