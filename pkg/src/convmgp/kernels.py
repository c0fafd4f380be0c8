"""Smoothing-kernel parameterizations and closed-form convolved covariances.

Outputs are built by convolving white-noise latent processes with smoothing
kernels, so the covariance between two outputs at lag ``d`` is the integral
``int K_i(u) K_j(u - d) du``.  This module stores the kernel parameters and
evaluates that integral in closed form for the squared-exponential and
spectral (Gaussian-windowed cosine) families.

Squared-exponential kernels are normalized as

    K(u) = alpha * (pi * ell^2)^(-1/4) * exp(-(u - shift)^2 / (2 ell^2))

which is the unique scaling under which the self-convolution is exactly
``alpha^2 * exp(-d^2 / (4 ell^2))``.  Amplitudes are signed and length-scales
enter only squared, so both are stored unconstrained (``ell != 0``).

Spectral kernels are sums of components ``a * exp(-sigma^2 u^2) * cos(mu u)``
with no extra normalization; the closed form below is the exact convolution
of that parameterization (pinned against the quadrature oracle in the tests).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import NonIntegrableKernel, UnsupportedPair


@dataclass(frozen=True)
class SEKernel:
    """Squared-exponential smoothing kernel (signed amplitude, free shift)."""

    alpha: float
    ell: float
    shift: float = 0.0

    def __post_init__(self):
        for name in ("alpha", "ell", "shift"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise NonIntegrableKernel(f"SE kernel {name} must be finite, got {v!r}")
        if self.ell == 0.0:
            raise NonIntegrableKernel("SE kernel length-scale must be nonzero")


@dataclass(frozen=True)
class SpectralComponent:
    """One Gaussian-windowed cosine term: a * exp(-sigma^2 u^2) * cos(mu u)."""

    a: float
    sigma: float
    mu: float

    def __post_init__(self):
        for name in ("a", "sigma", "mu"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise NonIntegrableKernel(
                    f"spectral component {name} must be finite, got {v!r}"
                )
        if self.sigma == 0.0:
            raise NonIntegrableKernel("spectral component bandwidth must be nonzero")


@dataclass(frozen=True)
class SpectralKernel:
    components: tuple[SpectralComponent, ...]

    def __post_init__(self):
        if not self.components:
            raise NonIntegrableKernel("spectral kernel needs at least one component")
        object.__setattr__(self, "components", tuple(self.components))


KernelSpec = SEKernel | SpectralKernel


def kernel_values(k: KernelSpec, u):
    """Evaluate the smoothing kernel pointwise (used by the quadrature oracle)."""
    u = np.asarray(u, dtype=float)
    if isinstance(k, SEKernel):
        norm = (math.pi * k.ell**2) ** (-0.25)
        return k.alpha * norm * np.exp(-((u - k.shift) ** 2) / (2.0 * k.ell**2))
    if isinstance(k, SpectralKernel):
        out = np.zeros_like(u)
        for c in k.components:
            out += c.a * np.exp(-(c.sigma**2) * u**2) * np.cos(c.mu * u)
        return out
    raise UnsupportedPair(f"unknown kernel type {type(k).__name__}")


def kernel_center(k: KernelSpec) -> float:
    return k.shift if isinstance(k, SEKernel) else 0.0


def effective_length_scale(k: KernelSpec) -> float:
    """Scale beyond which the kernel is negligible; drives quadrature truncation."""
    if isinstance(k, SEKernel):
        ls = abs(k.ell)
    elif isinstance(k, SpectralKernel):
        ls = max(1.0 / (math.sqrt(2.0) * abs(c.sigma)) for c in k.components)
    else:
        raise UnsupportedPair(f"unknown kernel type {type(k).__name__}")
    if not math.isfinite(ls) or ls <= 0.0:
        raise NonIntegrableKernel(f"kernel has no finite positive scale ({ls!r})")
    return ls


def se_auto_cov(k: SEKernel, d):
    """Self-convolution of an SE kernel: alpha^2 * exp(-d^2 / (4 ell^2))."""
    d = np.asarray(d, dtype=float)
    return k.alpha**2 * np.exp(-(d**2) / (4.0 * k.ell**2))


def se_cross_cov(ki: SEKernel, kj: SEKernel, d):
    """Convolution of two SE kernels at lag d.

    Returns
        alpha_i alpha_j sqrt(2|ell_i ell_j| / (ell_i^2 + ell_j^2))
            * exp(-(d - mu_ij)^2 / (2 (ell_i^2 + ell_j^2)))

    with mu_ij = shift_i - shift_j.  Reduces to ``se_auto_cov`` when both
    arguments are the same kernel.
    """
    d = np.asarray(d, dtype=float)
    t = ki.ell**2 + kj.ell**2
    scale = math.sqrt(2.0 * abs(ki.ell * kj.ell) / t)
    mu = ki.shift - kj.shift
    return ki.alpha * kj.alpha * scale * np.exp(-((d - mu) ** 2) / (2.0 * t))


def spectral_cross_cov(ki: SpectralKernel, kj: SpectralKernel, d):
    """Convolution of two spectral kernels at lag d.

    Summed over component pairs (s, t):

        (a_s a_t / 2) sqrt(pi / S) [exp(A1) cos(th1 d) + exp(A2) cos(th2 d)]

    with S = sigma_s^2 + sigma_t^2,
         A1 = (-(mu_s - mu_t)^2 - 4 sigma_s^2 sigma_t^2 d^2) / (4 S),
         A2 = the same with (mu_s + mu_t)^2,
         th1 = (mu_s sigma_t^2 + mu_t sigma_s^2) / S,
         th2 = (mu_s sigma_t^2 - mu_t sigma_s^2) / S.

    The d^2 coefficient comes from completing the square in the Gaussian
    product; the quadrature-equivalence tests pin it.
    """
    d = np.asarray(d, dtype=float)
    d2 = d**2
    out = np.zeros_like(d2)
    for s in ki.components:
        ss = s.sigma**2
        for t in kj.components:
            st = t.sigma**2
            big_s = ss + st
            pref = 0.5 * s.a * t.a * math.sqrt(math.pi / big_s)
            a1 = (-((s.mu - t.mu) ** 2) - 4.0 * ss * st * d2) / (4.0 * big_s)
            a2 = (-((s.mu + t.mu) ** 2) - 4.0 * ss * st * d2) / (4.0 * big_s)
            th1 = (s.mu * st + t.mu * ss) / big_s
            th2 = (s.mu * st - t.mu * ss) / big_s
            out += pref * (np.exp(a1) * np.cos(th1 * d) + np.exp(a2) * np.cos(th2 * d))
    return out


def cross_cov(ki: KernelSpec, kj: KernelSpec, d):
    """Family dispatch for the convolved cross-covariance at lag d."""
    if isinstance(ki, SEKernel) and isinstance(kj, SEKernel):
        return se_cross_cov(ki, kj, d)
    if isinstance(ki, SpectralKernel) and isinstance(kj, SpectralKernel):
        return spectral_cross_cov(ki, kj, d)
    raise UnsupportedPair(
        f"cannot convolve {type(ki).__name__} with {type(kj).__name__}"
    )


def auto_cov(k: KernelSpec, d):
    if isinstance(k, SEKernel):
        return se_auto_cov(k, d)
    return cross_cov(k, k, d)


def se_cross_cov_grads(ki: SEKernel, kj: SEKernel, d):
    """Value and parameter gradients of ``se_cross_cov``.

    Returns ``(value, gi, gj)`` where ``gi``/``gj`` are dicts with entries
    for ``alpha``, ``ell`` and ``shift`` of the left/right kernel, each an
    array shaped like ``d``.  When the same kernel object occupies both
    slots the caller must add the two partials.
    """
    d = np.asarray(d, dtype=float)
    t = ki.ell**2 + kj.ell**2
    scale = math.sqrt(2.0 * abs(ki.ell * kj.ell) / t)
    mu = ki.shift - kj.shift
    e = np.exp(-((d - mu) ** 2) / (2.0 * t))
    v = ki.alpha * kj.alpha * scale * e

    # d/d ell of log scale is 1/(2 ell) - ell / t; exponent adds (d-mu)^2 ell / t^2
    dsq = (d - mu) ** 2
    dell_i = v * (0.5 / ki.ell - ki.ell / t + dsq * ki.ell / t**2)
    dell_j = v * (0.5 / kj.ell - kj.ell / t + dsq * kj.ell / t**2)
    dshift_i = v * (d - mu) / t
    gi = {
        "alpha": kj.alpha * scale * e,
        "ell": dell_i,
        "shift": dshift_i,
    }
    gj = {
        "alpha": ki.alpha * scale * e,
        "ell": dell_j,
        "shift": -dshift_i,
    }
    return v, gi, gj
