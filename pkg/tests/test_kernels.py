import math

import numpy as np
import pytest

from convmgp.exceptions import NonIntegrableKernel, UnsupportedPair
from convmgp.kernels import (
    SEKernel,
    SpectralComponent,
    SpectralKernel,
    auto_cov,
    cross_cov,
    se_auto_cov,
    se_cross_cov,
    se_cross_cov_grads,
    spectral_cross_cov,
)
from convmgp.numerics import quadrature_cross_cov

from conftest import rand_se_kernel, rand_spectral_kernel


def rand_kernel(rng):
    if rng.random() < 0.5:
        return rand_se_kernel(rng, with_shift=True)
    return rand_spectral_kernel(rng)


class TestSEClosedForms:
    def test_auto_zero_lag(self):
        assert float(se_auto_cov(SEKernel(1.0, 1.0), 0.0)) == 1.0

    def test_auto_amplitude_squared(self):
        assert float(se_auto_cov(SEKernel(2.0, 1.0), 0.0)) == 4.0

    def test_auto_unit_lag_scale(self):
        assert float(se_auto_cov(SEKernel(1.0, 1.0), 2.0)) == pytest.approx(
            math.exp(-1.0), abs=1e-12
        )

    def test_cross_zero_amplitude(self):
        ki = SEKernel(0.0, 1.0)
        kj = SEKernel(1.0, 2.0)
        for d in np.linspace(-3, 3, 7):
            assert float(se_cross_cov(ki, kj, d)) == 0.0

    def test_cross_equal_scales_zero_lag(self):
        ki = SEKernel(1.5, 0.8)
        kj = SEKernel(-2.0, 0.8)
        assert float(se_cross_cov(ki, kj, 0.0)) == pytest.approx(-3.0, abs=1e-12)

    def test_cross_mixed_scales(self):
        v = float(se_cross_cov(SEKernel(1.0, 1.0), SEKernel(1.0, 2.0), 0.0))
        assert v == pytest.approx(math.sqrt(4.0 / 5.0), abs=1e-12)

    def test_cross_reduces_to_auto(self, rng):
        for _ in range(10):
            k = rand_se_kernel(rng, with_shift=True)
            d = float(rng.uniform(-3, 3))
            assert float(se_cross_cov(k, k, d)) == pytest.approx(
                float(se_auto_cov(k, d)), rel=1e-12
            )

    def test_negative_length_scale_enters_squared(self):
        a = float(se_auto_cov(SEKernel(1.3, -1.21), 0.7))
        b = float(se_auto_cov(SEKernel(1.3, 1.21), 0.7))
        assert a == b

    def test_shift_moves_cross_peak(self):
        ki = SEKernel(1.0, 1.0, shift=0.6)
        kj = SEKernel(1.0, 1.0, shift=-0.4)
        peak = float(se_cross_cov(ki, kj, 1.0))  # d  == shift_i - shift_j
        assert peak == pytest.approx(1.0, abs=1e-12)
        assert float(se_cross_cov(ki, kj, 0.0)) < peak


class TestSpectralClosedForm:
    def test_zero_amplitudes(self):
        ki = SpectralKernel((SpectralComponent(0.0, 1.0, 1.0),))
        kj = SpectralKernel((SpectralComponent(0.0, 0.5, 2.0),))
        for d in np.linspace(-2, 2, 5):
            assert float(spectral_cross_cov(ki, kj, d)) == 0.0

    def test_zero_frequencies_collapse_to_single_gaussian(self):
        # both cosine terms coincide when mu_s = mu_t = 0
        ki = SpectralKernel((SpectralComponent(1.1, 0.9, 0.0),))
        kj = SpectralKernel((SpectralComponent(0.7, 1.3, 0.0),))
        s = 0.9**2 + 1.3**2
        for d in (0.0, 0.4, -1.7):
            expect = (
                1.1 * 0.7 * math.sqrt(math.pi / s)
                * math.exp(-4.0 * 0.9**2 * 1.3**2 * d**2 / (4.0 * s))
            )
            assert float(spectral_cross_cov(ki, kj, d)) == pytest.approx(expect, rel=1e-12)

    def test_single_component_pair_matches_oracle(self):
        ki = SpectralKernel((SpectralComponent(1.0, 1.0, 1.0),))
        kj = SpectralKernel((SpectralComponent(1.0, 1.0, 2.0),))
        cf = float(spectral_cross_cov(ki, kj, 0.7))
        q = quadrature_cross_cov(ki, kj, 0.7)
        assert cf == pytest.approx(q, rel=1e-6)

    def test_multi_component_sum(self, rng):
        for _ in range(5):
            ki = rand_spectral_kernel(rng, max_components=3)
            kj = rand_spectral_kernel(rng, max_components=3)
            d = float(rng.uniform(-2, 2))
            cf = float(spectral_cross_cov(ki, kj, d))
            assert cf == pytest.approx(quadrature_cross_cov(ki, kj, d), rel=1e-6, abs=1e-9)


class TestFamilyDispatch:
    def test_mixed_families_rejected(self):
        se = SEKernel(1.0, 1.0)
        sp = SpectralKernel((SpectralComponent(1.0, 1.0, 0.0),))
        with pytest.raises(UnsupportedPair):
            cross_cov(se, sp, 0.0)
        with pytest.raises(UnsupportedPair):
            cross_cov(sp, se, 0.0)

    def test_validation(self):
        with pytest.raises(NonIntegrableKernel):
            SEKernel(1.0, 0.0)
        with pytest.raises(NonIntegrableKernel):
            SpectralComponent(1.0, 0.0, 1.0)
        with pytest.raises(NonIntegrableKernel):
            SEKernel(float("inf"), 1.0)
        with pytest.raises(NonIntegrableKernel):
            SpectralKernel(())


class TestInvariants:
    def test_symmetry_under_swap_and_lag_negation(self, rng):
        for _ in range(500):
            if rng.random() < 0.5:
                ki, kj = rand_se_kernel(rng, with_shift=True), rand_se_kernel(rng, with_shift=True)
            else:
                ki, kj = rand_spectral_kernel(rng), rand_spectral_kernel(rng)
            d = float(rng.uniform(-4, 4))
            a = float(cross_cov(ki, kj, d))
            b = float(cross_cov(kj, ki, -d))
            assert a == pytest.approx(b, rel=1e-10, abs=1e-12)

    def test_cauchy_schwarz(self, rng):
        for _ in range(300):
            ki, kj = rand_kernel(rng), rand_kernel(rng)
            if type(ki) is not type(kj):
                continue
            d = float(rng.uniform(-4, 4))
            bound = float(auto_cov(ki, 0.0)) * float(auto_cov(kj, 0.0))
            assert float(cross_cov(ki, kj, d)) ** 2 <= bound * (1.0 + 1e-10)

    def test_closed_forms_match_quadrature(self, rng):
        lags = (0.0, 0.5, -0.5, 1.0, -1.0, 3.0, -3.0)
        for _ in range(40):
            ki, kj = rand_se_kernel(rng, with_shift=True), rand_se_kernel(rng, with_shift=True)
            for d in lags:
                cf = float(se_cross_cov(ki, kj, d))
                q = quadrature_cross_cov(ki, kj, d)
                assert abs(cf - q) <= 1e-6 * max(abs(cf), abs(q)) + 1e-9
        for _ in range(40):
            ki, kj = rand_spectral_kernel(rng), rand_spectral_kernel(rng)
            for d in lags:
                cf = float(spectral_cross_cov(ki, kj, d))
                q = quadrature_cross_cov(ki, kj, d)
                assert abs(cf - q) <= 1e-6 * max(abs(cf), abs(q)) + 1e-9

    def test_zero_kernel_law_se(self, rng):
        lags = np.linspace(-5.0, 5.0, 100)
        for _ in range(50):
            ki = rand_se_kernel(rng, with_shift=True)
            kj = rand_se_kernel(rng, with_shift=True)
            vals = np.asarray(se_cross_cov(ki, kj, lags))
            identically_zero = bool(np.all(vals == 0.0))
            has_zero_amplitude = ki.alpha == 0.0 or kj.alpha == 0.0
            assert identically_zero == has_zero_amplitude
            zeroed = SEKernel(alpha=0.0, ell=ki.ell, shift=ki.shift)
            assert np.all(np.asarray(se_cross_cov(zeroed, kj, lags)) == 0.0)


class TestSEGradients:
    def test_matches_finite_differences(self, rng):
        for _ in range(20):
            ki = rand_se_kernel(rng, with_shift=True)
            kj = rand_se_kernel(rng, with_shift=True)
            d = float(rng.uniform(-2.5, 2.5))
            _, gi, gj = se_cross_cov_grads(ki, kj, d)
            eps = 1e-6

            def num(build):
                return (
                    float(se_cross_cov(*build(eps), d))
                    - float(se_cross_cov(*build(-eps), d))
                ) / (2 * eps)

            checks = [
                (gi["alpha"], lambda e: (SEKernel(ki.alpha + e, ki.ell, ki.shift), kj)),
                (gi["ell"], lambda e: (SEKernel(ki.alpha, ki.ell + e, ki.shift), kj)),
                (gi["shift"], lambda e: (SEKernel(ki.alpha, ki.ell, ki.shift + e), kj)),
                (gj["alpha"], lambda e: (ki, SEKernel(kj.alpha + e, kj.ell, kj.shift))),
                (gj["ell"], lambda e: (ki, SEKernel(kj.alpha, kj.ell + e, kj.shift))),
                (gj["shift"], lambda e: (ki, SEKernel(kj.alpha, kj.ell, kj.shift + e))),
            ]
            for analytic, build in checks:
                assert float(analytic) == pytest.approx(num(build), rel=1e-4, abs=1e-7)
