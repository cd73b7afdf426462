"""Kernel, diffusion, surrogate and closed-form density checks."""

import math
from fractions import Fraction

import numpy as np
import pytest

from rvbatch.models import (
    DiffusionSpec,
    DiffusionVariant,
    KernelSpec,
    KernelVariant,
    SurrogateSpec,
    SurrogateVariant,
    beta_equilibrium_density,
    eval_diffusion_coefficient,
    eval_kernel,
    eval_surrogate,
    maxwellian_density,
)

BC = KernelSpec(variant=KernelVariant.BOUNDED_CONFIDENCE, delta=0.5)
CS = KernelSpec(variant=KernelVariant.CUCKER_SMALE, xi=1.0, beta=0.1)


class TestKernels:
    def test_indicator_threshold(self):
        assert eval_kernel(BC, None, None, 0.0, 0.4) == 1.0
        assert eval_kernel(BC, None, None, 0.0, 0.6) == 0.0
        assert eval_kernel(BC, None, None, 0.0, 0.5) == 1.0  # inclusive

    def test_communication_at_zero_distance(self):
        assert eval_kernel(CS, 0.3, 0.3, 0.0, 1.0) == pytest.approx(1.0)

    def test_communication_decay_value(self):
        # (xi^2 + r^2)^(-beta) at r^2 = 3 -> 4^(-0.1)
        expected = 4.0 ** (-0.1)
        got = eval_kernel(CS, np.array([0.0]), np.array([np.sqrt(3.0)]), 0.0, 0.0)
        assert got == pytest.approx(expected, abs=1e-12)
        assert expected == pytest.approx(0.870551, abs=1e-6)

    def test_symmetry(self):
        rng = np.random.default_rng(5)
        for kernel in (KernelSpec(), BC, CS):
            for _ in range(50):
                xi, xj = rng.normal(size=2)
                vi, vj = rng.uniform(-1, 1, 2)
                assert eval_kernel(kernel, xi, xj, vi, vj) == eval_kernel(
                    kernel, xj, xi, vj, vi
                )

    def test_wide_indicator_is_constant(self):
        wide = KernelSpec(variant=KernelVariant.BOUNDED_CONFIDENCE, delta=2.0)
        rng = np.random.default_rng(1)
        for _ in range(100):
            vi, vj = rng.uniform(-1, 1, 2)
            assert eval_kernel(wide, None, None, vi, vj) == 1.0

    def test_parameter_validation(self):
        with pytest.raises(ValueError):
            KernelSpec(variant=KernelVariant.BOUNDED_CONFIDENCE, delta=0.0)
        with pytest.raises(ValueError):
            KernelSpec(variant=KernelVariant.CUCKER_SMALE, xi=0.0)
        with pytest.raises(ValueError):
            KernelSpec(variant=KernelVariant.CUSTOM)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            eval_kernel(CS, np.zeros(2), np.zeros(3), 0.0, 0.0)


class TestDiffusion:
    def test_multiplicative_vanishes_at_boundary(self):
        d = DiffusionSpec(variant=DiffusionVariant.OPINION_MULTIPLICATIVE, sigma2=0.1)
        assert eval_diffusion_coefficient(d, 1.0) == 0.0
        assert eval_diffusion_coefficient(d, -1.0) == 0.0

    def test_constant_value(self):
        d = DiffusionSpec(variant=DiffusionVariant.CONSTANT, sigma2=0.1)
        assert eval_diffusion_coefficient(d, 0.37) == pytest.approx(
            math.sqrt(0.2), abs=1e-12
        )

    def test_multiplicative_at_center(self):
        d = DiffusionSpec(variant=DiffusionVariant.OPINION_MULTIPLICATIVE, sigma2=0.1)
        assert eval_diffusion_coefficient(d, 0.0) == pytest.approx(
            0.447214, abs=1e-6
        )

    def test_none_is_zero(self):
        assert np.all(eval_diffusion_coefficient(DiffusionSpec(), np.linspace(-1, 1, 9)) == 0)


class TestSurrogates:
    def test_constant_one(self):
        s = SurrogateSpec()
        assert np.all(eval_surrogate(s, None, np.linspace(-1, 1, 7)) == 1.0)

    def test_parabolic(self):
        s = SurrogateSpec(variant=SurrogateVariant.PARABOLIC)
        assert eval_surrogate(s, None, 0.0) == 1.0
        assert eval_surrogate(s, None, 1.0) == 0.0
        assert eval_surrogate(s, None, -1.0) == 0.0

    def test_two_cluster_roots(self):
        s = SurrogateSpec(variant=SurrogateVariant.TWO_CLUSTER_QUADRATIC)
        assert eval_surrogate(s, None, 0.5) == 0.0
        assert eval_surrogate(s, None, -0.5) == 0.0
        assert eval_surrogate(s, None, 0.0) == -0.25

    def test_custom_requires_function(self):
        s = SurrogateSpec(variant=SurrogateVariant.CUSTOM)
        with pytest.raises(ValueError):
            eval_surrogate(s, None, 0.0)

    def test_duplicate_clusters_rejected(self):
        with pytest.raises(ValueError):
            SurrogateSpec(clusters=(0.5, 0.5))


class TestBetaEquilibrium:
    def test_center_value_exact_fraction(self):
        # exponents 10 at m=0, sigma2=0.1: f(0) = 1/(2^19 B(10,10)),
        # B(10,10) = 9!^2/19!
        b = Fraction(math.factorial(9) ** 2, math.factorial(19))
        expected = float(1 / (Fraction(2**19) * b))
        got = beta_equilibrium_density(0.0, 0.1, 0.0)
        assert got == pytest.approx(expected, rel=1e-12)
        assert expected == pytest.approx(1.76197, abs=5e-6)

    def test_even_symmetry(self):
        v = np.linspace(-0.95, 0.95, 39)
        f = beta_equilibrium_density(0.0, 0.2, v)
        assert np.allclose(f, f[::-1], rtol=1e-12)

    def test_normalization_by_quadrature(self):
        for m, s2 in [(0.0, 0.1), (0.3, 0.2), (-0.5, 0.5)]:
            n = 10_000
            h = 2.0 / n
            mid = -1.0 + h * (np.arange(n) + 0.5)
            mass = beta_equilibrium_density(m, s2, mid).sum() * h
            assert mass == pytest.approx(1.0, abs=1e-6)

    def test_domain_validation(self):
        with pytest.raises(ValueError):
            beta_equilibrium_density(0.0, 0.1, 1.0)
        with pytest.raises(ValueError):
            beta_equilibrium_density(1.0, 0.1, 0.0)
        with pytest.raises(ValueError):
            beta_equilibrium_density(0.0, -0.1, 0.0)


class TestMaxwellian:
    def test_normalization_constant_1d(self):
        assert maxwellian_density(0.0, 1.0, 0.0) == pytest.approx(
            1.0 / math.sqrt(2 * math.pi), rel=1e-12
        )

    def test_maximum_at_mean(self):
        v = np.linspace(-3, 3, 601)[:, None]
        f = maxwellian_density(np.array([0.7]), 0.3, v)
        assert v[np.argmax(f), 0] == pytest.approx(0.7, abs=0.02)

    def test_quadrature_mass(self):
        n = 20_000
        lo, hi = -8.0, 8.0
        h = (hi - lo) / n
        mid = (lo + h * (np.arange(n) + 0.5))[:, None]
        mass = maxwellian_density(0.0, 1.0, mid).sum() * h
        assert mass == pytest.approx(1.0, abs=1e-6)
