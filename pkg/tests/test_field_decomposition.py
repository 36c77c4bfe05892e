from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_coeffs
from quasineutral.field_decomposition import (
    InconsistentDataError,
    complete_initial_data,
    divergence_residual,
    gauss_residual,
    helmholtz_decompose,
    irrotational_from_density,
    project_irrotational,
    project_solenoidal,
)
from quasineutral.plasma_layers import FluidLayer, moments
from quasineutral.spectral_core import TWO_PI, Lattice


def _zero_mean(c, lat):
    c[lat.zero_index] = 0.0
    return c


class TestHelmholtz:
    def test_constant_field(self):
        lat = Lattice(2, 3)
        E = lat.constant(np.array([1.0, -2.0, 0.5]))
        irr, sol, mean = helmholtz_decompose(E, lat)
        assert np.max(np.abs(irr)) == 0 and np.max(np.abs(sol)) == 0
        np.testing.assert_allclose(mean, [1.0, -2.0, 0.5], rtol=1e-15)

    def test_gradient_field(self, rng):
        lat = Lattice(3, 3)
        phi = random_coeffs(lat, rng)
        irr, sol, mean = helmholtz_decompose(lat.grad(phi), lat)
        assert np.max(np.abs(sol)) < 1e-13 and np.max(np.abs(mean)) < 1e-13
        np.testing.assert_allclose(irr, lat.grad(phi), atol=1e-13)

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), dim=st.sampled_from([1, 2, 3]))
    def test_projector_identities(self, seed, dim):
        lat = Lattice(dim, 3)
        E = random_coeffs(lat, np.random.default_rng(seed), rank=1)
        irr, sol, mean = helmholtz_decompose(E, lat)
        scale = np.max(np.abs(E))
        np.testing.assert_allclose(irr + sol + lat.constant(mean), E, atol=1e-14 * scale)
        assert np.max(np.abs(lat.curl(irr))) < 1e-13 * scale
        assert np.max(np.abs(lat.div(sol))) < 1e-13 * scale
        # idempotence
        i2, s2, m2 = helmholtz_decompose(irr, lat)
        np.testing.assert_allclose(i2, irr, atol=1e-14 * scale)
        assert np.max(np.abs(s2)) < 1e-14 * scale and np.max(np.abs(m2)) == 0
        np.testing.assert_allclose(project_solenoidal(sol, lat), sol, atol=1e-14 * scale)
        assert np.max(np.abs(project_irrotational(sol, lat))) < 1e-14 * scale
        # orthogonality
        assert abs(np.sum(irr * np.conj(sol))) < 1e-13 * np.sum(np.abs(E) ** 2)


class TestGauss:
    def test_consistent_state(self, rng):
        lat = Lattice(2, 3)
        rho = lat.constant(1.0) + 0.1 * _zero_mean(random_coeffs(lat, rng), lat)
        eps = 0.2
        E = irrotational_from_density(rho, eps, lat)
        l2, mx = gauss_residual(E, rho, eps, lat)
        assert l2 < 1e-12 and mx < 1e-12

    def test_solenoidal_perturbation_leaves_residual(self, rng):
        lat = Lattice(2, 3)
        rho = lat.constant(1.0) + 0.1 * _zero_mean(random_coeffs(lat, rng), lat)
        E = irrotational_from_density(rho, 0.2, lat) + 0.3 * random_coeffs(lat, rng, rank=1)
        sol = project_solenoidal(random_coeffs(lat, rng, rank=1), lat)
        before = gauss_residual(E, rho, 0.2, lat)
        after = gauss_residual(E + sol, rho, 0.2, lat)
        np.testing.assert_allclose(after, before, rtol=1e-12)

    def test_doubled_irrotational_part(self, rng):
        lat = Lattice(2, 3)
        rho = lat.constant(1.0) + 0.1 * _zero_mean(random_coeffs(lat, rng), lat)
        eps = 0.3
        E = 2 * irrotational_from_density(rho, eps, lat)
        excess = rho - lat.constant(1.0)
        # direct evaluation: the residual is rho - 1 itself
        l2_direct = TWO_PI**-1 * np.sqrt(np.sum(np.abs(excess) ** 2))
        l2, mx = gauss_residual(E, rho, eps, lat)
        assert l2 == pytest.approx(l2_direct, rel=1e-12)
        assert mx == pytest.approx(np.max(np.abs(excess)), rel=1e-12)
        assert gauss_residual(E, rho, eps, lat, relative=True)[0] == pytest.approx(1.0, rel=1e-12)

    def test_accepts_layers(self, rng):
        lat = Lattice(1, 3)
        rho = lat.constant(1.0) + 0.1 * _zero_mean(random_coeffs(lat, rng), lat)
        layer = FluidLayer(1.0, rho, lat.zeros(rank=1))
        E = irrotational_from_density(rho, 0.5, lat)
        assert gauss_residual(E, [layer], 0.5, lat)[0] < 1e-12


class TestCompletion:
    def test_quiescent(self):
        lat = Lattice(2, 3)
        layer = FluidLayer(1.0, lat.constant(1.0), lat.zeros(rank=1))
        st_ = complete_initial_data([layer], lat.zeros(rank=1), lat.zeros(rank=1), 0.1, lat)
        for seed in (st_.dE_irr, st_.dE_sol, st_.dB):
            assert np.max(np.abs(seed)) == 0
        assert np.max(np.abs(st_.dE_mean)) == 0

    def test_curl_free_field(self):
        lat = Lattice(1, 4)
        eps, a = 0.2, 0.5
        x = lat.grid_points()[0]
        rho = lat.from_grid(1 + eps**2 * a * np.cos(x), lat.N)
        xi = lat.from_grid(np.stack([0.1 * np.sin(x), 0 * x, 0 * x]), lat.N)
        layer = FluidLayer(1.0, rho, xi)
        E0 = irrotational_from_density(rho, eps, lat)
        st_ = complete_initial_data([layer], E0, lat.zeros(rank=1), eps, lat)
        _, j = moments([layer], eps, lat)
        assert np.max(np.abs(st_.dB)) < 1e-15
        np.testing.assert_allclose(eps**2 * st_.dE(lat), -j, atol=1e-14)

    def test_random_consistent_data(self, rng):
        lat = Lattice(3, 2)
        eps = 0.3
        rho = lat.constant(1.0) + 0.05 * _zero_mean(random_coeffs(lat, rng), lat)
        xi = 0.2 * random_coeffs(lat, rng, rank=1)
        layer = FluidLayer(1.0, rho, xi)
        E0 = irrotational_from_density(rho, eps, lat) + project_solenoidal(random_coeffs(lat, rng, rank=1), lat)
        B0 = lat.curl(random_coeffs(lat, rng, rank=1))
        st_ = complete_initial_data([layer], E0, B0, eps, lat)
        _, j = moments([layer], eps, lat)
        scale = np.max(np.abs(st_.dE(lat)))
        assert np.max(np.abs(eps**2 * st_.dE(lat) - (lat.curl(B0) - j))) < 1e-10 * eps**2 * scale
        assert np.max(np.abs(st_.dB + lat.curl(E0))) < 1e-10
        assert gauss_residual(st_.E(lat), rho, eps, lat)[0] < 1e-10
        assert divergence_residual(st_.B, lat) < 1e-10

    def test_gauss_violation_reported(self, rng):
        lat = Lattice(1, 3)
        rho = lat.constant(1.0) + 0.1 * _zero_mean(random_coeffs(lat, rng), lat)
        layer = FluidLayer(1.0, rho, lat.zeros(rank=1))
        with pytest.raises(InconsistentDataError) as info:
            complete_initial_data([layer], lat.zeros(rank=1), lat.zeros(rank=1), 0.5, lat)
        assert info.value.residual > 1e-8

    def test_divergent_magnetic_field(self, rng):
        lat = Lattice(2, 3)
        layer = FluidLayer(1.0, lat.constant(1.0), lat.zeros(rank=1))
        B0 = lat.grad(random_coeffs(lat, rng))
        with pytest.raises(InconsistentDataError):
            complete_initial_data([layer], lat.zeros(rank=1), B0, 0.5, lat)
