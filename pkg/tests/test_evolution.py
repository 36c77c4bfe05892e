from __future__ import annotations

import numpy as np
import pytest

from conftest import linear_data, picard_data, two_stream_data
from quasineutral.evolution import BlowUpError, InitialData, SystemState, picard_iterate, simulate, step
from quasineutral.field_decomposition import divergence_residual, gauss_residual, irrotational_from_density
from quasineutral.plasma_layers import LayerStack
from quasineutral.spectral_core import ConfigurationError, Lattice


def _quiescent(lat, eps=0.1):
    layers = LayerStack(np.ones(1), lat.constant(1.0)[None], lat.zeros(rank=1)[None])
    return InitialData(lat, eps, layers, lat.zeros(rank=1), lat.zeros(rank=1))


def _scaled_data(eps):
    """1D two-layer data with ``rho - 1 = O(eps)`` so that ``eps E`` is bounded uniformly."""
    lat = Lattice(1, 2)
    x = lat.grid_points()[0]
    F = lambda v: lat.from_grid(v, lat.N)  # noqa: E731
    z = 0 * x
    r1, r2 = 1 + eps * 0.1 * np.cos(x), 1 - eps * 0.05 * np.sin(x)
    xi1 = np.stack([0.3 + 0.02 * np.sin(x), z, z])
    xi2 = np.stack([-0.3 + z, 0.02 * np.cos(x), z])
    layers = LayerStack(np.array([0.5, 0.5]), np.stack([F(r1), F(r2)]), np.stack([F(xi1), F(xi2)]))
    E0 = irrotational_from_density(layers.weighted_sum(layers.rho), eps, lat)
    return InitialData(lat, eps, layers, E0, F(np.stack([z, z, 0.06 * np.sin(x)])))


def _flat(tr, i=-1):
    return np.concatenate([tr.rho[i].ravel(), tr.xi[i].ravel(), tr.eps * tr.E[i].ravel(), tr.B[i].ravel()])


class TestStep:
    def test_quiescent_fixed_point(self):
        lat = Lattice(2, 3)
        s0 = SystemState.initial(_quiescent(lat))
        s1 = step(s0, 0.002, 0.1, lat)
        for a, b in [(s0.layers.rho, s1.layers.rho), (s0.layers.xi, s1.layers.xi), (s0.em.B, s1.em.B)]:
            assert np.max(np.abs(a - b)) < 1e-13
        assert np.max(np.abs(s1.em.E(lat))) < 1e-13

    def test_self_convergence_is_second_order(self):
        lat = Lattice(2, 3)
        runs = [simulate(two_stream_data(lat, 0.2), 0.2, dt, extend_horizon=False) for dt in (0.01, 0.005, 0.0025)]
        e1 = np.max(np.abs(_flat(runs[0]) - _flat(runs[1])))
        e2 = np.max(np.abs(_flat(runs[1]) - _flat(runs[2])))
        assert e1 / e2 == pytest.approx(4.0, rel=0.1)

    def test_blow_up_reported(self):
        # steps far beyond the plasma period make the fluid substep unstable
        data = linear_data(Lattice(1, 2), 0.01, amp=1e-2)
        with pytest.raises(BlowUpError) as info:
            with np.errstate(all="ignore"):
                simulate(data, 200.0, 1.0, extend_horizon=False)
        assert 0.0 < info.value.time <= 200.0


class TestSimulate:
    def test_zero_horizon(self):
        tr = simulate(two_stream_data(Lattice(2, 2), 0.2), 0.0)
        assert tr.n_times == 1 and tr.times[0] == 0.0
        assert np.max(np.abs(tr.G)) == 0

    def test_horizon_extension_and_stride(self):
        eps = 0.2
        tr = simulate(two_stream_data(Lattice(2, 2), eps), 0.1, stride=3)
        assert tr.times[-1] == pytest.approx(0.1 + 2 * np.pi * eps)
        assert tr.metadata["stride"] == 3
        assert np.all(np.diff(tr.times) > 0)

    def test_deterministic(self):
        lat = Lattice(2, 2)
        a = simulate(two_stream_data(lat, 0.2), 0.05, extend_horizon=False)
        b = simulate(two_stream_data(lat, 0.2), 0.05, extend_horizon=False)
        for name in ("rho", "xi", "E_irr", "E_sol", "E_mean", "B", "G_irr"):
            np.testing.assert_array_equal(getattr(a, name), getattr(b, name))

    def test_constraints_along_run(self):
        lat = Lattice(2, 3)
        eps = 0.1
        tr = simulate(two_stream_data(lat, eps), 0.2, extend_horizon=False)
        for i in range(tr.n_times):
            rho = np.tensordot(tr.weights, tr.rho[i], axes=(0, 0))
            assert gauss_residual(tr.E[i], rho, eps, lat, relative=True)[0] < 1e-6
            assert divergence_residual(tr.B[i], lat) < 1e-10
        assert np.max(np.abs(tr.G[0])) == 0

    @pytest.mark.parametrize("kw", [{"T": -1.0}, {"T": 0.1, "dt": 0.0}, {"T": 0.1, "stride": 0}])
    def test_configuration_errors(self, kw):
        with pytest.raises(ConfigurationError):
            simulate(two_stream_data(Lattice(1, 2), 0.2), **kw)


class TestPicard:
    def test_zero_data_is_fixed_point(self):
        _, report = picard_iterate(_quiescent(Lattice(2, 3)), 0.05)
        assert report.converged and report.n_iterations == 1
        assert max(report.differences[0].values()) == 0.0

    def test_linear_problem_settles_after_one_update(self):
        _, report = picard_iterate(picard_data(0.2, 1.0), 0.05, nonlinear=False)
        assert report.converged and report.n_iterations == 2
        assert max(report.differences[1].values()) == 0.0

    def test_contraction_and_residuals(self):
        tol = 1e-10
        _, report = picard_iterate(picard_data(0.2, 0.2), 0.05, tol=tol)
        assert report.converged
        assert np.all(report.ratios()[1:] <= 0.75)
        assert all(np.isfinite(v) and v >= 0 for d in report.differences for v in d.values())
        assert max(report.residuals.values()) < 10 * tol

    def test_agrees_with_splitting_solver(self):
        eps = 0.2
        pic, report = picard_iterate(picard_data(eps, 0.2), 0.05)
        assert report.converged
        direct = simulate(picard_data(eps, 0.2), 0.05, eps / 400, extend_horizon=False)
        scale = max(np.max(np.abs(_flat(direct))), 1.0)
        assert np.max(np.abs(_flat(direct) - _flat(pic))) < 1e-5 * scale

    def test_eps_E_bounded_across_eps(self):
        norms = []
        for eps in (0.2, 0.1, 0.05):
            _, report = picard_iterate(_scaled_data(eps), 0.05)
            assert report.converged
            norms.append(max(n["epsE"] for n in report.norms))
        assert max(norms) < 1.1 * min(norms)

    def test_non_contraction_is_reported(self):
        _, report = picard_iterate(picard_data(0.2, 1.0), 50.0, n_max=4, auto_bisect=False)
        assert not report.converged and not report.contraction
        assert "eta" in report.message

    def test_eta_validated(self):
        with pytest.raises(ConfigurationError):
            picard_iterate(picard_data(), 0.0)
