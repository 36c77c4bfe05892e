from __future__ import annotations

import numpy as np
import pytest

from quasineutral.evolution import InitialData, Trajectory
from quasineutral.field_decomposition import EMState, irrotational_from_density
from quasineutral.oscillatory_maxwell import SourceHistory, propagate_fields
from quasineutral.plasma_layers import LayerStack
from quasineutral.spectral_core import TWO_PI, Lattice


def random_coeffs(lat: Lattice, rng: np.random.Generator, rank: int = 0, decay: float = 1.0, lead: tuple = ()) -> np.ndarray:
    """Hermitian coefficients of a smooth real field with ``exp(-decay |k|)`` envelope."""
    shape = lead + ((3,) if rank else ()) + lat.shape
    c = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * np.exp(-decay * lat.kabs)
    return lat.hermitian_part(c)


def two_stream(lat: Lattice, a: float = 0.05, u: float = 0.3, b: float = 0.2):
    """Counter-streaming layers with ``sum mu rho = 1`` exactly, ``E0 = 0`` and a solenoidal ``B0``."""
    F = lambda v: lat.from_grid(v, lat.N)  # noqa: E731
    X = lat.grid_points()
    x = X[0]
    y = X[1] if lat.dim > 1 else 0 * x
    z = 0 * x
    r1 = 1 + a * np.cos(x + y)
    r2 = 2 - r1
    xi1 = np.stack([u + a * np.sin(y), a * np.cos(x), z])
    xi2 = np.stack([-u + z, a * np.sin(x + 2 * y), z])
    layers = LayerStack(np.array([0.5, 0.5]), np.stack([F(r1), F(r2)]), np.stack([F(xi1), F(xi2)]))
    B0 = F(np.stack([z, z, b * np.cos(x) + 0.5 * b * np.sin(2 * y)]))
    return layers, B0


def two_stream_data(lat: Lattice, eps: float, **kw) -> InitialData:
    layers, B0 = two_stream(lat, **kw)
    return InitialData(lat, eps, layers, lat.zeros(rank=1), B0)


def picard_data(eps: float = 0.2, s: float = 1.0, K: int = 2) -> InitialData:
    """Small 1D two-layer problem; ``s`` scales every perturbation amplitude."""
    lat = Lattice(1, K)
    x = lat.grid_points()[0]
    F = lambda v: lat.from_grid(v, lat.N)  # noqa: E731
    z = 0 * x
    r1 = 1 + s * 0.1 * np.cos(x)
    r2 = 1 - s * 0.05 * np.sin(x)
    xi1 = np.stack([0.3 + s * 0.1 * np.sin(x), s * 0.1 * np.cos(x), z])
    xi2 = np.stack([-0.3 + z, z, s * 0.05 * np.sin(x)])
    layers = LayerStack(np.array([0.5, 0.5]), np.stack([F(r1), F(r2)]), np.stack([F(xi1), F(xi2)]))
    total = layers.weighted_sum(layers.rho)
    E0 = irrotational_from_density(total, eps, lat) + F(np.stack([z, s * 0.2 * np.cos(x), z]))
    E0 = E0 + lat.constant(np.array([0.1, 0.0, 0.0]))
    B0 = F(np.stack([z, z, s * 0.3 * np.sin(x)]))
    return InitialData(lat, eps, layers, E0, B0)


def linear_data(lat: Lattice, eps: float, k=(1,), amp: float = 1e-4, B_amp: float = 0.0, k_sol=None) -> InitialData:
    """Single neutralising layer at rest with a tiny density mode and optional magnetic seed."""
    F = lambda v: lat.from_grid(v, lat.N)  # noqa: E731
    X = lat.grid_points()
    phase = sum(kk * X[i] for i, kk in enumerate(k))
    rho = F(1 + amp * np.cos(phase))
    xi = lat.zeros(rank=1)
    layers = LayerStack(np.ones(1), rho[None], xi[None])
    E0 = irrotational_from_density(rho, eps, lat)
    B0 = lat.zeros(rank=1)
    if B_amp:
        ks = k_sol if k_sol is not None else k
        ph = sum(kk * X[i] for i, kk in enumerate(ks))
        z = 0 * ph
        B0 = F(np.stack([z, z, B_amp * np.cos(ph)]))
    return InitialData(lat, eps, layers, E0, B0)


def rk4_mode(omega2, forcing, u0, du0, eps, t_end, n_steps):
    """Brute-force classical RK4 for ``eps^2 u'' + omega2 u = forcing(t)``."""
    h = t_end / n_steps
    y = np.concatenate([u0, du0]).astype(complex)
    n = len(u0)

    def f(t, y):
        return np.concatenate([y[n:], (forcing(t) - omega2 * y[:n]) / eps**2])

    t = 0.0
    for _ in range(n_steps):
        k1 = f(t, y)
        k2 = f(t + h / 2, y + h / 2 * k1)
        k3 = f(t + h / 2, y + h / 2 * k2)
        k4 = f(t + h, y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t += h
    return y[:n], y[n:]


def synthetic_trajectory(lat, eps, times, E_irr, E_sol, E_mean, dE_irr, dE_sol, dE_mean, sources=None, T=None):
    nt = len(times)
    zeros = np.zeros((nt, 3) + lat.shape, dtype=complex)
    if sources is None:
        sources = SourceHistory(times, np.zeros((nt,) + lat.shape, complex), zeros.copy(), np.zeros((nt, 3), complex))
    rho = np.broadcast_to(lat.constant(1.0), (nt, 1) + lat.shape).copy()
    return Trajectory(
        lat, eps, np.ones(1), times, rho, zeros[:, None].copy(), E_irr, E_sol, E_mean, zeros.copy(),
        dE_irr, dE_sol, dE_mean, zeros.copy(), zeros.copy(), np.zeros((nt, 3)), sources,
        float(times[-1] - TWO_PI * eps) if T is None else T,
    )


def propagated_trajectory(lat, eps, history, seeds, T=None):
    f = propagate_fields(history, seeds, eps, lat)
    return synthetic_trajectory(lat, eps, history.times, f.E_irr, f.E_sol, f.E_mean, f.dE_irr, f.dE_sol, f.dE_mean, history, T)


def zero_history(lat, times):
    nt = len(times)
    return SourceHistory(times, np.zeros((nt,) + lat.shape, complex), np.zeros((nt, 3) + lat.shape, complex), np.zeros((nt, 3), complex))


def zero_seeds(lat):
    z = lat.zeros(rank=1)
    return EMState(z, z, np.zeros(3), z, z, z, np.zeros(3), z)


def window_grid(eps, T, per_window=80):
    n = int(np.ceil((T + TWO_PI * eps) / (TWO_PI * eps / per_window)))
    return np.linspace(0.0, T + TWO_PI * eps, n + 1)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, passed: bool, detail: str) -> None:
    """One pass/fail line per acceptance criterion, echoed in the terminal summary."""
    line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)
