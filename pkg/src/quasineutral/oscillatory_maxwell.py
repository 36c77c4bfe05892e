"""Wave-equation sources and exact per-mode propagators for the electric field.

Taking the divergence, the curl and the spatial mean of Ampere's law and
eliminating the time derivative of the current with the fluid equations
gives three forced oscillators per Fourier mode:

* ``(eps^2 d_tt + 1) div E = g``                        (irrotational part)
* ``(eps^2 d_tt + 1 - Laplacian) curl E = h``           (solenoidal part)
* ``(eps^2 d_tt + 1) E_mean = q``                       (spatial mean)

They are solved by variation of constants, with the oscillatory kernels
integrated exactly against a piecewise-linear reconstruction of the sources
(see :mod:`quasineutral.quadrature`).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .field_decomposition import EMState
from .plasma_layers import LayerStack, apply_remainder_jacobian, relativistic_velocity
from .quadrature import duhamel_kernels, insert_time
from .spectral_core import TWO_PI, Lattice, cross

__all__ = [
    "SourceHistory",
    "ModeOscillator",
    "SourceTerms",
    "source_terms",
    "source_g",
    "source_h",
    "source_q",
    "remainder_R",
    "propagate_irr",
    "propagate_sol",
    "propagate_mean",
    "propagate_fields",
    "PropagatedFields",
    "reconstruct_B",
    "maxwell_substep",
]


@dataclass(frozen=True)
class SourceHistory:
    """Sources sampled on a time grid: ``g`` ``(nt, *shape)``, ``h`` ``(nt, 3, *shape)``, ``q`` ``(nt, 3)``."""

    times: np.ndarray
    g: np.ndarray
    h: np.ndarray
    q: np.ndarray

    def __post_init__(self) -> None:
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or np.any(np.diff(t) <= 0.0):
            raise ValueError("source time grid must be strictly increasing")
        n = len(t)
        if not (len(self.g) == len(self.h) == len(self.q) == n):
            raise ValueError("source histories are not aligned with the time grid")

    @classmethod
    def stack(cls, times: Sequence[float], terms: Sequence["SourceTerms"]) -> "SourceHistory":
        return cls(
            np.asarray(times, dtype=float),
            np.stack([s.g for s in terms]),
            np.stack([s.h for s in terms]),
            np.stack([s.q for s in terms]),
        )


@dataclass(frozen=True)
class ModeOscillator:
    """One forced mode ``eps^2 u'' + omega^2 u = f`` with frequency ``omega/eps``."""

    omega: float
    eps: float
    u0: np.ndarray
    du0: np.ndarray

    def __post_init__(self) -> None:
        if self.omega < 1.0:
            raise ValueError(f"mode frequency factor must be >= 1, got {self.omega}")

    def homogeneous(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        """Free oscillation and its derivative at time ``t``."""
        w = self.omega / self.eps
        u = self.u0 * np.cos(w * t) + self.du0 * np.sin(w * t) / w
        du = -self.u0 * w * np.sin(w * t) + self.du0 * np.cos(w * t)
        return u, du

    def energy(self, u: np.ndarray, du: np.ndarray) -> float:
        return float(self.eps**2 * np.sum(np.abs(du) ** 2) + self.omega**2 * np.sum(np.abs(u) ** 2))


@dataclass(frozen=True)
class SourceTerms:
    g: np.ndarray
    h: np.ndarray
    q: np.ndarray
    R: np.ndarray


def source_terms(
    layers: LayerStack,
    em: EMState,
    eps: float,
    lattice: Lattice,
    *,
    include_remainder: bool = True,
) -> SourceTerms:
    """Evaluate ``g``, ``h``, ``q`` and the relativistic remainder ``R`` together.

    * ``g = d_i d_j (sum mu rho v_i v_j) - eps^2 div(E div E_irr) - div(j ^ B) - div R``
    * ``h = curl d_i (sum mu rho v_i v) - eps^2 curl(E div E_irr) - curl(j ^ B) - curl R``
    * ``q = -mean(eps^2 E div E_irr) - mean(j ^ B) - mean(R)``

    Products are formed on the padded grid.
    """
    lat = lattice
    rho_g = lat.to_grid(layers.rho)
    xi_g = lat.to_grid(layers.xi)
    v_g = relativistic_velocity(xi_g, eps, component_axis=1, warn=False)
    E = em.E(lat)
    E_g = lat.to_grid(E)
    B_g = lat.to_grid(em.B)
    # stress tensor sum mu rho v_i v_j
    stress = lat.from_grid(layers.weighted_sum(rho_g[:, None, None] * v_g[:, :, None] * v_g[:, None, :]))
    j_g = layers.weighted_sum(rho_g[:, None] * v_g)
    # eps^2 E div E_irr, with div E_irr from the irrotational coefficients
    divE_g = lat.to_grid(lat.div(em.E_irr))
    field_stress = lat.from_grid(eps**2 * E_g * divE_g[None])
    lorentz = lat.from_grid(cross(j_g, B_g, axis=0))
    if include_remainder and eps > 0.0:
        force = E_g[None] + cross(v_g, B_g[None], axis=1)
        R = lat.from_grid(layers.weighted_sum(rho_g[:, None] * apply_remainder_jacobian(xi_g, force, eps, axis=1)))
    else:
        R = lat.zeros(rank=1)
    ik = 1j * lat.kvec
    div_stress = np.sum(ik[:, None] * stress, axis=0)  # d_i T_ij -> vector over j
    g = np.sum(ik * div_stress, axis=0)
    rest = field_stress + lorentz + R
    g = g - lat.div(rest)
    h = lat.curl(div_stress) - lat.curl(rest)
    q = -rest[(slice(None),) + lat.zero_index] / TWO_PI**lat.dim
    return SourceTerms(g=g, h=h, q=q, R=R)


def source_g(layers: LayerStack, em: EMState, eps: float, lattice: Lattice) -> np.ndarray:
    """Source of the irrotational wave equation (scalar coefficients)."""
    return source_terms(layers, em, eps, lattice).g


def source_h(layers: LayerStack, em: EMState, eps: float, lattice: Lattice) -> np.ndarray:
    """Source of the solenoidal wave equation (vector coefficients)."""
    return source_terms(layers, em, eps, lattice).h


def source_q(layers: LayerStack, em: EMState, eps: float, lattice: Lattice) -> np.ndarray:
    """Source of the mean-field oscillator (a complex 3-vector with zero imaginary part)."""
    return source_terms(layers, em, eps, lattice).q


def remainder_R(layers: LayerStack, em: EMState, eps: float, lattice: Lattice) -> np.ndarray:
    """``sum mu rho lambda(xi)(E + v ^ B)`` as vector coefficients."""
    return source_terms(layers, em, eps, lattice).R


# ---------------------------------------------------------------- propagators
def _as_vec(k) -> np.ndarray:
    k = np.asarray(k, dtype=float)
    out = np.zeros(3)
    out[: k.shape[0]] = k
    return out


def _check_horizon(times: np.ndarray, t: float) -> None:
    if t < times[0] or t > times[-1] + 1e-12 * max(1.0, abs(times[-1])):
        raise ValueError(f"t={t} outside the source history [{times[0]}, {times[-1]}]")


def propagate_irr(
    k,
    g_samples: np.ndarray,
    times: np.ndarray,
    E0: np.ndarray,
    dE0: np.ndarray,
    eps: float,
    t: float,
    *,
    with_derivative: bool = False,
):
    """``E_irr_hat(t,k)`` from samples of ``g_hat(., k)`` on ``times`` (with ``times[0] = 0``).

    ``E(t) = -(ik/(eps|k|^2)) int_0^t sin((t-s)/eps) g(s) ds + E0 cos(t/eps) + eps dE0 sin(t/eps)``.
    """
    kv = _as_vec(k)
    k2 = float(kv @ kv)
    if k2 == 0.0:
        raise ValueError("the irrotational propagator is undefined at k = 0")
    times = np.asarray(times, dtype=float)
    _check_horizon(times, t)
    tt, gg = insert_time(times, np.asarray(g_samples, dtype=complex), t)
    ker = duhamel_kernels(tt, gg, 1.0 / eps)
    S, C = ker["sin"][-1], ker["cos"][-1]
    osc = ModeOscillator(1.0, eps, np.asarray(E0, dtype=complex), np.asarray(dE0, dtype=complex))
    u, du = osc.homogeneous(t - times[0])
    E = -1j * kv / (eps * k2) * S + u
    if not with_derivative:
        return E
    dE = -1j * kv / (eps**2 * k2) * C + du
    return E, dE


def propagate_sol(
    k,
    h_samples: np.ndarray,
    times: np.ndarray,
    E0: np.ndarray,
    dE0: np.ndarray,
    eps: float,
    t: float,
    *,
    with_derivative: bool = False,
):
    """``E_sol_hat(t,k)`` from samples of ``h_hat(., k)`` (shape ``(nt, 3)``).

    ``E(t) = int_0^t sin(w(t-s)/eps) (ik ^ h(s)) / (eps |k|^2 w) ds + E0 cos(wt/eps) + (eps/w) dE0 sin(wt/eps)``
    with ``w = sqrt(1+|k|^2)``.
    """
    kv = _as_vec(k)
    k2 = float(kv @ kv)
    if k2 == 0.0:
        raise ValueError("the solenoidal propagator is undefined at k = 0")
    omega = np.sqrt(1.0 + k2)
    times = np.asarray(times, dtype=float)
    _check_horizon(times, t)
    tt, hh = insert_time(times, np.asarray(h_samples, dtype=complex), t)
    X = 1j * np.cross(kv[None], hh)
    ker = duhamel_kernels(tt, X, omega / eps)
    osc = ModeOscillator(omega, eps, np.asarray(E0, dtype=complex), np.asarray(dE0, dtype=complex))
    u, du = osc.homogeneous(t - times[0])
    E = ker["sin"][-1] / (eps * k2 * omega) + u
    if not with_derivative:
        return E
    dE = ker["cos"][-1] / (eps**2 * k2) + du
    return E, dE


def propagate_mean(
    q_samples: np.ndarray,
    times: np.ndarray,
    E0: np.ndarray,
    dE0: np.ndarray,
    eps: float,
    t: float,
    *,
    with_derivative: bool = False,
):
    """``E_mean(t) = (1/eps) int_0^t sin((t-s)/eps) q(s) ds + E0 cos(t/eps) + eps dE0 sin(t/eps)``."""
    times = np.asarray(times, dtype=float)
    _check_horizon(times, t)
    tt, qq = insert_time(times, np.asarray(q_samples, dtype=complex), t)
    ker = duhamel_kernels(tt, qq, 1.0 / eps)
    osc = ModeOscillator(1.0, eps, np.asarray(E0, dtype=complex), np.asarray(dE0, dtype=complex))
    u, du = osc.homogeneous(t - times[0])
    E = ker["sin"][-1] / eps + u
    if not with_derivative:
        return E
    dE = ker["cos"][-1] / eps**2 + du
    return E, dE


@dataclass(frozen=True)
class PropagatedFields:
    """Electric field parts, their time derivatives and time integrals at every source node."""

    times: np.ndarray
    E_irr: np.ndarray
    E_sol: np.ndarray
    E_mean: np.ndarray
    dE_irr: np.ndarray
    dE_sol: np.ndarray
    dE_mean: np.ndarray
    G_irr: np.ndarray
    G_sol: np.ndarray
    G_mean: np.ndarray


def propagate_fields(
    history: SourceHistory,
    seeds: EMState,
    eps: float,
    lattice: Lattice,
    kernels: Callable[..., dict[str, np.ndarray]] = duhamel_kernels,
) -> PropagatedFields:
    """Vectorised propagators over all modes and all nodes of ``history``.

    Returns the fields, their derivatives and the accumulated integrals
    ``G = int_0^t E``, each built from the same convolutions.  ``kernels``
    has the signature of :func:`~quasineutral.quadrature.duhamel_kernels`
    (the default Filon rule); the origin of time is ``history.times[0]``.
    """
    lat = lattice
    times = history.times
    duhamel = kernels
    t = (times - times[0]).reshape((-1,) + (1,) * (lat.dim + 1))
    w1 = 1.0 / eps
    k = lat.kvec
    inv_k2 = lat.inv_k2
    # irrotational part
    kg = duhamel(times, history.g, w1)
    cos1, sin1 = np.cos(w1 * t), np.sin(w1 * t)
    E0, dE0 = seeds.E_irr[None], seeds.dE_irr[None]
    E_irr = -1j * k * (kg["sin"] * inv_k2)[:, None] / eps + E0 * cos1 + eps * dE0 * sin1
    dE_irr = -1j * k * (kg["cos"] * inv_k2)[:, None] / eps**2 - E0 * sin1 / eps + dE0 * cos1
    G_irr = -1j * k * (kg["one_minus_cos"] * inv_k2)[:, None] + eps * E0 * sin1 + eps**2 * dE0 * (1.0 - cos1)
    # solenoidal part
    omega = lat.omega_sol
    X = lat.curl(history.h)
    kh = duhamel(times, X, omega / eps)
    cos2, sin2 = np.cos(omega * t / eps), np.sin(omega * t / eps)
    S0, dS0 = seeds.E_sol[None], seeds.dE_sol[None]
    E_sol = kh["sin"] * inv_k2 / (eps * omega) + S0 * cos2 + eps / omega * dS0 * sin2
    dE_sol = kh["cos"] * inv_k2 / eps**2 - S0 * omega / eps * sin2 + dS0 * cos2
    G_sol = kh["one_minus_cos"] * inv_k2 / omega**2 + eps / omega * S0 * sin2 + eps**2 / omega**2 * dS0 * (1.0 - cos2)
    # mean part
    tm = (times - times[0])[:, None]
    km = duhamel(times, history.q, w1)
    c1, s1 = np.cos(w1 * tm), np.sin(w1 * tm)
    M0, dM0 = np.asarray(seeds.E_mean)[None], np.asarray(seeds.dE_mean)[None]
    E_mean = km["sin"] / eps + M0 * c1 + eps * dM0 * s1
    dE_mean = km["cos"] / eps**2 - M0 * s1 / eps + dM0 * c1
    G_mean = km["one_minus_cos"] + eps * M0 * s1 + eps**2 * dM0 * (1.0 - c1)
    return PropagatedFields(
        times, E_irr, E_sol, E_mean.real, dE_irr, dE_sol, dE_mean.real, G_irr, G_sol, G_mean.real
    )


def reconstruct_B(
    B0: np.ndarray,
    history: SourceHistory,
    seeds: EMState,
    eps: float,
    lattice: Lattice,
    t: float | None = None,
) -> np.ndarray:
    """Faraday's law ``B(t) = B0 - curl int_0^t E_sol``.

    The homogeneous part of ``E_sol`` is integrated analytically and the
    Duhamel part through the ``(1 - cos)/(1 + |k|^2)`` kernel.  Returns the
    field at ``t`` or, when ``t`` is ``None``, at every node of ``history``.
    """
    if t is not None:
        _check_horizon(history.times, t)
        tt, g = insert_time(history.times, history.g, t)
        _, h = insert_time(history.times, history.h, t)
        _, q = insert_time(history.times, history.q, t)
        history = SourceHistory(tt, g, h, q)
    fields = propagate_fields(history, seeds, eps, lattice)
    B = np.asarray(B0)[None] - lattice.curl(fields.G_sol)
    return B[-1] if t is not None else B


def maxwell_substep(
    E_sol: np.ndarray,
    E_mean: np.ndarray,
    B: np.ndarray,
    j: np.ndarray,
    eps: float,
    dt: float,
    lattice: Lattice,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Advance ``(E_sol, E_mean, B)`` by ``dt`` with the current ``j`` frozen.

    For ``k != 0`` the transverse fields obey ``eps^2 E' = ik ^ B - j_sol``,
    ``B' = -ik ^ E``, a harmonic oscillator of frequency ``|k|/eps`` about the
    magnetostatic equilibrium; it is solved exactly.  The mean field drifts
    as ``eps^2 E_mean' = -mean(j)``.
    """
    lat = lattice
    kabs = lat.kabs
    w = kabs / eps
    j_sol = j - lat.kvec * np.sum(lat.kvec * j, axis=0) * lat.inv_k2
    j_sol[(slice(None),) + lat.zero_index] = 0.0
    dE = (lat.curl(B) - j_sol) / eps**2
    nonzero = kabs > 0
    wsafe = np.where(nonzero, w, 1.0)
    c, s = np.cos(w * dt), np.sin(w * dt)
    sinc = np.where(nonzero, s / wsafe, dt)
    one_minus_cos = np.where(nonzero, (1.0 - c) / wsafe**2, 0.5 * dt**2)
    E_new = E_sol * c + dE * sinc
    integral = E_sol * sinc + dE * one_minus_cos
    B_new = B - lat.curl(integral)
    E_new[(slice(None),) + lat.zero_index] = 0.0
    mean_j = lat.mean_value(j)
    E_mean_new = np.asarray(E_mean) - dt * mean_j / eps**2
    return E_new, E_mean_new, B_new
