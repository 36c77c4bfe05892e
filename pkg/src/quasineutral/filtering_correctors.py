"""Time filtering of the electric field, the corrector ``W`` and the modulated limit amplitudes.

The filter ``H`` averages each part of ``E`` forward over one period of its
own fast oscillation: ``2 pi eps`` for the irrotational and mean parts and
``2 pi eps / sqrt(1 + |k|^2)`` for solenoidal mode ``k``.  ``E_2 = H E`` is the
slow part, ``E_1 = E - E_2`` the oscillating one, and
``W(t) = W(0) + int_0^t E_1`` is the corrector that turns ``xi`` and ``B``
into the slowly varying ``w = xi - W`` and ``b = B + curl W``.

The oscillation amplitudes are tracked through the modulation operators
``T_{1,+-} : c(k) -> exp(-+ i t/eps) c(k)`` and
``T_{2,+-} : c(k) -> exp(-+ i sqrt(1+|k|^2) t/eps) c(k)``.  ``eps E_1`` is close
to a sum of six modulated amplitudes ``d_{0,+-}`` (mean), ``d_{1,+-}``
(irrotational) and ``d_{2,+-}`` (solenoidal); :func:`extract_limit_correctors`
estimates them from a stored trajectory.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .evolution import Trajectory
from .field_decomposition import helmholtz_decompose
from .quadrature import FittedHermite, oscillatory_cumulative
from .spectral_core import TWO_PI, Lattice

__all__ = [
    "HorizonError",
    "FilteredFields",
    "CorrectorState",
    "filter_H",
    "corrector_W",
    "corrector_initial",
    "apply_T",
    "extract_limit_correctors",
    "demodulated_amplitudes",
    "duhamel_amplitudes",
    "filtered_fields",
]

MIN_WINDOW_SAMPLES = 64


class HorizonError(ValueError):
    """A forward window reaches past the stored trajectory."""


# ------------------------------------------------------------------ T operators
def apply_T(coeffs: np.ndarray, branch: int, sign: int, t: float, eps: float, lattice: Lattice | None = None):
    """Multiply by ``exp(-sign i t/eps)`` (branch 1) or ``exp(-sign i sqrt(1+|k|^2) t/eps)`` (branch 2).

    Branch 1 also accepts a spatially constant amplitude (no lattice needed).
    """
    if sign not in (1, -1):
        raise ValueError(f"sign must be +1 or -1, got {sign}")
    if branch == 1:
        return np.exp(-sign * 1j * t / eps) * np.asarray(coeffs)
    if branch == 2:
        if lattice is None:
            raise ValueError("branch 2 needs the lattice for its per-mode frequency")
        return np.exp(-sign * 1j * lattice.omega_sol * t / eps) * np.asarray(coeffs)
    raise ValueError(f"branch must be 1 or 2, got {branch}")


# ------------------------------------------------------------------- filtering
def _check_sampling(times: np.ndarray, eps: float) -> None:
    dt = float(np.max(np.diff(times)))
    if TWO_PI * eps / dt < MIN_WINDOW_SAMPLES - 1e-9:
        raise ValueError(
            f"stored spacing {dt:.3g} gives {TWO_PI * eps / dt:.1f} samples per 2 pi eps window; "
            f"at least {MIN_WINDOW_SAMPLES} are required (reduce the output stride)"
        )


def _filter_nodes(traj: Trajectory, T: float | None) -> np.ndarray:
    T = traj.T if T is None else T
    reach = T + TWO_PI * traj.eps
    if reach > traj.times[-1] * (1.0 + 1e-12) + 1e-12:
        raise HorizonError(
            f"filtering up to t = {T:g} needs samples until {reach:.6g}, trajectory ends at {traj.times[-1]:.6g}"
        )
    return np.flatnonzero(traj.times <= T * (1.0 + 1e-12) + 1e-12)


@dataclass(frozen=True)
class FilteredParts:
    """``H`` applied to each part, with derivatives ``d/dt H phi = (phi(t+w) - phi(t))/w``."""

    times: np.ndarray
    irr: np.ndarray
    sol: np.ndarray
    mean: np.ndarray
    d_irr: np.ndarray
    d_sol: np.ndarray
    d_mean: np.ndarray


def _filter_parts(traj: Trajectory, idx: np.ndarray) -> FilteredParts:
    eps, lat = traj.eps, traj.lattice
    t = traj.times
    starts = t[idx]
    w1 = TWO_PI * eps
    w2 = np.broadcast_to(TWO_PI * eps / lat.omega_sol, (3,) + lat.shape)
    h_irr = FittedHermite(t, traj.E_irr, traj.dE_irr, 1.0 / eps)
    h_sol = FittedHermite(t, traj.E_sol, traj.dE_sol, lat.omega_sol / eps)
    h_mean = FittedHermite(t, traj.E_mean, traj.dE_mean, 1.0 / eps)
    irr = h_irr.window_average(starts, w1)
    sol = h_sol.window_average(starts, w2)
    mean = h_mean.window_average(starts, w1).real
    d_irr = (h_irr.value_at(starts + w1) - traj.E_irr[idx]) / w1
    d_mean = ((h_mean.value_at(starts + w1) - traj.E_mean[idx]) / w1).real
    # per-mode windows: evaluate E_sol at t + w(k) one window width at a time
    d_sol = np.empty_like(sol)
    for w in np.unique(w2):
        mask = w2 == w
        ahead = h_sol.value_at(starts + w)
        d_sol[:, mask] = (ahead[:, mask] - traj.E_sol[idx][:, mask]) / w
    return FilteredParts(starts, irr, sol, mean, d_irr, d_sol, d_mean)


def filter_H(traj: Trajectory, T: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """``(E_1, E_2)`` at the stored nodes of ``[0, T]`` (default: the trajectory's ``T``).

    ``E_2 = H_1 E_irr + H_2 E_sol + H_1 E_mean`` with every window integrated
    by the frequency-fitted Hermite rule on the stored samples of ``E`` and
    ``dE/dt``; ``E_1 = E - E_2``.
    """
    _check_sampling(traj.times, traj.eps)
    idx = _filter_nodes(traj, T)
    p = _filter_parts(traj, idx)
    E2 = p.irr + p.sol + traj._const(p.mean)
    E1 = traj.E[idx] - E2
    return E1, E2


def corrector_W(times: np.ndarray, E1: np.ndarray, dE1: np.ndarray | None = None, omega=0.0, offset=0.0) -> np.ndarray:
    """``offset + int_0^t E_1`` at every node.

    With ``dE1`` the integral uses the Hermite rule fitted to ``omega``;
    without it, the trapezoidal rule.
    """
    times = np.asarray(times, dtype=float)
    E1 = np.asarray(E1)
    if len(times) == 1:
        return np.zeros_like(E1) + offset
    if dE1 is None:
        h = np.diff(times).reshape((-1,) + (1,) * (E1.ndim - 1))
        cum = np.concatenate([np.zeros_like(E1[:1]), np.cumsum(0.5 * h * (E1[1:] + E1[:-1]), axis=0)])
    else:
        cum = FittedHermite(times, E1, dE1, omega).cumulative()
    return cum + offset


def corrector_initial(j0: np.ndarray, B0: np.ndarray, lattice: Lattice) -> np.ndarray:
    """Closed-form ``W(0) = grad Lap^-1 div j0 - (1 - Lap)^-1 [curl B0 + curl Lap^-1 curl j0] + mean(j0)``.

    Equivalently ``j0_irr - (1 - Lap)^-1 (curl B0 - j0_sol) + mean(j0)``, i.e.
    ``-eps^2`` times the time derivatives of the three field parts at
    ``t = 0`` with the solenoidal one divided by ``1 + |k|^2``.
    """
    lat = lattice
    j_irr, j_sol, _ = helmholtz_decompose(j0, lat)
    W = j_irr - (lat.curl(B0) - j_sol) / lat.omega_sol**2
    zero = (slice(None),) + lat.zero_index
    W[zero] = j0[zero]
    return W


@dataclass(frozen=True)
class FilteredFields:
    """Filtered decomposition of a trajectory on the nodes of ``[0, T]``.

    ``E1 + E2 == E`` exactly (``E1`` is the difference), ``W = W(0) + int E_1``,
    ``b = B + curl W`` and ``w[:, l] = xi_l - W``.
    """

    times: np.ndarray
    E1: np.ndarray
    E2: np.ndarray
    W: np.ndarray
    W0: np.ndarray
    b: np.ndarray
    w: np.ndarray


def filtered_fields(traj: Trajectory, T: float | None = None, *, W0: np.ndarray | None = None) -> FilteredFields:
    """Filter, integrate the corrector per field part and form ``w`` and ``b``.

    ``W0`` defaults to :func:`corrector_initial` evaluated on the stored
    initial current and magnetic field.
    """
    eps, lat = traj.eps, traj.lattice
    _check_sampling(traj.times, eps)
    idx = _filter_nodes(traj, T)
    p = _filter_parts(traj, idx)
    if W0 is None:
        from .plasma_layers import moments

        _, j0 = moments(traj.state(0).layers, eps, lat)
        W0 = corrector_initial(j0, traj.B[0], lat)
    E = traj.E[idx]
    E2 = p.irr + p.sol + traj._const(p.mean)
    E1 = E - E2
    t = p.times
    W_irr = corrector_W(t, traj.E_irr[idx] - p.irr, traj.dE_irr[idx] - p.d_irr, 1.0 / eps)
    W_sol = corrector_W(t, traj.E_sol[idx] - p.sol, traj.dE_sol[idx] - p.d_sol, lat.omega_sol / eps)
    W_mean = corrector_W(t, traj.E_mean[idx] - p.mean, traj.dE_mean[idx] - p.d_mean, 1.0 / eps).real
    W = W_irr + W_sol + traj._const(W_mean) + W0[None]
    b = traj.B[idx] + lat.curl(W)
    w = traj.xi[idx] - W[:, None]
    return FilteredFields(t, E1, E2, W, W0, b, w)


# ----------------------------------------------------------------- amplitudes
@dataclass(frozen=True)
class CorrectorState:
    """Amplitudes of the ``+`` branch; the ``-`` branch follows by conjugation.

    ``d0`` holds spatially constant 3-vectors (values, not coefficients),
    ``d1`` irrotational and ``d2`` solenoidal vector coefficients.  Arrays
    may carry a leading time axis aligned with ``times``.
    """

    times: np.ndarray
    d0: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    lattice: Lattice

    def minus(self) -> "CorrectorState":
        """``d_-(k) = conj(d_+(-k))``; for ``d0`` the plain conjugate."""
        lat = self.lattice
        return CorrectorState(self.times, np.conj(self.d0), np.conj(lat.flip(self.d1)), np.conj(lat.flip(self.d2)), lat)

    def tilde(self, sign: int = 1) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(-sign i d0, -sign i d1, -sign i (1+|k|^2)^{-1/2} d2)`` of the requested branch."""
        src = self if sign == 1 else self.minus()
        f = -sign * 1j
        return f * src.d0, f * src.d1, f * src.d2 / self.lattice.omega_sol

    def at(self, i: int) -> "CorrectorState":
        return CorrectorState(np.atleast_1d(self.times)[i], self.d0[i], self.d1[i], self.d2[i], self.lattice)

    def _modulated(self, t: float, eps: float, d0p, d1p, d2p, d0m, d1m, d2m) -> np.ndarray:
        lat = self.lattice
        out = apply_T(d1p, 1, -1, t, eps) + apply_T(d1m, 1, 1, t, eps)
        out = out + apply_T(d2p, 2, -1, t, eps, lat) + apply_T(d2m, 2, 1, t, eps, lat)
        mean = apply_T(d0p, 1, -1, t, eps) + apply_T(d0m, 1, 1, t, eps)
        out = out.copy()
        out[(slice(None),) + lat.zero_index] += mean * TWO_PI**lat.dim
        return out

    def field(self, t: float, eps: float) -> np.ndarray:
        """``sum T_{j,-+} d_{j,+-}``, the modulated approximation of ``eps E_1`` at time ``t``."""
        m = self.minus()
        return self._modulated(t, eps, self.d0, self.d1, self.d2, m.d0, m.d1, m.d2)

    def corrector(self, t: float, eps: float) -> np.ndarray:
        """Same sum with the tilde amplitudes: the modulated approximation of ``W``."""
        p, m = self.tilde(1), self.tilde(-1)
        return self._modulated(t, eps, *p, *m)


def duhamel_amplitudes(traj: Trajectory) -> tuple[np.ndarray, np.ndarray, np.ndarray, tuple]:
    """``+`` branch amplitudes at every node from the stored sources (Duhamel split).

    Returns ``(a0, a1, a2, (da0, da1, da2))`` where the ``a`` are

    * ``a0 = eps/2 E_mean(0) + eps^2/(2i) dE_mean(0) + (1/2i) int_0^t q e^{-is/eps}``
    * ``a1 = eps/2 E_irr(0) + eps^2/(2i) dE_irr(0) - (k/2|k|^2) int_0^t g e^{-is/eps}``
    * ``a2 = eps/2 E_sol(0) + eps^2/(2i w) dE_sol(0) + (1/2|k|^2 w) int_0^t (k ^ h) e^{-iws/eps}``

    and the ``da`` their exact time derivatives.
    """
    eps, lat = traj.eps, traj.lattice
    t = traj.times
    if abs(t[0]) > 1e-14:
        raise ValueError("amplitudes are referred to t = 0; the trajectory must start there")
    src = traj.sources
    omega = lat.omega_sol
    k, inv_k2 = lat.kvec, lat.inv_k2
    tt = t.reshape((-1,) + (1,) * lat.dim)
    ph1 = np.exp(-1j * tt / eps)
    ph2 = np.exp(-1j * omega * tt / eps)

    C0 = oscillatory_cumulative(t, src.q, 1.0 / eps)
    a0 = eps / 2 * traj.E_mean[0] + eps**2 / 2j * traj.dE_mean[0] + C0 / 2j
    da0 = src.q * np.exp(-1j * t / eps)[:, None] / 2j

    C1 = oscillatory_cumulative(t, src.g, 1.0 / eps)
    a1 = eps / 2 * traj.E_irr[0] + eps**2 / 2j * traj.dE_irr[0] - k * (C1 * inv_k2)[:, None] / 2
    da1 = -k * (src.g * ph1 * inv_k2)[:, None] / 2

    X = _real_cross(k, src.h)
    C2 = oscillatory_cumulative(t, X, omega / eps)
    scale = inv_k2 / (2.0 * omega)
    a2 = eps / 2 * traj.E_sol[0] + eps**2 / (2j * omega) * traj.dE_sol[0] + C2 * scale
    da2 = X * ph2[:, None] * scale
    return a0, a1, a2, (da0, da1, da2)


def _real_cross(k: np.ndarray, h: np.ndarray) -> np.ndarray:
    """``k ^ h`` for a history ``h`` of shape ``(nt, 3, *S)``."""
    from .spectral_core import cross

    return cross(np.broadcast_to(k, h.shape), h, axis=1)


def demodulated_amplitudes(traj: Trajectory) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``+`` branch amplitudes read off the instantaneous fields (independent route).

    ``a = T_+[eps u/2 + eps^2 u'/(2 i w)]`` with ``w = 1`` for the mean and
    irrotational parts and ``w = sqrt(1+|k|^2)`` for the solenoidal part.
    """
    eps, lat = traj.eps, traj.lattice
    t = traj.times
    tt = t.reshape((-1,) + (1,) * (lat.dim + 1))
    a0 = np.exp(-1j * t / eps)[:, None] * (eps / 2 * traj.E_mean + eps**2 / 2j * traj.dE_mean)
    a1 = np.exp(-1j * tt / eps) * (eps / 2 * traj.E_irr + eps**2 / 2j * traj.dE_irr)
    w = lat.omega_sol
    a2 = np.exp(-1j * w * tt / eps) * (eps / 2 * traj.E_sol + eps**2 / (2j * w) * traj.dE_sol)
    return a0, a1, a2


def extract_limit_correctors(
    traj: Trajectory,
    window: float | None = None,
    starts: np.ndarray | None = None,
) -> CorrectorState:
    """Estimate ``d_{0,+}, d_{1,+}, d_{2,+}`` by forward window averages of the Duhamel amplitudes.

    ``window`` defaults to ``20 pi eps`` (ten fast periods); ``starts``
    defaults to every stored node whose window fits in the trajectory.
    """
    eps, lat = traj.eps, traj.lattice
    window = 10.0 * TWO_PI * eps if window is None else float(window)
    if not window > 0.0:
        raise ValueError("the averaging window must be positive")
    end = traj.times[-1]
    if starts is None:
        starts = traj.times[traj.times + window <= end * (1.0 + 1e-12) + 1e-12]
        if len(starts) == 0:
            raise HorizonError(f"window {window:.4g} exceeds the stored horizon {end:.4g}")
    starts = np.atleast_1d(np.asarray(starts, dtype=float))
    if np.any(starts + window > end * (1.0 + 1e-12) + 1e-12):
        raise HorizonError(f"window {window:.4g} from t = {starts.max():.4g} exceeds the horizon {end:.4g}")
    a0, a1, a2, (da0, da1, da2) = duhamel_amplitudes(traj)
    t = traj.times
    d0 = FittedHermite(t, a0, da0).window_average(starts, window)
    d1 = FittedHermite(t, a1, da1).window_average(starts, window)
    d2 = FittedHermite(t, a2, da2).window_average(starts, window)
    return CorrectorState(starts, d0, d1, d2, lat)
