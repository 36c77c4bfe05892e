"""Helmholtz split of the electric field, constraint residuals and initial-data completion."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .plasma_layers import FluidLayer, LayerStack, moments
from .spectral_core import TWO_PI, Lattice

__all__ = [
    "EMState",
    "InconsistentDataError",
    "helmholtz_decompose",
    "project_irrotational",
    "project_solenoidal",
    "complete_initial_data",
    "gauss_residual",
    "divergence_residual",
    "irrotational_from_density",
]

CONSTRAINT_RTOL = 1e-8


class InconsistentDataError(ValueError):
    """Initial data violate Gauss's law or the solenoidal constraint on ``B``."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (relative residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class EMState:
    """Electromagnetic state with its split electric field and time-derivative seeds.

    ``E_mean`` and ``dE_mean`` are spatially constant 3-vectors (values, not
    Fourier coefficients).  The seeds are the time derivatives at the instant
    the state describes; they may be ``None`` for states that do not feed a
    propagator.
    """

    E_irr: np.ndarray
    E_sol: np.ndarray
    E_mean: np.ndarray
    B: np.ndarray
    dE_irr: np.ndarray | None = None
    dE_sol: np.ndarray | None = None
    dE_mean: np.ndarray | None = None
    dB: np.ndarray | None = None

    def E(self, lattice: Lattice) -> np.ndarray:
        """Recombined electric field coefficients."""
        return self.E_irr + self.E_sol + lattice.constant(self.E_mean)

    def dE(self, lattice: Lattice) -> np.ndarray:
        if self.dE_irr is None:
            raise ValueError("state carries no time-derivative seeds")
        return self.dE_irr + self.dE_sol + lattice.constant(self.dE_mean)

    def with_seeds(self, dE_irr, dE_sol, dE_mean, dB) -> "EMState":
        return replace(self, dE_irr=dE_irr, dE_sol=dE_sol, dE_mean=dE_mean, dB=dB)


def project_irrotational(E: np.ndarray, lattice: Lattice) -> np.ndarray:
    """``k (k.E_hat) / |k|^2`` for ``k != 0`` and zero at ``k = 0``."""
    kdotE = np.sum(lattice.kvec * E, axis=-lattice.dim - 1, keepdims=True)
    return lattice.kvec * kdotE * lattice.inv_k2


def project_solenoidal(E: np.ndarray, lattice: Lattice) -> np.ndarray:
    """``E_hat - k (k.E_hat)/|k|^2`` for ``k != 0`` and zero at ``k = 0``."""
    sol = E - project_irrotational(E, lattice)
    sol[(Ellipsis, slice(None)) + lattice.zero_index] = 0.0
    return sol


def helmholtz_decompose(E: np.ndarray, lattice: Lattice) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Split ``E`` into irrotational, solenoidal and mean parts.

    The mean part is returned as the spatially constant value ``E_hat(0)/(2 pi)^d``.
    """
    E = np.asarray(E, dtype=complex)
    E_irr = project_irrotational(E, lattice)
    E_sol = project_solenoidal(E, lattice)
    E_mean = E[(slice(None),) + lattice.zero_index] / TWO_PI**lattice.dim
    return E_irr, E_sol, E_mean


def irrotational_from_density(rho_total: np.ndarray, eps: float, lattice: Lattice) -> np.ndarray:
    """Irrotational field solving ``eps^2 div E = rho - 1`` (the zero mode is ignored)."""
    return -1j * lattice.kvec * rho_total * lattice.inv_k2 / eps**2


def _relative(residual: float, scale: float) -> float:
    return residual / scale if scale > 0.0 else residual


def gauss_residual(
    E: np.ndarray, layers, eps: float, lattice: Lattice, *, relative: bool = False
) -> tuple[float, float]:
    """``(L2, max-mode)`` norms of ``eps^2 div E - (rho - 1)``.

    The L2 norm is the Parseval norm ``(2 pi)^{-d/2} (sum |c_k|^2)^{1/2}``.
    With ``relative=True`` both are divided by the same norms of ``rho - 1``
    (or returned unscaled when the plasma is exactly neutral).
    """
    if isinstance(layers, np.ndarray):
        rho = layers
    else:
        rho, _ = moments(layers, eps, lattice)
    excess = rho - lattice.constant(1.0)
    res = eps**2 * lattice.div(E) - excess
    scale = TWO_PI ** (-lattice.dim / 2.0)
    l2 = scale * float(np.sqrt(np.sum(np.abs(res) ** 2)))
    mx = float(np.max(np.abs(res)))
    if relative:
        l2 = _relative(l2, scale * float(np.sqrt(np.sum(np.abs(excess) ** 2))))
        mx = _relative(mx, float(np.max(np.abs(excess))))
    return l2, mx


def divergence_residual(B: np.ndarray, lattice: Lattice) -> float:
    """Largest ``|k . B_hat(k)|`` relative to the largest ``|k||B_hat(k)|``."""
    kdotB = np.abs(np.sum(lattice.kvec * B, axis=-lattice.dim - 1))
    scale = float(np.max(lattice.kabs * np.sqrt(np.sum(np.abs(B) ** 2, axis=-lattice.dim - 1))))
    return _relative(float(np.max(kdotB)), scale)


def complete_initial_data(
    layers: list[FluidLayer] | LayerStack,
    E0: np.ndarray,
    B0: np.ndarray,
    eps: float,
    lattice: Lattice,
    *,
    rtol: float = CONSTRAINT_RTOL,
) -> EMState:
    """Validate initial fields and attach the time-derivative seeds.

    ``dB = -curl E0`` and ``eps^2 dE = curl B0 - j(0)``, split into the
    irrotational, solenoidal and mean parts.
    """
    rho, j0 = moments(layers, eps, lattice)
    gauss, _ = gauss_residual(E0, rho, eps, lattice)
    excess = rho - lattice.constant(1.0)
    scale = max(
        TWO_PI ** (-lattice.dim / 2.0) * float(np.sqrt(np.sum(np.abs(excess) ** 2))),
        eps**2 * TWO_PI ** (-lattice.dim / 2.0) * float(np.sqrt(np.sum(lattice.k2 * np.abs(E0) ** 2))),
        1.0,
    )
    if gauss > rtol * scale:
        raise InconsistentDataError("Gauss law eps^2 div E0 = rho - 1 is violated", gauss / scale)
    divB = divergence_residual(B0, lattice)
    if divB > rtol:
        raise InconsistentDataError("initial magnetic field is not divergence free", divB)
    E_irr, E_sol, E_mean = helmholtz_decompose(E0, lattice)
    dB = -lattice.curl(E0)
    dE = (lattice.curl(B0) - j0) / eps**2
    dE_irr, dE_sol, dE_mean = helmholtz_decompose(dE, lattice)
    return EMState(E_irr, E_sol, E_mean.real, np.asarray(B0, dtype=complex), dE_irr, dE_sol, dE_mean.real, dB)
