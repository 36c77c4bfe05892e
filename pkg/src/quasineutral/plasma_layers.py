"""Monokinetic fluid layers, relativistic kinematics and velocity moments.

The plasma is a finite superposition of layers ``Theta`` with probability
weights ``mu_Theta``.  Each layer carries a density ``rho_Theta`` and a
momentum ``xi_Theta``; its velocity is ``v(xi) = xi / sqrt(1 + eps^2 |xi|^2)``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .spectral_core import Lattice, cross

__all__ = [
    "FluidLayer",
    "Epsilon",
    "LayerStack",
    "relativistic_velocity",
    "velocity_remainder_jacobian",
    "apply_remainder_jacobian",
    "moments",
    "fluid_rhs",
]


@dataclass(frozen=True)
class Epsilon:
    """Scaled Debye length, ``0 < eps <= 1``."""

    value: float

    def __post_init__(self) -> None:
        if not 0.0 < self.value <= 1.0:
            raise ValueError(f"eps must lie in (0, 1], got {self.value}")

    def __float__(self) -> float:
        return float(self.value)


@dataclass(frozen=True)
class FluidLayer:
    """One layer: weight ``mu``, density coefficients ``rho`` and momentum coefficients ``xi``."""

    weight: float
    rho: np.ndarray
    xi: np.ndarray

    def __post_init__(self) -> None:
        if not self.weight > 0.0:
            raise ValueError(f"layer weight must be positive, got {self.weight}")
        if self.xi.shape != (3,) + self.rho.shape:
            raise ValueError(f"momentum shape {self.xi.shape} does not match density {self.rho.shape}")


@dataclass(frozen=True)
class LayerStack:
    """All layers stacked along a leading axis: ``rho`` ``(L, *shape)``, ``xi`` ``(L, 3, *shape)``."""

    weights: np.ndarray
    rho: np.ndarray
    xi: np.ndarray

    @classmethod
    def from_layers(cls, layers: Sequence[FluidLayer], *, check_weights: bool = True) -> "LayerStack":
        if not layers:
            raise ValueError("at least one layer is required")
        shapes = {layer.rho.shape for layer in layers}
        if len(shapes) != 1:
            raise ValueError(f"layers live on different lattices: {sorted(shapes)}")
        weights = np.array([layer.weight for layer in layers], dtype=float)
        if check_weights and abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError(f"layer weights must sum to 1, got {weights.sum()!r}")
        rho = np.stack([np.asarray(layer.rho, dtype=complex) for layer in layers])
        xi = np.stack([np.asarray(layer.xi, dtype=complex) for layer in layers])
        return cls(weights, rho, xi)

    def layers(self) -> list[FluidLayer]:
        return [FluidLayer(float(w), r, x) for w, r, x in zip(self.weights, self.rho, self.xi)]

    def replace(self, rho: np.ndarray | None = None, xi: np.ndarray | None = None) -> "LayerStack":
        return LayerStack(self.weights, self.rho if rho is None else rho, self.xi if xi is None else xi)

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def weighted_sum(self, values: np.ndarray) -> np.ndarray:
        """``sum_Theta mu_Theta values[Theta]`` along the leading axis."""
        return np.tensordot(self.weights, values, axes=(0, 0))


def relativistic_velocity(xi: np.ndarray, eps: float, *, component_axis: int = 0, warn: bool = True) -> np.ndarray:
    """Pointwise ``v = xi / sqrt(1 + eps^2 |xi|^2)`` for physical-space vectors."""
    eps = float(eps)
    xi2 = np.sum(xi**2, axis=component_axis, keepdims=True)
    if warn and eps > 0.0 and np.max(eps**2 * xi2, initial=0.0) >= 0.5:
        warnings.warn(
            "eps^2 |xi|^2 >= 1/2 somewhere: outside the small-momentum regime of the remainder bounds",
            RuntimeWarning,
            stacklevel=2,
        )
    return xi / np.sqrt(1.0 + eps**2 * xi2)


def velocity_remainder_jacobian(xi: np.ndarray, eps: float) -> np.ndarray:
    """Jacobian of ``v(xi) - xi``: ``Id (g - 1) - eps^2 (xi xi^T) g^3`` with ``g = (1+eps^2|xi|^2)^{-1/2}``.

    ``xi`` has its components on the leading axis; the result has shape
    ``(3, 3) + xi.shape[1:]`` (or ``(n, n)`` for an ``n``-vector).
    """
    xi = np.asarray(xi, dtype=float)
    n = xi.shape[0]
    gamma = 1.0 / np.sqrt(1.0 + eps**2 * np.sum(xi**2, axis=0))
    eye = np.eye(n).reshape((n, n) + (1,) * (xi.ndim - 1))
    return eye * (gamma - 1.0) - eps**2 * (xi[:, None] * xi[None, :]) * gamma**3


def apply_remainder_jacobian(xi: np.ndarray, vec: np.ndarray, eps: float, axis: int = 0) -> np.ndarray:
    """``lambda(xi) vec`` pointwise without forming the matrix."""
    xi2 = np.sum(xi**2, axis=axis, keepdims=True)
    gamma = 1.0 / np.sqrt(1.0 + eps**2 * xi2)
    dot = np.sum(xi * vec, axis=axis, keepdims=True)
    return vec * (gamma - 1.0) - eps**2 * xi * dot * gamma**3


def _check_stack(stack: LayerStack, lattice: Lattice) -> None:
    if stack.rho.shape[1:] != lattice.shape:
        raise ValueError(f"layer lattice {stack.rho.shape[1:]} differs from {lattice.shape}")


def moments(
    layers: Sequence[FluidLayer] | LayerStack, eps: float, lattice: Lattice
) -> tuple[np.ndarray, np.ndarray]:
    """Charge density ``sum mu rho`` and current ``sum mu rho v(xi)`` as coefficients."""
    stack = layers if isinstance(layers, LayerStack) else LayerStack.from_layers(layers)
    _check_stack(stack, lattice)
    rho = stack.weighted_sum(stack.rho)
    rho_g = lattice.to_grid(stack.rho)
    v_g = relativistic_velocity(lattice.to_grid(stack.xi), eps, component_axis=1, warn=False)
    j = lattice.from_grid(stack.weighted_sum(rho_g[:, None] * v_g))
    return rho, j


def fluid_rhs(
    layer: FluidLayer | LayerStack, E: np.ndarray, B: np.ndarray, eps: float, lattice: Lattice
) -> tuple[np.ndarray, np.ndarray]:
    """Right-hand sides of ``d_t rho + div(rho v) = 0`` and ``d_t xi + (v.grad) xi = E + v ^ B``.

    Accepts a single layer or a whole stack (vectorised over layers).
    ``E`` and ``B`` are vector coefficients shared by all layers.
    """
    single = isinstance(layer, FluidLayer)
    stack = LayerStack(np.ones(1), layer.rho[None], layer.xi[None]) if single else layer
    _check_stack(stack, lattice)
    rho_g = lattice.to_grid(stack.rho)
    xi_g = lattice.to_grid(stack.xi)
    dxi_g = lattice.to_grid(_gradient_of_vector(stack.xi, lattice))
    v_g = relativistic_velocity(xi_g, eps, component_axis=1, warn=False)
    E_g = lattice.to_grid(E)
    B_g = lattice.to_grid(B)
    flux = lattice.from_grid(rho_g[:, None] * v_g)
    drho = -lattice.div(flux)
    # (v . grad) xi_i = v_j d_j xi_i ; dxi_g has shape (L, i, j, grid)
    advect = np.einsum("lj...,lij...->li...", v_g, dxi_g)
    force = E_g[None] + cross(v_g, B_g[None], axis=1)
    dxi = lattice.from_grid(force - advect)
    if single:
        return drho[0], dxi[0]
    return drho, dxi


def _gradient_of_vector(v: np.ndarray, lattice: Lattice) -> np.ndarray:
    """``d_j v_i`` as coefficients with axes ``(..., i, j, *shape)``."""
    return 1j * lattice.kvec[None] * np.expand_dims(v, axis=v.ndim - lattice.dim)
