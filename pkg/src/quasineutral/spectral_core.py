"""Fourier lattice bookkeeping, transforms and analytic norms on the torus.

Conventions
-----------
The torus is ``(R / 2 pi Z)^d`` with ``d`` in {1, 2, 3}.  A field ``g`` is
represented by the coefficients

    g_hat(k) = int g(x) exp(-i k.x) dx,        g(x) = (2 pi)^-d sum_k g_hat(k) exp(i k.x)

for ``k`` in the box ``max|k_i| <= K``.  Coefficients are stored in a
*centred* array of shape ``(2K+1,)*d`` so that index ``K`` is the zero mode.
Vector fields always carry three components (shape ``(3, 2K+1, ...)``); in
``d < 3`` the missing coordinates are ignored by derivatives, which is the
usual embedding of a planar or slab problem in three-dimensional space.

Nonlinear terms are evaluated on a padded physical grid of ``M >= 3K+1``
points per axis, which removes aliasing from quadratic products.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

__all__ = [
    "Lattice",
    "SpectralField",
    "AnalyticNormParams",
    "AnalyticNormOverflow",
    "ConfigurationError",
    "forward_transform",
    "inverse_transform",
    "spectral_derivative",
    "analytic_norm",
    "uniform_analytic_norm",
    "sobolev_norm",
]

TWO_PI = 2.0 * np.pi


class AnalyticNormOverflow(OverflowError):
    """Raised when ``delta**|k| * |g_hat|`` leaves the floating-point range."""


class ConfigurationError(ValueError):
    """Raised for parameter combinations that cannot describe a valid run."""


@dataclass(frozen=True)
class Lattice:
    """Truncated Fourier lattice ``{k in Z^d : max|k_i| <= K}`` on a 2 pi torus.

    Parameters
    ----------
    dim:
        Spatial dimension ``d`` (1, 2 or 3).
    K:
        Largest retained wavenumber per axis.
    N:
        Sampling points per axis used by :func:`forward_transform` and
        :func:`inverse_transform`; must satisfy ``N >= 2K+1``.
    M:
        Padded grid size used for products.  Defaults to ``3K+1``.
    """

    dim: int
    K: int
    N: int | None = None
    M: int | None = None

    def __post_init__(self) -> None:
        if self.dim not in (1, 2, 3):
            raise ConfigurationError(f"dimension must be 1, 2 or 3, got {self.dim}")
        if self.K < 0:
            raise ConfigurationError(f"cutoff K must be nonnegative, got {self.K}")
        if self.N is None:
            object.__setattr__(self, "N", 2 * self.K + 2)
        if self.N < 2 * self.K + 1:
            raise ConfigurationError(f"N={self.N} < 2K+1={2 * self.K + 1}: modes would alias")
        if self.M is None:
            object.__setattr__(self, "M", max(3 * self.K + 1, self.N))
        if self.M < 2 * self.K + 1:
            raise ConfigurationError(f"padded size M={self.M} < 2K+1")

    # ------------------------------------------------------------------ modes
    @property
    def shape(self) -> tuple[int, ...]:
        return (2 * self.K + 1,) * self.dim

    @property
    def n_modes(self) -> int:
        return (2 * self.K + 1) ** self.dim

    @property
    def zero_index(self) -> tuple[int, ...]:
        return (self.K,) * self.dim

    @cached_property
    def kvec(self) -> np.ndarray:
        """Wavevectors, shape ``(3, *shape)``; components beyond ``dim`` are zero."""
        axis = np.arange(-self.K, self.K + 1, dtype=float)
        grids = np.meshgrid(*([axis] * self.dim), indexing="ij")
        out = np.zeros((3,) + self.shape)
        for i, g in enumerate(grids):
            out[i] = g
        out.setflags(write=False)
        return out

    @cached_property
    def k2(self) -> np.ndarray:
        k2 = np.sum(self.kvec**2, axis=0)
        k2.setflags(write=False)
        return k2

    @cached_property
    def kabs(self) -> np.ndarray:
        kabs = np.sqrt(self.k2)
        kabs.setflags(write=False)
        return kabs

    @cached_property
    def inv_k2(self) -> np.ndarray:
        """``1/|k|^2`` with the zero mode set to 0."""
        with np.errstate(divide="ignore"):
            out = np.where(self.k2 > 0, 1.0 / np.where(self.k2 > 0, self.k2, 1.0), 0.0)
        out.setflags(write=False)
        return out

    @cached_property
    def omega_sol(self) -> np.ndarray:
        """Light-wave dispersion factor ``sqrt(1 + |k|^2)``."""
        out = np.sqrt(1.0 + self.k2)
        out.setflags(write=False)
        return out

    @cached_property
    def integer_modes(self) -> np.ndarray:
        """Integer wavevectors, shape ``(n_modes, dim)`` in C order of the box."""
        axis = np.arange(-self.K, self.K + 1)
        grids = np.meshgrid(*([axis] * self.dim), indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    def index_of(self, k: Sequence[int]) -> tuple[int, ...]:
        """Array index of integer mode ``k`` (length ``dim``)."""
        k = tuple(int(v) for v in k)
        if len(k) != self.dim or any(abs(v) > self.K for v in k):
            raise IndexError(f"mode {k} outside lattice (dim={self.dim}, K={self.K})")
        return tuple(v + self.K for v in k)

    def flip(self, coeffs: np.ndarray) -> np.ndarray:
        """Return ``c(-k)`` for an array whose trailing axes are the mode box."""
        axes = tuple(range(coeffs.ndim - self.dim, coeffs.ndim))
        return np.flip(coeffs, axis=axes)

    def hermitian_part(self, coeffs: np.ndarray) -> np.ndarray:
        """Project onto coefficients of real fields: ``(c(k) + conj c(-k)) / 2``."""
        return 0.5 * (coeffs + np.conj(self.flip(coeffs)))

    def zeros(self, rank: int = 0, lead: tuple[int, ...] = ()) -> np.ndarray:
        return np.zeros(lead + (3,) * rank + self.shape, dtype=complex)

    # ---------------------------------------------------------- grid mapping
    def _embed_index(self, size: int) -> tuple[np.ndarray, ...]:
        idx = np.arange(-self.K, self.K + 1) % size
        return np.ix_(*([idx] * self.dim))

    def to_grid(self, coeffs: np.ndarray, size: int | None = None) -> np.ndarray:
        """Evaluate ``(2 pi)^-d sum_k c(k) e^{ik.x}`` on a ``size^d`` grid.

        Leading axes of ``coeffs`` are carried through.  The real part is
        returned; callers only evaluate coefficients of real fields.
        """
        size = self.M if size is None else size
        lead = coeffs.shape[: coeffs.ndim - self.dim]
        full = np.zeros(lead + (size,) * self.dim, dtype=complex)
        full[(Ellipsis,) + self._embed_index(size)] = coeffs
        axes = tuple(range(-self.dim, 0))
        vals = np.fft.ifftn(full, axes=axes) * (size**self.dim / TWO_PI**self.dim)
        return vals.real

    def from_grid(self, values: np.ndarray, size: int | None = None) -> np.ndarray:
        """Trapezoidal Fourier coefficients of real grid data, truncated to the box."""
        size = self.M if size is None else size
        if values.shape[-self.dim :] != (size,) * self.dim:
            raise ValueError(
                f"grid shape {values.shape[-self.dim:]} does not match {(size,) * self.dim}"
            )
        axes = tuple(range(-self.dim, 0))
        full = np.fft.fftn(values, axes=axes) * (TWO_PI / size) ** self.dim
        coeffs = full[(Ellipsis,) + self._embed_index(size)]
        return self.hermitian_part(coeffs)

    def grid_points(self, size: int | None = None) -> np.ndarray:
        """Physical coordinates, shape ``(dim, size, ..., size)``."""
        size = self.N if size is None else size
        x = TWO_PI * np.arange(size) / size
        return np.stack(np.meshgrid(*([x] * self.dim), indexing="ij"))

    # ------------------------------------------------------ differentiation
    def grad(self, f: np.ndarray) -> np.ndarray:
        """Gradient of scalar coefficients ``(..., *shape) -> (..., 3, *shape)``."""
        return 1j * self.kvec * np.expand_dims(f, axis=f.ndim - self.dim)

    def div(self, v: np.ndarray) -> np.ndarray:
        """Divergence of vector coefficients ``(..., 3, *shape) -> (..., *shape)``."""
        return 1j * np.sum(self.kvec * v, axis=-self.dim - 1)

    def curl(self, v: np.ndarray) -> np.ndarray:
        """Curl ``i k ^ v`` of vector coefficients (component axis ``-dim-1``)."""
        return 1j * cross(np.broadcast_to(self.kvec, v.shape), v, axis=-self.dim - 1)

    def laplacian(self, f: np.ndarray) -> np.ndarray:
        return -self.k2 * f

    def mean_value(self, coeffs: np.ndarray) -> np.ndarray:
        """Spatial mean ``c(0) / (2 pi)^d`` (real part)."""
        return coeffs[(Ellipsis,) + self.zero_index].real / TWO_PI**self.dim

    def constant(self, value: float | np.ndarray) -> np.ndarray:
        """Coefficients of a spatially constant scalar or vector."""
        value = np.asarray(value, dtype=complex)
        out = np.zeros(value.shape + self.shape, dtype=complex)
        out[(Ellipsis,) + self.zero_index] = value * TWO_PI**self.dim
        return out

    def product(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """De-aliased pointwise product of two real fields (broadcasting leading axes)."""
        return self.from_grid(self.to_grid(a) * self.to_grid(b))


def cross(a: np.ndarray, b: np.ndarray, axis: int = 0) -> np.ndarray:
    """Cross product along ``axis`` that works for complex arrays of any rank."""
    a = np.moveaxis(a, axis, 0)
    b = np.moveaxis(b, axis, 0)
    out = np.stack(
        [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
    )
    return np.moveaxis(out, 0, axis)


@dataclass(frozen=True)
class SpectralField:
    """Fourier coefficients of a scalar (rank 0) or vector (rank 1) field."""

    lattice: Lattice
    coeffs: np.ndarray
    real: bool = True

    def __post_init__(self) -> None:
        coeffs = np.asarray(self.coeffs, dtype=complex)
        rank = coeffs.ndim - self.lattice.dim
        if rank not in (0, 1) or coeffs.shape[rank:] != self.lattice.shape:
            raise ValueError(
                f"coefficient shape {coeffs.shape} incompatible with lattice {self.lattice.shape}"
            )
        if rank == 1 and coeffs.shape[0] != 3:
            raise ValueError("vector fields carry exactly three components")
        if not np.all(np.isfinite(coeffs)):
            raise ValueError("spectral field has non-finite coefficients")
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def rank(self) -> int:
        return self.coeffs.ndim - self.lattice.dim

    def is_hermitian(self, atol: float = 0.0) -> bool:
        c = self.coeffs
        return bool(np.max(np.abs(c - np.conj(self.lattice.flip(c))), initial=0.0) <= atol)

    def __add__(self, other: SpectralField) -> SpectralField:
        return SpectralField(self.lattice, self.coeffs + other.coeffs, self.real and other.real)

    def __sub__(self, other: SpectralField) -> SpectralField:
        return SpectralField(self.lattice, self.coeffs - other.coeffs, self.real and other.real)

    def __mul__(self, scalar: float) -> SpectralField:
        return SpectralField(self.lattice, self.coeffs * scalar, self.real and np.isrealobj(scalar))

    __rmul__ = __mul__


@dataclass(frozen=True)
class AnalyticNormParams:
    """Parameters of the uniform-in-time analytic norm.

    ``delta0 > 1`` is the initial analyticity radius, ``beta`` in (0, 1) the
    weight exponent on the gradient, ``eta`` the time horizon and
    ``n_delta`` the number of points of the delta grid used for the sup.
    """

    delta0: float = 1.5
    beta: float = 0.5
    eta: float = 0.05
    n_delta: int = 64

    def __post_init__(self) -> None:
        if not self.delta0 > 1.0:
            raise ConfigurationError(f"delta0 must exceed 1, got {self.delta0}")
        if not 0.0 < self.beta < 1.0:
            raise ConfigurationError(f"beta must lie in (0, 1), got {self.beta}")
        if not self.eta > 0.0:
            raise ConfigurationError(f"eta must be positive, got {self.eta}")
        if self.n_delta < 2:
            raise ConfigurationError("the delta grid needs at least two points")

    def delta_grid(self) -> np.ndarray:
        """Points spanning ``(1, delta0]`` (the open end at 1 is excluded)."""
        return 1.0 + (self.delta0 - 1.0) * np.arange(1, self.n_delta + 1) / self.n_delta


# ---------------------------------------------------------------- transforms
def forward_transform(samples: np.ndarray, lattice: Lattice) -> SpectralField:
    """Trapezoidal Fourier coefficients of real samples on the ``N^d`` grid.

    ``samples`` has shape ``(N,)*d`` for a scalar or ``(3, N, ...)`` for a vector.
    """
    samples = np.asarray(samples, dtype=float)
    spatial = samples.shape[samples.ndim - lattice.dim :]
    if spatial != (lattice.N,) * lattice.dim or samples.ndim - lattice.dim not in (0, 1):
        raise ValueError(
            f"expected samples of shape (N,)*d or (3,) + (N,)*d with N={lattice.N}, "
            f"got {samples.shape}"
        )
    return SpectralField(lattice, lattice.from_grid(samples, lattice.N), real=True)


def inverse_transform(field: SpectralField) -> np.ndarray:
    """Grid values ``(2 pi)^-d sum_k g_hat(k) e^{ik.x}`` on the ``N^d`` grid."""
    lat = field.lattice
    if field.real:
        return lat.to_grid(field.coeffs, lat.N)
    lead = field.coeffs.shape[: field.rank]
    full = np.zeros(lead + (lat.N,) * lat.dim, dtype=complex)
    full[(Ellipsis,) + lat._embed_index(lat.N)] = field.coeffs
    axes = tuple(range(-lat.dim, 0))
    return np.fft.ifftn(full, axes=axes) * (lat.N**lat.dim / TWO_PI**lat.dim)


def spectral_derivative(field: SpectralField, axis: int) -> SpectralField:
    """Partial derivative along ``axis`` (multiplication by ``i k_axis``)."""
    lat = field.lattice
    if not 0 <= axis < lat.dim:
        raise ValueError(f"axis {axis} out of range for dimension {lat.dim}")
    return SpectralField(lat, 1j * lat.kvec[axis] * field.coeffs, field.real)


# --------------------------------------------------------------------- norms
def _coeff_moduli(field: SpectralField | np.ndarray, lattice: Lattice | None) -> tuple[np.ndarray, Lattice]:
    if isinstance(field, SpectralField):
        return np.abs(field.coeffs), field.lattice
    if lattice is None:
        raise ValueError("a lattice is required when passing raw coefficients")
    return np.abs(np.asarray(field)), lattice


def analytic_norm(field: SpectralField | np.ndarray, delta: float, lattice: Lattice | None = None) -> float:
    """``sum_k delta^{|k|} |g_hat(k)|`` with the Euclidean ``|k|``.

    Vector fields contribute the moduli of all components.  Leading axes
    other than the component axis are summed as well.
    """
    if not delta > 1.0:
        raise ValueError(f"delta must exceed 1, got {delta}")
    mod, lat = _coeff_moduli(field, lattice)
    with np.errstate(over="ignore", invalid="ignore"):
        weight = np.power(float(delta), lat.kabs)
        total = float(np.sum(mod * weight))
    if not math.isfinite(total):
        raise AnalyticNormOverflow(
            f"analytic norm overflows at delta={delta}: delta^(K sqrt d)={delta ** (lat.K * math.sqrt(lat.dim)):.3e}"
        )
    return total


def _norm_table(history: np.ndarray, lat: Lattice, deltas: np.ndarray) -> np.ndarray:
    """``|g(t_n)|_delta`` for every time slice and delta, shape ``(nt, nd)``."""
    mod = np.abs(history).reshape(history.shape[0], -1, lat.n_modes)
    mod = mod.sum(axis=1)
    with np.errstate(over="ignore", invalid="ignore"):
        weights = np.power(deltas[:, None], lat.kabs.ravel()[None, :])
        table = mod @ weights.T
    if not np.all(np.isfinite(table)):
        raise AnalyticNormOverflow("uniform analytic norm overflows on the delta grid")
    return table


def uniform_norm_terms(
    history: np.ndarray, times: np.ndarray, lattice: Lattice, params: AnalyticNormParams
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Tabulate ``|g(t)|_delta``, ``|grad g(t)|_delta`` and the weight ``delta0-delta-t/eta``.

    Returns ``(value, grad, gap, deltas)`` with tables of shape ``(nt, n_delta)``.
    ``gap`` is negative outside the admissible set.
    """
    history = np.asarray(history)
    times = np.asarray(times, dtype=float)
    if history.shape[0] != times.shape[0]:
        raise ValueError("history and time grid lengths differ")
    deltas = params.delta_grid()
    value = _norm_table(history, lattice, deltas)
    grads = 1j * lattice.kvec[: lattice.dim][(slice(None),) + (None,) * (history.ndim - lattice.dim)]
    grad_hist = np.moveaxis(grads * history[None], 0, 1)
    grad = _norm_table(grad_hist, lattice, deltas)
    gap = params.delta0 - deltas[None, :] - times[:, None] / params.eta
    return value, grad, gap, deltas


def uniform_analytic_norm(
    history: np.ndarray | Sequence[SpectralField],
    times: np.ndarray,
    params: AnalyticNormParams,
    lattice: Lattice | None = None,
) -> float:
    """Discretised sup over ``{(t, delta): 1 < delta <= delta0, delta0 - delta - t/eta >= 0}``
    of ``|g(t)|_delta + (delta0 - delta - t/eta)^beta |grad g(t)|_delta``.

    ``history`` is an array with a leading time axis (or a sequence of
    :class:`SpectralField`); the gradient norm sums ``|k_i g_hat|`` over axes.
    """
    if not isinstance(history, np.ndarray):
        fields = list(history)
        lattice = fields[0].lattice
        history = np.stack([f.coeffs for f in fields])
    if lattice is None:
        raise ValueError("a lattice is required when passing raw coefficients")
    value, grad, gap, _ = uniform_norm_terms(history, times, lattice, params)
    admissible = gap >= 0.0
    if not np.any(admissible):
        raise ConfigurationError(
            "empty admissible set: every sampled (t, delta) violates delta0 - delta - t/eta >= 0; "
            "check eta against the time grid"
        )
    total = value + np.power(np.where(admissible, gap, 0.0), params.beta) * grad
    return float(np.max(np.where(admissible, total, -np.inf)))


def sobolev_norm(coeffs: np.ndarray, lattice: Lattice, s: float = 1.0) -> float:
    """``(sum_k (1+|k|^2)^s |g_hat(k)|^2)^{1/2}`` summed over leading axes."""
    weight = (1.0 + lattice.k2) ** s
    return float(np.sqrt(np.sum(weight * np.abs(coeffs) ** 2)))
