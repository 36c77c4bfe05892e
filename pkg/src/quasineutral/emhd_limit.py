"""The quasineutral limit: electron MHD, resonance sets and the corrector amplitude equations.

Limit system (one fluid per layer, ``sum mu rho = 1``)::

    d_t rho + div(rho w) = 0
    d_t w + (w . grad) w = E + w ^ B
    d_t B = -curl E,        curl B = j = sum mu rho w

``E`` is not prognostic.  Differentiating ``curl B = j`` in time and using
the momentum equation gives ``E + curl curl E = F`` with
``F = div(sum mu rho w w) - j ^ B``, i.e. per mode ``E_irr = F_irr``,
``E_sol = F_sol / (1 + |k|^2)`` and ``E_mean = F_mean``.  The ``k = 0``
row is the spatial mean of the momentum balance.
"""
from __future__ import annotations

import functools
import json
import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .field_decomposition import divergence_residual, helmholtz_decompose
from .plasma_layers import LayerStack, _gradient_of_vector
from .spectral_core import TWO_PI, Lattice, cross

__all__ = [
    "ConstraintViolation",
    "EmhdState",
    "EmhdTrajectory",
    "emhd_rhs",
    "diagnose_E",
    "emhd_simulate",
    "limit_initial_data",
    "limit_corrector_initial",
    "ResonanceSet",
    "resonance_set",
    "in_resonance",
    "resonance_mask",
    "CorrectorSystem",
    "corrector_rhs",
    "corrector_evolve",
]

CONSTRAINT_TOL = 1e-6


class ConstraintViolation(RuntimeError):
    """Quasineutrality or ``curl B = j`` drifted beyond tolerance."""

    def __init__(self, message: str, time: float, residual: float):
        super().__init__(f"{message} at t = {time:.6g} (residual {residual:.3e})")
        self.time = time
        self.residual = residual


@dataclass(frozen=True)
class EmhdState:
    """Layers ``(rho, w)`` and the magnetic field; ``E`` is diagnosed on demand."""

    weights: np.ndarray
    rho: np.ndarray
    w: np.ndarray
    B: np.ndarray

    def current(self, lattice: Lattice) -> np.ndarray:
        """``sum mu rho w`` (de-aliased)."""
        rho_g = lattice.to_grid(self.rho)
        w_g = lattice.to_grid(self.w)
        return lattice.from_grid(np.tensordot(self.weights, rho_g[:, None] * w_g, axes=(0, 0)))

    def constraint_residuals(self, lattice: Lattice) -> dict[str, float]:
        """Relative quasineutrality and Ampere residuals and the divergence of ``B``."""
        lat = lattice
        total = np.tensordot(self.weights, self.rho, axes=(0, 0))
        neutral = float(np.max(np.abs(total - lat.constant(1.0)))) / TWO_PI**lat.dim
        j = self.current(lat)
        curlB = lat.curl(self.B)
        scale = max(float(np.max(np.abs(j))), float(np.max(np.abs(curlB))), 1e-300)
        ampere = float(np.max(np.abs(curlB - j))) / scale if scale > 1e-300 else 0.0
        return {"quasineutrality": neutral, "ampere": ampere, "divB": divergence_residual(self.B, lat)}


def _pieces(state: EmhdState, lattice: Lattice):
    """Everything in the momentum and continuity updates except ``E``."""
    lat = lattice
    rho_g = lat.to_grid(state.rho)
    w_g = lat.to_grid(state.w)
    B_g = lat.to_grid(state.B)
    drho = -lat.div(lat.from_grid(rho_g[:, None] * w_g))
    grad_w = lat.to_grid(_gradient_of_vector(state.w, lat))
    advect = np.einsum("lj...,lij...->li...", w_g, grad_w)
    force = lat.from_grid(cross(w_g, B_g[None], axis=1) - advect)
    return drho, force, rho_g, w_g


def _closure(state: EmhdState, lattice: Lattice, drho, force, rho_g, w_g) -> np.ndarray:
    lat = lattice
    # d/dt j without the E contribution, built from the same de-aliased products as the update
    drho_g = lat.to_grid(drho)
    force_g = lat.to_grid(force)
    A = lat.from_grid(np.tensordot(state.weights, drho_g[:, None] * w_g + rho_g[:, None] * force_g, axes=(0, 0)))
    F_irr, F_sol, F_mean = helmholtz_decompose(-A, lat)
    return F_irr + F_sol / lat.omega_sol**2 + lat.constant(F_mean.real)


def diagnose_E(state: EmhdState, lattice: Lattice) -> np.ndarray:
    """Electric field closing the limit system.

    ``F = -(d/dt j)|_{E=0}`` is assembled from the de-aliased continuity and
    momentum terms, which in the continuum equals
    ``div(sum mu rho w w) - j ^ B``; then ``E + curl curl E = F`` per mode.
    Using the discrete terms keeps ``curl B - j`` stationary under the
    truncated dynamics rather than only in the continuum.
    """
    return _closure(state, lattice, *_pieces(state, lattice))


def emhd_rhs(state: EmhdState, lattice: Lattice) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """``(d rho/dt, d w/dt, d B/dt, E)`` for the limit system; products de-aliased."""
    lat = lattice
    drho, force, rho_g, w_g = _pieces(state, lat)
    E = _closure(state, lat, drho, force, rho_g, w_g)
    dw = force + E[None]
    dB = -lat.curl(E)
    return drho, dw, dB, E


@dataclass(frozen=True)
class EmhdTrajectory:
    times: np.ndarray
    weights: np.ndarray
    rho: np.ndarray
    w: np.ndarray
    B: np.ndarray
    E: np.ndarray
    lattice: Lattice
    residuals: list[dict[str, float]] = field(default_factory=list)

    def state(self, i: int) -> EmhdState:
        return EmhdState(self.weights, self.rho[i], self.w[i], self.B[i])

    def current(self) -> np.ndarray:
        return np.stack([self.state(i).current(self.lattice) for i in range(len(self.times))])

    def interpolator(self):
        """Cubic-spline interpolants ``t -> (rho, w, B, j)`` for sampling between nodes."""
        from scipy.interpolate import CubicSpline

        j = self.current()
        splines = [CubicSpline(self.times, a, axis=0) for a in (self.rho, self.w, self.B, j)]
        return lambda t: tuple(s(t) for s in splines)


def emhd_simulate(
    initial: EmhdState,
    lattice: Lattice,
    T: float,
    dt: float,
    *,
    tol: float = CONSTRAINT_TOL,
    check_every: int = 1,
) -> EmhdTrajectory:
    """Classical RK4 for the limit system on ``[0, T]`` (``T`` may be negative).

    Raises :class:`ConstraintViolation` if the constraints fail at ``t = 0``
    or drift beyond ``tol`` during the run.
    """
    lat = lattice
    res0 = initial.constraint_residuals(lat)
    for name, value in res0.items():
        if value > tol:
            raise ConstraintViolation(f"initial data violate {name}", 0.0, value)
    n = int(math.ceil(abs(T) / dt - 1e-9)) if T != 0 else 0
    h = T / n if n else 0.0
    weights = initial.weights
    rho, w, B = initial.rho, initial.w, initial.B
    times, rhos, ws, Bs, Es, residuals = [0.0], [rho], [w], [B], [], [res0]

    def f(r, v, b):
        return emhd_rhs(EmhdState(weights, r, v, b), lat)

    for i in range(1, n + 1):
        k1 = f(rho, w, B)
        if i == 1:
            Es.append(k1[3])
        k2 = f(rho + 0.5 * h * k1[0], w + 0.5 * h * k1[1], B + 0.5 * h * k1[2])
        k3 = f(rho + 0.5 * h * k2[0], w + 0.5 * h * k2[1], B + 0.5 * h * k2[2])
        k4 = f(rho + h * k3[0], w + h * k3[1], B + h * k3[2])
        rho = rho + h / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        w = w + h / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        B = B + h / 6.0 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
        t = i * h
        if not (np.all(np.isfinite(rho)) and np.all(np.isfinite(w)) and np.all(np.isfinite(B))):
            raise ConstraintViolation("non-finite e-MHD state", t, float("inf"))
        state = EmhdState(weights, rho, w, B)
        if i % check_every == 0 or i == n:
            res = state.constraint_residuals(lat)
            residuals.append(res)
            worst = max(res, key=res.get)
            if res[worst] > tol:
                raise ConstraintViolation(f"{worst} constraint drifted", t, res[worst])
        times.append(t)
        rhos.append(rho)
        ws.append(w)
        Bs.append(B)
        Es.append(diagnose_E(state, lat))
    if not Es:
        Es.append(diagnose_E(initial, lat))
    return EmhdTrajectory(np.array(times), weights, np.stack(rhos), np.stack(ws), np.stack(Bs), np.stack(Es), lat, residuals)


def limit_initial_data(layers: LayerStack, B0: np.ndarray, lattice: Lattice) -> EmhdState:
    """``w(0) = xi(0) - W(0)`` and ``B(0) + curl W(0)`` with ``W(0)`` built from the ``eps = 0`` current."""
    from .filtering_correctors import corrector_initial

    lat = lattice
    rho_g = lat.to_grid(layers.rho)
    xi_g = lat.to_grid(layers.xi)
    j0 = lat.from_grid(np.tensordot(layers.weights, rho_g[:, None] * xi_g, axes=(0, 0)))
    W0 = corrector_initial(j0, B0, lat)
    return EmhdState(layers.weights, layers.rho, layers.xi - W0[None], B0 + lat.curl(W0))


def limit_corrector_initial(layers: LayerStack, B0: np.ndarray, lattice: Lattice):
    """Limit amplitudes at ``t = 0`` for data with ``E(0) = 0``.

    ``d_{0,+} = -mean(j0)/(2i)``, ``d_{1,+} = -j0_irr/(2i)`` and
    ``d_{2,+} = (curl B0 - j0_sol)/(2i sqrt(1+|k|^2))`` with ``j0`` the
    ``eps = 0`` current.
    """
    from .filtering_correctors import CorrectorState

    lat = lattice
    rho_g = lat.to_grid(layers.rho)
    xi_g = lat.to_grid(layers.xi)
    j0 = lat.from_grid(np.tensordot(layers.weights, rho_g[:, None] * xi_g, axes=(0, 0)))
    j_irr, j_sol, j_mean = helmholtz_decompose(j0, lat)
    d0 = -j_mean / 2j
    d1 = -j_irr / 2j
    d2 = (lat.curl(B0) - j_sol) / (2j * lat.omega_sol)
    d2[(slice(None),) + lat.zero_index] = 0.0
    return CorrectorState(np.array(0.0), d0, d1, d2, lat)


# --------------------------------------------------------------------------
# resonance sets
def _is_square(n: int) -> tuple[bool, int]:
    if n < 0:
        return False, 0
    r = math.isqrt(n)
    return r * r == n, r


def in_resonance(a: int, b: int, signs: tuple[int, int]) -> bool:
    """Exact test of ``1 + s1 sqrt(1 + a) + s2 sqrt(1 + b) = 0`` for integers ``a, b >= 0``."""
    s1, s2 = signs
    A, B = 1 + a, 1 + b
    if s1 == 1 and s2 == 1:
        return False
    if s1 == -1 and s2 == -1:
        # sqrt(A) + sqrt(B) = 1 is impossible for A, B >= 1 beyond A = B = ... >= 2
        return False
    if s1 == 1 and s2 == -1:
        # sqrt(B) = 1 + sqrt(A): forces A = m^2 and B = (m + 1)^2
        ok, m = _is_square(A)
        return ok and B == (m + 1) ** 2
    ok, m = _is_square(B)
    return ok and A == (m + 1) ** 2


def _isqrt(n: np.ndarray) -> np.ndarray:
    """Elementwise integer square root of nonnegative int64 values."""
    r = np.floor(np.sqrt(n.astype(float))).astype(np.int64)
    r = np.where(r * r > n, r - 1, r)
    return np.where((r + 1) * (r + 1) <= n, r + 1, r)


def resonance_mask(a: np.ndarray, b: np.ndarray, signs: tuple[int, int]) -> np.ndarray:
    """Vectorised :func:`in_resonance` over integer arrays ``a``, ``b``."""
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    s1, s2 = signs
    if s1 == s2:
        return np.zeros(np.broadcast_shapes(a.shape, b.shape), dtype=bool)
    A, B = 1 + a, 1 + b
    if s1 == -1:
        A, B = B, A
    m = _isqrt(A)
    return (m * m == A) & (B == (m + 1) ** 2)


@dataclass(frozen=True)
class ResonanceSet:
    """Members ``l`` of ``Omega^(kind)_{signs}(k)`` within an ``L^inf`` search radius."""

    kind: int
    signs: tuple[int, int]
    k: tuple[int, ...]
    radius: int
    members: tuple[tuple[int, ...], ...]

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "signs": list(self.signs),
            "k": list(self.k),
            "radius": self.radius,
            "members": [list(m) for m in self.members],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "ResonanceSet":
        return cls(int(d["kind"]), tuple(d["signs"]), tuple(d["k"]), int(d["radius"]), tuple(tuple(m) for m in d["members"]))


@functools.lru_cache(maxsize=8)
def _search_box(radius: int, dim: int) -> tuple[np.ndarray, np.ndarray]:
    """All ``l`` with ``|l|_inf <= radius`` and their squared lengths (read-only, cached)."""
    axis = np.arange(-radius, radius + 1, dtype=np.int64)
    grid = np.stack(np.meshgrid(*([axis] * dim), indexing="ij"), axis=-1).reshape(-1, dim)
    l2 = np.sum(grid**2, axis=1)
    grid.setflags(write=False)
    l2.setflags(write=False)
    return grid, l2


def resonance_set(kind: int, signs: tuple[int, int], k: Iterable[int], radius: int) -> ResonanceSet:
    """Enumerate ``{l : |l|_inf <= radius, 1 + s1 sqrt(1 + |a|^2) + s2 sqrt(1 + |l|^2) = 0}``.

    ``a = k - l`` for kind 1 and ``a = k`` for kind 2.  The dimension is
    the length of ``k``; membership uses integer arithmetic only.
    """
    k = tuple(int(v) for v in k)
    if kind not in (1, 2):
        raise ValueError(f"kind must be 1 or 2, got {kind}")
    if tuple(signs) not in {(1, 1), (1, -1), (-1, 1), (-1, -1)}:
        raise ValueError(f"signs must be a pair of +-1, got {signs}")
    if radius < max((abs(v) for v in k), default=0):
        raise ValueError(f"search radius {radius} is smaller than |k|_inf")
    signs = (int(signs[0]), int(signs[1]))
    if signs[0] == signs[1]:
        return ResonanceSet(kind, signs, k, radius, ())
    grid, l2 = _search_box(radius, len(k))
    k2 = sum(v * v for v in k)
    if kind == 2:
        a = np.int64(k2)
    else:
        a = k2 - 2 * (grid @ np.array(k, dtype=np.int64)) + l2
    members = tuple(tuple(int(v) for v in g) for g in grid[resonance_mask(a, l2, signs)])
    return ResonanceSet(kind, signs, k, radius, members)


# --------------------------------------------------------------------------
# corrector equations
@dataclass(frozen=True)
class _Pairs:
    """Index triples ``(k, l, k - l)`` into the flattened mode box."""

    k: np.ndarray
    l: np.ndarray
    kl: np.ndarray

    def __len__(self) -> int:
        return len(self.k)


class CorrectorSystem:
    """Right-hand sides of the ``+`` branch amplitude equations on a lattice.

    Convolutions run over precomputed pair lists: the full box, the shells
    ``|l| = |k|``, the set ``1 = {|l|^2 = 3}`` and the resonance sets
    ``Omega^(1)``, ``Omega^(2)`` (pairs with ``k - l`` outside the box are
    dropped, i.e. the sums are truncated at the lattice cutoff).

    ``d0_coupling`` selects the coefficient of ``k_i k_j j_i(k) (d_{0,+})_j``
    in the ``d_1`` equation: ``"derived"`` uses ``+2i`` (the value obtained
    by re-deriving the linear terms), ``"printed"`` uses ``-2``.
    """

    def __init__(self, lattice: Lattice, d0_coupling: str = "derived"):
        if d0_coupling not in ("derived", "printed"):
            raise ValueError("d0_coupling must be 'derived' or 'printed'")
        self.lattice = lat = lattice
        self.d0_factor = 2j if d0_coupling == "derived" else -2.0
        modes = lat.integer_modes  # (n, d)
        n = len(modes)
        self.n = n
        self.kv = lat.kvec.reshape(3, n)
        self.k2 = np.sum(modes**2, axis=1).astype(int)
        self.wt = 1.0 / np.sqrt(1.0 + self.k2)
        self.c = TWO_PI ** (-lat.dim)
        diff = modes[:, None, :] - modes[None, :, :]
        inside = np.all(np.abs(diff) <= lat.K, axis=-1)
        kl_flat = np.ravel_multi_index(tuple(np.moveaxis(np.clip(diff + lat.K, 0, 2 * lat.K), -1, 0)), lat.shape)
        ki, li = np.nonzero(inside)
        kli = kl_flat[ki, li]
        kl2 = self.k2[kli]
        self.full = _Pairs(ki, li, kli)
        sel = lambda mask: _Pairs(ki[mask], li[mask], kli[mask])  # noqa: E731
        self.shell = sel(self.k2[li] == self.k2[ki])
        self.one = sel(self.k2[li] == 3)
        self.omega1 = {}
        self.omega2 = {}
        for signs in [(1, -1), (-1, 1)]:
            r1 = resonance_mask(kl2, self.k2[li], signs)
            r2 = resonance_mask(self.k2[ki], self.k2[li], signs)
            self.omega1[signs] = sel(r1)
            self.omega2[signs] = sel(r2)
        self.k_in_one = (self.k2 == 3).astype(float)
        self.ones = np.flatnonzero(self.k2 == 3)
        self.neg = np.ravel_multi_index(tuple((-modes + lat.K).T), lat.shape)

    # helpers ---------------------------------------------------------------
    def _scatter(self, pairs: _Pairs, values: np.ndarray) -> np.ndarray:
        """Sum per-pair values (``(..., npairs)``) into their ``k`` slots."""
        out = np.zeros(values.shape[:-1] + (self.n,), dtype=complex)
        np.add.at(out, (Ellipsis, pairs.k), values)
        return out

    def _flat(self, a: np.ndarray) -> np.ndarray:
        return np.asarray(a, dtype=complex).reshape(a.shape[: a.ndim - self.lattice.dim] + (self.n,))

    def _minus(self, a: np.ndarray) -> np.ndarray:
        return np.conj(a[..., self.neg])

    def terms(self, d0, d1, d2, J, B, B_mean) -> dict[str, np.ndarray]:
        """Every right-hand-side term, keyed by equation and position.

        Keys ``"d0:*"`` give contributions to ``2i d/dt d_{0,+}``, ``"d1:*"`` to
        the scalar ``R_1(k) = -2 k . d/dt d_{1,+}`` and ``"d2:*"`` to the vector
        ``R_2(k) = -2 sqrt(1+|k|^2) k ^ d/dt d_{2,+}``.
        """
        d0p = np.asarray(d0, dtype=complex)
        d0m = np.conj(d0p)
        d1p, d2p = self._flat(d1), self._flat(d2)
        d1m, d2m = self._minus(d1p), self._minus(d2p)
        J, B = self._flat(J), self._flat(B)
        Bbar = np.asarray(B_mean, dtype=float)
        kv, wt, c = self.kv, self.wt, self.c
        dot = lambda a, b: np.sum(a * b, axis=0)  # noqa: E731
        X = lambda a, b: cross(a, b, axis=0)  # noqa: E731
        out: dict[str, np.ndarray] = {}

        # equation for d_0 (values at k = 0)
        o = self.ones
        onz = self.neg[o]  # index of -l
        out["d0:one_d2_d1"] = 1j * c**2 * np.sum(d2p[:, onz] * dot(kv[:, o], d1m[:, o]), axis=1)
        out["d0:B_mean"] = 1j * X(d0p[:, None], Bbar[:, None])[:, 0]
        full = self.full
        zero_pairs = full.k == self.neg[self.neg.size // 2]  # pairs with k = 0
        lz, klz = full.l[zero_pairs], full.kl[zero_pairs]
        out["d0:d1_B"] = 1j * c**2 * np.sum(X(d1p[:, lz], B[:, klz]), axis=1)
        out["d0:one_d1_curl_d2"] = 1j * c**2 * np.sum(X(d1m[:, onz], X(kv[:, o], d2p[:, o]) * wt[o]), axis=1)

        # equation for d_1 (scalar per mode)
        out["d1:j_d0"] = self.d0_factor * dot(kv, J) * dot(kv, d0p[:, None])
        p = self.full
        kk = kv[:, p.k]
        out["d1:j_d1"] = 2j * c * self._scatter(p, dot(kk, J[:, p.kl]) * dot(kk, d1p[:, p.l]))
        out["d1:one_d0_d2"] = -2.0 * self.k_in_one * dot(kv, d0m[:, None]) * dot(kv, d2p) * wt
        p = self.one
        kk = kv[:, p.k]
        out["d1:one_d1_d2"] = -2.0 * c * self._scatter(p, dot(kk, d1m[:, p.kl]) * wt[p.l] * dot(kk, d2p[:, p.l]))
        p = self.omega1[(1, -1)]
        kk = kv[:, p.k]
        out["d1:omega1_d2_d2"] = -2.0 * c * self._scatter(
            p, wt[p.kl] * dot(kk, d2m[:, p.kl]) * wt[p.l] * dot(kk, d2p[:, p.l])
        )
        p = self.one
        kk = kv[:, p.k]
        out["d1:one_d2_div_d1"] = c * self._scatter(p, dot(kk, d2p[:, p.l]) * dot(kk - kv[:, p.l], d1m[:, p.kl]))
        out["d1:d0_B"] = -dot(kv, X(d0p[:, None], B))
        p = self.full
        kk = kv[:, p.k]
        out["d1:d1_B"] = -c * self._scatter(p, dot(kk, X(d1p[:, p.l], B[:, p.kl])))
        out["d1:one_d0_curl_d2"] = -self.k_in_one * dot(kv, X(d0m[:, None], X(kv, d2p) * wt))
        p = self.one
        kk = kv[:, p.k]
        out["d1:one_d1_curl_d2"] = -c * self._scatter(p, dot(kk, X(d1m[:, p.kl], X(kv[:, p.l], d2p[:, p.l]) * wt[p.l])))
        total = np.zeros(self.n, dtype=complex)
        for sigma in (1, -1):
            p = self.omega1[(sigma, -sigma)]
            kk = kv[:, p.k]
            a = d2m if sigma == 1 else d2p  # d_{2,-sigma}
            b = d2p if sigma == 1 else d2m  # d_{2,sigma}
            total += self._scatter(p, wt[p.kl] * dot(kk, X(a[:, p.kl], X(kv[:, p.l], wt[p.l] * b[:, p.l]))))
        out["d1:omega1_d2_curl_d2"] = -c * total

        # equation for d_2 (vector per mode)
        p = self.shell
        kk = kv[:, p.k]
        out["d2:shell_kj_d2"] = 1j * c * X(kv, self._scatter(p, dot(kk, J[:, p.kl]) * wt[p.l] * d2p[:, p.l]))
        out["d2:shell_j_kd2"] = 1j * c * X(kv, self._scatter(p, J[:, p.kl] * wt[p.l] * dot(kk, d2p[:, p.l])))
        out["d2:one_d0_d1"] = self.k_in_one * X(kv, dot(kv, d0p[:, None]) * d1p + d0p[:, None] * dot(kv, d1p))
        p = self.full
        kk = kv[:, p.k]
        conv = self._scatter(p, dot(kk, d1p[:, p.kl]) * d1p[:, p.l])
        out["d2:one_d1_d1"] = self.k_in_one * c * X(kv, conv)
        total = np.zeros((3, self.n), dtype=complex)
        for sigma in (1, -1):
            p = self.omega2[(sigma, -sigma)]
            kk = kv[:, p.k]
            d1s = d1m if sigma == 1 else d1p  # d_{1,-sigma}
            val = wt[p.l] * (dot(kk, d2p[:, p.l]) * d1s[:, p.kl] + d2p[:, p.l] * dot(kk, d1s[:, p.kl]))
            total += sigma * self._scatter(p, val)
        out["d2:omega2_d2_d1"] = -c * X(kv, total)
        out["d2:one_d0_div_d1"] = self.k_in_one * X(kv, d0p[:, None] * dot(kv, d1p))
        p = self.full
        conv = self._scatter(p, d1p[:, p.kl] * dot(kv[:, p.l], d1p[:, p.l]))
        out["d2:one_d1_div_d1"] = self.k_in_one * c * X(kv, conv)
        total = np.zeros((3, self.n), dtype=complex)
        for sigma in (1, -1):
            p = self.omega2[(sigma, -sigma)]
            d1s = d1m if sigma == 1 else d1p
            total += self._scatter(p, d2p[:, p.l] * dot(kv[:, p.k] - kv[:, p.l], d1s[:, p.kl]))
        out["d2:omega2_d2_div_d1"] = c * X(kv, total)
        p = self.shell
        out["d2:shell_d2_B"] = -c * X(kv, self._scatter(p, X(wt[p.l] * d2p[:, p.l], B[:, p.kl])))
        out["d2:shell_j_curl_d2"] = 1j * c * X(
            kv, self._scatter(p, X(J[:, p.kl], X(kv[:, p.l], d2p[:, p.l]) * wt[p.l]))
        )
        total = np.zeros((3, self.n), dtype=complex)
        for sigma in (1, -1):
            p = self.omega2[(sigma, -sigma)]
            d1s = d1m if sigma == 1 else d1p
            total += sigma * self._scatter(p, X(d1s[:, p.kl], X(kv[:, p.l], d2p[:, p.l]) * wt[p.l]))
        out["d2:omega2_d1_curl_d2"] = -c * X(kv, total)
        return out

    def rhs(self, d0, d1, d2, J, B, B_mean, *, check: bool = True):
        """Time derivatives ``(d0', d1', d2')`` of the ``+`` branch amplitudes."""
        lat = self.lattice
        if check:
            d2f = self._flat(d2)
            kdot = np.abs(np.sum(self.kv * d2f, axis=0))
            scale = max(float(np.max(np.abs(d2f))), 1e-300)
            if float(np.max(kdot)) > 1e-10 * max(scale, 1.0) * max(lat.K, 1):
                raise ValueError("d2 must be solenoidal (k . d2(k) = 0)")
        t = self.terms(d0, d1, d2, J, B, B_mean)
        R0 = sum(v for key, v in t.items() if key.startswith("d0:"))
        R1 = sum(v for key, v in t.items() if key.startswith("d1:"))
        R2 = sum(v for key, v in t.items() if key.startswith("d2:"))
        inv_k2 = np.where(self.k2 > 0, 1.0 / np.maximum(self.k2, 1), 0.0)
        dd0 = R0 / 2j
        dd1 = -self.kv * R1 * inv_k2 / 2.0
        dd2 = cross(self.kv, R2, axis=0) * inv_k2 * self.wt / 2.0
        shape = (3,) + lat.shape
        return dd0, dd1.reshape(shape), dd2.reshape(shape)


def corrector_rhs(system: CorrectorSystem, state, background: tuple[np.ndarray, np.ndarray, np.ndarray]):
    """``d/dt`` of a :class:`~quasineutral.filtering_correctors.CorrectorState` given ``(j, B, mean B)``."""
    J, B, B_mean = background
    return system.rhs(state.d0, state.d1, state.d2, J, B, B_mean)


def corrector_evolve(initial, background: EmhdTrajectory, times: np.ndarray, *, d0_coupling: str = "derived"):
    """March the amplitude equations with classical RK4 between the given output times.

    The background ``(j, B)`` is sampled from cubic splines through the
    e-MHD trajectory; the mean of ``B`` is that of the initial field.
    """
    from .filtering_correctors import CorrectorState

    lat = background.lattice
    system = CorrectorSystem(lat, d0_coupling)
    interp = background.interpolator()
    B_mean = background.B[0][(slice(None),) + lat.zero_index].real / TWO_PI**lat.dim
    times = np.asarray(times, dtype=float)
    if times[0] < background.times[0] - 1e-12 or times[-1] > background.times[-1] + 1e-12:
        raise ValueError("corrector output times leave the background trajectory")
    dt_bg = float(np.min(np.diff(background.times))) if len(background.times) > 1 else 1.0

    def f(t, y):
        _, _, Bt, Jt = interp(t)
        return system.rhs(y[0], y[1], y[2], Jt, Bt, B_mean, check=False)

    y = (np.asarray(initial.d0, complex), np.asarray(initial.d1, complex), np.asarray(initial.d2, complex))
    out = [y]
    for t0, t1 in zip(times[:-1], times[1:]):
        n = max(1, int(math.ceil((t1 - t0) / dt_bg - 1e-9)))
        h = (t1 - t0) / n
        t = t0
        for _ in range(n):
            k1 = f(t, y)
            k2 = f(t + h / 2, tuple(a + h / 2 * b for a, b in zip(y, k1)))
            k3 = f(t + h / 2, tuple(a + h / 2 * b for a, b in zip(y, k2)))
            k4 = f(t + h, tuple(a + h * b for a, b in zip(y, k3)))
            y = tuple(a + h / 6 * (b1 + 2 * b2 + 2 * b3 + b4) for a, b1, b2, b3, b4 in zip(y, k1, k2, k3, k4))
            t += h
        out.append(y)
    return CorrectorState(times, np.stack([o[0] for o in out]), np.stack([o[1] for o in out]), np.stack([o[2] for o in out]), lat)
