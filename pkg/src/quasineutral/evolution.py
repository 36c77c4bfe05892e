"""Time integration of the coupled fluid-Maxwell system.

Two solvers share the same state representation:

* :func:`simulate` marches :func:`step`, a Strang splitting of the fluid
  transport (classical RK4) and the transverse Maxwell dynamics (solved
  exactly per mode with the current frozen).  The irrotational field is
  slaved to the density through Gauss's law, so the plasma oscillation is
  carried by the fluid stages and the constraint holds to rounding.
* :func:`picard_iterate` builds the solution on a short interval ``[0, eta]``
  as the limit of the linear iterates in which density and ``w = xi - G`` are
  transported by frozen previous data while ``G = int E`` is given by the
  double Duhamel formulas.  Time integrals use Chebyshev spectral quadrature.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .field_decomposition import (
    EMState,
    complete_initial_data,
    divergence_residual,
    gauss_residual,
    helmholtz_decompose,
    irrotational_from_density,
)
from .oscillatory_maxwell import SourceHistory, SourceTerms, maxwell_substep, propagate_fields, source_terms
from .plasma_layers import LayerStack, fluid_rhs, moments
from .quadrature import FittedHermite, chebyshev_kernels, chebyshev_nodes, cumulative_integration_matrix
from .spectral_core import (
    TWO_PI,
    AnalyticNormOverflow,
    AnalyticNormParams,
    ConfigurationError,
    Lattice,
    uniform_analytic_norm,
)

__all__ = [
    "BlowUpError",
    "InitialData",
    "SystemState",
    "Trajectory",
    "IterationReport",
    "step",
    "simulate",
    "picard_iterate",
    "complete_state",
]


class BlowUpError(RuntimeError):
    """The solution left the floating-point range."""

    def __init__(self, time: float, what: str = "state"):
        super().__init__(f"non-finite {what} at t = {time:.6g}")
        self.time = time


@dataclass(frozen=True)
class InitialData:
    """Lattice, ``eps`` and consistent initial layers and fields."""

    lattice: Lattice
    eps: float
    layers: LayerStack
    E0: np.ndarray
    B0: np.ndarray

    def __post_init__(self) -> None:
        if not 0.0 < self.eps <= 1.0:
            raise ConfigurationError(f"eps must lie in (0, 1], got {self.eps}")

    def seeds(self) -> EMState:
        """Split fields with their time derivatives (validates the constraints)."""
        return complete_initial_data(self.layers, self.E0, self.B0, self.eps, self.lattice)


@dataclass(frozen=True)
class SystemState:
    """Layers plus electromagnetic state (with seeds) at time ``t``."""

    t: float
    layers: LayerStack
    em: EMState

    @classmethod
    def initial(cls, data: InitialData) -> "SystemState":
        return cls(0.0, data.layers, data.seeds())


def complete_state(
    t: float, layers: LayerStack, E_sol, E_mean, B, eps: float, lattice: Lattice
) -> SystemState:
    """Rebuild the slaved ``E_irr`` and the Ampere/Faraday seeds from prognostic fields."""
    rho, j = moments(layers, eps, lattice)
    E_irr = irrotational_from_density(rho, eps, lattice)
    E_mean = np.asarray(E_mean, dtype=float)
    E = E_irr + E_sol + lattice.constant(E_mean)
    dE = (lattice.curl(B) - j) / eps**2
    dE_irr, dE_sol, dE_mean = helmholtz_decompose(dE, lattice)
    em = EMState(E_irr, E_sol, E_mean, B, dE_irr, dE_sol, dE_mean.real, -lattice.curl(E))
    return SystemState(t, layers, em)


# --------------------------------------------------------------------------
# splitting integrator
def _fluid_advance(
    layers: LayerStack, E_sol: np.ndarray, E_mean: np.ndarray, B: np.ndarray, eps: float, lat: Lattice, dt: float
) -> LayerStack:
    """Classical RK4 on the fluid equations with ``E_sol``, ``E_mean``, ``B`` frozen."""
    E_frozen = E_sol + lat.constant(E_mean)

    def rhs(rho: np.ndarray, xi: np.ndarray):
        E = irrotational_from_density(layers.weighted_sum(rho), eps, lat) + E_frozen
        return fluid_rhs(layers.replace(rho, xi), E, B, eps, lat)

    r0, x0 = layers.rho, layers.xi
    k1 = rhs(r0, x0)
    k2 = rhs(r0 + 0.5 * dt * k1[0], x0 + 0.5 * dt * k1[1])
    k3 = rhs(r0 + 0.5 * dt * k2[0], x0 + 0.5 * dt * k2[1])
    k4 = rhs(r0 + dt * k3[0], x0 + dt * k3[1])
    rho = r0 + dt / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
    xi = x0 + dt / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
    return layers.replace(rho, xi)


def step(state: SystemState, dt: float, eps: float, lattice: Lattice) -> SystemState:
    """Advance one Strang step: half fluid, full Maxwell, half fluid.

    Raises :class:`BlowUpError` when the new state is not finite.
    """
    if not dt > 0.0:
        raise ValueError(f"time step must be positive, got {dt}")
    lat = lattice
    em = state.em
    layers = _fluid_advance(state.layers, em.E_sol, em.E_mean, em.B, eps, lat, 0.5 * dt)
    _, j = moments(layers, eps, lat)
    E_sol, E_mean, B = maxwell_substep(em.E_sol, em.E_mean, em.B, j, eps, dt, lat)
    layers = _fluid_advance(layers, E_sol, E_mean, B, eps, lat, 0.5 * dt)
    t = state.t + dt
    if not (np.all(np.isfinite(layers.rho)) and np.all(np.isfinite(layers.xi)) and np.all(np.isfinite(B))):
        raise BlowUpError(t)
    return complete_state(t, layers, E_sol, E_mean, B, eps, lat)


# --------------------------------------------------------------------------
# trajectories
@dataclass(frozen=True)
class Trajectory:
    """Stored states on a time grid with the accumulated ``G = int_0^t E`` and the sources.

    Array layouts (``nt`` time nodes, ``L`` layers, ``S`` the mode box):
    ``rho`` ``(nt, L, *S)``, ``xi`` ``(nt, L, 3, *S)``, vector fields
    ``(nt, 3, *S)``, mean fields ``(nt, 3)``.
    """

    lattice: Lattice
    eps: float
    weights: np.ndarray
    times: np.ndarray
    rho: np.ndarray
    xi: np.ndarray
    E_irr: np.ndarray
    E_sol: np.ndarray
    E_mean: np.ndarray
    B: np.ndarray
    dE_irr: np.ndarray
    dE_sol: np.ndarray
    dE_mean: np.ndarray
    G_irr: np.ndarray
    G_sol: np.ndarray
    G_mean: np.ndarray
    sources: SourceHistory
    T: float
    metadata: dict = field(default_factory=dict)

    @property
    def n_times(self) -> int:
        return len(self.times)

    @property
    def E(self) -> np.ndarray:
        return self.E_irr + self.E_sol + self._const(self.E_mean)

    @property
    def dE(self) -> np.ndarray:
        return self.dE_irr + self.dE_sol + self._const(self.dE_mean)

    @property
    def G(self) -> np.ndarray:
        return self.G_irr + self.G_sol + self._const(self.G_mean)

    def w(self) -> np.ndarray:
        """``xi - G`` per layer."""
        return self.xi - self.G[:, None]

    def _const(self, values: np.ndarray) -> np.ndarray:
        out = np.zeros((values.shape[0], 3) + self.lattice.shape, dtype=complex)
        out[(slice(None), slice(None)) + self.lattice.zero_index] = values * TWO_PI**self.lattice.dim
        return out

    def state(self, i: int) -> SystemState:
        em = EMState(
            self.E_irr[i], self.E_sol[i], self.E_mean[i], self.B[i],
            self.dE_irr[i], self.dE_sol[i], self.dE_mean[i], -self.lattice.curl(self.E[i]),
        )
        return SystemState(float(self.times[i]), LayerStack(self.weights, self.rho[i], self.xi[i]), em)

    def index_at(self, t: float) -> int:
        """Index of the stored node closest to ``t``."""
        return int(np.argmin(np.abs(self.times - t)))

    @classmethod
    def from_states(
        cls,
        states: list[SystemState],
        sources: list[SourceTerms],
        eps: float,
        lattice: Lattice,
        T: float,
        metadata: dict | None = None,
    ) -> "Trajectory":
        times = np.array([s.t for s in states])
        stack = lambda attr: np.stack([getattr(s.em, attr) for s in states])  # noqa: E731
        E_irr, E_sol, E_mean = stack("E_irr"), stack("E_sol"), stack("E_mean")
        dE_irr, dE_sol, dE_mean = stack("dE_irr"), stack("dE_sol"), stack("dE_mean")
        if len(times) > 1:
            G_irr = FittedHermite(times, E_irr, dE_irr, 1.0 / eps).cumulative()
            G_sol = FittedHermite(times, E_sol, dE_sol, lattice.omega_sol / eps).cumulative()
            G_mean = FittedHermite(times, E_mean, dE_mean, 1.0 / eps).cumulative().real
        else:
            G_irr, G_sol, G_mean = np.zeros_like(E_irr), np.zeros_like(E_sol), np.zeros_like(E_mean)
        history = SourceHistory.stack(times, sources)
        return cls(
            lattice, eps, states[0].layers.weights, times,
            np.stack([s.layers.rho for s in states]), np.stack([s.layers.xi for s in states]),
            E_irr, E_sol, E_mean, stack("B"), dE_irr, dE_sol, dE_mean, G_irr, G_sol, G_mean,
            history, T, dict(metadata or {}),
        )


def _finite_sources(state: SystemState, eps: float, lat: Lattice):
    """Sources of ``state``; a momentum so large that ``|xi|^2`` overflows shows up here first."""
    with np.errstate(over="ignore", invalid="ignore"):
        src = source_terms(state.layers, state.em, eps, lat)
    if not all(np.all(np.isfinite(a)) for a in (src.g, src.h, src.q)):
        raise BlowUpError(state.t, "wave-equation sources")
    return src


def simulate(
    data: InitialData,
    T: float,
    dt: float | None = None,
    *,
    stride: int = 1,
    extend_horizon: bool = True,
    callback: Callable[[SystemState], None] | None = None,
) -> Trajectory:
    """Run :func:`step` over ``[0, T + 2 pi eps]`` (or ``[0, T]``) and store every ``stride``-th state.

    The step is ``dt`` (default ``eps/50``) shrunk so that a whole number of
    steps fills the horizon.  ``T = 0`` returns the initial state only.
    """
    eps, lat = data.eps, data.lattice
    if T < 0.0:
        raise ConfigurationError(f"final time must be nonnegative, got {T}")
    if stride < 1:
        raise ConfigurationError(f"output stride must be >= 1, got {stride}")
    dt = eps / 50.0 if dt is None else float(dt)
    if not dt > 0.0:
        raise ConfigurationError(f"time step must be positive, got {dt}")
    state = SystemState.initial(data)
    state = complete_state(0.0, state.layers, state.em.E_sol, state.em.E_mean, state.em.B, eps, lat)
    horizon = 0.0 if T == 0.0 else T + (TWO_PI * eps if extend_horizon else 0.0)
    n_steps = int(math.ceil(horizon / dt - 1e-9)) if horizon > 0 else 0
    h = horizon / n_steps if n_steps else dt
    states = [state]
    sources = [_finite_sources(state, eps, lat)]
    for n in range(1, n_steps + 1):
        state = step(state, h, eps, lat)
        state = SystemState(n * h, state.layers, state.em)
        if callback is not None:
            callback(state)
        if n % stride == 0 or n == n_steps:
            states.append(state)
            sources.append(_finite_sources(state, eps, lat))
    meta = {"dt": h, "n_steps": n_steps, "stride": stride, "horizon": horizon, "solver": "strang"}
    return Trajectory.from_states(states, sources, eps, lat, T, meta)


# --------------------------------------------------------------------------
# Picard iteration
QUANTITIES = ("rho", "w", "G", "epsE", "B")


@dataclass
class IterationReport:
    """Per-iteration norms and consecutive differences of ``(rho, w, G, eps E, B)``.

    ``differences[n-1][name]`` is the uniform analytic norm of iterate ``n``
    minus iterate ``n-1``; ``n_iterations`` counts updates performed and the
    fixed point is iterate ``n_iterations - 1`` when ``converged``.
    """

    eta: float
    tol: float
    norms: list[dict[str, float]] = field(default_factory=list)
    differences: list[dict[str, float]] = field(default_factory=list)
    converged: bool = False
    contraction: bool = True
    eta_history: list[float] = field(default_factory=list)
    residuals: dict[str, float] = field(default_factory=dict)
    message: str = ""

    @property
    def n_iterations(self) -> int:
        return len(self.differences)

    @property
    def fixed_point_index(self) -> int | None:
        return self.n_iterations - 1 if self.converged else None

    def max_differences(self) -> np.ndarray:
        return np.array([max(d.values()) for d in self.differences])

    def ratios(self) -> np.ndarray:
        """``diff_{n+1}/diff_n``; entry ``i`` belongs to iteration ``i + 2``."""
        d = self.max_differences()
        with np.errstate(divide="ignore", invalid="ignore"):
            return d[1:] / d[:-1]


@dataclass
class _Iterate:
    rho: np.ndarray  # (n, L, *S)
    w: np.ndarray  # (n, L, 3, *S)
    E_irr: np.ndarray
    E_sol: np.ndarray
    E_mean: np.ndarray
    dE_irr: np.ndarray
    dE_sol: np.ndarray
    dE_mean: np.ndarray
    G_irr: np.ndarray
    G_sol: np.ndarray
    G_mean: np.ndarray
    B: np.ndarray

    def field_sum(self, lat: Lattice, vec: np.ndarray, mean: np.ndarray) -> np.ndarray:
        out = vec.copy()
        out[(slice(None), slice(None)) + lat.zero_index] += mean * TWO_PI**lat.dim
        return out

    def G(self, lat: Lattice) -> np.ndarray:
        return self.field_sum(lat, self.G_irr + self.G_sol, self.G_mean)

    def E(self, lat: Lattice) -> np.ndarray:
        return self.field_sum(lat, self.E_irr + self.E_sol, self.E_mean)


class _PicardProblem:
    def __init__(self, data: InitialData, eta: float, n_nodes: int | None, nonlinear: bool):
        self.data = data
        self.lat = data.lattice
        self.eps = data.eps
        self.seeds = data.seeds()
        self.nonlinear = nonlinear
        omega_max = float(np.max(self.lat.omega_sol))
        if n_nodes is None:
            n_nodes = min(96, 16 + 2 * int(math.ceil(omega_max * eta / data.eps)))
        self.times = chebyshev_nodes(n_nodes, 0.0, eta)
        self.Q = cumulative_integration_matrix(n_nodes, 0.0, eta)
        self.kernels = lambda t, f, w: chebyshev_kernels(self.Q, t, f, w)

    def integrate(self, a: np.ndarray) -> np.ndarray:
        return np.tensordot(self.Q, a, axes=(1, 0))

    def fields_from(self, history: SourceHistory):
        f = propagate_fields(history, self.seeds, self.eps, self.lat, kernels=self.kernels)
        B = self.seeds.B[None] - self.lat.curl(f.G_sol)
        return f, B

    def initial_iterate(self) -> _Iterate:
        n = len(self.times)
        lat = self.lat
        zero = SourceHistory(
            self.times, np.zeros((n,) + lat.shape, complex), np.zeros((n, 3) + lat.shape, complex), np.zeros((n, 3))
        )
        f, B = self.fields_from(zero)
        rho = np.broadcast_to(self.data.layers.rho, (n,) + self.data.layers.rho.shape).copy()
        it = _Iterate(rho, None, f.E_irr, f.E_sol, f.E_mean, f.dE_irr, f.dE_sol, f.dE_mean,
                      f.G_irr, f.G_sol, f.G_mean, B)
        it.w = self.data.layers.xi[None] - it.G(lat)[:, None]
        return it

    def evaluate(self, it: _Iterate):
        """Fluid right-hand sides and sources at every node of an iterate."""
        lat, eps = self.lat, self.eps
        weights = self.data.layers.weights
        G = it.G(lat)
        E = it.E(lat)
        drho = np.zeros_like(it.rho)
        dw = np.zeros_like(it.w)
        terms = []
        for i in range(len(self.times)):
            layers = LayerStack(weights, it.rho[i], it.w[i] + G[i][None])
            em = EMState(it.E_irr[i], it.E_sol[i], it.E_mean[i], it.B[i])
            if self.nonlinear:
                dr, dxi = fluid_rhs(layers, E[i], it.B[i], eps, lat)
                drho[i] = dr
                dw[i] = dxi - E[i][None]
                terms.append(source_terms(layers, em, eps, lat))
            else:
                terms.append(SourceTerms(lat.zeros(), lat.zeros(rank=1), np.zeros(3), lat.zeros(rank=1)))
        return drho, dw, SourceHistory.stack(self.times, terms)

    def update(self, it: _Iterate) -> tuple[_Iterate, SourceHistory]:
        drho, dw, history = self.evaluate(it)
        rho = self.data.layers.rho[None] + self.integrate(drho)
        w = it.w[0][None] + self.integrate(dw)
        f, B = self.fields_from(history)
        new = _Iterate(rho, w, f.E_irr, f.E_sol, f.E_mean, f.dE_irr, f.dE_sol, f.dE_mean,
                       f.G_irr, f.G_sol, f.G_mean, B)
        return new, history

    def quantities(self, it: _Iterate) -> dict[str, np.ndarray]:
        lat = self.lat
        return {
            "rho": it.rho,
            "w": it.w,
            "G": it.G(lat),
            "epsE": self.eps * it.E(lat),
            "B": it.B,
        }


def _uniform(values: np.ndarray, times: np.ndarray, params: AnalyticNormParams, lat: Lattice, layered: bool) -> float:
    if layered:
        return max(uniform_analytic_norm(values[:, l], times, params, lat) for l in range(values.shape[1]))
    return uniform_analytic_norm(values, times, params, lat)


def _measure(problem: _PicardProblem, it: _Iterate, params: AnalyticNormParams, prev: _Iterate | None):
    q = problem.quantities(it)
    p = problem.quantities(prev) if prev is not None else None
    norms, diffs = {}, {}
    for name in QUANTITIES:
        layered = name in ("rho", "w")
        norms[name] = _uniform(q[name], problem.times, params, problem.lat, layered)
        if p is not None:
            diffs[name] = _uniform(q[name] - p[name], problem.times, params, problem.lat, layered)
    return norms, diffs


def picard_residuals(problem: _PicardProblem, it: _Iterate) -> dict[str, float]:
    """Largest coefficient moduli of the residuals of the system at an iterate.

    Continuity and momentum are checked in integrated form, Gauss pointwise
    in time, Ampere as ``eps^2 (E(t) - E(0)) - int_0^t (curl B - j)`` and
    Faraday as ``B(t) - B(0) + curl int_0^t E``.
    """
    lat, eps = problem.lat, problem.eps
    drho, dw, _ = problem.evaluate(it)
    weights = problem.data.layers.weights
    G, E = it.G(lat), it.E(lat)
    out = {}
    out["continuity"] = float(np.max(np.abs(it.rho - it.rho[0][None] - problem.integrate(drho))))
    out["momentum"] = float(np.max(np.abs(it.w - it.w[0][None] - problem.integrate(dw))))
    gauss, curlB_minus_j = [], []
    for i in range(len(problem.times)):
        layers = LayerStack(weights, it.rho[i], it.w[i] + G[i][None])
        rho_tot, j = moments(layers, eps, lat)
        gauss.append(gauss_residual(E[i], rho_tot, eps, lat)[1])
        curlB_minus_j.append(lat.curl(it.B[i]) - j)
    out["gauss"] = float(max(gauss))
    ampere = eps**2 * (E - E[0][None]) - problem.integrate(np.stack(curlB_minus_j))
    out["ampere"] = float(np.max(np.abs(ampere)))
    faraday = it.B - it.B[0][None] + lat.curl(problem.integrate(E))
    out["faraday"] = float(np.max(np.abs(faraday)))
    out["divB"] = float(max(divergence_residual(b, lat) for b in it.B))
    return out


def picard_iterate(
    data: InitialData,
    eta: float,
    n_max: int = 30,
    tol: float = 1e-10,
    *,
    delta0: float = 1.5,
    beta: float = 0.5,
    n_delta: int = 64,
    n_nodes: int | None = None,
    auto_bisect: bool = True,
    max_bisections: int = 4,
    nonlinear: bool = True,
) -> tuple[Trajectory, IterationReport]:
    """Picard iteration on ``[0, eta]`` until consecutive iterates differ by less than ``tol``.

    Differences are measured in the uniform analytic norm with parameters
    ``(delta0, beta, eta)``.  If the iteration fails to contract, ``eta`` is
    halved (at most ``max_bisections`` times when ``auto_bisect``); a run
    that never contracts returns a report with ``contraction = False``.
    ``nonlinear=False`` switches off the fluid transport and all sources.
    """
    if not eta > 0.0:
        raise ConfigurationError(f"eta must be positive, got {eta}")
    report = IterationReport(eta=eta, tol=tol)
    attempts = max_bisections + 1 if auto_bisect else 1
    for attempt in range(attempts):
        report.eta = eta
        report.eta_history.append(eta)
        report.norms, report.differences = [], []
        params = AnalyticNormParams(delta0=delta0, beta=beta, eta=eta, n_delta=n_delta)
        problem = _PicardProblem(data, eta, n_nodes, nonlinear)
        it = problem.initial_iterate()
        history = None
        report.norms.append(_measure(problem, it, params, None)[0])
        diverged = False
        try:
            for _ in range(n_max):
                new, history = problem.update(it)
                norms, diffs = _measure(problem, new, params, it)
                report.norms.append(norms)
                report.differences.append(diffs)
                it = new
                d = max(diffs.values())
                if not math.isfinite(d):
                    diverged = True
                    break
                if d < tol:
                    report.converged = True
                    break
                first = max(report.differences[0].values())
                if len(report.differences) > 3 and d > 10.0 * first:
                    diverged = True
                    break
        except (AnalyticNormOverflow, FloatingPointError, OverflowError):
            diverged = True
        if report.converged:
            report.contraction = True
            report.residuals = picard_residuals(problem, it)
            report.message = f"converged after {report.n_iterations} updates at eta = {eta:g}"
            return _picard_trajectory(problem, it, history), report
        if attempt + 1 < attempts:
            eta /= 2.0
    report.contraction = False
    report.message = (
        f"no contraction ({'diverged' if diverged else 'tolerance not reached'}) after "
        f"{report.n_iterations} updates at eta = {eta:g}; eta too large"
    )
    if history is None:
        _, _, history = problem.evaluate(it)
    return _picard_trajectory(problem, it, history), report


def _picard_trajectory(problem: _PicardProblem, it: _Iterate, history: SourceHistory | None) -> Trajectory:
    lat = problem.lat
    if history is None:
        _, _, history = problem.evaluate(it)
    xi = it.w + it.G(lat)[:, None]
    return Trajectory(
        lat, problem.eps, problem.data.layers.weights, problem.times, it.rho, xi,
        it.E_irr, it.E_sol, it.E_mean, it.B, it.dE_irr, it.dE_sol, it.dE_mean,
        it.G_irr, it.G_sol, it.G_mean, history, float(problem.times[-1]), {"solver": "picard"},
    )
