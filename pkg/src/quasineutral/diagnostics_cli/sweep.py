"""Quasineutral-limit convergence sweeps against the e-MHD reference."""
from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.integrate import trapezoid

from ..emhd_limit import (
    ConstraintViolation,
    corrector_evolve,
    emhd_simulate,
    limit_corrector_initial,
    limit_initial_data,
)
from ..evolution import BlowUpError, simulate
from ..field_decomposition import divergence_residual, gauss_residual
from ..filtering_correctors import extract_limit_correctors, filtered_fields
from ..spectral_core import TWO_PI, sobolev_norm
from .config import RunConfig

__all__ = ["SweepEntry", "SweepReport", "run_member", "convergence_sweep", "METRICS", "reference_run"]

METRICS = ("rho", "w", "b", "epsE", "corrector")


@dataclass
class SweepEntry:
    """Metrics of one ``eps`` member; ``status`` is ``"ok"`` or ``"failed"``."""

    eps: float
    status: str = "ok"
    message: str = ""
    errors: dict[str, float] = field(default_factory=dict)
    gauss: float = float("nan")
    divB: float = float("nan")
    weak_W: float = float("nan")
    norms: dict[str, float] = field(default_factory=dict)
    frequencies: dict[str, float] = field(default_factory=dict)
    runtime: float = 0.0


@dataclass
class SweepReport:
    """Per-``eps`` entries sorted by decreasing ``eps`` plus monotonicity verdicts."""

    entries: list[SweepEntry] = field(default_factory=list)
    verdicts: dict[str, bool | None] = field(default_factory=dict)
    ratios: dict[str, list[float]] = field(default_factory=dict)
    settings: dict = field(default_factory=dict)

    def metric(self, name: str) -> np.ndarray:
        return np.array([e.errors.get(name, np.nan) for e in self.entries])

    def to_dict(self) -> dict:
        return {
            "entries": [asdict(e) for e in self.entries],
            "verdicts": dict(self.verdicts),
            "ratios": {k: list(v) for k, v in self.ratios.items()},
            "settings": dict(self.settings),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SweepReport":
        return cls(
            [SweepEntry(**e) for e in d.get("entries", [])],
            dict(d.get("verdicts", {})),
            {k: list(v) for k, v in d.get("ratios", {}).items()},
            dict(d.get("settings", {})),
        )


def _verdicts(entries: list[SweepEntry], max_ratio: float) -> tuple[dict, dict]:
    ok = [e for e in entries if e.status == "ok"]
    verdicts: dict[str, bool | None] = {}
    ratios: dict[str, list[float]] = {}
    for name in METRICS:
        vals = [e.errors.get(name) for e in ok]
        if len(ok) < 2 or len(ok) != len(entries) or any(v is None for v in vals):
            verdicts[name] = None
            continue
        r = [b / a if a > 0 else float("inf") for a, b in zip(vals[:-1], vals[1:])]
        ratios[name] = r
        verdicts[name] = all(x < max_ratio for x in r)
    return verdicts, ratios


def reference_run(config: RunConfig, horizon: float):
    """e-MHD reference trajectory and its limit corrector data at ``t = 0``."""
    lat = config.lattice()
    layers = config.layer_stack()
    _, B0 = config.fields()
    state0 = limit_initial_data(layers, B0, lat)
    dt = config.emhd_dt or 0.002
    ref = emhd_simulate(state0, lat, horizon, dt)
    return ref, limit_corrector_initial(layers, B0, lat)


def run_member(config: RunConfig, eps: float, reference=None) -> SweepEntry:
    """Simulate, filter and extract at one ``eps``; compare with the e-MHD reference.

    Errors are sup-in-time ``H^1`` norms over the comparison times (multiples
    of ``compare_step`` in ``[0, T]``):

    * ``rho``, ``w``, ``b``: filtered state against the reference
    * ``epsE``: ``eps E`` minus the modulated evolved limit correctors
    * ``corrector``: evolved limit amplitudes against those extracted from the run
    """
    t_start = time.perf_counter()
    entry = SweepEntry(float(eps))
    try:
        cfg = config.replace(eps=float(eps))
        lat = cfg.lattice()
        T = cfg.T
        window = TWO_PI * eps if cfg.window is None else cfg.window
        if reference is None:
            reference = reference_run(cfg, T + 0.1)
        ref, c0 = reference
        data = cfg.initial_data()
        traj = simulate(data, T + window, cfg.dt)
        ff = filtered_fields(traj, T)
        targets = np.arange(0.0, T + 1e-9, cfg.compare_step)
        idx = np.array([int(np.argmin(np.abs(ff.times - t))) for t in targets])
        times = ff.times[idx]
        rr, ww, bb, _ = ref.interpolator()(times)
        limit = corrector_evolve(c0, ref, times, d0_coupling=cfg.d0_coupling)
        extracted = extract_limit_correctors(traj, window=window, starts=times)
        h1 = lambda v: sobolev_norm(v, lat, 1.0)  # noqa: E731
        err = dict.fromkeys(METRICS, 0.0)
        norms = {"rho": 0.0, "w": 0.0, "b": 0.0, "epsE": 0.0}
        gauss = 0.0
        for n, i in enumerate(idx):
            it = traj.index_at(times[n])
            err["rho"] = max(err["rho"], h1(traj.rho[it] - rr[n]))
            err["w"] = max(err["w"], h1(ff.w[i] - ww[n]))
            err["b"] = max(err["b"], h1(ff.b[i] - bb[n]))
            err["epsE"] = max(err["epsE"], h1(eps * traj.E[it] - limit.at(n).field(times[n], eps)))
            gap = (
                float(np.max(np.abs(extracted.d0[n] - limit.d0[n])))
                + h1(extracted.d1[n] - limit.d1[n])
                + h1(extracted.d2[n] - limit.d2[n])
            )
            err["corrector"] = max(err["corrector"], gap)
            norms["rho"] = max(norms["rho"], h1(traj.rho[it]))
            norms["w"] = max(norms["w"], h1(ff.w[i]))
            norms["b"] = max(norms["b"], h1(ff.b[i]))
            norms["epsE"] = max(norms["epsE"], h1(eps * traj.E[it]))
        for it in range(len(traj.times)):
            rho_tot = np.tensordot(traj.weights, traj.rho[it], axes=(0, 0))
            gauss = max(gauss, gauss_residual(traj.E[it], rho_tot, eps, lat, relative=True)[0])
        entry.errors = err
        entry.norms = norms
        entry.gauss = gauss
        entry.divB = max(divergence_residual(b, lat) for b in traj.B)
        # time average of W over [0, T] tends weakly to zero
        sel = ff.times <= T + 1e-12
        avg = trapezoid(ff.W[sel], ff.times[sel], axis=0) / max(ff.times[sel][-1], 1e-300)
        entry.weak_W = float(np.max(np.abs(avg))) / TWO_PI**lat.dim
        entry.frequencies = _frequencies(traj, eps)
    except (BlowUpError, ConstraintViolation, ValueError, FloatingPointError) as exc:
        entry.status = "failed"
        entry.message = f"{type(exc).__name__}: {exc}"
    entry.runtime = time.perf_counter() - t_start
    return entry


def _frequencies(traj, eps: float) -> dict[str, float]:
    """Peak frequency of the strongest irrotational mode when the run holds enough periods."""
    from .dispersion import MIN_PERIODS, peak_frequency

    out: dict[str, float] = {}
    span = traj.times[-1] - traj.times[0]
    if span * (1.0 / eps) < MIN_PERIODS * TWO_PI:
        return out
    amp = np.abs(traj.E_irr).max(axis=(0, 1))
    k = np.unravel_index(int(np.argmax(amp)), amp.shape)
    comp = int(np.argmax(np.var(traj.E_irr[(slice(None), slice(None)) + k], axis=0)))
    out["irr"] = peak_frequency(traj.times, traj.E_irr[(slice(None), comp) + k], 1.0 / eps)
    return out


def convergence_sweep(
    config: RunConfig,
    eps_list=None,
    *,
    threads: int = 1,
    max_ratio: float = 0.9,
) -> SweepReport:
    """Run every member ``eps`` (largest first) and assemble monotonicity verdicts.

    A failing member yields a ``failed`` entry and voids the verdicts.
    Members with equal ``eps`` produce identical metrics.
    """
    eps_values = sorted((float(e) for e in (eps_list if eps_list is not None else config.eps_list)), reverse=True)
    if not eps_values:
        eps_values = [config.eps]
    reference = reference_run(config, config.T + 0.1)
    if threads > 1 and len(eps_values) > 1:
        with ProcessPoolExecutor(max_workers=min(threads, len(eps_values))) as pool:
            entries = list(pool.map(run_member, [config] * len(eps_values), eps_values, [reference] * len(eps_values)))
    else:
        entries = [run_member(config, e, reference) for e in eps_values]
    verdicts, ratios = _verdicts(entries, max_ratio)
    settings = {
        "T": config.T,
        "compare_step": config.compare_step,
        "max_ratio": max_ratio,
        "norm": "H1",
        "window": "2 pi eps" if config.window is None else config.window,
        "emhd_dt": config.emhd_dt or 0.002,
        "d0_coupling": config.d0_coupling,
        "dim": config.dim,
        "K": config.K,
    }
    return SweepReport(entries, verdicts, ratios, settings)
