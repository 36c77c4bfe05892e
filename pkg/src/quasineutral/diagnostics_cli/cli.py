"""Command line entry point: ``quasineutral <subcommand> --config run.yaml --out DIR``.

Exit codes: 0 success, 2 configuration error, 3 blow-up, 4 constraint violation.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from ..emhd_limit import ConstraintViolation, emhd_simulate, limit_initial_data, resonance_set
from ..evolution import BlowUpError, picard_iterate, simulate
from ..field_decomposition import InconsistentDataError, divergence_residual, gauss_residual
from ..filtering_correctors import extract_limit_correctors, filtered_fields
from ..spectral_core import TWO_PI, ConfigurationError
from . import plotting
from .config import RunConfig, load_config
from .dispersion import measure_dispersion, mode_signal
from .export import export, load_json, manifest
from .sweep import convergence_sweep

__all__ = ["main", "build_parser", "EXIT_OK", "EXIT_CONFIG", "EXIT_BLOWUP", "EXIT_CONSTRAINT"]

EXIT_OK, EXIT_CONFIG, EXIT_BLOWUP, EXIT_CONSTRAINT = 0, 2, 3, 4
COMMANDS = ("simulate", "iterate", "filter", "extract", "emhd", "resonance", "dispersion", "sweep", "export")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="quasineutral", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=name != "export", type=Path)
        s.add_argument("--out", required=True, type=Path)
        s.add_argument("--threads", type=int, default=1)
        s.add_argument("--seed", type=int, default=0, help="reserved for test-data generation")
        s.add_argument("--format", choices=("csv", "json"), default="json")
        if name == "export":
            s.add_argument("--input", required=True, type=Path, help="a JSON export to convert")
    return p


def _meta(cfg: RunConfig | None, args, **tolerances) -> dict:
    return manifest(cfg, tolerances, command=args.command, seed=args.seed)


def _run_simulate(cfg, args):
    traj = simulate(cfg.initial_data(), cfg.T, cfg.dt, stride=cfg.stride)
    lat = traj.lattice
    gauss = [gauss_residual(traj.E[i], np.tensordot(traj.weights, traj.rho[i], axes=(0, 0)), traj.eps, lat, relative=True)[0] for i in range(traj.n_times)]
    divB = [divergence_residual(b, lat) for b in traj.B]
    meta = _meta(cfg, args, gauss_relative=1e-6, divB=1e-10)
    export(traj, args.out, args.format, meta=meta)
    summary = {"n_times": traj.n_times, "max_gauss_relative": max(gauss), "max_divB": max(divB), **traj.metadata}
    export(summary, args.out, args.format, name="summary", meta=meta)
    energy = {"|E_irr|^2": np.sum(np.abs(traj.E_irr) ** 2, axis=tuple(range(1, traj.E_irr.ndim))),
              "|E_sol|^2": np.sum(np.abs(traj.E_sol) ** 2, axis=tuple(range(1, traj.E_sol.ndim))),
              "|B|^2": np.sum(np.abs(traj.B) ** 2, axis=tuple(range(1, traj.B.ndim)))}
    plotting.plot_mode_history(traj.times, energy, args.out / "energy.png", "coefficient energy")
    plotting.plot_residuals(traj.times, {"gauss": gauss, "divB": divB}, args.out / "constraints.png")
    if max(gauss) > 1e-6 or max(divB) > 1e-10:
        raise ConstraintViolation("constraint residual above tolerance", float(traj.times[-1]), max(max(gauss), max(divB)))


def _run_iterate(cfg, args):
    _, report = picard_iterate(cfg.initial_data(), cfg.eta, cfg.picard_n_max, cfg.picard_tol, delta0=cfg.delta0, beta=cfg.beta)
    meta = _meta(cfg, args, picard_tol=cfg.picard_tol)
    export(report, args.out, args.format, meta=meta)
    plotting.plot_iteration(report, args.out / "iteration.png")
    if not report.converged:
        raise BlowUpError(cfg.eta, f"Picard iteration ({report.message})")


def _simulate_with_horizon(cfg):
    window = TWO_PI * cfg.eps if cfg.window is None else cfg.window
    return simulate(cfg.initial_data(), cfg.T + window, cfg.dt), window


def _run_filter(cfg, args):
    traj, _ = _simulate_with_horizon(cfg)
    ff = filtered_fields(traj, cfg.T)
    export(ff, args.out, args.format, meta=_meta(cfg, args))
    norm = lambda a: np.sqrt(np.sum(np.abs(a) ** 2, axis=tuple(range(1, a.ndim))))  # noqa: E731
    plotting.plot_mode_history(ff.times, {"|E1|": norm(ff.E1), "|E2|": norm(ff.E2), "|W|": norm(ff.W)}, args.out / "filtered.png", "coefficient norm")


def _run_extract(cfg, args):
    traj, window = _simulate_with_horizon(cfg)
    cs = extract_limit_correctors(traj, window=window)
    export(cs, args.out, args.format, meta=_meta(cfg, args, window=window))
    norm = lambda a: np.sqrt(np.sum(np.abs(a) ** 2, axis=tuple(range(1, a.ndim))))  # noqa: E731
    plotting.plot_mode_history(cs.times, {"|d0|": norm(cs.d0), "|d1|": norm(cs.d1), "|d2|": norm(cs.d2)}, args.out / "correctors.png", "amplitude norm")


def _run_emhd(cfg, args):
    lat = cfg.lattice()
    _, B0 = cfg.fields()
    state0 = limit_initial_data(cfg.layer_stack(), B0, lat)
    ref = emhd_simulate(state0, lat, cfg.T, cfg.emhd_dt or 0.002)
    export(ref, args.out, args.format, meta=_meta(cfg, args, constraint=1e-6))
    keys = ref.residuals[0].keys()
    res_times = np.linspace(0.0, ref.times[-1], len(ref.residuals))
    plotting.plot_residuals(res_times, {k: [r[k] for r in ref.residuals] for k in keys}, args.out / "emhd_constraints.png")


def _run_resonance(cfg, args):
    spec = cfg.resonance
    kinds = spec.get("kinds", [spec.get("kind", 2)])
    signs = [tuple(s) for s in spec.get("signs", [[1, -1]])]
    radius = int(spec.get("radius", 20))
    modes = spec.get("modes", [spec.get("k", [0] * cfg.dim)])
    sets = [resonance_set(kind, s, k, radius) for kind in kinds for s in signs for k in modes]
    export(sets, args.out, args.format, meta=_meta(cfg, args))


def _run_dispersion(cfg, args):
    spec = cfg.dispersion
    component = spec.get("component", "irr")
    k = tuple(spec.get("k", [1] + [0] * (cfg.dim - 1)))
    eps = cfg.eps
    if component == "sol":
        expected = float(np.sqrt(1.0 + sum(v * v for v in k))) / eps
    else:
        expected = 1.0 / eps
    traj = simulate(cfg.initial_data(), cfg.T, cfg.dt, extend_horizon=False)
    freq = measure_dispersion(traj, k, component, expected)
    result = {"k": list(k), "component": component, "measured": freq, "expected": expected, "relative_error": abs(freq - expected) / expected}
    export(result, args.out, args.format, name="dispersion", meta=_meta(cfg, args, relative=0.01))
    plotting.plot_spectrum(traj.times, mode_signal(traj, k, component), freq, expected, args.out / "spectrum.png")


def _run_sweep(cfg, args):
    report = convergence_sweep(cfg, threads=args.threads)
    export(report, args.out, args.format, meta=_meta(cfg, args, max_ratio=0.9))
    plotting.plot_sweep(report, args.out / "sweep.png")
    failed = [e for e in report.entries if e.status != "ok"]
    if failed:
        msg = failed[0].message
        if "BlowUpError" in msg:
            raise BlowUpError(float("nan"), msg)
        raise ConstraintViolation(msg, float("nan"), float("nan"))


def _run_export(cfg, args):
    from .export import import_report, import_trajectory

    doc = load_json(args.input)
    kind = doc.get("kind")
    if kind == "sweep_report":
        obj = import_report(args.input)
    elif kind == "trajectory":
        obj = import_trajectory(args.input)
    elif kind == "summary":
        obj = doc["data"]
    elif kind == "iteration_report":
        from ..evolution import IterationReport

        obj = IterationReport(**doc["data"])
    elif kind == "resonance_sets":
        from ..emhd_limit import ResonanceSet

        obj = [ResonanceSet.from_dict(s) for s in doc["data"]["sets"]]
    elif kind == "resonance_set":
        from ..emhd_limit import ResonanceSet

        obj = ResonanceSet.from_dict(doc["data"])
    else:
        raise ConfigurationError(f"cannot convert exports of kind {kind!r}")
    meta = dict(doc.get("manifest", {}))
    meta.update(_meta(cfg, args) if cfg is not None else {"command": "export"})
    export(obj, args.out, args.format, name=args.input.stem, meta=meta)


RUNNERS = {
    "simulate": _run_simulate,
    "iterate": _run_iterate,
    "filter": _run_filter,
    "extract": _run_extract,
    "emhd": _run_emhd,
    "resonance": _run_resonance,
    "dispersion": _run_dispersion,
    "sweep": _run_sweep,
    "export": _run_export,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config is not None else None
        if args.threads < 1:
            raise ConfigurationError("--threads must be at least 1")
        args.out.mkdir(parents=True, exist_ok=True)
        if cfg is not None:
            (args.out / "config.yaml").write_text(cfg.to_yaml())
        RUNNERS[args.command](cfg, args)
    except (ConfigurationError, InconsistentDataError) as exc:
        # inconsistent initial data (Gauss, div B) are constraint failures
        if isinstance(exc, InconsistentDataError):
            print(f"constraint violation: {exc}", file=sys.stderr)
            return EXIT_CONSTRAINT
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BlowUpError as exc:
        print(f"blow-up: {exc}", file=sys.stderr)
        return EXIT_BLOWUP
    except ConstraintViolation as exc:
        print(f"constraint violation: {exc}", file=sys.stderr)
        return EXIT_CONSTRAINT
    print(json.dumps({"command": args.command, "out": str(args.out)}))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
