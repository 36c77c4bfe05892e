"""Figures written to files next to the exported data (Agg backend, no display)."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ["plot_sweep", "plot_iteration", "plot_mode_history", "plot_spectrum", "plot_residuals"]


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def plot_sweep(report, path: str | Path) -> Path:
    """Log-log error curves against ``eps`` for every tracked metric."""
    from .sweep import METRICS

    fig, ax = plt.subplots(figsize=(5.5, 4))
    ok = [e for e in report.entries if e.status == "ok"]
    eps = np.array([e.eps for e in ok])
    for name in METRICS:
        vals = np.array([e.errors.get(name, np.nan) for e in ok])
        if len(vals) and np.all(vals > 0):
            ax.loglog(eps, vals, "o-", label=name)
    if len(eps) > 1:
        ax.loglog(eps, eps / eps[0] * max(e.errors.get("w", 1.0) for e in ok), "k:", label="slope 1")
    ax.set_xlabel("eps")
    ax.set_ylabel("sup-in-time H1 error")
    ax.legend(fontsize=8)
    return _save(fig, path)


def plot_iteration(report, path: str | Path) -> Path:
    """Consecutive differences per quantity along the Picard iteration."""
    fig, ax = plt.subplots(figsize=(5.5, 4))
    names = sorted({k for d in report.differences for k in d})
    n = np.arange(1, report.n_iterations + 1)
    for name in names:
        vals = np.array([d.get(name, np.nan) for d in report.differences])
        ax.semilogy(n, np.maximum(vals, 1e-300), "o-", label=name)
    ax.axhline(report.tol, color="k", ls=":", label="tol")
    ax.set_xlabel("iteration")
    ax.set_ylabel("uniform analytic norm of the update")
    ax.legend(fontsize=8)
    return _save(fig, path)


def plot_mode_history(times: np.ndarray, series: dict[str, np.ndarray], path: str | Path, ylabel: str = "amplitude") -> Path:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for label, values in series.items():
        ax.plot(times, values, label=label, lw=1)
    ax.set_xlabel("t")
    ax.set_ylabel(ylabel)
    ax.legend(fontsize=8)
    return _save(fig, path)


def plot_spectrum(times: np.ndarray, signal: np.ndarray, measured: float, expected: float | None, path: str | Path) -> Path:
    """Power spectrum of a demeaned mode signal with the measured peak marked."""
    sig = np.asarray(signal, dtype=complex)
    sig = sig - sig.mean()
    n = len(sig)
    dt = times[1] - times[0]
    spec = np.abs(np.fft.fft(sig * np.hanning(n), n=8 * n)) ** 2
    freqs = 2.0 * np.pi * np.fft.fftfreq(8 * n, d=dt)
    order = np.argsort(freqs)
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.semilogy(freqs[order], spec[order] + 1e-300, lw=1)
    ax.axvline(measured, color="r", ls="--", label=f"measured {measured:.5g}")
    if expected is not None:
        ax.axvline(expected, color="k", ls=":", label=f"expected {expected:.5g}")
    ax.set_xlim(-2.0 * abs(measured), 2.0 * abs(measured))
    ax.set_xlabel("angular frequency")
    ax.legend(fontsize=8)
    return _save(fig, path)


def plot_residuals(times: np.ndarray, residuals: dict[str, np.ndarray], path: str | Path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for label, values in residuals.items():
        ax.semilogy(times, np.maximum(np.asarray(values, dtype=float), 1e-300), label=label, lw=1)
    ax.set_xlabel("t")
    ax.set_ylabel("residual")
    ax.legend(fontsize=8)
    return _save(fig, path)
