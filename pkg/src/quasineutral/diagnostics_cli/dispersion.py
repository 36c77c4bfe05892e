"""Dominant-frequency measurement of stored mode signals."""
from __future__ import annotations

import numpy as np

__all__ = ["peak_frequency", "measure_dispersion", "mode_signal", "MIN_PERIODS"]

MIN_PERIODS = 8
_PAD = 16


def peak_frequency(times: np.ndarray, signal: np.ndarray, expected: float | None = None) -> float:
    """Dominant angular frequency of a uniformly sampled (complex) signal.

    The signal is demeaned and Hann-windowed; positive and negative
    frequencies are folded together so a real cosine and a complex
    exponential give the same answer.  The peak of the zero-padded power
    spectrum is refined by a parabola through the log-power at the three
    bins around it.  With ``expected`` the horizon must cover
    ``MIN_PERIODS`` periods.
    """
    times = np.asarray(times, dtype=float)
    sig = np.asarray(signal, dtype=complex)
    if sig.ndim != 1 or len(sig) != len(times) or len(sig) < 8:
        raise ValueError("need a 1-d signal of at least 8 samples aligned with the time grid")
    dt = np.diff(times)
    if np.max(np.abs(dt - dt[0])) > 1e-9 * dt[0]:
        raise ValueError("frequency measurement needs a uniform time grid")
    span = times[-1] - times[0]
    if expected is not None and expected * span < MIN_PERIODS * 2.0 * np.pi:
        need = MIN_PERIODS * 2.0 * np.pi / expected
        raise ValueError(
            f"signal spans {span:.4g} time units; at least {need:.4g} are needed for {MIN_PERIODS} periods"
        )
    sig = sig - sig.mean()
    n = len(sig)
    spec = np.fft.fft(sig * np.hanning(n), n=_PAD * n)
    freqs = 2.0 * np.pi * np.fft.fftfreq(_PAD * n, d=dt[0])
    power = np.abs(spec) ** 2
    half = _PAD * n // 2
    folded = power[:half].copy()
    folded[1:] += power[::-1][: half - 1]
    i = int(np.argmax(folded[1:])) + 1
    if i >= half - 1:
        return float(freqs[i])
    a, b, c = np.log(folded[i - 1 : i + 2] + 1e-300)
    denom = a - 2.0 * b + c
    shift = 0.5 * (a - c) / denom if denom != 0.0 else 0.0
    return float((i + shift) * (freqs[1] - freqs[0]))


def mode_signal(trajectory, k, component: str) -> np.ndarray:
    """Time series of the field part ``component`` at integer mode ``k``.

    For vector parts the component with the largest variance is used.
    ``mean`` ignores ``k``.
    """
    if component == "mean":
        series = trajectory.E_mean
    else:
        idx = trajectory.lattice.index_of(k)
        part = {"irr": trajectory.E_irr, "sol": trajectory.E_sol}.get(component)
        if part is None:
            raise ValueError(f"component must be 'irr', 'sol' or 'mean', got {component!r}")
        series = part[(slice(None), slice(None)) + idx]
    var = np.var(series, axis=0)
    return series[:, int(np.argmax(var))]


def measure_dispersion(trajectory, k, component: str, expected: float | None = None) -> float:
    """Dominant angular frequency of mode ``k`` of ``E_irr``, ``E_sol`` or ``E_mean``."""
    return peak_frequency(trajectory.times, mode_signal(trajectory, k, component), expected)
