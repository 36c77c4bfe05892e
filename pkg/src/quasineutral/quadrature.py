"""Time quadratures for oscillatory integrands.

Three rules live here.

* :func:`oscillatory_cumulative` integrates ``exp(-i w s) f(s)`` for a
  piecewise-linear ``f`` with the exponential handled exactly on each
  sub-interval (Filon's idea).  All Duhamel integrals of the field
  propagators are built from it.
* :class:`FittedHermite` interpolates samples of ``u`` and ``du/dt`` on each
  sub-interval by the span of ``{1, s, cos ws, sin ws}``.  The rule is exact
  for constants, linear drifts and pure oscillations at the fitted
  frequency; it is used to integrate and average stored trajectories.
* :func:`cumulative_integration_matrix` is Chebyshev spectral integration,
  used by the Picard iteration on its short time interval.

Small arguments switch to Taylor series so that neither rule loses digits
when ``w h -> 0``.
"""
from __future__ import annotations

import numpy as np

__all__ = [
    "oscillatory_cumulative",
    "duhamel_kernels",
    "FittedHermite",
    "insert_time",
    "chebyshev_nodes",
    "cumulative_integration_matrix",
    "chebyshev_kernels",
]

_SERIES_CUTOFF = 0.25
_N_TERMS = 14


def _e0_e1(theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``E0 = int_0^1 e^{-i theta x} dx`` and ``E1 = int_0^1 x e^{-i theta x} dx``."""
    theta = np.asarray(theta, dtype=float)
    small = np.abs(theta) < _SERIES_CUTOFF
    safe = np.where(small, 1.0, theta)
    em = np.exp(-1j * safe)
    e0 = (1.0 - em) / (1j * safe)
    e1 = 1j * em / safe - (1.0 - em) / safe**2
    if np.any(small):
        z = -1j * theta
        s0 = np.zeros_like(z)
        s1 = np.zeros_like(z)
        term = np.ones_like(z)  # z^n / n!
        for n in range(_N_TERMS):
            s0 = s0 + term / (n + 1)
            s1 = s1 + term / (n + 2)
            term = term * z / (n + 1)
        e0 = np.where(small, s0, e0)
        e1 = np.where(small, s1, e1)
    return e0, e1


def insert_time(times: np.ndarray, values: np.ndarray, t: float) -> tuple[np.ndarray, np.ndarray]:
    """Truncate a sampled history at ``t``, appending a linearly interpolated node."""
    times = np.asarray(times, dtype=float)
    if t < times[0] - 1e-14 or t > times[-1] + 1e-12 * max(1.0, abs(times[-1])):
        raise ValueError(f"time {t} outside the stored history [{times[0]}, {times[-1]}]")
    n = int(np.searchsorted(times, t, side="right"))
    if n >= 1 and abs(times[n - 1] - t) <= 1e-14 * max(1.0, abs(t)):
        return times[:n], values[:n]
    n = min(n, len(times) - 1)
    w = (t - times[n - 1]) / (times[n] - times[n - 1])
    last = (1.0 - w) * values[n - 1] + w * values[n]
    return np.append(times[:n], t), np.concatenate([values[:n], last[None]], axis=0)


def oscillatory_cumulative(times: np.ndarray, f: np.ndarray, omega) -> np.ndarray:
    """``C(t_n) = int_{t_0}^{t_n} exp(-i omega s) f(s) ds`` for piecewise-linear ``f``.

    ``f`` has a leading time axis; ``omega`` broadcasts against ``f[0]``.
    Returns an array shaped like ``f`` (complex) with ``C(t_0) = 0``.
    """
    times = np.asarray(times, dtype=float)
    f = np.asarray(f)
    omega = np.asarray(omega, dtype=float)
    h = np.diff(times).reshape((-1,) + (1,) * (f.ndim - 1))
    a = times[:-1].reshape(h.shape)
    theta = omega * h
    e0, e1 = _e0_e1(theta)
    phase = np.exp(-1j * omega * a)
    pieces = h * phase * (f[:-1] * (e0 - e1) + f[1:] * e1)
    out = np.zeros(np.broadcast_shapes(f.shape, (1,) + omega.shape), dtype=complex)
    out[1:] = np.cumsum(pieces, axis=0)
    return out


def duhamel_kernels(times: np.ndarray, f: np.ndarray, omega) -> dict[str, np.ndarray]:
    """Sine, cosine and ``1 - cos`` convolutions of ``f`` at every node.

    For each node ``t``:

    * ``sin``: ``int_0^t sin(omega (t - s)) f(s) ds``
    * ``cos``: ``int_0^t cos(omega (t - s)) f(s) ds``
    * ``one_minus_cos``: ``int_0^t (1 - cos(omega (t - s))) f(s) ds``

    ``times[0]`` is taken as the origin.
    """
    times = np.asarray(times, dtype=float)
    omega = np.asarray(omega, dtype=float)
    shift = times - times[0]
    cm = oscillatory_cumulative(shift, f, omega)  # int e^{-i w s} f
    cp = oscillatory_cumulative(shift, f, -omega)  # int e^{+i w s} f
    c0 = oscillatory_cumulative(shift, f, np.zeros_like(omega))
    t = shift.reshape((-1,) + (1,) * (cm.ndim - 1))
    ep = np.exp(1j * omega * t)
    em = np.conj(ep)
    sin_k = (ep * cm - em * cp) / 2j
    cos_k = (ep * cm + em * cp) / 2.0
    return {"sin": sin_k, "cos": cos_k, "one_minus_cos": c0 - cos_k, "plain": c0}


# --------------------------------------------------------------------------
# frequency-fitted Hermite interpolation
def _fitted_basis(y: np.ndarray) -> dict[str, np.ndarray]:
    """Stable evaluations of ``C2=(1-cos y)/y^2``, ``S1=sin y/y``, ``S3=(y-sin y)/y^3``,
    ``C4=(y^2/2-1+cos y)/y^4``."""
    y = np.asarray(y, dtype=float)
    small = np.abs(y) < _SERIES_CUTOFF
    ys = np.where(small, 1.0, y)
    c2 = (1.0 - np.cos(ys)) / ys**2
    s1 = np.sin(ys) / ys
    s3 = (ys - np.sin(ys)) / ys**3
    c4 = (ys**2 / 2.0 - 1.0 + np.cos(ys)) / ys**4
    if np.any(small):
        y2 = y * y
        # alternating series in y^2 with factorial denominators
        sc2 = np.zeros_like(y)
        ss1 = np.zeros_like(y)
        ss3 = np.zeros_like(y)
        sc4 = np.zeros_like(y)
        p = np.ones_like(y)
        for n in range(_N_TERMS // 2):
            sign = (-1.0) ** n
            fact = _factorials
            ss1 = ss1 + sign * p / fact[2 * n + 1]
            sc2 = sc2 + sign * p / fact[2 * n + 2]
            ss3 = ss3 + sign * p / fact[2 * n + 3]
            sc4 = sc4 + sign * p / fact[2 * n + 4]
            p = p * y2
        c2 = np.where(small, sc2, c2)
        s1 = np.where(small, ss1, s1)
        s3 = np.where(small, ss3, s3)
        c4 = np.where(small, sc4, c4)
    return {"c2": c2, "s1": s1, "s3": s3, "c4": c4}


_factorials = np.cumprod(np.concatenate([[1.0], np.arange(1, 40, dtype=float)]))


class FittedHermite:
    """Piecewise interpolant of samples ``u`` with derivatives ``du``.

    On ``[t_n, t_n + h]`` with ``x = (s - t_n)/h`` and ``theta = omega h`` the
    interpolant is ``u_n + h du_n x + c x^2 C2(theta x) + d x^3 S3(theta x)``,
    i.e. a member of ``span{1, s, cos(omega s), sin(omega s)}`` matching
    value and slope at both ends.  ``omega = 0`` gives cubic Hermite.
    """

    def __init__(self, times: np.ndarray, u: np.ndarray, du: np.ndarray, omega=0.0):
        self.times = np.asarray(times, dtype=float)
        if self.times.ndim != 1 or len(self.times) < 2:
            raise ValueError("need at least two sample times")
        if np.any(np.diff(self.times) <= 0.0):
            raise ValueError("sample times must be strictly increasing")
        self.u = np.asarray(u)
        self.du = np.asarray(du)
        if self.u.shape != self.du.shape or self.u.shape[0] != len(self.times):
            raise ValueError("values and derivatives must share a leading time axis")
        self.omega = np.broadcast_to(np.asarray(omega, dtype=float), self.u.shape[1:])
        h = np.diff(self.times).reshape((-1,) + (1,) * (self.u.ndim - 1))
        self.h = h
        theta = self.omega * h
        b = _fitted_basis(theta)
        phi3, phi4 = b["c2"], b["s3"]  # values at x = 1
        dphi3, dphi4 = b["s1"], b["c2"]  # x-derivatives at x = 1
        u0, u1 = self.u[:-1], self.u[1:]
        g0, g1 = h * self.du[:-1], h * self.du[1:]
        r1 = u1 - u0 - g0
        r2 = g1 - g0
        det = phi3 * dphi4 - phi4 * dphi3
        self.c = (r1 * dphi4 - phi4 * r2) / det
        self.d = (phi3 * r2 - dphi3 * r1) / det
        full = self._partial(np.arange(len(self.times) - 1), np.ones(h.shape))
        self._cum = np.concatenate([np.zeros((1,) + self.u.shape[1:], dtype=full.dtype), np.cumsum(full, axis=0)])

    def _partial(self, idx: np.ndarray, x: np.ndarray) -> np.ndarray:
        """``int_{t_n}^{t_n + x h} p`` for interval indices ``idx`` and fractions ``x``."""
        h = self.h[idx]
        theta = self.omega * h * x
        b = _fitted_basis(theta)
        u0 = self.u[idx]
        g0 = h * self.du[idx]
        return h * (u0 * x + g0 * x**2 / 2.0 + self.c[idx] * x**3 * b["s3"] + self.d[idx] * x**4 * b["c4"])

    def _locate(self, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        lo, hi = self.times[0], self.times[-1]
        tol = 1e-12 * max(1.0, abs(hi))
        if np.any(t < lo - tol) or np.any(t > hi + tol):
            raise ValueError(f"evaluation times outside the stored history [{lo}, {hi}]")
        idx = np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, len(self.times) - 2)
        x = np.clip((t - self.times[idx]) / np.diff(self.times)[idx], 0.0, 1.0)
        return idx, x.reshape((-1,) + (1,) * (self.u.ndim - 1))

    def cumulative(self) -> np.ndarray:
        """``int_{t_0}^{t_n} p`` at every node."""
        return self._cum

    def integral_to(self, t) -> np.ndarray:
        """``int_{t_0}^{t} p`` for each entry of ``t`` (leading axis)."""
        idx, x = self._locate(t)
        return self._cum[idx] + self._partial(idx, x)

    def value_at(self, t) -> np.ndarray:
        idx, x = self._locate(t)
        h = self.h[idx]
        theta = self.omega * h * x
        b = _fitted_basis(theta)
        return self.u[idx] + h * self.du[idx] * x + self.c[idx] * x**2 * b["c2"] + self.d[idx] * x**3 * b["s3"]

    def window_average(self, starts: np.ndarray, widths) -> np.ndarray:
        """``(1/w) int_{t}^{t+w} p`` for start times ``t`` and per-component widths ``w``.

        ``widths`` broadcasts against one sample (per-mode windows).  Each
        start-width pair is evaluated separately, so this scales as
        ``len(starts) * n_components``.
        """
        starts = np.atleast_1d(np.asarray(starts, dtype=float))
        widths = np.broadcast_to(np.asarray(widths, dtype=float), self.u.shape[1:])
        lower = self.integral_to(starts)
        uniq = np.unique(widths)
        out = np.empty(lower.shape, dtype=lower.dtype)
        for w in uniq:
            mask = widths == w
            upper = self.integral_to(starts + w)
            out[:, mask] = (upper[:, mask] - lower[:, mask]) / w
        return out


# --------------------------------------------------------------------------
# Chebyshev spectral integration on short intervals
def chebyshev_nodes(n: int, a: float, b: float) -> np.ndarray:
    """Chebyshev-Lobatto points on ``[a, b]`` in increasing order."""
    if n < 2:
        raise ValueError("need at least two Chebyshev nodes")
    x = -np.cos(np.pi * np.arange(n) / (n - 1))
    return a + (b - a) * (x + 1.0) / 2.0


def cumulative_integration_matrix(n: int, a: float, b: float) -> np.ndarray:
    """Matrix ``Q`` with ``(Q f)_i = int_a^{t_i} p`` for the interpolant ``p`` of ``f`` at
    the Chebyshev-Lobatto nodes ``t_i``.  Spectrally accurate for smooth ``f``."""
    from numpy.polynomial import chebyshev as C

    x = -np.cos(np.pi * np.arange(n) / (n - 1))
    V = C.chebvander(x, n - 1)
    coeffs = np.linalg.solve(V, np.eye(n))  # columns: Chebyshev coefficients of unit data
    integrated = C.chebint(coeffs, lbnd=-1.0, axis=0)
    return (b - a) / 2.0 * (C.chebvander(x, n) @ integrated)


def chebyshev_kernels(Q: np.ndarray, times: np.ndarray, f: np.ndarray, omega) -> dict[str, np.ndarray]:
    """Same convolutions as :func:`duhamel_kernels`, integrated with the matrix ``Q``.

    ``times`` must be the nodes ``Q`` was built for.  The kernels are split
    with ``sin(w(t-s)) = sin(wt)cos(ws) - cos(wt)sin(ws)`` so every integrand
    is smooth.
    """
    times = np.asarray(times, dtype=float)
    f = np.asarray(f)
    omega = np.asarray(omega, dtype=float)
    t = (times - times[0]).reshape((-1,) + (1,) * (f.ndim - 1))
    c, s = np.cos(omega * t), np.sin(omega * t)

    def integrate(a: np.ndarray) -> np.ndarray:
        return np.tensordot(Q, a, axes=(1, 0))

    ic, is_ = integrate(c * f), integrate(s * f)
    plain = integrate(np.broadcast_to(f, np.broadcast_shapes(f.shape, c.shape)))
    sin_k = s * ic - c * is_
    cos_k = c * ic + s * is_
    return {"sin": sin_k, "cos": cos_k, "one_minus_cos": plain - cos_k, "plain": plain}
