"""Least-squares fits for oscillation and decay traces."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, signal

MAX_EVALUATIONS = 200
POORLY_CONSTRAINED = 0.1  # relative one-sigma uncertainty


@dataclass(frozen=True)
class FitResult:
    model_name: str
    parameters: dict[str, float]
    uncertainties: dict[str, float]
    residual_norm: float
    converged: bool
    flags: tuple[str, ...] = field(default=())

    def __getitem__(self, name: str) -> float:
        return self.parameters[name]

    def to_dict(self) -> dict:
        return {
            "model": self.model_name,
            "parameters": dict(self.parameters),
            "uncertainties": dict(self.uncertainties),
            "residual_norm": self.residual_norm,
            "converged": self.converged,
            "flags": list(self.flags),
        }


def _failed(model: str, names, reason: str) -> FitResult:
    nan = {n: math.nan for n in names}
    return FitResult(model, nan, dict(nan), math.nan, False, (reason,))


def _check_data(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-D arrays of equal length")
    if x.size < 8:
        raise ValueError("need at least 8 data points")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("data must be finite")
    return x, y


def _solve(residual, jac, p0, x) -> tuple[np.ndarray, np.ndarray, float, bool, list[str]]:
    flags = []
    sol = optimize.least_squares(residual, p0, jac=jac, method="lm", max_nfev=MAX_EVALUATIONS)
    converged = bool(sol.success) and sol.status > 0
    if not converged:
        flags.append(f"optimizer stopped: {sol.message}")
    j = sol.jac
    dof = max(1, x.size - len(p0))
    s2 = float(sol.fun @ sol.fun) / dof
    scale = np.linalg.norm(j, axis=0)
    scale[scale == 0] = 1.0
    js = j / scale
    jtj = js.T @ js
    if scale.min() == 0 or np.linalg.cond(jtj) > 1e14:
        flags.append("singular Jacobian")
        converged = False
        sigma = np.full(len(p0), math.nan)
    else:
        cov = np.linalg.inv(jtj) / np.outer(scale, scale) * s2
        sigma = np.sqrt(np.abs(np.diag(cov)))
    norm = float(np.linalg.norm(sol.fun))
    if not (np.isfinite(norm) and np.all(np.isfinite(sigma))):
        converged = False
    return sol.x, sigma, norm, converged, flags


def _decay_time(rate: float, rate_sigma: float, x: np.ndarray) -> tuple[float, float]:
    # a rate below one part in 1e9 over the record is indistinguishable from none
    if abs(rate) * np.ptp(x) < 1e-9:
        return math.inf, math.inf
    return 1 / rate, rate_sigma / rate**2


def damped_cosine(x, amplitude, decay_rate, frequency, phase, offset):
    return amplitude * np.exp(-decay_rate * x) * np.cos(2 * np.pi * frequency * x + phase) + offset


def fit_damped_cosine(x, y) -> FitResult:
    """Fit ``A exp(-t/T) cos(2 pi f t + phi) + C``.

    The decay enters as a rate, so an undamped trace gives ``decay_time = inf``.
    Frequency and decay guesses come from the FFT peak and a log-linear fit
    of the analytic-signal envelope.
    """
    names = ("amplitude", "decay_time", "decay_rate", "frequency", "phase", "offset")
    x, y = _check_data(x, y)
    order = np.argsort(x)
    x, y = x[order], y[order]
    spread = np.ptp(y)
    if spread <= 1e-12 * max(1.0, np.max(np.abs(y))):
        return _failed("damped_cosine", names, "flat trace: frequency unidentifiable")

    # FFT guess on a uniform resampling, zero-padded for resolution
    n_uniform = max(x.size, 64)
    xu = np.linspace(x[0], x[-1], n_uniform)
    yu = np.interp(xu, x, y) - np.mean(y)
    n_fft = 16 * n_uniform
    spectrum = np.abs(np.fft.rfft(yu * np.hanning(n_uniform), n_fft))
    freqs = np.fft.rfftfreq(n_fft, xu[1] - xu[0])
    spectrum[0] = 0.0
    k = int(np.argmax(spectrum))
    if spectrum[k] <= 1e-9 * spread * n_uniform or k == 0:
        return _failed("damped_cosine", names, "no spectral peak: frequency unidentifiable")
    f0 = freqs[k]

    envelope = np.abs(signal.hilbert(yu))
    trim = slice(n_uniform // 10, n_uniform - n_uniform // 10)
    env = np.clip(envelope[trim], 1e-12, None)
    slope = np.polyfit(xu[trim], np.log(env), 1)[0]
    g0 = max(0.0, -slope)

    basis = np.stack([np.exp(-g0 * x) * np.cos(2 * np.pi * f0 * x), np.exp(-g0 * x) * np.sin(2 * np.pi * f0 * x), np.ones_like(x)], axis=1)
    (a_c, a_s, c0), *_ = np.linalg.lstsq(basis, y, rcond=None)
    a0 = math.hypot(a_c, a_s)
    ph0 = math.atan2(-a_s, a_c)
    p0 = np.array([a0, g0, f0, ph0, c0])

    def residual(p):
        return damped_cosine(x, *p) - y

    def jac(p):
        a, g, f, ph, _ = p
        e = np.exp(-g * x)
        arg = 2 * np.pi * f * x + ph
        c, s = np.cos(arg), np.sin(arg)
        return np.stack([e * c, -a * x * e * c, -a * e * s * 2 * np.pi * x, -a * e * s, np.ones_like(x)], axis=1)

    p, sigma, norm, converged, flags = _solve(residual, jac, p0, x)
    a, g, f, ph, c = p
    sa, sg, sf, sph, sc = sigma
    if a < 0:
        a, ph = -a, ph + np.pi
    if f < 0:
        f, ph = -f, -ph
    ph = float((ph + np.pi) % (2 * np.pi) - np.pi)
    if ph <= -np.pi:
        ph += 2 * np.pi
    t, st = _decay_time(g, sg, x)
    if g * np.ptp(x) < -1e-6:
        flags.append("growing envelope")
    if a > 0 and math.isfinite(sa) and sa / a > POORLY_CONSTRAINED:
        flags.append("amplitude poorly constrained")
    params = dict(amplitude=float(a), decay_time=float(t), decay_rate=float(g), frequency=float(f), phase=ph, offset=float(c))
    unc = dict(amplitude=float(sa), decay_time=float(st), decay_rate=float(sg), frequency=float(sf), phase=float(sph), offset=float(sc))
    return FitResult("damped_cosine", params, unc, norm, converged, tuple(flags))


def exponential(x, amplitude, decay_rate, offset):
    return amplitude * np.exp(-decay_rate * x) + offset


def fit_exponential(x, y) -> FitResult:
    """Fit ``A exp(-t/T) + C``; the decay guess comes from a log-linear regression."""
    names = ("amplitude", "decay_time", "decay_rate", "offset")
    x, y = _check_data(x, y)
    order = np.argsort(x)
    x, y = x[order], y[order]
    spread = np.ptp(y)
    if spread <= 1e-12 * max(1.0, np.max(np.abs(y))):
        return _failed("exponential", names, "flat trace: decay unidentifiable")

    # log-linear guess against a baseline slightly beyond the last point
    sign = 1.0 if y[0] >= y[-1] else -1.0
    c0 = y[-1] - sign * 0.01 * spread
    z = np.clip(sign * (y - c0), 1e-12 * spread, None)
    slope, intercept = np.polyfit(x, np.log(z), 1)
    g0 = max(-slope, 1e-3 / max(np.ptp(x), 1e-12))
    basis = np.stack([np.exp(-g0 * x), np.ones_like(x)], axis=1)
    (a0, c0), *_ = np.linalg.lstsq(basis, y, rcond=None)
    p0 = np.array([a0, g0, c0])

    def residual(p):
        return exponential(x, *p) - y

    def jac(p):
        a, g, _ = p
        e = np.exp(-g * x)
        return np.stack([e, -a * x * e, np.ones_like(x)], axis=1)

    p, sigma, norm, converged, flags = _solve(residual, jac, p0, x)
    a, g, c = p
    sa, sg, sc = sigma
    t, st = _decay_time(g, sg, x)
    if math.isfinite(st) and abs(st / t) > POORLY_CONSTRAINED:
        flags.append("decay time poorly constrained")
    params = dict(amplitude=float(a), decay_time=float(t), decay_rate=float(g), offset=float(c))
    unc = dict(amplitude=float(sa), decay_time=float(st), decay_rate=float(sg), offset=float(sc))
    return FitResult("exponential", params, unc, norm, converged, tuple(flags))
