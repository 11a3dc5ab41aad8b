"""Sampled flux waveforms, flux-line distortion and its inverse filter.

A waveform is held constant over each sample (zero-order hold).  Every
linear filter here assumes the signal sat at its first sample value forever
before ``t = 0``, so a constant waveform passes through in steady state.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np
from scipy import signal

from .circuit import TransmonSpec, flux_for_frequency

DEFAULT_SAMPLE_PERIOD = 0.5  # ns
EDGE_SHAPES = ("cosine", "linear", "step")


@dataclass(frozen=True)
class FluxPulse:
    """Flux samples (flux quanta) on a uniform time grid.

    ``segment_markers`` maps a segment name to a half-open ``(start, stop)``
    sample range.
    """

    sample_period: float
    samples: np.ndarray
    segment_markers: Mapping[str, tuple[int, int]] = field(default_factory=dict)

    def __post_init__(self):
        samples = np.array(self.samples, dtype=float)
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "segment_markers", dict(self.segment_markers))
        if not self.sample_period > 0:
            raise ValueError("sample_period must be positive")
        if samples.ndim != 1 or samples.size == 0:
            raise ValueError("samples must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(samples)):
            raise ValueError("samples must be finite")
        last = 0
        for name, (start, stop) in sorted(self.segment_markers.items(), key=lambda kv: kv[1]):
            if not (last <= start <= stop <= samples.size):
                raise ValueError(f"segment {name!r} {start, stop} overlaps or is out of bounds")
            last = stop

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size * self.sample_period

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.samples.size) * self.sample_period

    def segment(self, name: str) -> np.ndarray:
        start, stop = self.segment_markers[name]
        return self.samples[start:stop]

    def with_samples(self, samples, segment_markers=None) -> "FluxPulse":
        markers = self.segment_markers if segment_markers is None else segment_markers
        return FluxPulse(self.sample_period, samples, markers)

    def reversed(self) -> "FluxPulse":
        n = len(self)
        markers = {k: (n - b, n - a) for k, (a, b) in self.segment_markers.items()}
        return FluxPulse(self.sample_period, self.samples[::-1], markers)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["time_ns", "flux"])
            for t, x in zip(self.times, self.samples):
                w.writerow([f"{t:.15g}", f"{x:.15g}"])

    @classmethod
    def constant(cls, flux: float, duration: float, sample_period: float = DEFAULT_SAMPLE_PERIOD):
        n = max(1, int(round(duration / sample_period)))
        return cls(sample_period, np.full(n, float(flux)), {"hold": (0, n)})

    @classmethod
    def concatenate(cls, pulses) -> "FluxPulse":
        pulses = list(pulses)
        dt = pulses[0].sample_period
        if any(abs(p.sample_period - dt) > 1e-12 * dt for p in pulses):
            raise ValueError("cannot concatenate pulses with different sample periods")
        return cls(dt, np.concatenate([p.samples for p in pulses]))


def _edge_profile(shape: str, s: np.ndarray) -> np.ndarray:
    if shape == "cosine":
        return (1 - np.cos(np.pi * s)) / 2
    if shape == "linear":
        return s
    if shape == "step":
        return np.zeros_like(s)
    raise ValueError(f"unknown edge shape {shape!r}; expected one of {EDGE_SHAPES}")


def _n_samples(duration: float, dt: float) -> int:
    if duration < 0:
        raise ValueError("durations must be non-negative")
    return int(round(duration / dt))


def make_flattop(
    flux_low: float,
    flux_high: float,
    rise: float,
    hold: float,
    fall: float,
    edge_shape: str = "cosine",
    sample_period: float = DEFAULT_SAMPLE_PERIOD,
) -> FluxPulse:
    """Flattop from ``flux_low`` up to ``flux_high`` and back.

    Edges start (rise) and end (fall) on ``flux_low``; the fall is the mirror
    image of the rise.  A zero-length edge still needs one sample at
    ``flux_low``, which is taken out of the hold so the total duration stays
    ``rise + hold + fall``.
    """
    if edge_shape not in EDGE_SHAPES:
        raise ValueError(f"unknown edge shape {edge_shape!r}; expected one of {EDGE_SHAPES}")
    dt = sample_period
    n_rise, n_hold, n_fall = (_n_samples(d, dt) for d in (rise, hold, fall))
    borrowed = (n_rise == 0) + (n_fall == 0)
    n_rise, n_fall = max(n_rise, 1), max(n_fall, 1)
    n_hold -= borrowed
    if n_hold < 1:
        raise ValueError(f"hold of {hold} ns is shorter than one sample of {dt} ns")
    s = np.arange(n_rise) / n_rise
    up = flux_low + (flux_high - flux_low) * _edge_profile(edge_shape, s)
    s = np.arange(n_fall)[::-1] / n_fall
    down = flux_low + (flux_high - flux_low) * _edge_profile(edge_shape, s)
    samples = np.concatenate([up, np.full(n_hold, float(flux_high)), down])
    markers = {
        "rise": (0, n_rise),
        "hold": (n_rise, n_rise + n_hold),
        "fall": (n_rise + n_hold, n_rise + n_hold + n_fall),
    }
    return FluxPulse(dt, samples, markers)


def make_edge(
    flux_start: float,
    flux_end: float,
    duration: float,
    edge_shape: str = "cosine",
    sample_period: float = DEFAULT_SAMPLE_PERIOD,
) -> FluxPulse:
    """A single sweep from ``flux_start`` to ``flux_end``.

    Smooth shapes are sampled at sample midpoints, so an edge and its
    reverse are exact mirror images.  A ``step`` edge sits at ``flux_end``
    from the first sample on.
    """
    n = max(1, _n_samples(duration, sample_period))
    if edge_shape == "step":
        samples = np.full(n, float(flux_end))
    else:
        s = (np.arange(n) + 0.5) / n
        samples = flux_start + (flux_end - flux_start) * _edge_profile(edge_shape, s)
    return FluxPulse(sample_period, samples, {"edge": (0, n)})


def make_frequency_sweep(
    coupler: TransmonSpec,
    frequency_start: float,
    frequency_end: float,
    duration: float,
    sample_period: float = DEFAULT_SAMPLE_PERIOD,
) -> FluxPulse:
    """Flux waveform that moves the bare coupler frequency linearly in time."""
    n = max(1, _n_samples(duration, sample_period))
    s = (np.arange(n) + 0.5) / n
    f = frequency_start + (frequency_end - frequency_start) * s
    return FluxPulse(sample_period, flux_for_frequency(coupler, f), {"edge": (0, n)})


@dataclass(frozen=True)
class DistortionModel:
    """Step response ``h(t) = dc_gain * (1 + sum_k a_k exp(-t / tau_k))``."""

    terms: tuple[tuple[float, float], ...] = ()
    dc_gain: float = 1.0

    def __post_init__(self):
        terms = tuple((float(a), float(tau)) for a, tau in self.terms)
        object.__setattr__(self, "terms", terms)
        if any(not tau > 0 for _, tau in terms):
            raise ValueError("every time constant must be positive")
        if not self.dc_gain > 0:
            raise ValueError("dc_gain must be positive")
        if terms:
            t = np.concatenate([[0.0], np.geomspace(1e-3, 50 * self.longest_time_constant, 2000)])
            if np.min(self.step_response(t)) <= 0:
                raise ValueError("step response must stay positive")

    @property
    def longest_time_constant(self) -> float:
        return max((tau for _, tau in self.terms), default=0.0)

    def step_response(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        h = np.ones_like(t)
        for a, tau in self.terms:
            h = h + a * np.exp(-np.clip(t, 0, None) / tau)
        return np.where(t >= 0, self.dc_gain * h, 0.0)

    def to_dict(self) -> dict:
        return {
            "dc_gain": self.dc_gain,
            "terms": [{"amplitude": a, "time_constant": tau} for a, tau in self.terms],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "DistortionModel":
        terms = tuple((t["amplitude"], t["time_constant"]) for t in d.get("terms", ()))
        return cls(terms, d.get("dc_gain", 1.0))


@dataclass(frozen=True)
class PredistortionFilter:
    """Cascade of first-order sections ``(b0, b1, a1)``.

    Each section computes ``y[n] = b0 x[n] + b1 x[n-1] - a1 y[n-1]``.
    """

    sections: tuple[tuple[float, float, float], ...]
    sample_period: float

    def __post_init__(self):
        sections = tuple(tuple(float(c) for c in s) for s in self.sections)
        object.__setattr__(self, "sections", sections)
        if not sections:
            raise ValueError("a filter needs at least one section")
        for k, (_, _, a1) in enumerate(sections):
            if not abs(a1) < 1:
                raise ValueError(f"section {k} is unstable: |a1| = {abs(a1)}")
        if not self.sample_period > 0:
            raise ValueError("sample_period must be positive")

    @classmethod
    def identity(cls, sample_period: float = DEFAULT_SAMPLE_PERIOD) -> "PredistortionFilter":
        return cls(((1.0, 0.0, 0.0),), sample_period)

    def to_dict(self) -> dict:
        return {
            "sample_period": self.sample_period,
            "sections": [{"b0": b0, "b1": b1, "a1": a1} for b0, b1, a1 in self.sections],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "PredistortionFilter":
        sections = tuple((s["b0"], s["b1"], s["a1"]) for s in d["sections"])
        return cls(sections, d["sample_period"])


class UnstableFilterError(ValueError):
    """The exact inverse of a distortion model has a pole on or outside the unit circle."""


def _check_time_base(a: float, b: float) -> None:
    if abs(a - b) > 1e-9 * max(a, b):
        raise ValueError(f"inconsistent time bases: {a} ns vs {b} ns")


def apply_distortion(pulse: FluxPulse, model: DistortionModel, pad: bool = True) -> FluxPulse:
    """Flux actually seen by the coupler for a programmed ``pulse``.

    The output is the sum of the input increments, each convolved with the
    step response.  Each exponential term is a geometric sequence on the
    sample grid, so the convolution runs as a first-order recursion.  With
    ``pad`` the input is extended by five of the longest time constants at
    its final value to expose the tail.
    """
    x = pulse.samples
    dt = pulse.sample_period
    if pad and model.terms:
        n_pad = int(np.ceil(5 * model.longest_time_constant / dt))
        x = np.concatenate([x, np.full(n_pad, x[-1])])
    dx = np.diff(x, prepend=x[0])
    y = x.copy()
    for a, tau in model.terms:
        r = np.exp(-dt / tau)
        y += a * signal.lfilter([1.0], [1.0, -r], dx)
    return FluxPulse(dt, model.dc_gain * y, pulse.segment_markers)


def apply_filter(pulse: FluxPulse, filt: PredistortionFilter) -> FluxPulse:
    """Run ``pulse`` through the section cascade, starting in steady state."""
    _check_time_base(pulse.sample_period, filt.sample_period)
    y = pulse.samples
    for b0, b1, a1 in filt.sections:
        b, a = [b0, b1], [1.0, a1]
        zi = signal.lfilter_zi(b, a) * y[0]
        y, _ = signal.lfilter(b, a, y, zi=zi)
    return pulse.with_samples(y)


def design_predistortion(model: DistortionModel, sample_period: float = DEFAULT_SAMPLE_PERIOD) -> PredistortionFilter:
    """Exact discrete-time inverse of ``model`` as first-order sections.

    On the sample grid the distortion is
    ``H(w) = dc * [1 + sum_k a_k (1 - w) / (1 - r_k w)]`` with ``w = z^-1``
    and ``r_k = exp(-dt / tau_k)``.  Writing ``H = dc * N(w) / D(w)``, the
    inverse ``D / (dc * N)`` is factored over the roots of ``N`` and each
    factor ``(1 - r_k w) / (1 - q_k w)`` becomes one section.
    """
    if not model.terms:
        return PredistortionFilter(((1.0 / model.dc_gain, 0.0, 0.0),), sample_period)
    r = np.array([np.exp(-sample_period / tau) for _, tau in model.terms])
    amps = np.array([a for a, _ in model.terms])
    # polynomials in w, lowest order first
    den = np.polynomial.polynomial.polyfromroots(1.0 / r) * np.prod(-r)
    num = den.copy()
    for k, a in enumerate(amps):
        others = np.delete(r, k)
        part = np.polynomial.polynomial.polyfromroots(1.0 / others) * np.prod(-others) if others.size else np.array([1.0])
        num = np.polynomial.polynomial.polyadd(num, a * np.polynomial.polynomial.polymul([1.0, -1.0], part))
    num = np.trim_zeros(num, "b")
    w_roots = np.polynomial.polynomial.polyroots(num) if num.size > 1 else np.array([])
    if np.any(np.abs(np.imag(w_roots)) > 1e-12 * np.maximum(1, np.abs(w_roots))):
        raise ValueError("distortion model has complex inverse poles; not representable as first-order sections")
    q = np.sort(1.0 / np.real(w_roots))
    q = np.concatenate([q, np.zeros(r.size - q.size)])
    order = np.argsort(r)
    gain = 1.0 / (model.dc_gain * num[0])
    sections = []
    for k, (rk, qk) in enumerate(zip(r[order], q)):
        if not abs(qk) < 1:
            term = int(order[k])
            raise UnstableFilterError(
                f"inverse of term {term} (a={amps[term]}, tau={model.terms[term][1]} ns) "
                f"needs a pole at {qk:.6g}, outside the unit circle"
            )
        g = gain if k == 0 else 1.0
        sections.append((g, -g * rk, -qk))
    return PredistortionFilter(tuple(sections), sample_period)


@dataclass(frozen=True)
class ResidualReport:
    max_error: float
    settling_time: float
    residual: np.ndarray

    def to_dict(self) -> dict:
        return {"max_error": self.max_error, "settling_time": self.settling_time}


def verify_correction(
    model: DistortionModel,
    filt: Optional[PredistortionFilter],
    probe: FluxPulse,
    tolerance: float = 1e-4,
) -> ResidualReport:
    """Residual between the distorted, predistorted probe and the ideal probe.

    ``settling_time`` is the first time after which the residual stays below
    ``tolerance`` (``inf`` if it never does).
    """
    if filt is None:
        filt = PredistortionFilter.identity(probe.sample_period)
    # pad before filtering so the filter's own tail is in the record too
    n_pad = int(np.ceil(5 * model.longest_time_constant / probe.sample_period))
    ideal = np.concatenate([probe.samples, np.full(n_pad, probe.samples[-1])])
    corrected = apply_distortion(apply_filter(probe.with_samples(ideal, {}), filt), model, pad=False)
    residual = np.abs(corrected.samples - ideal)
    above = np.nonzero(residual >= tolerance)[0]
    if above.size == 0:
        settling = 0.0
    elif above[-1] == residual.size - 1:
        settling = float("inf")
    else:
        settling = float((above[-1] + 1) * probe.sample_period)
    return ResidualReport(float(residual.max()), settling, residual)
