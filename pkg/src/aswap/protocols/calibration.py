"""Flux-distortion measurement with a qubit-assisted Ramsey sequence.

A rectangular flux pulse leaves a slowly decaying tail on the coupler.
After ``tau_delay`` a superposition is prepared on ``q1``, swapped onto the
coupler by the rising edge of a flattop, held where the coupler frequency is
flux sensitive, swapped back and read by phase tomography.  The tail shifts
the coupler frequency during the hold, so the phase difference to a run
without the rectangular pulse measures the tail.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..circuit import CircuitSpec, circuit_basis, coupler_slope, single_excitation_eigensystem
from ..dynamics import apply_operator, dressed_projector, dressed_rotation, expectation, propagate_states
from ..pulses import (
    DEFAULT_SAMPLE_PERIOD,
    DistortionModel,
    FluxPulse,
    PredistortionFilter,
    apply_distortion,
    apply_filter,
    make_flattop,
)
from .experiments import IDLE_FLUX, aswap_transfer, park_flux, qubit_branch, sample_period_for

DEFAULT_SLOPE_THRESHOLD = 2.0  # GHz per flux quantum


@dataclass(frozen=True)
class FlattopSpec:
    """Swap-in, hold, swap-out waveform; ``hold_flux=None`` means the park point below ``q1``."""

    hold_flux: Optional[float] = None
    rise: float = 200.0
    hold: float = 100.0
    fall: float = 200.0
    edge_shape: str = "cosine"


@dataclass(frozen=True)
class RamseyRecord:
    tau_delay: np.ndarray
    phase: np.ndarray  # wrapped to (-pi, pi]
    phase_unwrapped: np.ndarray
    reference_phase: float
    distortion_phase: np.ndarray
    distortion_phase_unwrapped: np.ndarray
    oracle_phase: np.ndarray
    flags: tuple[str, ...] = ()
    metadata: dict = field(default_factory=dict)

    @property
    def max_abs_distortion_phase(self) -> float:
        return float(np.max(np.abs(self.distortion_phase_unwrapped)))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["tau_delay_ns", "phase", "phase_unwrapped", "distortion_phase", "distortion_phase_unwrapped", "oracle_phase"])
            for row in zip(
                self.tau_delay, self.phase, self.phase_unwrapped, self.distortion_phase, self.distortion_phase_unwrapped, self.oracle_phase
            ):
                w.writerow([f"{x:.15g}" for x in row])

    def summary(self) -> dict:
        return {
            "reference_phase": self.reference_phase,
            "max_abs_distortion_phase": self.max_abs_distortion_phase,
            "max_oracle_error": float(np.max(np.abs(self.distortion_phase_unwrapped - self.oracle_phase))),
            "flags": list(self.flags),
            "metadata": dict(self.metadata),
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)


def wrap_phase(phi):
    """Wrap to (-pi, pi]."""
    out = np.pi - np.mod(np.pi - np.asarray(phi, dtype=float), 2 * np.pi)
    return out[()]


def programmed_waveform(
    flattop: FluxPulse,
    rect_amplitude: float,
    rect_duration: float,
    tau_delay: float,
) -> tuple[FluxPulse, int]:
    """Idle sample, rectangular pulse, wait, flattop.  Returns the waveform and the flattop's first index."""
    dt = flattop.sample_period
    n_rect = int(round(rect_duration / dt))
    n_wait = int(round(tau_delay / dt))
    samples = np.concatenate([[IDLE_FLUX], np.full(n_rect, IDLE_FLUX + rect_amplitude), np.full(n_wait, IDLE_FLUX), flattop.samples])
    start = 1 + n_rect + n_wait
    return FluxPulse(dt, samples, {"flattop": (start, samples.size)}), start


def _window_flux(
    flattop: FluxPulse,
    rect_amplitude: float,
    rect_duration: float,
    tau_delay: float,
    model: Optional[DistortionModel],
    filt: Optional[PredistortionFilter],
) -> np.ndarray:
    """Flux the coupler actually sees between the two pi/2 pulses."""
    wave, start = programmed_waveform(flattop, rect_amplitude, rect_duration, tau_delay)
    if filt is not None:
        wave = apply_filter(wave, filt)
    if model is not None:
        wave = apply_distortion(wave, model, pad=False)
    return wave.samples[start:]


def phase_oracle(circuit: CircuitSpec, flux_measured: np.ndarray, flux_reference: np.ndarray, sample_period: float) -> float:
    """Extra phase of an adiabatically transported q1 excitation, by quadrature.

    ``sum 2 pi [E(flux_measured) - E(flux_reference)] dt`` over the window,
    with ``E`` the one-excitation branch that holds q1 at idle.  No state
    vector is involved.
    """
    k, _ = qubit_branch(circuit, IDLE_FLUX, "q1")
    e_meas = single_excitation_eigensystem(circuit, flux_measured)[0][:, k]
    e_ref = single_excitation_eigensystem(circuit, flux_reference)[0][:, k]
    return float(2 * np.pi * np.sum(e_meas - e_ref) * sample_period)


class _PhaseTomography:
    """pi/2 about y on q1, evolve, then pi/2 about x or y and a dispersive q1 measurement."""

    def __init__(self, circuit: CircuitSpec):
        self.circuit = circuit
        basis = circuit_basis(circuit)
        vac = np.eye(basis.dim, dtype=complex)[0]
        self.initial = apply_operator(dressed_rotation(circuit, IDLE_FLUX, "q1", np.pi / 2, "y"), vac)
        self.finals = [dressed_rotation(circuit, IDLE_FLUX, "q1", np.pi / 2, axis) for axis in ("x", "y")]
        self.projector = dressed_projector(circuit, IDLE_FLUX, "q1")

    def __call__(self, window: np.ndarray, awg_period: float) -> float:
        dt = sample_period_for(self.circuit, [window.min(), window.max(), IDLE_FLUX])
        m = int(np.ceil(awg_period / dt - 1e-9))
        pulse = FluxPulse(awg_period / m, np.repeat(window, m))
        psi = propagate_states(self.circuit, pulse, self.initial)
        sz_x, sz_y = (1 - 2 * expectation(self.projector, apply_operator(r, psi)) for r in self.finals)
        return float(np.arctan2(-sz_x, -sz_y))


def distortion_ramsey(
    circuit: CircuitSpec,
    model: Optional[DistortionModel],
    filt: Optional[PredistortionFilter],
    tau_delay_grid,
    flattop: FlattopSpec = FlattopSpec(),
    rect_amplitude: float = 0.002,
    rect_duration: float = 1000.0,
    awg_period: float = DEFAULT_SAMPLE_PERIOD,
    slope_threshold: float = DEFAULT_SLOPE_THRESHOLD,
) -> RamseyRecord:
    """Distortion phase ``phi - phi_0`` versus the wait after a rectangular flux pulse.

    The rectangular pulse (``rect_amplitude`` flux quanta for
    ``rect_duration`` ns) starts from idle.  ``phi_0`` comes from the same
    sequence with zero rectangular amplitude.  The waveform is programmed on
    the ``awg_period`` grid, optionally predistorted, then distorted.
    """
    hold_flux = park_flux(circuit, "q1") if flattop.hold_flux is None else flattop.hold_flux
    slope = abs(float(coupler_slope(circuit.coupler, hold_flux)))
    if slope < slope_threshold:
        raise ValueError(
            f"coupler slope {slope:.3g} GHz/flux at hold flux {hold_flux} is below the "
            f"{slope_threshold} threshold; the phase would be insensitive to the distortion"
        )
    if filt is not None and abs(filt.sample_period - awg_period) > 1e-9 * awg_period:
        raise ValueError("predistortion filter and waveform use different sample periods")
    top = make_flattop(IDLE_FLUX, hold_flux, flattop.rise, flattop.hold, flattop.fall, flattop.edge_shape, awg_period)
    flags = []
    transfer = aswap_transfer(circuit, flattop.rise, flattop.edge_shape, IDLE_FLUX, hold_flux, basis="dressed").probability
    if transfer < 0.99:
        flags.append(f"non-adiabatic edges (one-edge transfer {transfer:.4f})")

    tomography = _PhaseTomography(circuit)
    delays = np.asarray(tau_delay_grid, dtype=float)
    reference = _window_flux(top, 0.0, rect_duration, 0.0, model, filt)
    phi0 = tomography(reference, awg_period)
    phases, oracle = [], []
    for tau in delays:
        window = _window_flux(top, rect_amplitude, rect_duration, tau, model, filt)
        phases.append(tomography(window, awg_period))
        oracle.append(phase_oracle(circuit, window, reference, awg_period))
    phases = np.array(phases)
    dist = wrap_phase(phases - phi0)
    meta = {
        "hold_flux": hold_flux,
        "hold_slope_ghz_per_flux": slope,
        "rect_amplitude": rect_amplitude,
        "rect_duration_ns": rect_duration,
        "awg_period_ns": awg_period,
        "edge_transfer": transfer,
    }
    return RamseyRecord(
        delays,
        wrap_phase(phases),
        np.unwrap(phases),
        float(phi0),
        np.atleast_1d(dist),
        np.unwrap(np.atleast_1d(dist)),
        np.array(oracle),
        tuple(flags),
        meta,
    )
