"""Coupler characterization experiments read through a neighbouring qubit."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..circuit import (
    MHZ,
    CircuitSpec,
    circuit_basis,
    coupler_frequency,
    flux_for_frequency,
    hamiltonian_stack,
    single_excitation_eigensystem,
)
from ..dynamics import (
    LindbladSpec,
    apply_operator,
    dressed_projector,
    dressed_rotation,
    evolve_hold,
    excited_population,
    expectation,
    heisenberg_observable,
    propagate_densities,
    propagate_states,
    pulse_propagator,
)
from ..pulses import FluxPulse, make_edge, make_frequency_sweep
from .fitting import FitResult, fit_damped_cosine, fit_exponential

SIM_SAMPLE_PERIOD = 0.01  # ns
DEFAULT_EDGE = 50.0  # ns
READOUT_SWEEP = 100.0  # ns
DEFAULT_SPAN = 10.0  # in units of g
IDLE_FLUX = 0.0


@dataclass(frozen=True)
class ExperimentResult:
    """Swept variable, measured signal and the fit of that signal."""

    x: np.ndarray
    signal: np.ndarray
    fit: Optional[FitResult]
    x_name: str
    signal_name: str
    metadata: dict = field(default_factory=dict)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([self.x_name, self.signal_name])
            for x, y in zip(self.x, self.signal):
                w.writerow([f"{x:.15g}", f"{y:.15g}"])

    def summary(self) -> dict:
        out = {"metadata": dict(self.metadata)}
        if self.fit is not None:
            out["fit"] = self.fit.to_dict()
        return out

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)


# ---------------------------------------------------------------- flux points


def crossing_flux(circuit: CircuitSpec, qubit: str = "q1") -> float:
    """Flux at which the bare coupler frequency equals ``qubit``'s."""
    return float(flux_for_frequency(circuit.coupler, circuit.qubit_frequencies()[qubit]))


def _coupling(circuit: CircuitSpec, qubit: str) -> float:
    return (circuit.g_1c if qubit == "q1" else circuit.g_2c) * MHZ


def span_flux(circuit: CircuitSpec, qubit: str = "q1", span: float = DEFAULT_SPAN, side: int = -1) -> float:
    """Flux where the coupler sits ``span * g`` above (``side=+1``) or below (``-1``) ``qubit``.

    Above is capped at the coupler maximum.  Below stops halfway to any
    other qubit lying in between, so the sweep touches one anticrossing only.
    """
    freqs = circuit.qubit_frequencies()
    f_q = freqs[qubit]
    target = f_q + side * span * _coupling(circuit, qubit)
    if side > 0:
        return float(flux_for_frequency(circuit.coupler, min(target, circuit.coupler.max_frequency)))
    for other, f in freqs.items():
        if other != qubit and target <= f < f_q:
            target = (f + f_q) / 2
    return float(flux_for_frequency(circuit.coupler, target))


def park_flux(circuit: CircuitSpec, qubit: str = "q1") -> float:
    """Coupler position below ``qubit`` where a swapped excitation stays on the coupler."""
    return span_flux(circuit, qubit, DEFAULT_SPAN, side=-1)


def readout_flux(circuit: CircuitSpec) -> float:
    """Coupler position ``10 g`` below every qubit.

    Sweeping down from idle hands a coupler excitation to the highest qubit
    and leaves it there while the empty coupler passes the others.
    """
    freqs = circuit.qubit_frequencies()
    lowest = min(freqs, key=freqs.get)
    return span_flux(circuit, lowest, DEFAULT_SPAN, side=-1)


def coupler_branch(circuit: CircuitSpec, flux: float) -> tuple[int, float]:
    """Index and frequency of the single-excitation branch with most coupler weight."""
    energies, vectors, labels = single_excitation_eigensystem(circuit, [flux])
    basis = circuit_basis(circuit)
    j = labels.index(basis.excite("coupler"))
    k = int(np.argmax(np.abs(vectors[0][j]) ** 2))
    return k, float(energies[0][k])


def qubit_branch(circuit: CircuitSpec, flux: float, qubit: str = "q1") -> tuple[int, np.ndarray]:
    energies, vectors, labels = single_excitation_eigensystem(circuit, [flux])
    j = labels.index(circuit_basis(circuit).excite(qubit))
    k = int(np.argmax(np.abs(vectors[0][j]) ** 2))
    return k, vectors[0][:, k]


def sample_period_for(circuit: CircuitSpec, fluxes, frame: Optional[float] = None, bound: float = 0.08) -> float:
    """Largest simulation step up to 0.01 ns that keeps the step phase below ``bound``."""
    frame = circuit.q1.max_frequency if frame is None else frame
    hs = hamiltonian_stack(circuit, np.atleast_1d(fluxes), frame)
    norm = float(np.max(np.abs(np.linalg.eigvalsh(hs))))
    if norm == 0:
        return SIM_SAMPLE_PERIOD
    dt = min(SIM_SAMPLE_PERIOD, bound / (2 * np.pi * norm))
    return 1.0 / math.ceil(1.0 / dt)


def _embed_single(circuit: CircuitSpec, vec: np.ndarray) -> np.ndarray:
    basis = circuit_basis(circuit)
    psi = np.zeros(basis.dim, dtype=complex)
    psi[basis.manifold(1)] = vec
    return psi


# ---------------------------------------------------------------- aSWAP


@dataclass(frozen=True)
class TransferResult:
    probability: float
    crosses_anticrossing: bool
    flux_start: float
    flux_end: float

    def __float__(self) -> float:
        return self.probability


def aswap_transfer(
    circuit: CircuitSpec,
    edge: float = DEFAULT_EDGE,
    edge_shape: str = "cosine",
    flux_start: Optional[float] = None,
    flux_end: Optional[float] = None,
    qubit: str = "q1",
    basis: str = "bare",
    sample_period: Optional[float] = None,
) -> TransferResult:
    """Excitation moved from ``qubit`` to the coupler by one flux edge.

    By default the sweep starts ``10 g`` above the qubit and ends at
    ``park_flux``.  With ``basis="bare"`` the qubit starts in its bare
    excited state and the result is the bare coupler population; with
    ``"dressed"`` both ends use the instantaneous eigenstates.
    """
    if basis not in ("bare", "dressed"):
        raise ValueError("basis must be 'bare' or 'dressed'")
    if flux_start is None:
        flux_start = span_flux(circuit, qubit, side=+1)
    if flux_end is None:
        flux_end = park_flux(circuit, qubit)
    f_q = circuit.qubit_frequencies()[qubit]
    above = [float(coupler_frequency(circuit.coupler, p)) > f_q for p in (flux_start, flux_end)]
    crosses = above[0] != above[1]
    dt = sample_period or sample_period_for(circuit, [flux_start, flux_end])
    pulse = make_edge(flux_start, flux_end, edge, edge_shape, dt)
    b = circuit_basis(circuit)
    if basis == "bare":
        psi0 = np.eye(b.dim, dtype=complex)[b.index(b.excite(qubit))]
        target = np.eye(b.dim, dtype=complex)[b.index(b.excite("coupler"))]
    else:
        psi0 = _embed_single(circuit, qubit_branch(circuit, flux_start, qubit)[1])
        energies, vectors, labels = single_excitation_eigensystem(circuit, [flux_end])
        j = labels.index(b.excite("coupler"))
        k = int(np.argmax(np.abs(vectors[0][j]) ** 2))
        target = _embed_single(circuit, vectors[0][:, k])
    psi = propagate_states(circuit, pulse, psi0)
    return TransferResult(float(abs(np.vdot(target, psi)) ** 2), crosses, float(flux_start), float(flux_end))


# ---------------------------------------------------------------- scans


def coarse_anticrossing_scan(circuit: CircuitSpec, flux_grid, stray_crosstalk: float = 0.0) -> ExperimentResult:
    """Hybridization proxy for the q1 readout response at each coupler flux.

    The signal is the coupler-and-q2 admixture ``1 - w_q1`` of the q1-like
    eigenstate, which vanishes far from any crossing.  ``stray_crosstalk``
    adds that fraction of the corresponding q2 quantity (q2 response leaking
    into q1's readout line).
    """
    flux_grid = np.asarray(flux_grid, dtype=float)
    _, vectors, labels = single_excitation_eigensystem(circuit, flux_grid)
    basis = circuit_basis(circuit)
    weights = np.abs(vectors) ** 2  # (flux, bare, branch)

    def mixing(qubit: str) -> np.ndarray:
        j = labels.index(basis.excite(qubit))
        return 1 - weights[:, j, :].max(axis=1)

    signal = mixing("q1")
    if stray_crosstalk and circuit.q2 is not None:
        signal = signal + stray_crosstalk * mixing("q2")
    return ExperimentResult(flux_grid, signal, None, "flux", "signal", {"stray_crosstalk": stray_crosstalk})


@dataclass(frozen=True)
class SpectroscopyMap:
    flux_grid: np.ndarray
    drive_frequencies: np.ndarray
    signal: np.ndarray  # (flux, frequency)
    mode: str

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["flux", "drive_frequency_ghz", "signal"])
            for i, phi in enumerate(self.flux_grid):
                for j, f in enumerate(self.drive_frequencies):
                    w.writerow([f"{phi:.15g}", f"{f:.15g}", f"{self.signal[i, j]:.15g}"])

    def summary(self) -> dict:
        return {"mode": self.mode, "shape": list(self.signal.shape)}


def _readout_targets(circuit: CircuitSpec) -> list[float]:
    lowest = min(circuit.qubit_frequencies(), key=circuit.qubit_frequencies().get)
    return [IDLE_FLUX, span_flux(circuit, lowest, side=-1)]


def spectroscopy_scan(
    circuit: CircuitSpec,
    flux_grid,
    drive_freq_grid,
    linewidth: float = 2.0,
    driven: str = "coupler",
    measured: Sequence[str] = ("q1", "q2"),
    mode: str = "analytic",
    drive_amplitude: float = 1.0,
    drive_duration: Optional[float] = None,
) -> SpectroscopyMap:
    """Excitation map over coupler flux and drive frequency.

    ``analytic``: each single-excitation branch contributes a Lorentzian
    (half width ``linewidth`` MHz) weighted by the driven element's weight.
    The excitation then follows its branch adiabatically to whichever
    readout point (coupler idle or parked below every qubit) puts more of
    it on the measured qubits.  ``time`` runs a weak square drive
    (``drive_amplitude`` MHz, default length one pi pulse) followed by
    simulated swap edges to both readout points.
    """
    flux_grid = np.asarray(flux_grid, dtype=float)
    freqs = np.asarray(drive_freq_grid, dtype=float)
    if flux_grid.size == 0 or freqs.size == 0:
        raise ValueError("grids must be non-empty")
    measured = tuple(m for m in measured if m in circuit.elements and m != "coupler")
    if mode == "analytic":
        energies, vectors, labels = single_excitation_eigensystem(circuit, flux_grid)
        basis = circuit_basis(circuit)
        w = np.abs(vectors) ** 2
        drive_w = w[:, labels.index(basis.excite(driven)), :]  # (flux, branch)
        reach = np.zeros_like(drive_w)
        for target in _readout_targets(circuit):
            _, tv, _ = single_excitation_eigensystem(circuit, [target])
            tw = np.abs(tv[0]) ** 2
            on_measured = sum(tw[labels.index(basis.excite(m))] for m in measured)
            reach = np.maximum(reach, on_measured[None, :])
        gamma = linewidth * MHZ
        lor = gamma**2 / (gamma**2 + (freqs[None, None, :] - energies[:, :, None]) ** 2)
        signal = np.einsum("ik,ikf->if", drive_w * reach, lor)
        return SpectroscopyMap(flux_grid, freqs, signal, mode)
    if mode != "time":
        raise ValueError("mode must be 'analytic' or 'time'")
    basis = circuit_basis(circuit)
    omega = drive_amplitude * MHZ
    duration = drive_duration if drive_duration is not None else 1 / (2 * omega)
    lower = basis.lowering(driven)
    drive = 0.5 * omega * (lower + lower.T)
    vac = np.eye(basis.dim, dtype=complex)[0]
    signal = np.zeros((flux_grid.size, freqs.size))
    for i, phi in enumerate(flux_grid):
        states = np.array([evolve_hold(circuit, phi, [duration], vac, frame_frequency=f, extra=drive)[0] for f in freqs])
        best = np.zeros(freqs.size)
        for target in _readout_targets(circuit):
            dt = sample_period_for(circuit, [phi, target])
            u = pulse_propagator(circuit, make_edge(phi, target, DEFAULT_EDGE, "cosine", dt))
            out = states @ u.T
            best = np.maximum(best, sum(excited_population(basis, m, out) for m in measured))
        signal[i] = best
    return SpectroscopyMap(flux_grid, freqs, signal, mode)


# ---------------------------------------------------------------- coupler experiments


def _sample_shots(p: np.ndarray, shots: Optional[int], seed: int) -> np.ndarray:
    p = np.clip(p, 0.0, 1.0)
    if shots is None:
        return p
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    return rng.binomial(shots, p) / shots


def _highest_qubit(circuit: CircuitSpec) -> str:
    freqs = circuit.qubit_frequencies()
    return max(freqs, key=freqs.get)


def coupler_sweep(
    circuit: CircuitSpec,
    flux_from: float,
    flux_to: float,
    duration: float = READOUT_SWEEP,
    frame: Optional[float] = None,
) -> FluxPulse:
    """Sweep moving the coupler frequency linearly, sampled finely enough for simulation."""
    dt = sample_period_for(circuit, [flux_from, flux_to], frame)
    f = [float(coupler_frequency(circuit.coupler, p)) for p in (flux_from, flux_to)]
    return make_frequency_sweep(circuit.coupler, f[0], f[1], duration, dt)


class _CouplerReadout:
    """Dispersive measurement of the coupler, directly or after a sweep into the highest qubit.

    The measured observable is pulled back to the experiment's flux once,
    so each state costs one expectation value.
    """

    def __init__(self, circuit: CircuitSpec, flux: float, readout: str, lindblad: Optional[LindbladSpec], sweep: float):
        if readout not in ("aswap", "direct"):
            raise ValueError("readout must be 'aswap' or 'direct'")
        if readout == "direct":
            self.observable = dressed_projector(circuit, flux, "coupler")
            return
        target = readout_flux(circuit)
        projector = dressed_projector(circuit, target, _highest_qubit(circuit))
        pulse = coupler_sweep(circuit, flux, target, sweep)
        self.observable = heisenberg_observable(circuit, pulse, projector, lindblad)

    def __call__(self, states: np.ndarray, density: bool) -> np.ndarray:
        return expectation(self.observable, states, density)


def _initial(circuit: CircuitSpec, lindblad: Optional[LindbladSpec]) -> np.ndarray:
    vac = np.eye(circuit_basis(circuit).dim, dtype=complex)[0]
    return np.outer(vac, vac) if lindblad is not None else vac


def _prepare(
    circuit: CircuitSpec,
    flux: float,
    angle: float,
    preparation: str,
    lindblad: Optional[LindbladSpec],
    frame: Optional[float] = None,
    sweep: float = READOUT_SWEEP,
) -> np.ndarray:
    """Rotate the coupler by ``angle``, directly or by rotating the highest qubit and sweeping it over."""
    density = lindblad is not None
    state = _initial(circuit, lindblad)
    if preparation == "direct":
        return apply_operator(dressed_rotation(circuit, flux, "coupler", angle), state, density)
    if preparation != "aswap":
        raise ValueError("preparation must be 'direct' or 'aswap'")
    start = readout_flux(circuit)
    state = apply_operator(dressed_rotation(circuit, start, _highest_qubit(circuit), angle), state, density)
    pulse = coupler_sweep(circuit, start, flux, sweep, frame)
    if density:
        return propagate_densities(circuit, pulse, state, lindblad, frame_frequency=frame)
    return propagate_states(circuit, pulse, state, frame_frequency=frame)


def rabi_experiment(
    circuit: CircuitSpec,
    drive_amplitude: float,
    duration_grid,
    lindblad: Optional[LindbladSpec] = None,
    flux: float = IDLE_FLUX,
    readout: str = "aswap",
    shots: Optional[int] = None,
    seed: int = 0,
) -> ExperimentResult:
    """Resonant square drive on the coupler; the fitted frequency is the Rabi rate (GHz).

    The drive ``(Omega/2)(b + b^dag)`` is static in a frame at the dressed
    coupler frequency, so each duration is one exact exponential.
    """
    durations = np.asarray(duration_grid, dtype=float)
    _, f_drive = coupler_branch(circuit, flux)
    basis = circuit_basis(circuit)
    b = basis.lowering("coupler")
    drive = 0.5 * drive_amplitude * MHZ * (b + b.T)
    states = evolve_hold(circuit, flux, durations, _initial(circuit, lindblad), lindblad, f_drive, drive)
    measure = _CouplerReadout(circuit, flux, readout, lindblad, READOUT_SWEEP)
    p = _sample_shots(measure(states, lindblad is not None), shots, seed)
    fit = fit_damped_cosine(durations, p)
    meta = {"drive_amplitude_mhz": drive_amplitude, "drive_frequency_ghz": f_drive, "flux": flux, "readout": readout}
    if fit.converged:
        meta["rabi_frequency_mhz"] = fit["frequency"] / MHZ
    return ExperimentResult(durations, p, fit, "duration_ns", "p_excited", meta)


def t1_experiment(
    circuit: CircuitSpec,
    lindblad: Optional[LindbladSpec],
    delay_grid,
    flux: float = IDLE_FLUX,
    preparation: str = "direct",
    readout: str = "aswap",
    shots: Optional[int] = None,
    seed: int = 0,
) -> ExperimentResult:
    """Excite the coupler, wait, measure; exponential fit gives T1 (ns)."""
    delays = np.asarray(delay_grid, dtype=float)
    state = _prepare(circuit, flux, np.pi, preparation, lindblad)
    states = evolve_hold(circuit, flux, delays, state, lindblad)
    measure = _CouplerReadout(circuit, flux, readout, lindblad, READOUT_SWEEP)
    p = _sample_shots(measure(states, lindblad is not None), shots, seed)
    fit = fit_exponential(delays, p)
    meta = {"flux": flux, "preparation": preparation, "readout": readout}
    return ExperimentResult(delays, p, fit, "delay_ns", "p_excited", meta)


def ramsey_experiment(
    circuit: CircuitSpec,
    lindblad: Optional[LindbladSpec],
    detuning: float,
    delay_grid,
    flux: float = IDLE_FLUX,
    preparation: str = "direct",
    readout: str = "aswap",
    shots: Optional[int] = None,
    seed: int = 0,
) -> ExperimentResult:
    """Two coupler pi/2 pulses around a free delay, in a frame ``detuning`` MHz below the coupler.

    The fitted frequency (GHz) is the detuning and the decay time is T2*.
    """
    delays = np.asarray(delay_grid, dtype=float)
    _, f_coupler = coupler_branch(circuit, flux)
    frame = f_coupler - detuning * MHZ
    density = lindblad is not None
    state = _prepare(circuit, flux, np.pi / 2, preparation, lindblad, frame)
    states = evolve_hold(circuit, flux, delays, state, lindblad, frame)
    states = apply_operator(dressed_rotation(circuit, flux, "coupler", np.pi / 2), states, density)
    measure = _CouplerReadout(circuit, flux, readout, lindblad, READOUT_SWEEP)
    p = _sample_shots(measure(states, density), shots, seed)
    fit = fit_damped_cosine(delays, p)
    meta = {"flux": flux, "detuning_mhz": detuning, "frame_ghz": frame, "preparation": preparation, "readout": readout}
    return ExperimentResult(delays, p, fit, "delay_ns", "p_excited", meta)


def landau_zener_probability(
    circuit: CircuitSpec,
    duration: float,
    half_span: float = 1.3,
    qubit: str = "q1",
    basis: str = "dressed",
    sample_period: Optional[float] = None,
) -> tuple[float, float]:
    """Diabatic probability for a linear coupler-frequency sweep through ``qubit``.

    The coupler frequency runs from ``f_q + half_span`` to ``f_q - half_span``
    GHz in ``duration`` ns.  With ``basis="dressed"`` the sweep starts in the
    qubit-like eigenstate and the result is the qubit-like eigenstate
    population at the end; bare projections carry finite-span oscillations
    of order ``g / half_span``.  Returns ``(probability, rate)``, the rate in
    GHz/ns.
    """
    if basis not in ("bare", "dressed"):
        raise ValueError("basis must be 'bare' or 'dressed'")
    f_q = circuit.qubit_frequencies()[qubit]
    f_hi, f_lo = f_q + half_span, f_q - half_span
    fluxes = [float(flux_for_frequency(circuit.coupler, f)) for f in (f_hi, f_lo)]
    dt = sample_period or sample_period_for(circuit, fluxes)
    pulse = make_frequency_sweep(circuit.coupler, f_hi, f_lo, duration, dt)
    b = circuit_basis(circuit)
    if basis == "bare":
        psi0 = target = np.eye(b.dim, dtype=complex)[b.index(b.excite(qubit))]
    else:
        psi0 = _embed_single(circuit, qubit_branch(circuit, fluxes[0], qubit)[1])
        target = _embed_single(circuit, qubit_branch(circuit, fluxes[1], qubit)[1])
    psi = propagate_states(circuit, pulse, psi0)
    return float(abs(np.vdot(target, psi)) ** 2), 2 * half_span / pulse.duration


def landau_zener_closed(g: float, rate: float) -> float:
    """``exp(-4 pi^2 g^2 / v)`` with ``g`` in GHz and ``v`` in GHz/ns (the linear-frequency form of ``exp(-2 pi g^2 / v)``)."""
    return math.exp(-4 * math.pi**2 * g * g / rate)
