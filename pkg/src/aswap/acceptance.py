"""Acceptance suite shared by the test-suite and ``aswap verify-all``.

Each criterion returns a :class:`Criterion` made of individual checks.  A
check records the measured value, the bound it is compared against and the
comparison, so the table written by ``verify-all`` is self-describing.
Wall-clock times are kept separately because they are not reproducible.
"""

from __future__ import annotations

import dataclasses
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .circuit import MHZ, CircuitSpec, ResonatorSpec, eigenspectrum, flux_for_frequency, locate_anticrossings, single_excitation_eigensystem
from .dynamics import LindbladSpec
from .protocols.calibration import distortion_ramsey
from .protocols.experiments import (
    aswap_transfer,
    crossing_flux,
    landau_zener_closed,
    landau_zener_probability,
    ramsey_experiment,
    sample_period_for,
    t1_experiment,
)
from .pulses import DistortionModel, design_predistortion
from .readout import chi_eff, chi_eff_closed, chi_eff_numeric, coupler_readout_fidelity, simulate_histogram

G = 70.0  # MHz
DISPERSIVE_RESONATOR = ResonatorSpec(frequency=20.0, linewidth=2.0, qubit_coupling=100.0)
DISTORTION_FIXTURE = DistortionModel(((0.05, 800.0),))
DISTORTION_DELAYS = (0.0, 50.0, 100.0, 200.0, 400.0, 800.0, 1600.0, 3200.0)
T1_INJECTED = 10_000.0
TPHI_INJECTED = 4_000.0


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    bound: float
    relation: str  # "<", "<=", ">", ">="

    @property
    def passed(self) -> bool:
        v, b = self.value, self.bound
        if math.isnan(v):
            return False
        return {"<": v < b, "<=": v <= b, ">": v > b, ">=": v >= b}[self.relation]

    def describe(self) -> str:
        return f"{self.name} = {self.value:.6g} (need {self.relation} {self.bound:.6g})"


@dataclass(frozen=True)
class Criterion:
    number: int
    title: str
    checks: tuple[Check, ...]
    seconds: float = field(default=0.0, compare=False)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        worst = self.failures()
        detail = "; ".join(c.describe() for c in (worst or self.checks[:2]))
        return f"[{status}] criterion {self.number}: {self.title} ({detail})"


def _rel(a: float, b: float) -> float:
    return abs(a - b) / abs(b)


def anticrossing_gap() -> list[Check]:
    pair = CircuitSpec.pair(G)
    phi = crossing_flux(pair)
    e = single_excitation_eigensystem(pair, [phi])[0][0]
    gap = float(e[1] - e[0])
    scan = eigenspectrum(pair, np.linspace(0.0, 0.45, 201))
    found = locate_anticrossings(scan)
    located = found[0] if found else (math.nan, math.nan)
    return [
        Check("exact gap relative error", _rel(gap, 2 * G * MHZ), 1e-9, "<"),
        Check("located gap relative error", _rel(located[1], 2 * G * MHZ), 0.01, "<"),
        Check("located flux relative error", _rel(located[0], phi), 0.01, "<"),
        Check("anticrossings found", float(len(found)), 1.0, "<="),
    ]


def chi_limits() -> list[Check]:
    chi = 1.0
    g = G * MHZ
    checks = [
        Check("|chi_eff(0) - chi/2|", abs(chi_eff(chi, 0.0, G) - chi / 2), 0.0, "<="),
        Check("relative error at +20g vs chi", _rel(chi_eff(chi, 20 * g, G), chi), 0.01, "<"),
        Check("|chi_eff(-20g)| / chi", abs(chi_eff(chi, -20 * g, G)) / chi, 0.01, "<"),
    ]
    circuit = dataclasses.replace(CircuitSpec.default(), resonator=DISPERSIVE_RESONATOR)
    worst = 0.0
    for d in np.linspace(-10, 10, 41):
        phi = float(flux_for_frequency(circuit.coupler, circuit.q1.max_frequency + d * g))
        worst = max(worst, _rel(chi_eff_closed(circuit, phi), chi_eff_numeric(circuit, phi)))
    checks.append(Check("max closed vs numeric relative deviation, |delta| <= 10g", worst, 0.05, "<"))
    return checks


def adiabaticity_ordering() -> list[Check]:
    pair = CircuitSpec.pair(G)
    slow = aswap_transfer(pair, 50.0, "cosine").probability
    fast = aswap_transfer(pair, 5.0, "cosine").probability
    start = aswap_transfer(pair, 50.0).flux_start
    dt = sample_period_for(pair, [start, aswap_transfer(pair, 50.0).flux_end])
    step = aswap_transfer(pair, dt, "step", sample_period=dt).probability
    return [
        Check("transfer 50 ns cosine", slow, 0.99, ">="),
        Check("transfer 50 ns minus 5 ns", slow - fast, 0.0, ">"),
        Check("transfer 5 ns minus step", fast - step, 0.0, ">"),
        Check("transfer one-sample step", step, 0.05, "<="),
    ]


def landau_zener(targets=(0.05, 0.25, 0.5, 0.75, 0.95)) -> list[Check]:
    pair = CircuitSpec.pair(G)
    g = G * MHZ
    half_span = 1.3
    checks = []
    for p_target in targets:
        duration = -math.log(p_target) * 2 * half_span / (4 * math.pi**2 * g * g)
        p, rate = landau_zener_probability(pair, duration, half_span)
        checks.append(Check(f"relative error at P = {p_target}", _rel(p, landau_zener_closed(g, rate)), 0.02, "<"))
    return checks


def distortion_round_trip() -> list[Check]:
    circuit = CircuitSpec.default()
    raw = distortion_ramsey(circuit, DISTORTION_FIXTURE, None, DISTORTION_DELAYS)
    filt = design_predistortion(DISTORTION_FIXTURE, 0.5)
    corrected = distortion_ramsey(circuit, DISTORTION_FIXTURE, filt, DISTORTION_DELAYS)
    oracle_error = float(np.max(np.abs(raw.distortion_phase_unwrapped - raw.oracle_phase)))
    ratio = raw.max_abs_distortion_phase / max(corrected.max_abs_distortion_phase, 1e-300)
    return [
        Check("max |phi_dist - oracle| (rad)", oracle_error, 1e-3, "<"),
        Check("max |phi_dist| without filter (rad)", raw.max_abs_distortion_phase, 0.1, ">"),
        Check("reduction factor with filter", ratio, 50.0, ">="),
    ]


def decoherence_fits() -> list[Check]:
    circuit = CircuitSpec.default()
    # dephasing of the bare coupler mixes dressed states at ~(2/t_phi)(g/delta)^2, so T1 is measured alone
    relax = LindbladSpec.coupler_only(T1_INJECTED)
    t1 = t1_experiment(circuit, relax, np.linspace(0, 4 * T1_INJECTED, 41)).fit["decay_time"]
    both = LindbladSpec.coupler_only(T1_INJECTED, TPHI_INJECTED)
    ramsey = ramsey_experiment(circuit, both, 2.0, np.linspace(0, 2 * TPHI_INJECTED, 401))
    t2 = ramsey.fit["decay_time"]
    t_phi = 1 / (1 / t2 - 1 / (2 * t1))
    return [
        Check("T1 relative error", _rel(t1, T1_INJECTED), 0.02, "<"),
        Check("T_phi relative error", _rel(t_phi, TPHI_INJECTED), 0.05, "<"),
    ]


def readout_histogram(seed: int = 0, threads: int = 1) -> list[Check]:
    hist = simulate_histogram(2.43, 100_000, seed=seed, threads=threads)
    return [
        Check("|F - 0.888|", abs(hist.assignment_fidelity - 0.888), 0.005, "<="),
        Check("|F_coupler(0.99, 0.89) - 0.8861|", abs(coupler_readout_fidelity(0.99, 0.89) - 0.8861), 1e-4, "<="),
    ]


CRITERIA: dict[int, tuple[str, Callable[..., list[Check]]]] = {
    1: ("anticrossing splitting", anticrossing_gap),
    2: ("dispersive-shift limits", chi_limits),
    3: ("adiabaticity ordering", adiabaticity_ordering),
    4: ("Landau-Zener oracle", landau_zener),
    5: ("distortion calibration round trip", distortion_round_trip),
    6: ("decoherence fits", decoherence_fits),
    7: ("readout histogram", readout_histogram),
}


def run_criterion(number: int, seed: int = 0, threads: int = 1) -> Criterion:
    title, fn = CRITERIA[number]
    t0 = time.perf_counter()
    checks = fn(seed=seed, threads=threads) if number == 7 else fn()
    return Criterion(number, title, tuple(checks), time.perf_counter() - t0)


def run_all(seed: int = 0, threads: int = 1, numbers: Optional[list[int]] = None) -> list[Criterion]:
    return [run_criterion(n, seed, threads) for n in (numbers or sorted(CRITERIA))]
