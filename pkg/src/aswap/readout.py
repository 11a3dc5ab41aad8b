"""Dispersive readout of ``q1``: resonator pull, coupler hybridization, IQ histograms.

Detunings follow one convention: ``delta_qr = f_r - f_q1`` and
``delta_qc = f_c - f_q1``.  With the resonator and the coupler above the
qubit both are positive, ``chi > 0`` and ``chi_eff`` tends to ``chi``.
"""

from __future__ import annotations

import csv
import json
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy.special import erfc

from .circuit import MHZ, CircuitSpec, build_hamiltonian, circuit_basis, coupler_frequency

SHOTS_PER_SHARD = 10_000


class DispersiveValidityWarning(UserWarning):
    pass


def chi_bare(g_qr: float, delta_qr: float) -> float:
    """Two-level dispersive shift ``g^2 / delta`` in MHz (``g_qr`` in MHz, ``delta_qr`` in GHz)."""
    if delta_qr == 0:
        raise ValueError("dispersive shift diverges at zero qubit-resonator detuning")
    if abs(delta_qr) < 10 * g_qr * MHZ:
        warnings.warn(
            f"|delta_qr| = {abs(delta_qr)} GHz is below 10 g_qr; dispersive approximation is poor",
            DispersiveValidityWarning,
            stacklevel=2,
        )
    return (g_qr * MHZ) ** 2 / delta_qr / MHZ


def chi_eff(chi: float, delta_qc: float, g: float) -> float:
    """Dispersive shift of the dressed qubit-like state under coupler hybridization.

    ``chi`` in MHz, ``delta_qc`` in GHz, ``g`` in MHz.
    """
    if not g > 0:
        raise ValueError("g must be positive")
    g = g * MHZ
    x = delta_qc / 2 - np.sqrt(delta_qc**2 / 4 + g**2)
    return chi / 2 * (1 - (x * x - g * g) / (x * x + g * g))


def _dispersive_subcircuit(circuit: CircuitSpec) -> CircuitSpec:
    if circuit.resonator is None:
        raise ValueError("circuit has no readout resonator")
    return replace(circuit, q2=None)


def chi_eff_numeric(
    circuit: CircuitSpec, flux: float, resonator_photons: int = 2, dressed_state: str = "lower"
) -> float:
    """Dispersive shift of ``q1`` from exact diagonalization, in MHz.

    The Hamiltonian covers ``q1``, the coupler and the resonator (``q2`` is
    dropped).  Dressed single-photon states are picked by overlap with
    ``a_r^dag`` applied to the dressed ground state and to the excited
    dressed state: with ``dressed_state="lower"`` the lower of the two
    qubit-coupler states (the one the closed form describes), with
    ``"qubit_like"`` the one with the larger ``q1`` weight.
    """
    if dressed_state not in ("lower", "qubit_like"):
        raise ValueError("dressed_state must be 'lower' or 'qubit_like'")
    sub = _dispersive_subcircuit(circuit)
    r = sub.resonator
    delta_qr = r.frequency - sub.q1.max_frequency
    if abs(delta_qr) < 10 * r.qubit_coupling * MHZ:
        raise ValueError(
            f"resonator is too close to q1 ({delta_qr:.4g} GHz) for a dispersive shift to be defined"
        )
    levels = resonator_photons + 1
    h = build_hamiltonian(sub, flux, include_resonator=True, resonator_levels=levels)
    basis = circuit_basis(sub, include_resonator=True, resonator_levels=levels)
    w, v = np.linalg.eigh(h)
    ar_dag = basis.lowering("resonator").T
    n_exc = np.real(np.einsum("ij,ik,kj->j", v.conj(), basis.excitation_number(), v)).round().astype(int)

    def best(target: np.ndarray, manifold: int) -> int:
        overlaps = np.abs(v.conj().T @ target) ** 2
        overlaps[n_exc != manifold] = -1
        return int(np.argmax(overlaps))

    ground = best(np.eye(basis.dim)[basis.index(basis.vacuum())], 0)
    photon_free = np.asarray(basis.number("resonator").diagonal()) == 0
    singles = [k for k in np.argsort(w) if n_exc[k] == 1 and np.sum(np.abs(v[photon_free, k]) ** 2) > 0.5]
    if dressed_state == "lower":
        lower = singles[0]
    else:
        q1_weight = np.abs(v[basis.index(basis.excite("q1")), singles[:2]]) ** 2
        lower = singles[int(np.argmax(q1_weight))]
    e_g1 = w[best(ar_dag @ v[:, ground], 1)]
    e_l1 = w[best(ar_dag @ v[:, lower], 2)]
    pull_ground = e_g1 - w[ground]
    pull_lower = e_l1 - w[lower]
    return float((pull_ground - pull_lower) / 2 / MHZ)


def chi_eff_closed(circuit: CircuitSpec, flux: float) -> float:
    """Closed-form ``chi_eff`` at ``flux`` for the circuit's bare parameters."""
    r = circuit.resonator
    chi = chi_bare(r.qubit_coupling, r.frequency - circuit.q1.max_frequency)
    delta_qc = float(coupler_frequency(circuit.coupler, flux)) - circuit.q1.max_frequency
    return float(chi_eff(chi, delta_qc, circuit.g_1c))


@dataclass(frozen=True)
class DispersiveParams:
    """``chi`` and ``kappa`` (full linewidth) in MHz; ``probe_frequency`` is the bare resonator center in GHz."""

    chi: float
    kappa: float
    probe_frequency: float

    def __post_init__(self):
        if not np.isfinite(self.chi):
            raise ValueError("chi must be finite")
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")


def transmission_s21(params: DispersiveParams, qubit_state: int, probe_grid, chi_eff: Optional[float] = None) -> np.ndarray:
    """Notch-type resonator response, centered at ``f_r - chi_eff`` for state 0 and ``f_r + chi_eff`` for state 1.

    ``chi_eff`` defaults to ``params.chi``.
    """
    if qubit_state not in (0, 1):
        raise ValueError("qubit_state must be 0 or 1")
    shift = (params.chi if chi_eff is None else chi_eff) * MHZ
    center = params.probe_frequency + (shift if qubit_state else -shift)
    f = np.asarray(probe_grid, dtype=float)
    return 1 - 1 / (1 + 2j * (f - center) / (params.kappa * MHZ))


@dataclass(frozen=True)
class HistogramResult:
    iq_points: np.ndarray  # (2*shots, 2)
    true_states: np.ndarray
    assigned_states: np.ndarray
    threshold: float
    axis: np.ndarray
    assignment_fidelity: float
    seed: int

    def summary(self) -> dict:
        return {
            "threshold": self.threshold,
            "assignment_fidelity": self.assignment_fidelity,
            "seed": self.seed,
            "shots_per_state": int(self.true_states.size // 2),
        }

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["I", "Q", "true_state", "assigned_state"])
            for (i, q), s, a in zip(self.iq_points, self.true_states, self.assigned_states):
                w.writerow([f"{i:.15g}", f"{q:.15g}", int(s), int(a)])

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)


def analytic_fidelity(snr: float) -> float:
    return float(1 - 0.5 * erfc(snr / (2 * np.sqrt(2))))


def _shard(seed_seq: np.random.SeedSequence, n: int, center: float) -> np.ndarray:
    rng = np.random.Generator(np.random.Philox(seed_seq))
    pts = rng.standard_normal((n, 2))
    pts[:, 0] += center
    return pts


def simulate_histogram(snr: float, shots: int, seed: int = 0, threads: int = 1) -> HistogramResult:
    """IQ blobs for both prepared states and their midpoint-threshold assignment.

    Points come in fixed-size shards, each with its own spawned counter-based
    stream, so the result does not depend on ``threads``.
    """
    if shots < 1000:
        raise ValueError("need at least 1000 shots per state")
    if snr < 0:
        raise ValueError("snr must be non-negative")
    sizes = [SHOTS_PER_SHARD] * (shots // SHOTS_PER_SHARD)
    if shots % SHOTS_PER_SHARD:
        sizes.append(shots % SHOTS_PER_SHARD)
    root = np.random.SeedSequence(seed)
    jobs = []
    for state, center in ((0, -snr / 2), (1, snr / 2)):
        children = np.random.SeedSequence(root.entropy, spawn_key=(state,)).spawn(len(sizes))
        jobs += [(child, n, center) for child, n in zip(children, sizes)]
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        parts = list(pool.map(lambda job: _shard(*job), jobs))
    pts = np.concatenate(parts)
    truth = np.repeat([0, 1], shots)
    m0, m1 = pts[:shots].mean(axis=0), pts[shots:].mean(axis=0)
    sep = m1 - m0
    axis = sep / np.linalg.norm(sep) if np.linalg.norm(sep) > 0 else np.array([1.0, 0.0])
    proj = pts @ axis
    threshold = float((m0 + m1) @ axis / 2)
    assigned = (proj > threshold).astype(int)
    p10 = np.mean(assigned[:shots] == 1)
    p01 = np.mean(assigned[shots:] == 0)
    fidelity = float(1 - (p10 + p01) / 2)
    return HistogramResult(pts, truth, assigned, threshold, axis, fidelity, seed)


def coupler_readout_fidelity(swap_transfer: float, qubit_fidelity: float) -> float:
    """Assignment fidelity for the coupler read through a swap to the qubit."""
    for name, p in (("swap_transfer", swap_transfer), ("qubit_fidelity", qubit_fidelity)):
        if not 0 <= p <= 1:
            raise ValueError(f"{name} must lie in [0, 1]")
    return 0.5 + swap_transfer * (qubit_fidelity - 0.5)
