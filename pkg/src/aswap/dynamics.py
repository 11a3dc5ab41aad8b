"""Time evolution under a sampled flux waveform.

Each flux sample is held for one sample period; the exact exponential of the
Hamiltonian over that interval is the step propagator.  Open-system
evolution is Strang-split: half a unitary step, the exact dissipator over a
full step, then the other half.  All evolution runs in a frame rotating at a
common ``frame_frequency`` (default: the ``q1`` frequency), which shifts
every one-excitation energy by the same amount and leaves populations
untouched.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterator, Optional, Union

import numpy as np
from scipy import linalg

from .circuit import Basis, CircuitSpec, Label, circuit_basis, hamiltonian_stack
from .pulses import FluxPulse

TWO_PI = 2 * np.pi
_CHUNK = 4096


@dataclass(frozen=True)
class QuantumState:
    amplitudes: np.ndarray
    basis: Basis

    def __post_init__(self):
        psi = np.array(self.amplitudes, dtype=complex)
        if psi.shape != (self.basis.dim,):
            raise ValueError(f"expected {self.basis.dim} amplitudes, got shape {psi.shape}")
        norm = np.linalg.norm(psi)
        if abs(norm - 1) > 1e-9:
            raise ValueError(f"state is not normalized (norm {norm})")
        psi.setflags(write=False)
        object.__setattr__(self, "amplitudes", psi)

    @classmethod
    def basis_state(cls, basis: Basis, label: Label) -> "QuantumState":
        psi = np.zeros(basis.dim, dtype=complex)
        psi[basis.index(label)] = 1
        return cls(psi, basis)

    @property
    def basis_labels(self) -> tuple[Label, ...]:
        return self.basis.labels

    def populations(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2


@dataclass(frozen=True)
class DensityState:
    matrix: np.ndarray
    basis: Basis

    def __post_init__(self):
        rho = np.array(self.matrix, dtype=complex)
        d = self.basis.dim
        if rho.shape != (d, d):
            raise ValueError(f"expected a {d}x{d} matrix, got shape {rho.shape}")
        if np.max(np.abs(rho - rho.conj().T)) > 1e-12:
            raise ValueError("density matrix is not Hermitian")
        if abs(np.trace(rho).real - 1) > 1e-9:
            raise ValueError(f"density matrix trace is {np.trace(rho).real}, not 1")
        if np.min(np.linalg.eigvalsh(rho)) < -1e-9:
            raise ValueError("density matrix is not positive semidefinite")
        rho.setflags(write=False)
        object.__setattr__(self, "matrix", rho)

    @classmethod
    def from_state(cls, state: QuantumState) -> "DensityState":
        psi = state.amplitudes
        return cls(np.outer(psi, psi.conj()), state.basis)

    @classmethod
    def basis_state(cls, basis: Basis, label: Label) -> "DensityState":
        return cls.from_state(QuantumState.basis_state(basis, label))

    @property
    def basis_labels(self) -> tuple[Label, ...]:
        return self.basis.labels

    def populations(self) -> np.ndarray:
        return np.real(np.diag(self.matrix)).copy()


State = Union[QuantumState, DensityState]


@dataclass(frozen=True)
class ElementNoise:
    t1: float = math.inf
    t_phi: float = math.inf

    def __post_init__(self):
        if not (self.t1 > 0 and self.t_phi > 0):
            raise ValueError("t1 and t_phi must be positive")


@dataclass(frozen=True)
class LindbladSpec:
    """Energy relaxation and pure dephasing per element (times in ns).

    Relaxation uses ``sqrt(1/t1) a``; dephasing uses ``sqrt(2/t_phi) n``,
    which on two levels equals ``sigma_z / sqrt(2 t_phi)`` and decays the
    coherence at ``1/t_phi``.
    """

    q1: ElementNoise = field(default_factory=ElementNoise)
    coupler: ElementNoise = field(default_factory=ElementNoise)
    q2: ElementNoise = field(default_factory=ElementNoise)

    @classmethod
    def coupler_only(cls, t1: float = math.inf, t_phi: float = math.inf) -> "LindbladSpec":
        return cls(coupler=ElementNoise(t1, t_phi))

    def for_element(self, name: str) -> ElementNoise:
        return getattr(self, name)

    def jump_operators(self, basis: Basis) -> list[np.ndarray]:
        ops = []
        for name in ("q1", "coupler", "q2"):
            if name not in basis.elements:
                continue
            noise = self.for_element(name)
            if math.isfinite(noise.t1):
                ops.append(math.sqrt(1 / noise.t1) * basis.lowering(name))
            if math.isfinite(noise.t_phi):
                ops.append(math.sqrt(2 / noise.t_phi) * basis.number(name))
        return ops

    def max_rate(self) -> float:
        rates = [1 / n.t1 for n in (self.q1, self.coupler, self.q2)]
        rates += [1 / n.t_phi for n in (self.q1, self.coupler, self.q2)]
        return max(rates)


def dissipator(jumps: list[np.ndarray], dim: int) -> np.ndarray:
    """Superoperator of the dissipator acting on row-major ``vec(rho)``."""
    eye = np.eye(dim)
    out = np.zeros((dim * dim, dim * dim), dtype=complex)
    for op in jumps:
        op = op.astype(complex)
        ldl = op.conj().T @ op
        out += np.kron(op, op.conj()) - 0.5 * np.kron(ldl, eye) - 0.5 * np.kron(eye, ldl.T)
    return out


def liouvillian(h: np.ndarray, jumps: list[np.ndarray]) -> np.ndarray:
    d = h.shape[0]
    eye = np.eye(d)
    coherent = -1j * TWO_PI * (np.kron(h, eye) - np.kron(eye, h.T))
    return coherent + dissipator(jumps, d)


@dataclass(frozen=True)
class EvolutionResult:
    """Recorded populations (``times`` x basis states) and per-element ``<sigma_z>``."""

    times: np.ndarray
    populations: np.ndarray
    sigma_z: np.ndarray
    basis: Basis
    final_state: State

    def population(self, label: Label, time_index: int = -1) -> float:
        return population(self, label, time_index)

    def excited_population(self, element: str, time_index: int = -1) -> float:
        col = np.asarray(self.basis.number(element).diagonal()) >= 1
        return float(self.populations[time_index][col].sum())

    def to_csv(self, path) -> None:
        names = [self.basis.label_string(lab) for lab in self.basis.labels]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["time_ns"] + [f"P_{n}" for n in names] + [f"sz_{e}" for e in self.basis.elements])
            for t, p, sz in zip(self.times, self.populations, self.sigma_z):
                w.writerow([f"{t:.15g}"] + [f"{x:.15g}" for x in p] + [f"{x:.15g}" for x in sz])


def population(result: EvolutionResult, label: Label, time_index: int = -1) -> float:
    n = result.times.size
    if not -n <= time_index < n:
        raise IndexError(f"time index {time_index} out of range for {n} records")
    return float(result.populations[time_index, result.basis.index(label)])


def sigma_z_from_populations(basis: Basis, populations: np.ndarray) -> np.ndarray:
    """``<sigma_z>`` per element with ground = +1: ``P(n=0) - P(n>=1)``."""
    cols = []
    for name in basis.elements:
        ground = np.asarray(basis.number(name).diagonal()) == 0
        cols.append(2 * populations[..., ground].sum(axis=-1) - 1)
    return np.stack(cols, axis=-1)


def _frame(circuit: CircuitSpec, frame_frequency: Optional[float]) -> float:
    return circuit.q1.max_frequency if frame_frequency is None else float(frame_frequency)


def step_unitaries(hs: np.ndarray, dt: float, max_step_phase: float = 0.1) -> np.ndarray:
    """``exp(-2 pi i H dt)`` for a stack of Hermitian ``H``."""
    w, v = np.linalg.eigh(hs)
    phase = TWO_PI * np.max(np.abs(w)) * dt
    if phase >= max_step_phase:
        raise ValueError(
            f"step phase 2*pi*|H|*dt = {phase:.3g} rad exceeds {max_step_phase}; "
            "reduce the sample period or move the rotating frame"
        )
    return (v * np.exp(-1j * TWO_PI * dt * w)[..., None, :]) @ np.swapaxes(v.conj(), -1, -2)


def _unitary_chunks(
    circuit: CircuitSpec,
    pulse: FluxPulse,
    frame: float,
    extra: Optional[np.ndarray],
    max_step_phase: float,
    fraction: float = 1.0,
) -> Iterator[np.ndarray]:
    for start in range(0, len(pulse), _CHUNK):
        hs = hamiltonian_stack(circuit, pulse.samples[start : start + _CHUNK], frame)
        if extra is not None:
            hs = hs + extra[None]
        yield step_unitaries(hs, fraction * pulse.sample_period, max_step_phase)


def _record_indices(n_steps: int, stride: int) -> np.ndarray:
    if stride < 1:
        raise ValueError("record_stride must be >= 1")
    idx = np.arange(0, n_steps + 1, stride)
    if idx[-1] != n_steps:
        idx = np.append(idx, n_steps)
    return idx


def propagate_states(
    circuit: CircuitSpec,
    pulse: FluxPulse,
    states: np.ndarray,
    frame_frequency: Optional[float] = None,
    extra: Optional[np.ndarray] = None,
    backward: bool = False,
    max_step_phase: float = 0.1,
) -> np.ndarray:
    """Final state vectors for a batch ``(..., d)`` of initial vectors."""
    psi = np.array(states, dtype=complex)
    frame = _frame(circuit, frame_frequency)
    chunks = list(_unitary_chunks(circuit, pulse, frame, extra, max_step_phase)) if backward else None
    if backward:
        for us in reversed(chunks):
            for u in us[::-1]:
                psi = psi @ u.conj()
        return psi
    for us in _unitary_chunks(circuit, pulse, frame, extra, max_step_phase):
        for u in us:
            psi = psi @ u.T
    return psi


def pulse_propagator(
    circuit: CircuitSpec,
    pulse: FluxPulse,
    frame_frequency: Optional[float] = None,
    extra: Optional[np.ndarray] = None,
    max_step_phase: float = 0.1,
) -> np.ndarray:
    """Full propagator of ``pulse``; cheap to reuse on many initial states."""
    frame = _frame(circuit, frame_frequency)
    d = circuit_basis(circuit).dim
    total = np.eye(d, dtype=complex)
    for us in _unitary_chunks(circuit, pulse, frame, extra, max_step_phase):
        for u in us:
            total = u @ total
    return total


def evolve_unitary(
    circuit: CircuitSpec,
    pulse: FluxPulse,
    initial: QuantumState,
    frame_frequency: Optional[float] = None,
    extra: Optional[np.ndarray] = None,
    record_stride: int = 1,
    backward: bool = False,
    max_step_phase: float = 0.1,
) -> EvolutionResult:
    """Schrodinger evolution of ``initial`` through ``pulse``.

    With ``backward`` the waveform is undone from its end, so running
    forward and then backward returns the initial state.
    """
    basis = circuit_basis(circuit)
    if initial.basis != basis:
        raise ValueError("initial state basis does not match the circuit")
    frame = _frame(circuit, frame_frequency)
    n = len(pulse)
    rec = _record_indices(n, record_stride)
    keep = np.zeros(n + 1, dtype=bool)
    keep[rec] = True
    psi = initial.amplitudes.copy()
    out = [psi]
    chunks = _unitary_chunks(circuit, pulse, frame, extra, max_step_phase)
    if backward:
        steps = (u.conj().T for us in reversed(list(chunks)) for u in us[::-1])
    else:
        steps = (u for us in chunks for u in us)
    for k, u in enumerate(steps, start=1):
        psi = u @ psi
        if keep[k]:
            out.append(psi)
    pops = np.abs(np.array(out)) ** 2
    psi = psi / np.linalg.norm(psi)
    return EvolutionResult(
        rec * pulse.sample_period,
        pops,
        sigma_z_from_populations(basis, pops),
        basis,
        QuantumState(psi, basis),
    )


def _dissipative_step(lindblad: LindbladSpec, basis: Basis, dt: float) -> np.ndarray:
    if lindblad.max_rate() * dt > 1e-2:
        raise ValueError(
            f"sample period {dt} ns is not small against the shortest noise time "
            f"{1 / lindblad.max_rate():.4g} ns"
        )
    return linalg.expm(dt * dissipator(lindblad.jump_operators(basis), basis.dim))


def propagate_densities(
    circuit: CircuitSpec,
    pulse: FluxPulse,
    rhos: np.ndarray,
    lindblad: LindbladSpec,
    frame_frequency: Optional[float] = None,
    extra: Optional[np.ndarray] = None,
    max_step_phase: float = 0.1,
    record_stride: Optional[int] = None,
):
    """Strang-split open evolution of a batch ``(..., d, d)`` of density matrices.

    Returns the final matrices, or ``(record_indices, records)`` when
    ``record_stride`` is given.
    """
    basis = circuit_basis(circuit)
    d = basis.dim
    rho = np.array(rhos, dtype=complex)
    batch = rho.shape[:-2]
    frame = _frame(circuit, frame_frequency)
    e_diss_t = _dissipative_step(lindblad, basis, pulse.sample_period).T
    n = len(pulse)
    keep = None
    records = []
    if record_stride is not None:
        rec = _record_indices(n, record_stride)
        keep = np.zeros(n + 1, dtype=bool)
        keep[rec] = True
        records.append(rho.copy())
    k = 0
    for us in _unitary_chunks(circuit, pulse, frame, extra, max_step_phase, fraction=0.5):
        for u in us:
            ud = u.conj().T
            rho = u @ rho @ ud
            rho = (rho.reshape(batch + (d * d,)) @ e_diss_t).reshape(batch + (d, d))
            rho = u @ rho @ ud
            k += 1
            if keep is not None and keep[k]:
                records.append(rho.copy())
    rho = 0.5 * (rho + np.swapaxes(rho.conj(), -1, -2))
    if keep is None:
        return rho
    return rec, np.array(records)


def heisenberg_observable(
    circuit: CircuitSpec,
    pulse: FluxPulse,
    observable: np.ndarray,
    lindblad: Optional[LindbladSpec] = None,
    frame_frequency: Optional[float] = None,
    max_step_phase: float = 0.1,
) -> np.ndarray:
    """Pull ``observable`` back through ``pulse`` (the adjoint of the evolution map).

    ``Tr(M' rho) `` before the pulse equals ``Tr(M rho)`` after it, so one
    backward pass serves any number of input states.
    """
    frame = _frame(circuit, frame_frequency)
    m = np.array(observable, dtype=complex)
    if lindblad is None:
        for us in reversed(list(_unitary_chunks(circuit, pulse, frame, None, max_step_phase))):
            for u in us[::-1]:
                m = u.conj().T @ m @ u
        return m
    basis = circuit_basis(circuit)
    d = basis.dim
    e_adj = _dissipative_step(lindblad, basis, pulse.sample_period).conj().T
    half = list(_unitary_chunks(circuit, pulse, frame, None, max_step_phase, fraction=0.5))
    for us in reversed(half):
        for u in us[::-1]:
            ud = u.conj().T
            m = ud @ m @ u
            m = (e_adj @ m.reshape(d * d)).reshape(d, d)
            m = ud @ m @ u
    return 0.5 * (m + m.conj().T)


def expectation(observable: np.ndarray, states: np.ndarray, density: bool = False) -> np.ndarray:
    """``<M>`` for vectors ``(..., d)`` or density matrices ``(..., d, d)``."""
    arr = np.asarray(states)
    if density:
        return np.real(np.einsum("ij,...ji->...", observable, arr))
    return np.real(np.einsum("...i,ij,...j->...", arr.conj(), observable, arr))


def evolve_lindblad(
    circuit: CircuitSpec,
    pulse: FluxPulse,
    initial: DensityState,
    lindblad: LindbladSpec,
    frame_frequency: Optional[float] = None,
    extra: Optional[np.ndarray] = None,
    record_stride: int = 1,
    max_step_phase: float = 0.1,
) -> EvolutionResult:
    basis = circuit_basis(circuit)
    if initial.basis != basis:
        raise ValueError("initial state basis does not match the circuit")
    rec, rhos = propagate_densities(
        circuit, pulse, initial.matrix, lindblad, frame_frequency, extra, max_step_phase, record_stride
    )
    pops = np.real(np.diagonal(rhos, axis1=-2, axis2=-1))
    final = rhos[-1] / np.trace(rhos[-1]).real
    final = 0.5 * (final + final.conj().T)
    return EvolutionResult(
        rec * pulse.sample_period,
        pops,
        sigma_z_from_populations(basis, pops),
        basis,
        DensityState(final, basis),
    )


def evolve_hold(
    circuit: CircuitSpec,
    flux: float,
    durations,
    states: np.ndarray,
    lindblad: Optional[LindbladSpec] = None,
    frame_frequency: Optional[float] = None,
    extra: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Exact evolution at constant flux for each of ``durations``.

    ``states`` is a vector ``(d,)`` or, with ``lindblad``, a matrix
    ``(d, d)``; the result stacks one evolved state per duration.  No step
    size is involved, so long delays cost one exponential each.
    """
    h = hamiltonian_stack(circuit, [flux], _frame(circuit, frame_frequency))[0]
    if extra is not None:
        h = h + extra
    durations = np.atleast_1d(np.asarray(durations, dtype=float))
    if lindblad is None:
        w, v = np.linalg.eigh(h)
        coeffs = v.conj().T @ np.asarray(states, dtype=complex)
        return (np.exp(-1j * TWO_PI * np.outer(durations, w)) * coeffs) @ v.T
    d = h.shape[0]
    gen = liouvillian(h, lindblad.jump_operators(circuit_basis(circuit)))
    vec = np.asarray(states, dtype=complex).reshape(d * d)
    lam, right = linalg.eig(gen)
    if np.linalg.cond(right) < 1e8:
        coeffs = np.linalg.solve(right, vec)
        out = (np.exp(np.outer(durations, lam)) * coeffs) @ right.T
    else:  # defective generator
        out = np.array([linalg.expm(t * gen) @ vec for t in durations])
    out = out.reshape(-1, d, d)
    return 0.5 * (out + np.swapaxes(out.conj(), -1, -2))


def rotation_operator(basis: Basis, element: str, angle: float, axis: Union[str, float] = "x") -> np.ndarray:
    """Rotation by ``angle`` about an equatorial axis on the {0, 1} levels of ``element``.

    ``axis`` is ``"x"``, ``"y"`` or the azimuth in radians.  Higher levels
    of ``element`` are left alone.
    """
    phase = {"x": 0.0, "y": np.pi / 2}.get(axis, axis) if isinstance(axis, str) else float(axis)
    if isinstance(phase, str):
        raise ValueError(f"unknown rotation axis {axis!r}")
    local = basis.dims[basis.element_index(element)]
    r = np.eye(local, dtype=complex)
    c, s = math.cos(angle / 2), math.sin(angle / 2)
    r[0, 0] = r[1, 1] = c
    r[1, 0] = -1j * s * np.exp(1j * phase)
    r[0, 1] = -1j * s * np.exp(-1j * phase)
    k = basis.element_index(element)
    before = int(np.prod(basis.dims[:k]))
    after = int(np.prod(basis.dims[k + 1 :]))
    return np.kron(np.kron(np.eye(before), r), np.eye(after))


def dressed_states(circuit: CircuitSpec, flux: float, frame_frequency: float = 0.0):
    """Eigenvalues and eigenvectors (columns) of the full Hamiltonian at ``flux``."""
    h = hamiltonian_stack(circuit, [flux], frame_frequency)[0]
    return np.linalg.eigh(h)


def dressed_projector(circuit: CircuitSpec, flux: float, element: str) -> np.ndarray:
    """Projector onto the eigenstates at ``flux`` in which ``element`` is mostly excited.

    This is what a dispersive measurement of ``element`` resolves when the
    elements are hybridized.
    """
    basis = circuit_basis(circuit)
    _, v = dressed_states(circuit, flux)
    excited = np.asarray(basis.number(element).diagonal()) >= 1
    chosen = v[:, np.sum(np.abs(v[excited]) ** 2, axis=0) > 0.5]
    return chosen @ chosen.conj().T


def dressed_rotation(
    circuit: CircuitSpec, flux: float, element: str, angle: float, axis: Union[str, float] = "x"
) -> np.ndarray:
    """Selective rotation between the vacuum and the ``element``-like one-excitation eigenstate at ``flux``."""
    basis = circuit_basis(circuit)
    w, v = dressed_states(circuit, flux)
    one = basis.manifold(1)
    j = basis.index(basis.excite(element))
    single = [k for k in range(basis.dim) if np.sum(np.abs(v[one, k]) ** 2) > 0.5]
    k = max(single, key=lambda k: abs(v[j, k]))
    excited = v[:, k] * np.exp(-1j * np.angle(v[j, k]))  # phase-aligned with the bare state
    pair = np.stack([np.eye(basis.dim)[basis.index(basis.vacuum())], excited], axis=1)
    r2 = rotation_operator(Basis(("x",), (2,)), "x", angle, axis)
    return np.eye(basis.dim) + pair @ (r2 - np.eye(2)) @ pair.conj().T


def apply_rotation(
    state,
    element: str,
    angle: float,
    axis: Union[str, float] = "x",
    basis: Optional[Basis] = None,
    density: bool = False,
):
    """Apply an ideal instantaneous rotation.

    Accepts a QuantumState or DensityState, or raw arrays together with
    ``basis``: vectors ``(..., d)`` or, with ``density``, matrices ``(..., d, d)``.
    """
    if isinstance(state, QuantumState):
        r = rotation_operator(state.basis, element, angle, axis)
        return QuantumState(r @ state.amplitudes, state.basis)
    if isinstance(state, DensityState):
        r = rotation_operator(state.basis, element, angle, axis)
        return DensityState(r @ state.matrix @ r.conj().T, state.basis)
    if basis is None:
        raise ValueError("raw arrays need an explicit basis")
    r = rotation_operator(basis, element, angle, axis)
    arr = np.asarray(state, dtype=complex)
    if density:
        return r @ arr @ r.conj().T
    return arr @ r.T


def apply_operator(op: np.ndarray, states: np.ndarray, density: bool = False) -> np.ndarray:
    """``op psi`` for vectors ``(..., d)`` or ``op rho op^dag`` for matrices ``(..., d, d)``."""
    arr = np.asarray(states, dtype=complex)
    if density:
        return op @ arr @ op.conj().T
    return arr @ op.T


def excited_population(basis: Basis, element: str, states: np.ndarray, density: bool = False) -> np.ndarray:
    """``P(n_element >= 1)`` for vectors ``(..., d)`` or density matrices ``(..., d, d)``."""
    arr = np.asarray(states)
    if density:
        p = np.real(np.diagonal(arr, axis1=-2, axis2=-1))
    else:
        p = np.abs(arr) ** 2
    col = np.asarray(basis.number(element).diagonal()) >= 1
    return p[..., col].sum(axis=-1)
