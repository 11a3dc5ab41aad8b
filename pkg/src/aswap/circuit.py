"""Hamiltonian model of a qubit - tunable coupler - qubit chain.

Frequencies are linear frequencies in GHz and times are in ns, so a
Hamiltonian ``H`` generates the propagator ``exp(-2j*pi*H*t)``.  Couplings
on the specs are given in MHz (as they are quoted experimentally) and are
converted on construction.

The tensor basis is ordered ``q1, coupler, q2[, resonator]`` and every basis
state is labelled by its tuple of occupation numbers, e.g. ``(1, 0, 0)`` is
an excitation on ``q1``.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

Label = tuple[int, ...]

MHZ = 1e-3  # MHz -> GHz


@dataclass(frozen=True)
class TransmonSpec:
    """A single transmon mode.

    Parameters
    ----------
    max_frequency:
        0-1 transition frequency at zero flux, GHz.
    anharmonicity:
        GHz, non-positive; only enters when three levels are kept.
    flux_tunable:
        Whether the frequency depends on flux.
    flux_period:
        Flux period in units of the flux quantum.
    """

    max_frequency: float
    anharmonicity: float = -0.25
    flux_tunable: bool = False
    flux_period: float = 1.0

    def __post_init__(self):
        if not self.max_frequency > 0:
            raise ValueError(f"max_frequency must be positive, got {self.max_frequency}")
        if self.anharmonicity > 0:
            raise ValueError(f"anharmonicity must be <= 0, got {self.anharmonicity}")
        if not self.flux_period > 0:
            raise ValueError("flux_period must be positive")

    def frequency(self, flux=0.0):
        if not self.flux_tunable:
            return np.full_like(np.asarray(flux, dtype=float), self.max_frequency)[()]
        return coupler_frequency(self, flux)


@dataclass(frozen=True)
class ResonatorSpec:
    """Readout resonator attached to ``q1``.

    ``frequency`` in GHz, ``linewidth`` (full width kappa) and
    ``qubit_coupling`` in MHz.
    """

    frequency: float
    linewidth: float
    qubit_coupling: float

    def __post_init__(self):
        if not (self.frequency > 0 and self.linewidth > 0 and self.qubit_coupling >= 0):
            raise ValueError("resonator needs frequency > 0, linewidth > 0, qubit_coupling >= 0")

    def is_dispersive(self, qubit_frequency: float) -> bool:
        return abs(self.frequency - qubit_frequency) >= 10 * self.qubit_coupling * MHZ


@dataclass(frozen=True)
class CircuitSpec:
    """Qubit - coupler - qubit circuit with an optional readout resonator on ``q1``.

    ``q2`` may be ``None``, which leaves an isolated ``q1``-coupler pair.
    """

    q1: TransmonSpec
    q2: Optional[TransmonSpec]
    coupler: TransmonSpec
    g_1c: float = 70.0
    g_2c: float = 70.0
    g_12: float = 0.0
    resonator: Optional[ResonatorSpec] = None
    levels_per_element: int = 2

    def __post_init__(self):
        if not self.g_1c > 0:
            raise ValueError("g_1c must be positive")
        if self.q2 is not None and not self.g_2c > 0:
            raise ValueError("g_2c must be positive when q2 is present")
        if self.g_12 < 0:
            raise ValueError("g_12 must be >= 0")
        if self.q1.flux_tunable or (self.q2 is not None and self.q2.flux_tunable):
            raise ValueError("q1 and q2 must be flux-insensitive")
        if not self.coupler.flux_tunable:
            raise ValueError("the coupler must be flux-tunable")
        if self.levels_per_element not in (2, 3):
            raise ValueError("levels_per_element must be 2 or 3")

    @classmethod
    def default(cls, levels_per_element: int = 2) -> "CircuitSpec":
        """Two fixed qubits, a coupler idling well above both, and a readout resonator."""
        return cls(
            q1=TransmonSpec(4.636),
            q2=TransmonSpec(4.127),
            coupler=TransmonSpec(6.0, flux_tunable=True),
            g_1c=70.0,
            g_2c=70.0,
            g_12=0.0,
            resonator=ResonatorSpec(frequency=6.5, linewidth=2.0, qubit_coupling=50.0),
            levels_per_element=levels_per_element,
        )

    @classmethod
    def pair(cls, g: float = 70.0, levels_per_element: int = 2) -> "CircuitSpec":
        """Isolated ``q1``-coupler pair using the default frequencies."""
        base = cls.default(levels_per_element)
        return cls(
            q1=base.q1,
            q2=None,
            coupler=base.coupler,
            g_1c=g,
            resonator=base.resonator,
            levels_per_element=levels_per_element,
        )

    @property
    def elements(self) -> tuple[str, ...]:
        return ("q1", "coupler") if self.q2 is None else ("q1", "coupler", "q2")

    def qubit_frequencies(self) -> dict[str, float]:
        out = {"q1": self.q1.max_frequency}
        if self.q2 is not None:
            out["q2"] = self.q2.max_frequency
        return out


@dataclass(frozen=True)
class Basis:
    """Labelled tensor-product basis with ladder and number operators."""

    elements: tuple[str, ...]
    dims: tuple[int, ...]
    labels: tuple[Label, ...] = field(init=False)

    def __post_init__(self):
        labels = tuple(itertools.product(*[range(d) for d in self.dims]))
        object.__setattr__(self, "labels", labels)

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims))

    def index(self, label: Sequence[int]) -> int:
        label = tuple(label)
        if len(label) != len(self.dims) or any(not 0 <= n < d for n, d in zip(label, self.dims)):
            raise KeyError(f"label {label} not in basis {self.elements} with dims {self.dims}")
        return int(np.ravel_multi_index(label, self.dims))

    def element_index(self, element: str) -> int:
        try:
            return self.elements.index(element)
        except ValueError:
            raise KeyError(f"unknown element {element!r}; basis has {self.elements}") from None

    def lowering(self, element: str) -> np.ndarray:
        return _lowering(self.dims, self.element_index(element))

    def number(self, element: str) -> np.ndarray:
        k = self.element_index(element)
        occ = np.array([lab[k] for lab in self.labels], dtype=float)
        return np.diag(occ)

    def excitation_number(self) -> np.ndarray:
        return np.diag([float(sum(lab)) for lab in self.labels])

    def manifold(self, n: int) -> np.ndarray:
        """Indices of the basis states with ``n`` total excitations."""
        return np.array([i for i, lab in enumerate(self.labels) if sum(lab) == n], dtype=int)

    def label_string(self, label: Label) -> str:
        return "".join(str(n) for n in label)

    def vacuum(self) -> Label:
        return (0,) * len(self.dims)

    def excite(self, element: str, n: int = 1) -> Label:
        lab = [0] * len(self.dims)
        lab[self.element_index(element)] = n
        return tuple(lab)


@lru_cache(maxsize=64)
def _lowering(dims: tuple[int, ...], k: int) -> np.ndarray:
    a = np.diag(np.sqrt(np.arange(1, dims[k], dtype=float)), 1)
    out = np.ones((1, 1))
    for j, d in enumerate(dims):
        out = np.kron(out, a if j == k else np.eye(d))
    out.setflags(write=False)
    return out


def circuit_basis(circuit: CircuitSpec, include_resonator: bool = False, resonator_levels: int = 3) -> Basis:
    elements = circuit.elements
    dims = (circuit.levels_per_element,) * len(elements)
    if include_resonator:
        if circuit.resonator is None:
            raise ValueError("circuit has no resonator")
        elements = elements + ("resonator",)
        dims = dims + (resonator_levels,)
    return Basis(elements, dims)


def coupler_frequency(spec: TransmonSpec, flux):
    """Symmetric-SQUID frequency ``f_max * sqrt(|cos(pi * flux / period)|)``.

    Raises
    ------
    ValueError
        If the element is not tunable or ``flux`` lies outside the principal
        branch ``|flux| < flux_period / 2``.
    """
    if not spec.flux_tunable:
        raise ValueError("coupler_frequency needs a flux-tunable element")
    flux = np.asarray(flux, dtype=float)
    if np.any(np.abs(flux) >= spec.flux_period / 2):
        raise ValueError(
            f"flux outside the principal branch |flux| < {spec.flux_period / 2}; fold it first"
        )
    out = spec.max_frequency * np.sqrt(np.abs(np.cos(np.pi * flux / spec.flux_period)))
    return out[()]


def coupler_slope(spec: TransmonSpec, flux):
    """Derivative of :func:`coupler_frequency` with respect to flux (GHz per flux quantum)."""
    flux = np.asarray(flux, dtype=float)
    x = np.pi * flux / spec.flux_period
    c = np.cos(x)
    if np.any(c <= 0):
        raise ValueError("slope undefined outside the principal branch")
    out = -spec.max_frequency * np.pi / spec.flux_period * np.sin(x) / (2 * np.sqrt(c))
    return out[()]


def flux_for_frequency(spec: TransmonSpec, frequency):
    """Inverse of :func:`coupler_frequency` on ``[0, flux_period / 2)``."""
    f = np.asarray(frequency, dtype=float)
    if np.any(f <= 0) or np.any(f > spec.max_frequency):
        raise ValueError(f"frequency must lie in (0, {spec.max_frequency}] GHz")
    out = spec.flux_period / np.pi * np.arccos((f / spec.max_frequency) ** 2)
    return out[()]


def _static_parts(circuit: CircuitSpec, basis: Basis):
    """Flux-independent Hamiltonian and the coupler number operator."""
    h = np.zeros((basis.dim, basis.dim))
    levels = {"q1": circuit.q1, "coupler": circuit.coupler, "q2": circuit.q2}
    for name in circuit.elements:
        n = basis.number(name)
        spec = levels[name]
        if name != "coupler":
            h += spec.max_frequency * n
        if basis.dims[basis.element_index(name)] > 2:
            h += 0.5 * spec.anharmonicity * n @ (n - np.eye(basis.dim))
    couplings = [("q1", "coupler", circuit.g_1c)]
    if circuit.q2 is not None:
        couplings += [("coupler", "q2", circuit.g_2c), ("q1", "q2", circuit.g_12)]
    if "resonator" in basis.elements:
        r = circuit.resonator
        h += r.frequency * basis.number("resonator")
        couplings.append(("q1", "resonator", r.qubit_coupling))
    for a, b, g in couplings:
        if g == 0:
            continue
        la, lb = basis.lowering(a), basis.lowering(b)
        h += g * MHZ * (la.T @ lb + lb.T @ la)
    return h, basis.number("coupler")


def build_hamiltonian(
    circuit: CircuitSpec,
    flux: float,
    include_resonator: bool = False,
    frame_frequency: float = 0.0,
    resonator_levels: int = 3,
) -> np.ndarray:
    """Rotating-wave Hamiltonian in GHz at one coupler flux.

    ``H = sum_i f_i n_i + sum_i (alpha_i / 2) n_i (n_i - 1)
    + sum_{i<j} g_ij (a_i^dag a_j + h.c.)``.  The Hamiltonian conserves the
    total excitation number ``N``, so ``frame_frequency * N`` can be removed
    exactly; this moves to a frame rotating at ``frame_frequency`` for every
    element.
    """
    basis = circuit_basis(circuit, include_resonator, resonator_levels)
    h0, nc = _static_parts(circuit, basis)
    h = h0 + coupler_frequency(circuit.coupler, flux) * nc
    if frame_frequency:
        h = h - frame_frequency * basis.excitation_number()
    return h


def hamiltonian_stack(circuit: CircuitSpec, fluxes, frame_frequency: float = 0.0) -> np.ndarray:
    """Hamiltonians for many flux samples at once, shape ``(n, d, d)``."""
    basis = circuit_basis(circuit)
    h0, nc = _static_parts(circuit, basis)
    h0 = h0 - frame_frequency * basis.excitation_number()
    fc = np.atleast_1d(coupler_frequency(circuit.coupler, fluxes))
    return h0[None] + fc[:, None, None] * nc[None]


@dataclass(frozen=True)
class SpectrumScan:
    """Single-excitation spectrum along a flux sweep.

    ``branches[i, k]`` is the k-th lowest eigenfrequency at ``flux_grid[i]``;
    ``bare_labels[i][k]`` is the bare state with the largest weight in that
    eigenstate and ``weights[i, k, j]`` the weight on ``manifold_labels[j]``.
    ``ties[i, k]`` marks assignments decided by the tie-break rule.
    """

    flux_grid: np.ndarray
    branches: np.ndarray
    bare_labels: tuple[tuple[Label, ...], ...]
    weights: np.ndarray
    manifold_labels: tuple[Label, ...]
    ties: np.ndarray

    @property
    def n_branches(self) -> int:
        return self.branches.shape[1]

    def gaps(self) -> np.ndarray:
        return np.diff(self.branches, axis=1)

    def to_csv(self, path) -> None:
        n = self.n_branches
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["flux"] + [f"branch_{k}" for k in range(n)] + [f"label_{k}" for k in range(n)])
            for i, phi in enumerate(self.flux_grid):
                w.writerow(
                    [f"{phi:.15g}"]
                    + [f"{e:.15g}" for e in self.branches[i]]
                    + ["".join(map(str, lab)) for lab in self.bare_labels[i]]
                )


def single_excitation_eigensystem(circuit: CircuitSpec, fluxes):
    """Sorted eigenvalues/eigenvectors of the one-excitation block for each flux.

    Returns ``(energies (n, m), vectors (n, m, m), labels)`` where
    ``vectors[i][:, k]`` is eigenvector k expressed on ``labels``.
    """
    basis = circuit_basis(circuit)
    idx = basis.manifold(1)
    hs = hamiltonian_stack(circuit, np.atleast_1d(fluxes))[:, idx][:, :, idx]
    energies, vectors = np.linalg.eigh(hs)
    return energies, vectors, tuple(basis.labels[i] for i in idx)


def eigenspectrum(circuit: CircuitSpec, flux_grid, tie_tol: float = 1e-9) -> SpectrumScan:
    """Diagonalize the single-excitation manifold at each flux value."""
    flux_grid = np.asarray(flux_grid, dtype=float)
    if flux_grid.ndim != 1 or flux_grid.size == 0:
        raise ValueError("flux_grid must be a non-empty 1-D sequence")
    energies, vectors, labels = single_excitation_eigensystem(circuit, flux_grid)
    weights = np.abs(np.swapaxes(vectors, 1, 2)) ** 2  # (flux, branch, bare)
    best = np.argmax(weights, axis=2)
    top = np.take_along_axis(weights, best[..., None], axis=2)[..., 0]
    ties = np.sum(weights >= top[..., None] - tie_tol, axis=2) > 1
    bare = tuple(tuple(labels[j] for j in row) for row in best)
    return SpectrumScan(flux_grid, energies, bare, weights, labels, ties)


def locate_anticrossings(scan: SpectrumScan) -> list[tuple[float, float]]:
    """Local minima of adjacent-branch gaps, refined by a three-point parabola.

    Returns ``(flux, gap_GHz)`` pairs sorted by flux; empty when no interior
    minimum exists on the grid.
    """
    found = []
    x = scan.flux_grid
    for gap in scan.gaps().T:
        for i in range(1, len(gap) - 1):
            if not (gap[i] < gap[i - 1] and gap[i] <= gap[i + 1]):
                continue
            x0, x1, x2 = x[i - 1], x[i], x[i + 1]
            y0, y1, y2 = gap[i - 1], gap[i], gap[i + 1]
            denom = (x0 - x1) * (x0 - x2) * (x1 - x2)
            a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / denom
            b = (x2**2 * (y0 - y1) + x1**2 * (y2 - y0) + x0**2 * (y1 - y2)) / denom
            c = (x1 * x2 * (x1 - x2) * y0 + x2 * x0 * (x2 - x0) * y1 + x0 * x1 * (x0 - x1) * y2) / denom
            if a <= 0:
                found.append((float(x1), float(y1)))
                continue
            xv = -b / (2 * a)
            found.append((float(xv), float(c - b * b / (4 * a))))
    return sorted(found)


def dressed_mixing_angle(delta_qc: float, g: float) -> float:
    """Mixing angle ``atan2(g, delta/2 - sqrt(delta^2/4 + g^2))`` (radians).

    ``delta_qc`` and ``g`` share units.  The denominator is negative for all
    real detunings, so the angle stays on one continuous branch in
    ``(pi/2, pi)``.  ``sin(theta)**2`` is the qubit weight of the lower
    dressed state of the pair.
    """
    if not g > 0:
        raise ValueError("mixing angle needs g > 0")
    x = delta_qc / 2 - np.sqrt(delta_qc**2 / 4 + g**2)
    return float(np.arctan2(g, x))
