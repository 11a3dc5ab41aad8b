"""Run configuration: YAML files validated by strict pydantic models.

Every section has defaults, so an empty file is a valid configuration of the
default fixture.  Unknown keys are rejected.  Errors are reported as
:class:`ConfigError` with the offending field path and, when the value came
from a file, its line number.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
from pathlib import Path
from typing import Any, Literal, Optional, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .circuit import CircuitSpec, ResonatorSpec, TransmonSpec
from .dynamics import ElementNoise, LindbladSpec
from .pulses import DistortionModel, PredistortionFilter, design_predistortion


class ConfigError(ValueError):
    """Invalid configuration; ``diagnostics`` holds one ``(location, message)`` per problem."""

    def __init__(self, diagnostics: list[tuple[str, str]]):
        self.diagnostics = diagnostics
        super().__init__("\n".join(f"{loc}: {msg}" for loc, msg in diagnostics))


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class Grid(_Strict):
    """Either ``start/stop/points`` (inclusive linspace) or an explicit ``values`` list."""

    start: Optional[float] = None
    stop: Optional[float] = None
    points: Optional[int] = Field(default=None, ge=2)
    values: Optional[list[float]] = None

    @model_validator(mode="after")
    def _one_form(self):
        ranged = (self.start, self.stop, self.points)
        if self.values is not None:
            if any(v is not None for v in ranged):
                raise ValueError("give either values or start/stop/points, not both")
            if not self.values:
                raise ValueError("values must be non-empty")
        elif any(v is None for v in ranged):
            raise ValueError("start, stop and points are all required")
        return self

    def array(self) -> np.ndarray:
        if self.values is not None:
            return np.asarray(self.values, dtype=float)
        return np.linspace(self.start, self.stop, self.points)


def _grid(start: float, stop: float, points: int) -> Grid:
    return Grid(start=start, stop=stop, points=points)


# ---------------------------------------------------------------- physical models


class QubitConfig(_Strict):
    frequency: float = Field(gt=0)
    anharmonicity: float = Field(default=-0.25, le=0)


class CouplerConfig(_Strict):
    max_frequency: float = Field(default=6.0, gt=0)
    anharmonicity: float = Field(default=-0.25, le=0)
    flux_period: float = Field(default=1.0, gt=0)


class ResonatorConfig(_Strict):
    frequency: float = Field(gt=0)
    linewidth: float = Field(gt=0)
    qubit_coupling: float = Field(ge=0)

    def to_spec(self) -> ResonatorSpec:
        return ResonatorSpec(self.frequency, self.linewidth, self.qubit_coupling)


class CircuitConfig(_Strict):
    """Frequencies in GHz, couplings in MHz; ``q2: null`` leaves an isolated q1-coupler pair."""

    q1: QubitConfig = QubitConfig(frequency=4.636)
    q2: Optional[QubitConfig] = QubitConfig(frequency=4.127)
    coupler: CouplerConfig = CouplerConfig()
    g_1c: float = Field(default=70.0, gt=0)
    g_2c: float = Field(default=70.0, gt=0)
    g_12: float = Field(default=0.0, ge=0)
    resonator: Optional[ResonatorConfig] = ResonatorConfig(frequency=6.5, linewidth=2.0, qubit_coupling=50.0)
    levels_per_element: Literal[2, 3] = 2

    def to_spec(self) -> CircuitSpec:
        c = self.coupler
        return CircuitSpec(
            q1=TransmonSpec(self.q1.frequency, self.q1.anharmonicity),
            q2=None if self.q2 is None else TransmonSpec(self.q2.frequency, self.q2.anharmonicity),
            coupler=TransmonSpec(c.max_frequency, c.anharmonicity, flux_tunable=True, flux_period=c.flux_period),
            g_1c=self.g_1c,
            g_2c=self.g_2c,
            g_12=self.g_12,
            resonator=None if self.resonator is None else self.resonator.to_spec(),
            levels_per_element=self.levels_per_element,
        )


class DistortionTerm(_Strict):
    amplitude: float
    time_constant: float = Field(gt=0)


class DistortionConfig(_Strict):
    dc_gain: float = Field(default=1.0, gt=0)
    terms: list[DistortionTerm] = [DistortionTerm(amplitude=0.05, time_constant=800.0)]

    def to_model(self) -> DistortionModel:
        return DistortionModel.from_dict(self.model_dump())


class FilterSection(_Strict):
    b0: float
    b1: float
    a1: float


class FilterConfig(_Strict):
    sample_period: float = Field(gt=0)
    sections: list[FilterSection]

    def to_filter(self) -> PredistortionFilter:
        return PredistortionFilter.from_dict(self.model_dump())


class NoiseConfig(_Strict):
    """Times in ns; ``null`` means no such channel."""

    t1: Optional[float] = Field(default=None, gt=0)
    t_phi: Optional[float] = Field(default=None, gt=0)

    def to_noise(self) -> ElementNoise:
        inf = math.inf
        return ElementNoise(self.t1 if self.t1 is not None else inf, self.t_phi if self.t_phi is not None else inf)


class LindbladConfig(_Strict):
    q1: NoiseConfig = NoiseConfig()
    coupler: NoiseConfig = NoiseConfig(t1=10_000.0, t_phi=4_000.0)
    q2: NoiseConfig = NoiseConfig()

    def to_spec(self) -> LindbladSpec:
        return LindbladSpec(self.q1.to_noise(), self.coupler.to_noise(), self.q2.to_noise())


# ---------------------------------------------------------------- experiments


Readout = Literal["aswap", "direct"]


class CoarseScanConfig(_Strict):
    flux: Grid = _grid(0.0, 0.45, 451)
    stray_crosstalk: float = Field(default=0.0, ge=0)


class SpectroscopyConfig(_Strict):
    flux: Grid = _grid(0.25, 0.38, 66)
    drive_frequency: Grid = _grid(3.9, 4.9, 201)
    linewidth: float = Field(default=2.0, gt=0)
    driven: Literal["q1", "coupler", "q2"] = "coupler"
    mode: Literal["analytic", "time"] = "analytic"


class AswapConfig(_Strict):
    edges: list[float] = [1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0, 200.0]
    shapes: list[Literal["cosine", "linear", "step"]] = ["cosine", "linear"]
    basis: Literal["bare", "dressed"] = "dressed"
    qubit: Literal["q1", "q2"] = "q1"


class RabiConfig(_Strict):
    drive_amplitude: float = Field(default=10.0, gt=0)
    durations: Grid = _grid(0.0, 400.0, 201)
    flux: float = 0.0
    readout: Readout = "aswap"
    shots: Optional[int] = Field(default=None, ge=1)
    decoherence: bool = False


class T1Config(_Strict):
    delays: Grid = _grid(0.0, 40_000.0, 41)
    flux: float = 0.0
    preparation: Readout = "direct"
    readout: Readout = "aswap"
    shots: Optional[int] = Field(default=None, ge=1)


class RamseyConfig(_Strict):
    detuning: float = 2.0
    delays: Grid = _grid(0.0, 8_000.0, 401)
    flux: float = 0.0
    preparation: Readout = "direct"
    readout: Readout = "aswap"
    shots: Optional[int] = Field(default=None, ge=1)


class FlattopConfig(_Strict):
    hold_flux: Optional[float] = None
    rise: float = Field(default=200.0, ge=0)
    hold: float = Field(default=100.0, gt=0)
    fall: float = Field(default=200.0, ge=0)
    edge_shape: Literal["cosine", "linear", "step"] = "cosine"


class DistortionCalibConfig(_Strict):
    delays: Grid = Grid(values=[0, 50, 100, 200, 400, 800, 1600, 3200])
    rect_amplitude: float = 0.002
    rect_duration: float = Field(default=1000.0, gt=0)
    flattop: FlattopConfig = FlattopConfig()
    awg_period: float = Field(default=0.5, gt=0)
    slope_threshold: float = Field(default=2.0, ge=0)


class ChiScanConfig(_Strict):
    """Coupler detunings ``delta_qc / g_1c``; ``resonator`` replaces the circuit's resonator for this scan only."""

    delta_over_g: Grid = _grid(-10.0, 10.0, 41)
    resonator_photons: int = Field(default=2, ge=1)
    resonator: Optional[ResonatorConfig] = ResonatorConfig(frequency=20.0, linewidth=2.0, qubit_coupling=100.0)


class HistogramConfig(_Strict):
    snr: float = Field(default=2.43, ge=0)
    shots: int = Field(default=100_000, ge=1000)
    swap_transfer: float = Field(default=0.99, ge=0, le=1)


class ExperimentsConfig(_Strict):
    coarse_scan: CoarseScanConfig = CoarseScanConfig()
    spectroscopy: SpectroscopyConfig = SpectroscopyConfig()
    aswap: AswapConfig = AswapConfig()
    rabi: RabiConfig = RabiConfig()
    t1: T1Config = T1Config()
    ramsey: RamseyConfig = RamseyConfig()
    distortion_calib: DistortionCalibConfig = DistortionCalibConfig()
    chi_scan: ChiScanConfig = ChiScanConfig()
    histogram: HistogramConfig = HistogramConfig()


class RunConfig(_Strict):
    """Complete run description.

    ``predistortion`` is ``"matched"`` (designed from ``distortion`` on the
    AWG grid), explicit filter sections, or ``null`` for no correction.
    """

    seed: int = Field(default=0, ge=0, lt=2**64)
    circuit: CircuitConfig = CircuitConfig()
    distortion: Optional[DistortionConfig] = DistortionConfig()
    predistortion: Union[Literal["matched"], FilterConfig, None] = "matched"
    lindblad: Optional[LindbladConfig] = LindbladConfig()
    experiments: ExperimentsConfig = ExperimentsConfig()
    output: Optional[str] = None

    def circuit_spec(self) -> CircuitSpec:
        return self.circuit.to_spec()

    def distortion_model(self) -> Optional[DistortionModel]:
        return None if self.distortion is None else self.distortion.to_model()

    def predistortion_filter(self) -> Optional[PredistortionFilter]:
        if self.predistortion is None:
            return None
        if self.predistortion == "matched":
            model = self.distortion_model()
            if model is None:
                return None
            return design_predistortion(model, self.experiments.distortion_calib.awg_period)
        return self.predistortion.to_filter()

    def lindblad_spec(self) -> Optional[LindbladSpec]:
        return None if self.lindblad is None else self.lindblad.to_spec()

    def canonical_json(self) -> str:
        """Stable serialization of everything that affects results (``output`` excluded)."""
        data = self.model_dump(mode="python", exclude={"output"})
        return json.dumps(data, sort_keys=True, separators=(",", ":"), allow_nan=True)

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()[:16]


# ---------------------------------------------------------------- loading


def _line_index(node: Optional[yaml.Node], path: tuple = (), out: Optional[dict] = None) -> dict:
    """Map each key path in a composed YAML tree to its 1-based line."""
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for key, value in node.value:
            sub = path + (key.value,)
            out[sub] = key.start_mark.line + 1
            _line_index(value, sub, out)
    elif isinstance(node, yaml.SequenceNode):
        for i, value in enumerate(node.value):
            sub = path + (i,)
            out[sub] = value.start_mark.line + 1
            _line_index(value, sub, out)
    return out


def _diagnostics(err: ValidationError, lines: dict, source: str) -> list[tuple[str, str]]:
    diags = []
    for e in err.errors():
        loc = tuple(p for p in e["loc"] if not (isinstance(p, str) and p in {"FilterConfig", "literal['matched']"}))
        field = ".".join(str(p) for p in loc) or "<root>"
        line = None
        for k in range(len(loc), 0, -1):
            if loc[:k] in lines:
                line = lines[loc[:k]]
                break
        where = f"{source}:{line}: {field}" if line else f"{source}: {field}"
        diags.append((where, e["msg"]))
    return diags


def _validate(data: Any, lines: dict, source: str) -> RunConfig:
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError([(source, "top level must be a mapping")])
    try:
        return RunConfig.model_validate(data)
    except ValidationError as err:
        raise ConfigError(_diagnostics(err, lines, source)) from None


def parse_override(text: str) -> tuple[list[str], Any]:
    """``a.b.c=value`` with ``value`` read as a YAML scalar or flow collection."""
    if "=" not in text:
        raise ConfigError([(f"--set {text}", "expected key=value")])
    key, raw = text.split("=", 1)
    parts = [p for p in key.strip().split(".") if p]
    if not parts:
        raise ConfigError([(f"--set {text}", "empty key")])
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise ConfigError([(f"--set {text}", f"unparsable value: {exc}")]) from None
    return parts, value


def _apply_override(data: dict, parts: list[str], value: Any) -> None:
    # a section missing from the file starts from its defaults, so
    # grid.points=81 keeps the default start and stop
    node = data
    default: Any = RunConfig().model_dump(mode="python")
    for p in parts[:-1]:
        default = default.get(p) if isinstance(default, dict) else None
        child = node.get(p)
        if not isinstance(child, dict):
            child = copy.deepcopy(default) if isinstance(default, dict) else {}
            node[p] = child
        node = child
    node[parts[-1]] = value


def load_config(path: Optional[Union[str, Path]] = None, overrides: tuple[str, ...] = ()) -> RunConfig:
    """Read a YAML file (or the defaults when ``path`` is None) and apply ``key=value`` overrides."""
    source = str(path) if path is not None else "<defaults>"
    data: Any = {}
    lines: dict = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError([(source, f"cannot read: {exc.strerror}")]) from None
        try:
            lines = _line_index(yaml.compose(text))
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            where = f"{source}:{mark.line + 1}" if mark is not None else source
            raise ConfigError([(where, f"YAML syntax error: {getattr(exc, 'problem', exc)}")]) from None
    if data is None:
        data = {}
    if overrides and not isinstance(data, dict):
        raise ConfigError([(source, "top level must be a mapping")])
    for text in overrides:
        parts, value = parse_override(text)
        _apply_override(data, parts, value)
        lines = {k: v for k, v in lines.items() if k[: len(parts)] != tuple(parts)}
    return _validate(data, lines, source)


def dump_config(config: RunConfig) -> str:
    """YAML text that loads back to an equal configuration."""
    return yaml.safe_dump(config.model_dump(mode="python", exclude_none=False), sort_keys=False)
