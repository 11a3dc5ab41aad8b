"""``aswap`` command-line runner.

Each subcommand reads a YAML configuration, runs one protocol and writes
``<subcommand>-<hash>.csv``, ``<subcommand>-<hash>.json`` and a
``.manifest.json`` into the output directory.  Exit status is 0 on success,
1 when an acceptance check fails and 2 for an invalid configuration.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import acceptance
from .circuit import MHZ, coupler_frequency, eigenspectrum, flux_for_frequency, locate_anticrossings
from .config import ConfigError, RunConfig, load_config
from .io import artifact_paths, write_json, write_manifest, write_table
from .protocols.calibration import FlattopSpec, distortion_ramsey
from .protocols.experiments import (
    aswap_transfer,
    coarse_anticrossing_scan,
    crossing_flux,
    rabi_experiment,
    ramsey_experiment,
    spectroscopy_scan,
    t1_experiment,
)
from .readout import analytic_fidelity, chi_bare, chi_eff, chi_eff_closed, chi_eff_numeric, coupler_readout_fidelity, simulate_histogram

OUT_ENV = "ASWAP_OUT"
DEFAULT_OUT = "aswap-out"

EXIT_OK, EXIT_FAILED, EXIT_CONFIG = 0, 1, 2


class Outcome:
    """What a subcommand produced: one table, one summary, optional manifest extras."""

    def __init__(self, header: list[str], rows: list, summary: dict, extra: Optional[dict] = None, failures: Optional[list[str]] = None):
        self.header = header
        self.rows = rows
        self.summary = summary
        self.extra = extra or {}
        self.failures = failures or []


# ---------------------------------------------------------------- subcommands


def run_coarse_scan(cfg: RunConfig, threads: int) -> Outcome:
    circuit = cfg.circuit_spec()
    exp = cfg.experiments.coarse_scan
    grid = exp.flux.array()
    result = coarse_anticrossing_scan(circuit, grid, exp.stray_crosstalk)
    scan = eigenspectrum(circuit, grid)
    n = scan.n_branches
    header = ["flux", "signal"] + [f"branch_{k}" for k in range(n)]
    rows = [[phi, s, *scan.branches[i]] for i, (phi, s) in enumerate(zip(grid, result.signal))]
    found = locate_anticrossings(scan)
    summary = {
        "anticrossings": [{"flux": phi, "gap_mhz": gap / MHZ} for phi, gap in found],
        "expected_crossing_flux": {q: crossing_flux(circuit, q) for q in circuit.qubit_frequencies()},
        "stray_crosstalk": exp.stray_crosstalk,
    }
    return Outcome(header, rows, summary)


def run_spectroscopy(cfg: RunConfig, threads: int) -> Outcome:
    exp = cfg.experiments.spectroscopy
    m = spectroscopy_scan(cfg.circuit_spec(), exp.flux.array(), exp.drive_frequency.array(), exp.linewidth, exp.driven, mode=exp.mode)
    rows = [[phi, f, m.signal[i, j]] for i, phi in enumerate(m.flux_grid) for j, f in enumerate(m.drive_frequencies)]
    peak = np.unravel_index(int(np.argmax(m.signal)), m.signal.shape)
    summary = {
        "mode": exp.mode,
        "driven": exp.driven,
        "shape": list(m.signal.shape),
        "max_signal": float(m.signal[peak]),
        "max_at": {"flux": float(m.flux_grid[peak[0]]), "drive_frequency_ghz": float(m.drive_frequencies[peak[1]])},
    }
    return Outcome(["flux", "drive_frequency_ghz", "signal"], rows, summary)


def run_aswap(cfg: RunConfig, threads: int) -> Outcome:
    circuit = cfg.circuit_spec()
    exp = cfg.experiments.aswap
    jobs = [(shape, edge) for shape in exp.shapes for edge in exp.edges]

    def one(job):
        shape, edge = job
        return aswap_transfer(circuit, edge, shape, qubit=exp.qubit, basis=exp.basis)

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        results = list(pool.map(one, jobs))
    rows = [[shape, edge, r.probability, r.crosses_anticrossing] for (shape, edge), r in zip(jobs, results)]
    by_shape = {s: {f"{e:g}": r.probability for (s2, e), r in zip(jobs, results) if s2 == s} for s in exp.shapes}
    summary = {
        "basis": exp.basis,
        "qubit": exp.qubit,
        "flux_start": results[0].flux_start,
        "flux_end": results[0].flux_end,
        "transfer": by_shape,
    }
    return Outcome(["edge_shape", "edge_ns", "transfer", "crosses_anticrossing"], rows, summary)


def _experiment_outcome(result, extra_summary: dict) -> Outcome:
    rows = [[x, y] for x, y in zip(result.x, result.signal)]
    summary = result.summary()
    summary.update(extra_summary)
    return Outcome([result.x_name, result.signal_name], rows, summary)


def _require_lindblad(cfg: RunConfig, what: str):
    spec = cfg.lindblad_spec()
    if spec is None:
        raise ConfigError([("lindblad", f"required by {what}")])
    return spec


def run_rabi(cfg: RunConfig, threads: int) -> Outcome:
    exp = cfg.experiments.rabi
    lindblad = _require_lindblad(cfg, "rabi with decoherence") if exp.decoherence else None
    result = rabi_experiment(
        cfg.circuit_spec(), exp.drive_amplitude, exp.durations.array(), lindblad, exp.flux, exp.readout, exp.shots, cfg.seed
    )
    return _experiment_outcome(result, {"seed": cfg.seed, "shots": exp.shots})


def run_t1(cfg: RunConfig, threads: int) -> Outcome:
    exp = cfg.experiments.t1
    lindblad = _require_lindblad(cfg, "t1")
    result = t1_experiment(cfg.circuit_spec(), lindblad, exp.delays.array(), exp.flux, exp.preparation, exp.readout, exp.shots, cfg.seed)
    return _experiment_outcome(result, {"seed": cfg.seed, "shots": exp.shots, "injected_t1_ns": lindblad.coupler.t1})


def run_ramsey(cfg: RunConfig, threads: int) -> Outcome:
    exp = cfg.experiments.ramsey
    lindblad = _require_lindblad(cfg, "ramsey")
    result = ramsey_experiment(
        cfg.circuit_spec(), lindblad, exp.detuning, exp.delays.array(), exp.flux, exp.preparation, exp.readout, exp.shots, cfg.seed
    )
    extra = {"seed": cfg.seed, "shots": exp.shots, "injected_t1_ns": lindblad.coupler.t1, "injected_t_phi_ns": lindblad.coupler.t_phi}
    if result.fit is not None and result.fit.converged:
        rate = 1 / result.fit["decay_time"] - 1 / (2 * lindblad.coupler.t1)
        extra["t_phi_from_injected_t1_ns"] = 1 / rate if rate > 0 else float("inf")
    return _experiment_outcome(result, extra)


def run_distortion_calib(cfg: RunConfig, threads: int) -> Outcome:
    model = cfg.distortion_model()
    if model is None:
        raise ConfigError([("distortion", "required by distortion-calib")])
    exp = cfg.experiments.distortion_calib
    ft = exp.flattop
    flattop = FlattopSpec(ft.hold_flux, ft.rise, ft.hold, ft.fall, ft.edge_shape)
    filt = cfg.predistortion_filter()
    circuit = cfg.circuit_spec()
    delays = exp.delays.array()

    def run(f):
        try:
            return distortion_ramsey(circuit, model, f, delays, flattop, exp.rect_amplitude, exp.rect_duration, exp.awg_period, exp.slope_threshold)
        except ValueError as err:
            raise ConfigError([("experiments.distortion_calib", str(err))]) from None

    raw = run(None)
    corrected = run(filt) if filt is not None else None
    nan = float("nan")
    rows = []
    for i, tau in enumerate(delays):
        row = [tau, raw.distortion_phase_unwrapped[i], raw.oracle_phase[i]]
        row += [corrected.distortion_phase_unwrapped[i], corrected.oracle_phase[i]] if corrected else [nan, nan]
        rows.append(row)
    summary = {
        "distortion_model": model.to_dict(),
        "unfiltered": raw.summary(),
        "max_abs_phi_dist_unfiltered": raw.max_abs_distortion_phase,
    }
    if corrected is not None:
        summary["predistortion_filter"] = filt.to_dict()
        summary["filtered"] = corrected.summary()
        summary["max_abs_phi_dist_filtered"] = corrected.max_abs_distortion_phase
        summary["reduction_factor"] = raw.max_abs_distortion_phase / max(corrected.max_abs_distortion_phase, 1e-300)
    header = ["tau_delay_ns", "phi_dist_unfiltered", "oracle_unfiltered", "phi_dist_filtered", "oracle_filtered"]
    return Outcome(header, rows, summary)


def run_chi_scan(cfg: RunConfig, threads: int) -> Outcome:
    exp = cfg.experiments.chi_scan
    circuit = cfg.circuit_spec()
    if exp.resonator is not None:
        circuit = replace(circuit, resonator=exp.resonator.to_spec())
    if circuit.resonator is None:
        raise ConfigError([("circuit.resonator", "chi-scan needs a readout resonator")])
    g = circuit.g_1c * MHZ
    f_q = circuit.q1.max_frequency
    rows, skipped = [], []
    for d in exp.delta_over_g.array():
        f_c = f_q + d * g
        if not 0 < f_c <= circuit.coupler.max_frequency:
            skipped.append(float(d))
            continue
        phi = float(flux_for_frequency(circuit.coupler, f_c))
        delta = float(coupler_frequency(circuit.coupler, phi)) - f_q
        try:
            numeric = chi_eff_numeric(circuit, phi, exp.resonator_photons)
        except ValueError as err:
            raise ConfigError([("circuit.resonator", str(err))]) from None
        rows.append([phi, delta, chi_eff_closed(circuit, phi), numeric])
    if not rows:
        raise ConfigError([("experiments.chi_scan.delta_over_g", "no detuning reachable by the coupler")])
    r = circuit.resonator
    chi = chi_bare(r.qubit_coupling, r.frequency - f_q)
    closed, numeric = np.array([row[2] for row in rows]), np.array([row[3] for row in rows])
    summary = {
        "chi_bare_mhz": chi,
        "chi_eff_at_zero_detuning_mhz": float(chi_eff(chi, 0.0, circuit.g_1c)),
        "half_chi_mhz": chi / 2,
        "max_relative_deviation": float(np.max(np.abs(closed - numeric) / np.abs(numeric))),
        "resonator": {"frequency": r.frequency, "linewidth": r.linewidth, "qubit_coupling": r.qubit_coupling},
        "skipped_delta_over_g": skipped,
    }
    return Outcome(["flux", "delta_qc", "chi_eff_closed", "chi_eff_numeric"], rows, summary)


def run_histogram(cfg: RunConfig, threads: int) -> Outcome:
    exp = cfg.experiments.histogram
    h = simulate_histogram(exp.snr, exp.shots, seed=cfg.seed, threads=threads)
    rows = [[i, q, int(t), int(a)] for (i, q), t, a in zip(h.iq_points.tolist(), h.true_states.tolist(), h.assigned_states.tolist())]
    summary = h.summary()
    summary.update(
        {
            "snr": exp.snr,
            "analytic_fidelity": analytic_fidelity(exp.snr),
            "swap_transfer": exp.swap_transfer,
            "coupler_readout_fidelity": coupler_readout_fidelity(exp.swap_transfer, h.assignment_fidelity),
        }
    )
    return Outcome(["I", "Q", "true_state", "assigned_state"], rows, summary)


def _suite_tables(criteria) -> tuple[list, dict]:
    rows = []
    for c in criteria:
        for chk in c.checks:
            rows.append([c.number, chk.name, chk.value, chk.relation, chk.bound, chk.passed])
    summary = {
        "criteria": [{"number": c.number, "title": c.title, "passed": c.passed} for c in criteria],
        "all_passed": all(c.passed for c in criteria),
    }
    return rows, summary


def run_verify_all(cfg: RunConfig, threads: int) -> Outcome:
    """Criteria 1-7, then a second full pass whose tables must match the first exactly (criterion 8)."""
    first = acceptance.run_all(cfg.seed, threads)
    for c in first:
        print(c.line(), flush=True)
    rows, summary = _suite_tables(first)
    again_rows, again_summary = _suite_tables(acceptance.run_all(cfg.seed, threads))
    identical = repr(rows) == repr(again_rows) and summary == again_summary
    det = acceptance.Criterion(8, "determinism", (acceptance.Check("repeat runs identical", float(identical), 1.0, ">="),))
    print(det.line(), flush=True)
    criteria = first + [det]
    rows, summary = _suite_tables(criteria)
    failures = [f"criterion {c.number} ({c.title}): {chk.describe()}" for c in criteria for chk in c.failures()]
    extra = {"criterion_seconds": {str(c.number): c.seconds for c in first}}
    return Outcome(["criterion", "check", "value", "relation", "bound", "passed"], rows, summary, extra, failures)


SUBCOMMANDS: dict[str, tuple[Callable[[RunConfig, int], Outcome], str]] = {
    "coarse-scan": (run_coarse_scan, "hybridization signal and spectrum versus coupler flux"),
    "spectroscopy": (run_spectroscopy, "excitation map over flux and drive frequency"),
    "aswap": (run_aswap, "swap transfer versus edge duration and shape"),
    "rabi": (run_rabi, "coupler Rabi oscillation read through q1"),
    "t1": (run_t1, "coupler energy relaxation"),
    "ramsey": (run_ramsey, "coupler Ramsey fringes"),
    "distortion-calib": (run_distortion_calib, "distortion phase with and without predistortion"),
    "chi-scan": (run_chi_scan, "dispersive shift versus coupler detuning"),
    "histogram": (run_histogram, "IQ readout histogram"),
    "verify-all": (run_verify_all, "run the acceptance suite"),
}


# ---------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aswap", description="Tunable-coupler simulation and characterization runner.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML configuration file (defaults apply when omitted)")
    common.add_argument("--seed", type=int, help="override the configuration seed (0 <= seed < 2**64)")
    common.add_argument("--out", type=Path, help=f"output directory (default: config 'output', ${OUT_ENV}, or ./{DEFAULT_OUT})")
    common.add_argument("--threads", type=int, default=1, help="worker threads for parallel grid points")
    common.add_argument(
        "--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
        help="override a configuration value, e.g. experiments.t1.delays.points=81",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True, metavar="SUBCOMMAND")
    for name, (_, helptext) in SUBCOMMANDS.items():
        sub.add_parser(name, parents=[common], help=helptext, description=helptext)
    return parser


def _output_dir(args, cfg: RunConfig) -> Path:
    if args.out is not None:
        return args.out
    if cfg.output is not None:
        return Path(cfg.output)
    return Path(os.environ.get(OUT_ENV) or DEFAULT_OUT)


def run(subcommand: str, config_path=None, overrides=(), seed: Optional[int] = None, out=None, threads: int = 1) -> int:
    """Programmatic equivalent of the command line; returns the exit status."""
    argv = [subcommand]
    if config_path is not None:
        argv += ["--config", str(config_path)]
    if seed is not None:
        argv += ["--seed", str(seed)]
    if out is not None:
        argv += ["--out", str(out)]
    argv += ["--threads", str(threads)]
    for o in overrides:
        argv += ["--set", o]
    return main(argv)


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    try:
        cfg = load_config(args.config, tuple(overrides))
        fn, _ = SUBCOMMANDS[args.subcommand]
        t0 = time.perf_counter()
        outcome = fn(cfg, args.threads)
        wall = time.perf_counter() - t0
    except ConfigError as err:
        print("invalid configuration:", file=sys.stderr)
        for where, msg in err.diagnostics:
            print(f"  {where}: {msg}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as err:
        # library input checks: the config validates but this run cannot use it
        print(f"cannot run {args.subcommand} with this configuration: {err}", file=sys.stderr)
        return EXIT_CONFIG

    out_dir = _output_dir(args, cfg)
    out_dir.mkdir(parents=True, exist_ok=True)
    h = cfg.config_hash()
    paths = artifact_paths(out_dir, args.subcommand, h)
    write_table(paths.csv, outcome.header, outcome.rows)
    summary = dict(outcome.summary)
    summary["config_hash"] = h
    summary["seed"] = cfg.seed
    write_json(paths.json, summary)
    write_manifest(paths.manifest, args.subcommand, cfg.model_dump(mode="python"), h, cfg.seed, args.threads, wall, paths, outcome.extra)
    print(f"wrote {paths.csv} and {paths.json}")
    if outcome.failures:
        print("acceptance failures:", file=sys.stderr)
        for line in outcome.failures:
            print(f"  {line}", file=sys.stderr)
        return EXIT_FAILED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
