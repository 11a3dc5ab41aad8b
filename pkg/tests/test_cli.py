import json
import subprocess
import sys

import pytest

from aswap import cli
from aswap.readout import chi_bare

SMALL = {
    "coarse-scan": ["experiments.coarse_scan.flux.points=46"],
    "spectroscopy": ["experiments.spectroscopy.flux.points=4", "experiments.spectroscopy.drive_frequency.points=21"],
    "aswap": ["experiments.aswap.edges=[5, 50]", "experiments.aswap.shapes=[cosine]"],
    "rabi": ["experiments.rabi.durations.points=41"],
    "t1": ["experiments.t1.delays.points=11"],
    "ramsey": ["experiments.ramsey.delays={start: 0, stop: 2000, points: 41}"],
    "distortion-calib": ["experiments.distortion_calib.delays={values: [0, 400]}"],
    "chi-scan": ["experiments.chi_scan.delta_over_g={values: [-10, 0, 10]}"],
    "histogram": ["experiments.histogram.shots=2000"],
}


def artifacts(out, sub):
    csv = sorted(p for p in out.glob(f"{sub}-*.csv"))
    js = sorted(p for p in out.glob(f"{sub}-*.json") if not p.name.endswith(".manifest.json"))
    assert len(csv) == 1 and len(js) == 1
    return csv[0], js[0]


def small(sub):
    return [a for o in SMALL[sub] for a in ("--set", o)]


@pytest.mark.parametrize("sub", sorted(SMALL))
def test_subcommand_runs(sub, tmp_path):
    assert cli.main([sub, "--out", str(tmp_path), *small(sub)]) == 0
    csv, js = artifacts(tmp_path, sub)
    assert csv.read_text().count("\n") >= 2
    summary = json.loads(js.read_text())
    assert summary["config_hash"] in csv.name
    manifest = json.loads(next(tmp_path.glob(f"{sub}-*.manifest.json")).read_text())
    assert manifest["subcommand"] == sub
    assert set(manifest["artifacts"]) == {csv.name, js.name}


def test_every_subcommand_is_covered():
    assert set(cli.SUBCOMMANDS) == set(SMALL) | {"verify-all"}


def test_invalid_config_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("circuit:\n  qubit_one: {frequency: 4.6}\n")
    assert cli.main(["coarse-scan", "--config", str(bad), "--out", str(tmp_path)]) == 2
    assert "bad.yaml:2" in capsys.readouterr().err
    assert not list(tmp_path.glob("*.csv"))


@pytest.mark.parametrize(
    "sub, override",
    [
        ("t1", "lindblad=null"),
        ("distortion-calib", "distortion=null"),
        ("distortion-calib", "experiments.distortion_calib.flattop.hold_flux=0.0"),
        ("chi-scan", "experiments.chi_scan.resonator={frequency: 5.0, linewidth: 2.0, qubit_coupling: 100.0}"),
        ("t1", "experiments.t1.delays.points=5"),
    ],
)
def test_unusable_configuration_exits_2(sub, override, tmp_path):
    assert cli.main([sub, "--out", str(tmp_path), *small(sub), "--set", override]) == 2


def test_bad_threads_exit_2(tmp_path):
    assert cli.main(["histogram", "--out", str(tmp_path), "--threads", "0"]) == 2


def test_chi_scan_columns_and_zero_detuning(tmp_path):
    assert cli.main(["chi-scan", "--out", str(tmp_path), *small("chi-scan")]) == 0
    csv, js = artifacts(tmp_path, "chi-scan")
    lines = csv.read_text().splitlines()
    assert lines[0] == "flux,delta_qc,chi_eff_closed,chi_eff_numeric"
    chi = chi_bare(100.0, 20.0 - 4.636)
    middle = [float(x) for x in lines[2].split(",")]
    assert abs(middle[1]) < 1e-12
    assert middle[2] == pytest.approx(chi / 2, rel=1e-12)
    summary = json.loads(js.read_text())
    assert summary["chi_eff_at_zero_detuning_mhz"] == summary["half_chi_mhz"]
    assert summary["max_relative_deviation"] < 0.05


def test_distortion_calib_summary(tmp_path):
    assert cli.main(["distortion-calib", "--out", str(tmp_path), "--set", "experiments.distortion_calib.delays={values: [0, 100, 400, 1600]}"]) == 0
    _, js = artifacts(tmp_path, "distortion-calib")
    s = json.loads(js.read_text())
    assert s["max_abs_phi_dist_unfiltered"] > 0.1
    assert s["reduction_factor"] >= 50
    assert s["unfiltered"]["max_oracle_error"] < 1e-3


def test_output_directory_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "env"))
    monkeypatch.chdir(tmp_path)
    assert cli.main(["histogram", *small("histogram")]) == 0
    artifacts(tmp_path / "env", "histogram")
    assert cli.main(["histogram", *small("histogram"), "--out", str(tmp_path / "flag")]) == 0
    artifacts(tmp_path / "flag", "histogram")


def test_default_output_directory(tmp_path, monkeypatch):
    monkeypatch.delenv(cli.OUT_ENV, raising=False)
    monkeypatch.chdir(tmp_path)
    assert cli.main(["histogram", *small("histogram")]) == 0
    artifacts(tmp_path / cli.DEFAULT_OUT, "histogram")


def test_seed_changes_hash_and_data(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["histogram", "--out", str(a), *small("histogram"), "--seed", "1"]) == 0
    assert cli.main(["histogram", "--out", str(b), *small("histogram"), "--seed", "2"]) == 0
    (ca, _), (cb, _) = artifacts(a, "histogram"), artifacts(b, "histogram")
    assert ca.name != cb.name
    assert ca.read_bytes() != cb.read_bytes()


@pytest.mark.parametrize("sub", ["histogram", "aswap", "t1"])
def test_reruns_are_byte_identical(sub, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main([sub, "--out", str(a), *small(sub), "--threads", "1"]) == 0
    assert cli.main([sub, "--out", str(b), *small(sub), "--threads", "3"]) == 0
    for pa, pb in zip(artifacts(a, sub), artifacts(b, sub)):
        assert pa.name == pb.name
        assert pa.read_bytes() == pb.read_bytes()


def test_run_helper_matches_main(tmp_path):
    assert cli.run("histogram", overrides=SMALL["histogram"], seed=3, out=tmp_path) == 0
    artifacts(tmp_path, "histogram")


def test_console_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "aswap", "histogram", "--out", str(tmp_path), *small("histogram")],
        capture_output=True, text=True, check=False,
    )
    assert proc.returncode == 0, proc.stderr
    assert "wrote" in proc.stdout
