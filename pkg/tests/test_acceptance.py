"""The eight acceptance criteria at their stated tolerances; each prints one PASS/FAIL line."""

import time

import pytest

from aswap import acceptance, cli

RUNTIME_LIMITS = {1: 1.0, 2: 10.0, 3: 30.0, 4: 60.0, 5: 120.0, 6: 60.0, 7: 10.0}  # seconds


@pytest.mark.parametrize("number", sorted(acceptance.CRITERIA))
def test_criterion(number, capsys):
    result = acceptance.run_criterion(number, seed=0, threads=1)
    with capsys.disabled():
        print("\n" + result.line())
    assert result.passed, "; ".join(c.describe() for c in result.failures())
    assert result.seconds < RUNTIME_LIMITS[number]


def test_criterion_8_verify_all_is_byte_identical(tmp_path, capsys):
    runs = []
    t0 = time.perf_counter()
    for threads in (1, 4):
        out = tmp_path / f"threads-{threads}"
        code = cli.main(["verify-all", "--out", str(out), "--threads", str(threads)])
        assert code == 0
        runs.append({p.name: p.read_bytes() for p in out.iterdir() if not p.name.endswith(".manifest.json")})
    identical = runs[0] == runs[1] and len(runs[0]) == 2
    with capsys.disabled():
        status = "PASS" if identical else "FAIL"
        print(f"\n[{status}] criterion 8: determinism (verify-all at 1 and 4 threads, {len(runs[0])} artifacts, {time.perf_counter() - t0:.1f} s)")
    assert identical
