import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from aswap.protocols.fitting import damped_cosine, exponential, fit_damped_cosine, fit_exponential

X = np.linspace(0, 1000, 201)


def test_exact_damped_cosine_recovered():
    y = damped_cosine(X, 0.4, 1 / 600, 0.01, 0.3, 0.5)
    fit = fit_damped_cosine(X, y)
    assert fit.converged
    for name, value in dict(amplitude=0.4, decay_time=600.0, frequency=0.01, phase=0.3, offset=0.5).items():
        assert fit[name] == pytest.approx(value, rel=1e-6)
    assert fit.residual_norm < 1e-9


def test_noisy_damped_cosine_frequency():
    rng = np.random.default_rng(12345)
    y = damped_cosine(X, 0.5, 1 / 800, 0.008, -1.0, 0.5) + rng.normal(0, 0.01, X.size)
    fit = fit_damped_cosine(X, y)
    assert fit.converged
    assert fit["frequency"] == pytest.approx(0.008, rel=0.005)


def test_undamped_trace_gives_infinite_decay_time():
    fit = fit_damped_cosine(X, 0.5 + 0.5 * np.cos(2 * np.pi * 0.005 * X))
    assert fit.converged
    assert math.isinf(fit["decay_time"])
    assert fit["frequency"] == pytest.approx(0.005, rel=1e-9)


def test_constant_trace_is_not_converged():
    fit = fit_damped_cosine(X, np.full(X.size, 0.3))
    assert not fit.converged
    assert math.isnan(fit["frequency"])
    assert fit.flags
    assert not fit_exponential(X, np.full(X.size, 0.3)).converged


@given(st.floats(0.1, 2.0), st.floats(50.0, 5000.0), st.floats(0.001, 0.04), st.floats(-3.0, 3.0), st.floats(-1.0, 1.0))
def test_damped_cosine_recovery_property(a, t, f, ph, c):
    # at least two periods on the record and one before the envelope is gone
    assume(f * 1000 >= 2 and f * t >= 1)
    fit = fit_damped_cosine(X, damped_cosine(X, a, 1 / t, f, ph, c))
    assert fit.converged
    assert fit["frequency"] == pytest.approx(f, rel=1e-6)
    assert fit["decay_time"] == pytest.approx(t, rel=1e-5)
    assert -math.pi < fit["phase"] <= math.pi


def test_exact_exponential_recovered():
    y = exponential(X, 0.9, 1 / 250, 0.05)
    fit = fit_exponential(X, y)
    assert fit.converged
    assert fit["decay_time"] == pytest.approx(250.0, rel=1e-6)
    assert fit["amplitude"] == pytest.approx(0.9, rel=1e-6)
    assert fit["offset"] == pytest.approx(0.05, abs=1e-8)


@given(st.floats(-2.0, 2.0).filter(lambda a: abs(a) > 0.05), st.floats(30.0, 3000.0), st.floats(-1.0, 1.0))
def test_exponential_recovery_property(a, t, c):
    fit = fit_exponential(X, exponential(X, a, 1 / t, c))
    assert fit.converged
    assert fit["decay_time"] == pytest.approx(t, rel=1e-5)


def test_grid_much_shorter_than_decay_time_is_flagged():
    rng = np.random.default_rng(7)
    x = np.linspace(0, 100, 41)
    y = exponential(x, 1.0, 1 / 10_000, 0.0) + rng.normal(0, 0.01, x.size)
    fit = fit_exponential(x, y)
    assert not fit.converged or "decay time poorly constrained" in fit.flags


def test_fit_is_deterministic():
    rng = np.random.default_rng(3)
    y = damped_cosine(X, 0.5, 1 / 800, 0.008, -1.0, 0.5) + rng.normal(0, 0.01, X.size)
    assert fit_damped_cosine(X, y) == fit_damped_cosine(X, y)


def test_fit_input_validation():
    with pytest.raises(ValueError, match="8 data points"):
        fit_exponential(np.arange(7.0), np.arange(7.0))
    with pytest.raises(ValueError):
        fit_damped_cosine(np.arange(10.0), np.arange(9.0))
    with pytest.raises(ValueError):
        fit_damped_cosine(np.arange(10.0), np.r_[np.arange(9.0), np.nan])


def test_fit_result_dict():
    d = fit_exponential(X, exponential(X, 0.9, 1 / 250, 0.05)).to_dict()
    assert d["model"] == "exponential"
    assert set(d) == {"model", "parameters", "uncertainties", "residual_norm", "converged", "flags"}
