import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from mgtlab.core import (
    DataPreset,
    ModelParams,
    PresetKind,
    RateFunction,
    Regime,
    classify_regime,
    data_hat,
    epsilon0,
    moments,
    rate_eval,
)
from mgtlab.errors import DegenerateThreshold

finite_pos = st.floats(min_value=1e-3, max_value=1e3, allow_nan=False)


@given(tau=finite_pos, delta=st.floats(min_value=-10, max_value=10, allow_nan=False))
@settings(max_examples=60, deadline=None)
def test_regime_is_sign_of_delta(tau, delta):
    regime = classify_regime(ModelParams(tau=tau, delta=delta))
    if delta > 0:
        assert regime is Regime.VISCOUS
    elif delta == 0:
        assert regime is Regime.INVISCID
    else:
        assert regime is Regime.CHAOTIC


def test_epsilon0_reference_values():
    assert epsilon0(ModelParams(tau=1.0, delta=1.0)) == pytest.approx(1.0 / 13.0, rel=1e-14)
    assert epsilon0(ModelParams(tau=0.5, delta=2.0)) == pytest.approx(1.0 / 22.0, rel=1e-14)


def test_epsilon0_cap_and_degenerate():
    # large coefficients push the formula below 1; tiny ones may exceed it
    assert epsilon0(ModelParams(tau=0.05, delta=1.0)) <= 1.0
    # denominator (delta+tau)(delta+19 tau) - 27 tau^2 < 0 for small delta/tau
    with pytest.raises(DegenerateThreshold):
        epsilon0(ModelParams(tau=1.0, delta=0.01))


def test_rate_reference_values():
    assert rate_eval(RateFunction("D_n", 1), 3.0) == pytest.approx(2.0)
    assert rate_eval(RateFunction("D_n", 3), 0.0) == pytest.approx(1.0)
    assert rate_eval(RateFunction("D_{n,s}", 2, 2.0), 15.0) == pytest.approx(0.0625)
    assert rate_eval(RateFunction("tildeD", 1, 1.0), 3.0) == pytest.approx(4.0 ** (-0.25))


@given(
    n=st.sampled_from([1, 2, 3]),
    s=st.floats(min_value=1.0, max_value=4.0),
    t1=st.floats(min_value=0.0, max_value=1e5),
    dt=st.floats(min_value=1e-3, max_value=1e5),
)
@settings(max_examples=60, deadline=None)
def test_rate_monotone_for_s_ge_1(n, s, t1, dt):
    rate = RateFunction("D_{n,s}", n, s)
    assert rate_eval(rate, t1 + dt) <= rate_eval(rate, t1) + 1e-15


@given(n=st.sampled_from([1, 2, 3]), t=st.floats(min_value=0.0, max_value=1e6))
@settings(max_examples=40, deadline=None)
def test_rate_s0_is_base_family(n, t):
    assert rate_eval(RateFunction("D_{n,s}", n, 0.0), t) == rate_eval(RateFunction("D_n", n), t)


def test_gaussian_moments():
    m, p = moments(DataPreset(PresetKind.GAUSSIAN, 1.0, 1.0), 1)
    assert m == pytest.approx(math.sqrt(math.pi), rel=1e-14)
    assert p[0] == 0.0
    m2, p2 = moments(DataPreset(PresetKind.SHIFTED_GAUSSIAN, 2.0, 1.0, (1.0,)), 1)
    assert m2 == pytest.approx(2.0 * math.sqrt(math.pi), rel=1e-14)
    assert p2[0] == pytest.approx(2.0 * math.sqrt(math.pi), rel=1e-14)


def test_zero_mean_presets():
    for preset in (
        DataPreset(PresetKind.ZERO_MEAN, 1.3, 0.8),
        DataPreset(PresetKind.DERIVATIVE_GAUSSIAN, 0.7, 1.2),
    ):
        for dim in (1, 2, 3):
            if preset.kind is PresetKind.DERIVATIVE_GAUSSIAN and dim > 1:
                continue
            m, _ = moments(preset, dim)
            assert m == 0.0
            assert abs(data_hat(preset, 0.0, dim)) == 0.0


@pytest.mark.parametrize("dim", [1, 2, 3])
@pytest.mark.parametrize(
    "preset",
    [
        DataPreset(PresetKind.GAUSSIAN, 1.0, 1.0),
        DataPreset(PresetKind.GAUSSIAN, 2.5, 0.7),
        DataPreset(PresetKind.ZERO_MEAN, 1.0, 1.0),
    ],
)
def test_data_hat_at_zero_equals_mass(preset, dim):
    m, _ = moments(preset, dim)
    val = data_hat(preset, 0.0, dim)
    assert abs(val - m) <= 1e-12 * max(1.0, abs(m))


def test_data_hat_matches_quadrature_1d():
    preset = DataPreset(PresetKind.SHIFTED_GAUSSIAN, 1.4, 0.9, (0.6,))
    for k in (0.0, 0.3, 2.2):
        re = quad(lambda x: 1.4 * math.exp(-((x - 0.6) ** 2) / 0.81) * math.cos(k * x), -12, 12, limit=200)[0]
        im = quad(lambda x: -1.4 * math.exp(-((x - 0.6) ** 2) / 0.81) * math.sin(k * x), -12, 12, limit=200)[0]
        got = data_hat(preset, k, 1)
        assert got.real == pytest.approx(re, abs=1e-10)
        assert got.imag == pytest.approx(im, abs=1e-10)


def test_derivative_gaussian_transform_is_ik_times_gaussian():
    base = DataPreset(PresetKind.GAUSSIAN, 0.7, 1.2)
    deriv = DataPreset(PresetKind.DERIVATIVE_GAUSSIAN, 0.7, 1.2)
    k = np.linspace(0.0, 3.0, 7)
    assert np.allclose(data_hat(deriv, k, 1), 1j * k * data_hat(base, k, 1))
