import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mgtlab.core import ModelParams, epsilon0
from mgtlab.errors import OutOfZone
from mgtlab.spectral import (
    discriminant,
    roots_exact,
    roots_exact_batch,
    roots_exact_mp,
    roots_series,
    roots_small_batch,
    spectral_abscissa,
)

PAIRS = [(1.0, 1.0), (1.0, 2.0), (0.5, 1.5), (0.8, 0.3), (0.125, 1.0)]


def _textbook_discriminant(tau, delta, k):
    # 18abcd - 4b^3 d + b^2 c^2 - 4 a c^3 - 27 a^2 d^2 for the mode cubic
    a, b, c, d = tau, 1.0, (delta + tau) * k * k, k * k
    return 18 * a * b * c * d - 4 * b**3 * d + b**2 * c**2 - 4 * a * c**3 - 27 * a**2 * d**2


def test_discriminant_matches_textbook_formula():
    p = ModelParams(tau=1.0, delta=1.0)
    for k in (0.03, 0.3, 3.0):
        assert discriminant(p, k) == pytest.approx(_textbook_discriminant(1.0, 1.0, k), rel=1e-12)


def test_discriminant_negative_in_small_zone():
    p = ModelParams(tau=1.0, delta=1.0)
    assert discriminant(p, 0.05) < -2 * 0.05**2
    assert discriminant(p, 0.0) == 0.0


def test_roots_at_zero_frequency():
    roots = roots_exact(ModelParams(tau=0.5, delta=1.0), 0.0)
    vals = sorted(roots.values, key=lambda z: z.real)
    assert vals[0] == pytest.approx(-2.0)
    assert vals[1] == vals[2] == 0.0


@given(
    tau=st.floats(min_value=0.05, max_value=5.0),
    delta=st.floats(min_value=0.05, max_value=5.0),
    logk=st.floats(min_value=-4, max_value=3),
)
@settings(max_examples=80, deadline=None)
def test_root_relations(tau, delta, logk):
    k = 10.0**logk
    p = ModelParams(tau=tau, delta=delta)
    lam = roots_exact_batch(p, np.array([k]))[:, 0]
    scale = max(1.0, float(np.max(np.abs(lam))))
    assert abs(lam.sum() + 1.0 / tau) <= 1e-10 * scale
    e2 = lam[0] * lam[1] + lam[0] * lam[2] + lam[1] * lam[2]
    assert abs(e2 - (delta + tau) * k * k / tau) <= 1e-10 * scale**2
    assert abs(lam.prod() + k * k / tau) <= 1e-10 * scale**3


@pytest.mark.parametrize("tau,delta", PAIRS)
def test_companion_matrix_equivalence(tau, delta):
    p = ModelParams(tau=tau, delta=delta)
    ks = np.logspace(-4, 3, 240)
    lam = roots_exact_batch(p, ks)
    worst = 0.0
    for i, k in enumerate(ks):
        ours = np.sort_complex(lam[:, i])
        ref = np.sort_complex(np.roots([tau, 1.0, (delta + tau) * k * k, k * k]))
        worst = max(worst, float(np.max(np.abs(ours - ref) / np.maximum(1.0, np.abs(ref)))))
    assert worst <= 1e-10


def test_real_parts_negative_in_viscous_regime():
    p = ModelParams(tau=1.0, delta=1.0)
    ks = np.logspace(-3, 2, 200)
    lam = roots_exact_batch(p, ks)
    assert np.all(lam.real < 0.0)


def test_small_zone_structure():
    p = ModelParams(tau=1.0, delta=2.0)
    eps = epsilon0(p)
    ks = np.linspace(eps / 50, eps, 40)
    lam1, mu_r, mu_i = roots_small_batch(p, ks)
    assert np.all(mu_i > 0)
    assert np.all(mu_r < 0)
    # |lambda1 + 1/tau| <= C k^2 with a stable constant
    c = np.abs(lam1 + 1.0 / p.tau) / ks**2
    assert c.max() <= 3.0 * p.delta


def test_series_out_of_zone():
    p = ModelParams(tau=1.0, delta=1.0)
    with pytest.raises(OutOfZone):
        roots_series(p, 0.5, order=4)


def test_series_truncation_structure():
    p = ModelParams(tau=1.0, delta=2.0)
    k = 0.01
    t2 = roots_series(p, k, order=2)
    t4 = roots_series(p, k, order=4)
    c4 = p.tau * p.delta * (p.delta - p.tau)
    assert t4.lambda1 - t2.lambda1 == pytest.approx(c4 * k**4, rel=1e-12)
    assert t4.mu_r - t2.mu_r == pytest.approx(-0.5 * c4 * k**4, rel=1e-12)
    t3 = roots_series(p, k, order=3)
    assert t3.mu_i - t2.mu_i == pytest.approx(p.delta * (4 * p.tau - p.delta) / 8 * k**3, rel=1e-12)


@pytest.mark.parametrize("tau,delta", [(1.0, 2.0), (1.0, 1.0)])
def test_expansion_remainder_orders(tau, delta):
    """Order-4 series remainders: O(k^6) for lambda1 and mu_R, O(k^5) for mu_I."""
    p = ModelParams(tau=tau, delta=delta)
    ks = np.geomspace(1e-3, 1e-2, 9)
    errs = {"lambda1": [], "mu_r": [], "mu_i": []}
    with mpmath.workdps(50):
        taum, deltam = mpmath.mpf(repr(tau)), mpmath.mpf(repr(delta))
        for k in ks:
            ex = roots_exact_mp(p, float(k), dps=50)
            km = mpmath.mpf(repr(float(k)))
            series = (
                -1 / taum + deltam * km**2 + taum * deltam * (deltam - taum) * km**4,
                -deltam / 2 * km**2 - taum * deltam * (deltam - taum) / 2 * km**4,
                km + deltam * (4 * taum - deltam) / 8 * km**3,
            )
            for key, e, s in zip(errs, ex, series):
                errs[key].append(abs(float(e - s)))
    x = np.log(ks)
    slopes = {key: np.polyfit(x, np.log(np.maximum(v, 1e-300)), 1)[0] for key, v in errs.items()}
    assert slopes["lambda1"] >= 5.8
    assert slopes["mu_r"] >= 5.8
    assert slopes["mu_i"] >= 4.8


def test_double_precision_series_agrees_with_exact_formula():
    p = ModelParams(tau=0.5, delta=1.5)
    k = 0.004
    tr = roots_series(p, k, order=4)
    lam1 = -1 / 0.5 + 1.5 * k**2 + 0.5 * 1.5 * (1.5 - 0.5) * k**4
    assert tr.lambda1 == pytest.approx(lam1, rel=1e-15)


def test_spectral_abscissa_negative_and_saturating():
    p = ModelParams(tau=1.0, delta=1.0)
    ks = np.array([1e-3, 1e-1, 1.0, 100.0])
    absc = spectral_abscissa(p, ks)
    assert np.all(absc < 0)
    # large-k real part approaches -delta / (2 tau (delta + tau))
    assert absc[-1] == pytest.approx(-1.0 / 4.0, rel=0.05)
