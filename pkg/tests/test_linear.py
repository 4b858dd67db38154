import math

import numpy as np
import pytest

from mgtlab.core import DataPreset, ModelParams, PresetKind, RateFunction, rate_eval
from mgtlab.errors import DegenerateSeries, HypothesisViolated
from mgtlab.fields import hs_norm
from mgtlab.linear import (
    DecayReport,
    LinearProblem,
    LinearSolver,
    ProfileSpec,
    a0_variants,
    fit_decay,
    fit_log_model,
    geometric_times,
    lower_bound_check,
    profile_lower_bound_check,
)

P1 = ModelParams(tau=1.0, delta=1.0, dim=1)


def _gauss(amplitude, slot, width=1.0):
    return DataPreset(PresetKind.GAUSSIAN, amplitude, width, (), slot)


STANDARD = (_gauss(1.0, 0), _gauss(0.8, 1), _gauss(0.5, 2))


def test_initial_identities():
    prob = LinearProblem(P1, STANDARD)
    sol = LinearSolver(prob)
    for ell in (0, 1, 2):
        field = sol.solve_hat(0.0, ell)
        ref = prob.data_hat(ell, field.nodes)
        assert np.max(np.abs(field.values - ref)) <= 1e-10


def test_superposition():
    rng = np.random.default_rng(11)
    a, b = rng.normal(size=2)
    prob_a = LinearProblem(P1, (_gauss(1.0, 0), None, None))
    prob_b = LinearProblem(P1, (None, _gauss(1.0, 1), None))
    prob_ab = LinearProblem(P1, (_gauss(a, 0), _gauss(b, 1), None))
    t = 4.7
    fa = LinearSolver(prob_a).solve_hat(t, 0)
    fb = LinearSolver(prob_b).solve_hat(t, 0)
    fab = LinearSolver(prob_ab).solve_hat(t, 0)
    combo = a * fa.values + b * fb.values
    assert np.max(np.abs(fab.values - combo)) <= 1e-10 * max(1.0, np.max(np.abs(combo)))


def test_frequency_ode_residual_by_differencing():
    prob = LinearProblem(P1, STANDARD)
    sol = LinearSolver(prob)
    t, h = 2.1, 1e-5
    tau, delta = P1.tau, P1.delta
    f2p = sol.solve_hat(t + h, 2).values
    f2m = sol.solve_hat(t - h, 2).values
    sl = sol._at(t)
    k2 = sl.k**2
    res = (
        tau * (f2p - f2m) / (2 * h)
        + sol.solve_hat(t, 2).values
        + (delta + tau) * k2 * sol.solve_hat(t, 1).values
        + k2 * sol.solve_hat(t, 0).values
    )
    # restrict to moderate frequencies where the finite difference resolves
    sel = sl.k <= 5.0
    assert np.max(np.abs(res[sel])) <= 1e-7


def test_profile_trivial_values():
    prob = LinearProblem(P1, STANDARD)
    sol = LinearSolver(prob)
    sl = sol._at(0.0)
    first0 = sol.profile_hat(0.0, ProfileSpec(1, 0, 0.0))
    assert np.max(np.abs(first0.values)) == 0.0
    first1 = sol.profile_hat(0.0, ProfileSpec(1, 1, 0.0))
    assert np.max(np.abs(first1.values - sl.psi12)) <= 1e-14
    second0 = sol.profile_hat(0.0, ProfileSpec(2, 0, 0.0))
    assert np.max(np.abs(second0.values - sl.psi02)) <= 1e-14


def test_residual_at_zero_is_data_norm():
    prob = LinearProblem(P1, STANDARD)
    sol = LinearSolver(prob)
    res0 = sol.residual_norm(0.0, ProfileSpec(1, 0, 0.0))
    f = sol.solve_hat(0.0, 0)
    assert res0 == pytest.approx(hs_norm(f, 0.0), rel=1e-12)


def test_scaling_invariance_of_everything():
    c = 3.0
    scaled = tuple(_gauss(c * p.amplitude, p.slot) for p in STANDARD)
    sol1 = LinearSolver(LinearProblem(P1, STANDARD))
    sol2 = LinearSolver(LinearProblem(P1, scaled))
    t = 37.0
    assert sol2.solution_norm(t, 1, 0.0) == pytest.approx(c * sol1.solution_norm(t, 1, 0.0), rel=1e-12)
    assert sol2.residual_norm(t, ProfileSpec(2, 0, 1.0)) == pytest.approx(
        c * sol1.residual_norm(t, ProfileSpec(2, 0, 1.0)), rel=1e-10
    )


def test_profile_time_derivative_consistency():
    """Differencing the order-1 profile at ell=0 reproduces the ell=1 profile
    up to the correction order O(k^2) on low frequencies."""
    prob = LinearProblem(P1, STANDARD)
    sol = LinearSolver(prob)
    t, h = 30.0, 1e-4
    f_p = sol.profile_hat(t + h, ProfileSpec(1, 0, 0.0)).values
    f_m = sol.profile_hat(t - h, ProfileSpec(1, 0, 0.0)).values
    fd = (f_p - f_m) / (2 * h)
    ell1 = sol.profile_hat(t, ProfileSpec(1, 1, 0.0)).values
    sl = sol._at(t)
    low = sl.k <= 0.05
    window = 0.6 * P1.delta * sl.k[low] ** 2 * np.abs(sl.psi12[low]) * (1.0 + t) + 1e-8
    assert np.all(np.abs(fd[low] - ell1[low]) <= window)


def test_fit_decay_exact_power_law():
    ts = np.geomspace(10, 1e4, 10)
    rep = fit_decay(ts, ts**-0.5)
    assert rep.slope == pytest.approx(-0.5, abs=1e-6)


def test_fit_decay_d1_growth():
    ts = np.geomspace(1e2, 1e4, 12)
    rep = fit_decay(ts, rate_eval(RateFunction("D_n", 1), ts))
    assert rep.slope == pytest.approx(0.5, abs=5e-3)


def test_fit_log_model_beats_power_law_on_sqrt_log():
    ts = np.geomspace(1e2, 1e4, 25)
    vals = np.sqrt(np.log(math.e + ts))
    rep = fit_log_model(ts, vals**2)
    assert rep.verdict == "PASS"
    assert 0.0 < rep.slope < 0.1
    assert rep.extras["log_residual"] < rep.extras["power_residual"]


def test_fit_decay_degenerate_series():
    with pytest.raises(DegenerateSeries):
        fit_decay(np.geomspace(1, 5, 10), np.ones(10))  # < 2 decades
    with pytest.raises(DegenerateSeries):
        fit_decay(np.geomspace(1, 1e3, 10), np.linspace(-1, 1, 10))  # non-positive
    with pytest.raises(DegenerateSeries):
        fit_decay(np.geomspace(1, 1e3, 5), np.ones(5))  # too few points


def test_lower_bound_hypothesis_violated():
    zero_mean = DataPreset(PresetKind.ZERO_MEAN, 1.0, 1.0, (), 1)
    zero_mean2 = DataPreset(PresetKind.ZERO_MEAN, 1.0, 1.0, (), 2)
    prob = LinearProblem(P1, (None, zero_mean, zero_mean2))
    with pytest.raises(HypothesisViolated):
        lower_bound_check(prob, t_grid=np.geomspace(10, 100, 9))


def test_profile_lower_bound_hypothesis_violated():
    # all moments vanish: A0 = A1 = 0 and B = 0
    zm = lambda s: DataPreset(PresetKind.ZERO_MEAN, 1.0, 1.0, (), s)
    prob = LinearProblem(P1, (zm(0), zm(1), zm(2)))
    with pytest.raises(HypothesisViolated):
        profile_lower_bound_check(prob, t_grid=np.geomspace(10, 100, 9))


def test_a0_variants():
    prob = LinearProblem(ModelParams(tau=0.5, delta=1.0, dim=3), STANDARD)
    var = a0_variants(prob)
    mc = prob.mass_combo
    assert var["delta"] == pytest.approx(mc * 1.0 * (2.0 - 1.0) / 8.0)
    assert var["tau"] == pytest.approx(mc * 0.5 * (2.0 - 1.0) / 8.0)


def test_derived_combinations():
    prob = LinearProblem(P1, STANDARD)
    mpi = math.sqrt(math.pi)
    assert prob.mass_combo == pytest.approx(0.8 * mpi + 1.0 * 0.5 * mpi)
    assert prob.a1_combo == pytest.approx(1.0 * mpi - 1.0 * 0.5 * mpi)
    assert np.allclose(prob.b_combo, 0.0)


def test_zero_mean_approximant_vanishes():
    zm1 = DataPreset(PresetKind.ZERO_MEAN, 1.0, 1.0, (), 1)
    zm2 = DataPreset(PresetKind.ZERO_MEAN, 0.5, 1.0, (), 2)
    prob = LinearProblem(P1, (None, zm1, zm2))
    sol = LinearSolver(prob)
    assert sol.approximant_norm(25.0, 1, 0, 0.0) == 0.0
    # the gap then equals the full solution norm
    assert sol.approximation_gap(25.0, 1, 0, 0.0) == pytest.approx(
        sol.solution_norm(25.0, 0, 0.0), rel=1e-12
    )


def test_geometric_times_span():
    ts = geometric_times(1e2, 1e4, 12)
    assert ts.size >= 8
    assert ts[0] == pytest.approx(1e2)
    assert ts[-1] == pytest.approx(1e4)
