"""Exact spectral solver for the linear Cauchy problem and its profile checks.

Per mode, the solution transform is

    psihat(t,k) = K0hat(t,k) psi0hat + K1hat(t,k) psi1hat + K2hat(t,k) psi2hat,

and the large-time structure is governed by the data combinations
Psi12 = psi1 + tau*psi2 and Psi02 = psi0 - tau^2*psi2: the first-order profile
is J0(t,|D|) Psi12, the second-order correction adds N_ell(t,|D|) Psi12 and the
cosine wave J1-type term carrying Psi02.  This module evaluates solutions,
profiles and moment-based approximants on t-adapted radial grids, fits decay
exponents of norm time-series, and runs the optimality (lower-bound) checks.

Sign conventions: the first-moment corrections enter the approximants with the
Taylor-consistent sign, J_j * g  ~  M_g J_j - P_g . grad J_j, i.e. the
gradient terms carry a minus sign; this is the variant under which the
second-order approximation gap is o(D_{n,k+1+ell}), verified by the rate
tests.  A0 = (M1 + tau M2) * delta*(4 tau - delta)/8 multiplies the t*Lap J1
correction, mirroring the N0 multiplier; the tau-flavored variant is kept
alongside for the constant arbiter (see a0_variants).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .core import DataPreset, ModelParams, RateFunction, data_hat, moments, rate_eval
from .errors import DegenerateSeries, HypothesisViolated
from .fields import RadialSpectralField, build_radial_grid, hs_norm
from .spectral import ModeKernels, jhat_arrays, nhat_arrays

__all__ = [
    "LinearProblem",
    "ProfileSpec",
    "DecayReport",
    "LinearSolver",
    "fit_decay",
    "fit_log_model",
    "geometric_times",
    "lower_bound_check",
    "profile_lower_bound_check",
    "kernel_estimate_sweep",
    "a0_variants",
]

DataTriple = tuple[DataPreset | None, DataPreset | None, DataPreset | None]


@dataclass(frozen=True)
class LinearProblem:
    """Model parameters plus the three initial-data presets (slots 0, 1, 2)."""

    params: ModelParams
    data: DataTriple

    def __post_init__(self):
        if len(self.data) != 3:
            raise ValueError("data must hold exactly three slots")

    def moment(self, j: int) -> tuple[float, np.ndarray]:
        preset = self.data[j]
        if preset is None:
            return 0.0, np.zeros(self.params.dim)
        return moments(preset, self.params.dim)

    @property
    def mass_combo(self) -> float:
        """M1 + tau*M2, the first-order profile constant."""
        return self.moment(1)[0] + self.params.tau * self.moment(2)[0]

    @property
    def a1_combo(self) -> float:
        """M0 - tau^2*M2, the cosine-term constant."""
        return self.moment(0)[0] - self.params.tau**2 * self.moment(2)[0]

    @property
    def b_combo(self) -> np.ndarray:
        """P1 + tau*P2, the gradient-term constant vector."""
        return self.moment(1)[1] + self.params.tau * self.moment(2)[1]

    def data_hat(self, j: int, k: np.ndarray) -> np.ndarray:
        preset = self.data[j]
        if preset is None:
            return np.zeros_like(np.asarray(k, dtype=float), dtype=complex)
        return data_hat(preset, k, self.params.dim)

    def min_width(self) -> float:
        widths = [p.width for p in self.data if p is not None]
        return min(widths) if widths else 1.0


def a0_variants(problem: LinearProblem) -> dict[str, float]:
    """Both candidate values of the second-order constant A0.

    The t*Lap J1 correction coefficient appears once as
    (M1+tau M2)*tau*(4 tau - delta)/8 and once (through the N0 multiplier) as
    (M1+tau M2)*delta*(4 tau - delta)/8; the measured lower-bound constant
    arbitrates.  delta == tau makes them indistinguishable.
    """
    tau, delta = problem.params.tau, problem.params.delta
    mc = problem.mass_combo
    slope = (4.0 * tau - delta) / 8.0
    return {"tau": mc * tau * slope, "delta": mc * delta * slope}


@dataclass(frozen=True)
class ProfileSpec:
    """Selects a profile comparison: order (1 or 2), time derivative, Hdot^k."""

    order: int = 1
    ell: int = 0
    sobolev: float = 0.0

    def __post_init__(self):
        if self.order not in (1, 2):
            raise ValueError("order must be 1 or 2")
        if self.ell not in (0, 1, 2):
            raise ValueError("ell must be 0, 1 or 2")
        if self.sobolev < 0:
            raise ValueError("sobolev index must be >= 0")


@dataclass
class DecayReport:
    """Fitted rate of a norm time-series against an expected exponent."""

    label: str
    times: np.ndarray
    values: np.ndarray
    slope: float
    intercept: float
    fit_residual: float
    expected: float | None = None
    tolerance: float | None = None
    verdict: str = "N/A"
    extras: dict = dc_field(default_factory=dict)

    def passed(self) -> bool:
        return self.verdict == "PASS"


def geometric_times(t_min: float = 1e2, t_max: float = 1e4, per_decade: int = 12):
    count = max(2, int(round(per_decade * math.log10(t_max / t_min))) + 1)
    return np.geomspace(t_min, t_max, count)


def fit_decay(
    times,
    values,
    expected: float | None = None,
    tolerance: float | None = None,
    label: str = "",
) -> DecayReport:
    """Least-squares slope of log(value) against log(t).

    Requires at least 8 positive samples spanning two decades of t; raises
    DegenerateSeries otherwise.  With expected/tolerance set, the verdict is
    PASS when |slope - expected| <= tolerance.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if times.size < 8:
        raise DegenerateSeries(f"need >= 8 samples, got {times.size}")
    if np.any(values <= 0.0):
        raise DegenerateSeries("series contains non-positive values")
    if times.max() / times.min() < 99.0:
        raise DegenerateSeries("series must span at least two decades of t")
    x, y = np.log(times), np.log(values)
    slope, intercept = np.polyfit(x, y, 1)
    resid = float(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))
    verdict = "N/A"
    if expected is not None and tolerance is not None:
        verdict = "PASS" if abs(slope - expected) <= tolerance else "FAIL"
    return DecayReport(
        label=label,
        times=times,
        values=values,
        slope=float(slope),
        intercept=float(intercept),
        fit_residual=resid,
        expected=expected,
        tolerance=tolerance,
        verdict=verdict,
    )


def fit_log_model(times, values_squared, label: str = "") -> DecayReport:
    """Fit value^2 = a + b*ln t and compare against the best power law.

    Used for the planar L2 growth, which is sqrt-logarithmic.  The verdict is
    PASS when the log-model relative residual beats the power-law one.
    """
    times = np.asarray(times, dtype=float)
    v2 = np.asarray(values_squared, dtype=float)
    if times.size < 8:
        raise DegenerateSeries(f"need >= 8 samples, got {times.size}")
    if np.any(v2 <= 0.0):
        raise DegenerateSeries("series contains non-positive values")
    if times.max() / times.min() < 99.0:
        raise DegenerateSeries("series must span at least two decades of t")
    ln_t = np.log(times)
    design = np.stack([np.ones_like(ln_t), ln_t], axis=1)
    (a, b), *_ = np.linalg.lstsq(design, v2, rcond=None)
    log_resid = float(np.sqrt(np.mean((v2 - (a + b * ln_t)) ** 2 / v2**2)))
    p_slope, p_icept = np.polyfit(ln_t, np.log(v2), 1)
    power = np.exp(p_icept) * times**p_slope
    pow_resid = float(np.sqrt(np.mean((v2 - power) ** 2 / v2**2)))
    verdict = "PASS" if log_resid < pow_resid else "FAIL"
    return DecayReport(
        label=label,
        times=times,
        values=np.sqrt(v2),
        slope=float(p_slope),
        intercept=float(a),
        fit_residual=log_resid,
        expected=None,
        tolerance=None,
        verdict=verdict,
        extras={
            "log_model_a": float(a),
            "log_model_b": float(b),
            "b_over_a": float(b / a) if a != 0 else math.inf,
            "power_residual": pow_resid,
            "log_residual": log_resid,
        },
    )


class _TimeSlice:
    """Grid, kernels and data transforms frozen at one time."""

    def __init__(self, problem: LinearProblem, t: float, k_max: float):
        self.t = t
        self.grid = build_radial_grid(problem.params, t, problem.params.dim, k_max=k_max)
        self.k = self.grid.nodes
        self.kernels = ModeKernels(problem.params, self.k)
        self.dhat = [problem.data_hat(j, self.k) for j in range(3)]
        tau = problem.params.tau
        self.psi12 = self.dhat[1] + tau * self.dhat[2]
        self.psi02 = self.dhat[0] - tau**2 * self.dhat[2]


class LinearSolver:
    """Frequency-space solver with per-time caching of grids and kernels."""

    def __init__(self, problem: LinearProblem, k_max: float | None = None):
        self.problem = problem
        self.params = problem.params
        self.k_max = k_max if k_max is not None else 50.0 / problem.min_width()
        self._slices: dict[float, _TimeSlice] = {}

    def _at(self, t: float) -> _TimeSlice:
        sl = self._slices.get(t)
        if sl is None:
            sl = _TimeSlice(self.problem, t, self.k_max)
            if len(self._slices) > 40:
                self._slices.clear()
            self._slices[t] = sl
        return sl

    # -- solution ------------------------------------------------------------

    def solve_hat(self, t: float, ell: int = 0) -> RadialSpectralField:
        """d^ell/dt^ell of the solution transform on the t-adapted grid."""
        sl = self._at(t)
        vals = sum(
            sl.kernels.khat(kid, ell, t) * sl.dhat[j]
            for j, kid in enumerate(("K0", "K1", "K2"))
        )
        return sl.grid.with_values(vals)

    def solution_norm(self, t: float, ell: int = 0, sobolev: float = 0.0) -> float:
        return hs_norm(self.solve_hat(t, ell), sobolev)

    # -- profiles ------------------------------------------------------------

    @staticmethod
    def _trig_wave(ell: int, which: str, t: float, k: np.ndarray, delta: float):
        """heat factor times d^ell/dt^ell of sin(kt)/k (which='sin') or cos(kt)
        (which='cos'), the derivative falling on the trigonometric factor only."""
        j0 = jhat_arrays("J0", t, k, delta)
        j1 = jhat_arrays("J1", t, k, delta)
        k2 = k * k
        table = {
            ("sin", 0): j0,
            ("sin", 1): j1,
            ("sin", 2): -k2 * j0,
            ("sin", 3): -k2 * j1,
            ("cos", 0): j1,
            ("cos", 1): -k2 * j0,
            ("cos", 2): -k2 * j1,
            ("cos", 3): k2 * k2 * j0,
        }
        return table[(which, ell)]

    # Sign with which each N-correction enters the second-order profile.  The
    # ell=0 correction is -N0 (equivalently +t*delta*(4tau-delta)/8 k^2 J1):
    # measured by per-mode remainders and by the residual-rate gain; the
    # stated multiplier N0 carries the opposite sign to its own usage.
    N_SIGNS = (-1.0, 1.0, 1.0, 1.0)

    def profile_hat(self, t: float, spec: ProfileSpec) -> RadialSpectralField:
        """First- or second-order asymptotic profile transform at time t."""
        sl = self._at(t)
        delta = self.params.delta
        vals = self._trig_wave(spec.ell, "sin", t, sl.k, delta) * sl.psi12
        if spec.order == 2:
            correction = self.N_SIGNS[spec.ell] * nhat_arrays(
                f"N{spec.ell}", t, sl.k, self.params
            )
            vals = vals + correction * sl.psi12
            vals = vals + self._trig_wave(spec.ell, "cos", t, sl.k, delta) * sl.psi02
        return sl.grid.with_values(vals)

    def residual_norm(self, t: float, spec: ProfileSpec) -> float:
        """Hdot^k distance between the solution and its profile at time t."""
        sol = self.solve_hat(t, spec.ell)
        prof = self.profile_hat(t, spec)
        return hs_norm(sol.with_values(sol.values - prof.values), spec.sobolev)

    # -- moment approximants ---------------------------------------------------

    def approximant_hat(self, t: float, order: int, ell: int) -> RadialSpectralField:
        """Diffusion-wave approximant built from the data moments only."""
        sl = self._at(t)
        delta = self.params.delta
        mc = self.problem.mass_combo
        vals = mc * self._trig_wave(ell, "sin", t, sl.k, delta).astype(complex)
        if order == 2:
            a1 = self.problem.a1_combo
            b_first = self.problem.b_combo[0]
            vals = vals + mc * self.N_SIGNS[ell] * nhat_arrays(
                f"N{ell}", t, sl.k, self.params
            )
            vals = vals + a1 * self._trig_wave(ell, "cos", t, sl.k, delta)
            if b_first != 0.0:
                if self.params.dim != 1:
                    raise HypothesisViolated(
                        "first-moment terms are exercised on the 1-d line only"
                    )
                # Taylor-consistent sign: J*g ~ M J - P . grad J
                vals = vals - 1j * sl.k * b_first * self._trig_wave(
                    ell, "sin", t, sl.k, delta
                )
        return sl.grid.with_values(vals)

    def approximant_norm(self, t: float, order: int, ell: int, sobolev: float) -> float:
        return hs_norm(self.approximant_hat(t, order, ell), sobolev)

    def approximation_gap(self, t: float, order: int, ell: int, sobolev: float) -> float:
        """Hdot^k norm of solution minus the moment approximant."""
        sol = self.solve_hat(t, ell)
        appr = self.approximant_hat(t, order, ell)
        return hs_norm(sol.with_values(sol.values - appr.values), sobolev)


# ----------------------------------------------------------------------------
# optimality (lower-bound) checks
# ----------------------------------------------------------------------------

REFERENCE_TIME = 1e8  # where the approximant/rate ratio is treated as converged


def _rate(problem: LinearProblem, s: float) -> RateFunction:
    return RateFunction("D_{n,s}", problem.params.dim, s)


def lower_bound_check(
    problem: LinearProblem,
    ell: int = 0,
    sobolev: float = 0.0,
    t_grid=None,
    threshold_factor: float = 0.5,
) -> DecayReport:
    """Ratio ||d_t^ell psi||_{Hdot^k} / D_{n,k+ell}(t) stays away from zero.

    Requires M1 + tau*M2 != 0 (HypothesisViolated otherwise).  The verdict is
    PASS when the minimum ratio over the last decade is at least
    threshold_factor * |M1 + tau*M2|; the asymptotic prediction
    |M1+tau M2| * lim ||J-term||/D (evaluated at a large reference time) is
    reported alongside.
    """
    mc = problem.mass_combo
    if abs(mc) < 1e-14:
        raise HypothesisViolated("M1 + tau*M2 vanishes; lower bound does not apply")
    if t_grid is None:
        t_grid = geometric_times(1e3, 1e4)
    t_grid = np.asarray(t_grid, dtype=float)
    solver = LinearSolver(problem)
    rate = _rate(problem, sobolev + ell)
    norms = np.array([solver.solution_norm(t, ell, sobolev) for t in t_grid])
    ratios = norms / rate_eval(rate, t_grid)

    last = t_grid >= t_grid.max() / 10.0
    min_ratio = float(ratios[last].min())
    max_ratio = float(ratios[last].max())
    threshold = threshold_factor * abs(mc)

    t_ref = REFERENCE_TIME
    predicted = solver.approximant_norm(t_ref, 1, ell, sobolev) / rate_eval(rate, t_ref)

    verdict = "PASS" if min_ratio >= threshold else "FAIL"
    return DecayReport(
        label=f"lower-bound ell={ell} k={sobolev}",
        times=t_grid,
        values=norms,
        slope=float("nan"),
        intercept=float("nan"),
        fit_residual=float("nan"),
        expected=threshold,
        tolerance=None,
        verdict=verdict,
        extras={
            "min_ratio": min_ratio,
            "max_ratio": max_ratio,
            "max_over_min": max_ratio / min_ratio,
            "constant": abs(mc),
            "predicted_limit": float(predicted),
        },
    )


def profile_lower_bound_check(
    problem: LinearProblem,
    ell: int = 0,
    sobolev: float = 0.0,
    t_grid=None,
    threshold_factor: float = 0.5,
) -> DecayReport:
    """Optimality of the first-order approximation:
    ||d_t^ell psi - psi^(1,ell)|| / D_{n,k+1+ell} bounded below.

    Requires at least one of A0, A1, or the B vector to be nonzero.  The PASS
    threshold is threshold_factor times the predicted asymptotic ratio
    ||psi^(2,ell)||/D evaluated at a large reference time (the analytic
    constant of the statement is not explicit, so the approximant provides it).
    """
    a0 = a0_variants(problem)["delta"]
    a1 = problem.a1_combo
    bvec = problem.b_combo
    if abs(a0) < 1e-14 and abs(a1) < 1e-14 and np.all(np.abs(bvec) < 1e-14):
        raise HypothesisViolated("A0, A1 and B all vanish; lower bound does not apply")
    if t_grid is None:
        t_grid = geometric_times(1e3, 1e4)
    t_grid = np.asarray(t_grid, dtype=float)
    solver = LinearSolver(problem)
    rate = _rate(problem, sobolev + 1 + ell)
    gaps = np.array([solver.approximation_gap(t, 1, ell, sobolev) for t in t_grid])
    ratios = gaps / rate_eval(rate, t_grid)

    t_ref = REFERENCE_TIME
    full = solver.approximant_hat(t_ref, 2, ell)
    first = solver.approximant_hat(t_ref, 1, ell)
    second = hs_norm(full.with_values(full.values - first.values), sobolev)
    predicted = second / rate_eval(rate, t_ref)

    last = t_grid >= t_grid.max() / 10.0
    min_ratio = float(ratios[last].min())
    threshold = threshold_factor * float(predicted)
    verdict = "PASS" if min_ratio >= threshold else "FAIL"
    return DecayReport(
        label=f"profile-lower-bound ell={ell} k={sobolev}",
        times=t_grid,
        values=gaps,
        slope=float("nan"),
        intercept=float("nan"),
        fit_residual=float("nan"),
        expected=threshold,
        tolerance=None,
        verdict=verdict,
        extras={
            "min_ratio": min_ratio,
            "predicted_limit": float(predicted),
            "a0_delta_variant": a0,
            "a0_tau_variant": a0_variants(problem)["tau"],
            "a1": a1,
            "b_norm": float(np.linalg.norm(bvec)),
        },
    )


def kernel_estimate_sweep(
    params: ModelParams,
    psi2: DataPreset,
    ell: int = 0,
    sobolev: float = 0.0,
    t_grid=None,
    mode: str = "third-kernel",
    second_order: int = 0,
    tolerance: float = 0.05,
) -> DecayReport:
    """Decay-rate checks for the third kernel applied to a single datum.

    mode "third-kernel": ||  |D|^(s+2-ell) d_t^(ell+1) K2 * psi2 ||_L2 with
    expected exponent -1 - s/2 - n/4.
    mode "profile-subtracted": Hdot^s norm of (d_t^ell K2 - first-order
    profile - [second_order] * tau*N_ell) * psi2 with expected exponent
    -(s + ell + second_order)/2 - n/4.
    """
    if t_grid is None:
        t_grid = geometric_times(1e2, 1e4)
    t_grid = np.asarray(t_grid, dtype=float)
    n = params.dim
    tau = params.tau
    problem = LinearProblem(params, (None, None, psi2))
    solver = LinearSolver(problem)

    vals = []
    for t in t_grid:
        sl = solver._at(t)
        d2 = sl.dhat[2]
        if mode == "third-kernel":
            sym = sl.kernels.khat("K2", ell + 1, t) * d2
            vals.append(hs_norm(sl.grid.with_values(sym), sobolev + 2 - ell))
        elif mode == "profile-subtracted":
            # K2 carries data combinations Psi12 = tau, Psi02 = -tau^2
            prof = tau * LinearSolver._trig_wave(ell, "sin", t, sl.k, params.delta)
            if second_order:
                prof = prof + tau * LinearSolver.N_SIGNS[ell] * nhat_arrays(
                    f"N{ell}", t, sl.k, params
                )
                prof = prof - tau**2 * LinearSolver._trig_wave(
                    ell, "cos", t, sl.k, params.delta
                )
            sym = (sl.kernels.khat("K2", ell, t) - prof) * d2
            vals.append(hs_norm(sl.grid.with_values(sym), sobolev))
        else:
            raise ValueError(f"unknown mode {mode!r}")

    if mode == "third-kernel":
        expected = -1.0 - sobolev / 2.0 - n / 4.0
    else:
        expected = -(sobolev + ell + second_order) / 2.0 - n / 4.0
    return fit_decay(
        t_grid,
        np.asarray(vals),
        expected=expected,
        tolerance=tolerance,
        label=f"kernel-sweep {mode} ell={ell} s={sobolev} m={second_order}",
    )


def a0_arbiter(
    params: ModelParams, width: float = 1.0, t_grid=None
) -> dict[str, float | str]:
    """Decide which flavor of the second-order constant A0 matches reality.

    Builds data with A1 = M0 - tau^2 M2 = 0 and no first moments, so the
    t*Lap J1 correction alone controls ||psi - psi^(1,0)||.  The measured
    last-decade ratio to D_{n,1} is compared against the predictions from
    A0 = (M1+tau M2)*delta*(4tau-delta)/8 and the tau-flavored variant; the
    winner is reported.  Pointless at delta == tau (variants coincide).
    """
    from .core import PresetKind

    tau = params.tau
    data = (
        DataPreset(PresetKind.GAUSSIAN, amplitude=tau**2 * 0.5, width=width, slot=0),
        DataPreset(PresetKind.GAUSSIAN, amplitude=0.8, width=width, slot=1),
        DataPreset(PresetKind.GAUSSIAN, amplitude=0.5, width=width, slot=2),
    )
    problem = LinearProblem(params, data)
    assert abs(problem.a1_combo) < 1e-12
    if t_grid is None:
        t_grid = geometric_times(1e3, 1e4, per_decade=8)
    t_grid = np.asarray(t_grid, dtype=float)
    solver = LinearSolver(problem)
    rate = _rate(problem, 1.0)
    ratios = np.array(
        [solver.approximation_gap(t, 1, 0, 0.0) for t in t_grid]
    ) / rate_eval(rate, t_grid)
    measured = float(ratios[-1])

    t_ref = REFERENCE_TIME
    # with A1 = B = 0 the order-2 extra term is the N0 piece alone
    full = solver.approximant_hat(t_ref, 2, 0)
    base = solver.approximant_hat(t_ref, 1, 0)
    predicted_delta = hs_norm(
        full.with_values(full.values - base.values), 0.0
    ) / rate_eval(rate, t_ref)
    predicted_tau = predicted_delta * tau / params.delta
    d_delta = abs(measured - predicted_delta)
    d_tau = abs(measured - predicted_tau)
    return {
        "measured": measured,
        "predicted_delta_variant": float(predicted_delta),
        "predicted_tau_variant": float(predicted_tau),
        "winner": "delta" if d_delta < d_tau else "tau",
        "rel_err_delta": d_delta / predicted_delta,
        "rel_err_tau": d_tau / predicted_tau,
    }
