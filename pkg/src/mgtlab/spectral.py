"""Characteristic roots of the per-mode cubic and all Fourier multipliers.

Each spatial frequency k evolves under the third-order ODE

    tau * u''' + u'' + (delta + tau) * k**2 * u' + k**2 * u = 0,

whose characteristic cubic  tau*L^3 + L^2 + (delta+tau)*k^2*L + k^2 = 0  has,
for small k, one real root lambda1 near -1/tau and a conjugate pair
mu_R +/- i*mu_I near -delta/2*k^2 +/- i*k.  This module computes the roots
(vectorized Cardano plus Newton polishing, with an mpmath variant for
oracle-grade accuracy), their small-k series, and the solution kernels
K0/K1/K2 (unit-data solutions) together with the diffusion-wave multipliers
J0/J1 and the correction multipliers N0..N3.

Numerical notes
---------------
* Kernel values are assembled in real arithmetic: the conjugate-pair
  contribution is reduced to cos(mu_I t) and sin(mu_I t)/mu_I terms, the
  latter via numpy.sinc, so the k -> 0 confluent limit (double root at 0)
  is reproduced exactly instead of through 0/0 cancellation.
* In the bounded-frequency band all three roots can be real and may collide.
  When the smallest root gap falls below a relative threshold the evaluator
  integrates the per-mode ODE directly (DOP853, tight tolerances) instead of
  dividing by root differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import mpmath
import numpy as np
from scipy.integrate import solve_ivp

from .core import ModelParams, epsilon0
from .errors import OutOfZone

__all__ = [
    "RootTriple",
    "GeneralRoots",
    "MultiplierQuery",
    "discriminant",
    "roots_exact",
    "roots_exact_batch",
    "roots_small_batch",
    "roots_series",
    "roots_exact_mp",
    "spectral_abscissa",
    "ModeKernels",
    "khat",
    "jhat",
    "nhat",
    "jhat_arrays",
    "nhat_arrays",
]

# kernels indexed by which initial datum they propagate
K_KERNELS = ("K0", "K1", "K2")
J_KERNELS = ("J0", "J1")
N_KERNELS = ("N0", "N1", "N2", "N3")

GAP_RTOL = 1e-6  # relative root-gap threshold below which the ODE fallback engages


@dataclass(frozen=True)
class RootTriple:
    """Small-frequency root structure: real root and conjugate pair."""

    lambda1: float
    mu_r: float
    mu_i: float
    in_small_zone: bool = True

    @property
    def pair(self) -> complex:
        return complex(self.mu_r, self.mu_i)


@dataclass(frozen=True)
class GeneralRoots:
    """Three roots of the per-mode cubic, unordered, possibly all real."""

    values: tuple[complex, complex, complex]


@dataclass(frozen=True)
class MultiplierQuery:
    """Selects a multiplier value: kernel id, time-derivative order, (t, k)."""

    kernel_id: str
    time_derivative: int
    t: float
    k: float

    def __post_init__(self) -> None:
        kid, ell = self.kernel_id, self.time_derivative
        if kid not in K_KERNELS + J_KERNELS + N_KERNELS:
            raise ValueError(f"unknown kernel id {kid!r}")
        if kid in ("K0", "K1") and not 0 <= ell <= 2:
            raise ValueError(f"{kid} supports time derivatives 0..2, got {ell}")
        if kid == "K2" and not 0 <= ell <= 3:
            raise ValueError(f"K2 supports time derivatives 0..3, got {ell}")
        if kid in J_KERNELS + N_KERNELS and ell != 0:
            raise ValueError(f"{kid} takes no time derivative, got {ell}")
        if self.t < 0:
            raise ValueError("t must be >= 0")
        if self.k < 0:
            raise ValueError("k must be >= 0")


def cubic_coefficients(params: ModelParams, k) -> tuple:
    """Coefficients (a, b, c, d) of a*L^3 + b*L^2 + c*L + d for frequency k."""
    k = np.asarray(k, dtype=float)
    tau, delta = params.tau, params.delta
    return tau, np.ones_like(k), (delta + tau) * k * k, k * k


def discriminant(params: ModelParams, k):
    """Discriminant of the per-mode cubic in L; negative on (0, epsilon0]."""
    k = np.asarray(k, dtype=float)
    tau, delta = params.tau, params.delta
    k2 = k * k
    quartic = (delta + tau) * (delta + 19.0 * tau) - 27.0 * tau**2
    out = quartic * k2 * k2 - 4.0 * k2 - 4.0 * tau * (delta + tau) ** 3 * k2**3
    return out if out.ndim else float(out)


def _poly_and_deriv(params: ModelParams, k2, x):
    tau, delta = params.tau, params.delta
    c = (delta + tau) * k2
    p = ((tau * x + 1.0) * x + c) * x + k2
    dp = (3.0 * tau * x + 2.0) * x + c
    return p, dp


def _newton_polish(params: ModelParams, k2, x, iters: int = 5):
    """A few Newton steps; skips updates where the derivative is tiny."""
    for _ in range(iters):
        p, dp = _poly_and_deriv(params, k2, x)
        scale = np.maximum(1.0, np.abs(x)) ** 3
        done = np.abs(p) <= 1e-14 * scale
        safe = np.abs(dp) > 1e-300
        step = np.where(safe & ~done, p / np.where(safe, dp, 1.0), 0.0)
        x = x - step
        if np.all(done):
            break
    return x


def roots_exact_batch(params: ModelParams, k) -> np.ndarray:
    """Roots of the per-mode cubic for an array of frequencies.

    Returns a complex array of shape (3,) + k.shape ordered so that row 0 is
    the real root whenever exactly one root is real, and rows 1 and 2 are a
    conjugate pair (row 1 carries non-negative imaginary part).  Where all
    three roots are real they are sorted ascending.  Residuals satisfy
    |p(L)| <= 1e-12 * max(1, |L|)^3 after polishing.
    """
    k = np.atleast_1d(np.asarray(k, dtype=float))
    tau, delta = params.tau, params.delta
    k2 = k * k

    # depressed cubic y^3 + p*y + q after L = y - 1/(3 tau); its discriminant
    # q^2/4 + p^3/27 in the factored form that avoids the catastrophic
    # cancellation of the raw expression at small k
    p = (delta + tau) * k2 / tau - 1.0 / (3.0 * tau**2)
    q = (2.0 * tau - delta) * k2 / (3.0 * tau**2) + 2.0 / (27.0 * tau**3)
    a_d = 2.0 * tau**2 - 5.0 * tau * delta - 0.25 * delta**2
    b_d = tau * (delta + tau) ** 3
    disc_d = k2 / (27.0 * tau**4) * (1.0 + a_d * k2 + b_d * k2 * k2)
    shift = 1.0 / (3.0 * tau)

    lam = np.empty((3,) + k.shape, dtype=complex)

    one_real = disc_d > 0.0
    if np.any(one_real):
        s = np.sqrt(disc_d[one_real])
        qh = -0.5 * q[one_real]
        u = np.cbrt(qh + s)
        v = np.cbrt(qh - s)
        y1 = u + v
        lam1 = _newton_polish(params, k2[one_real], y1 - shift).real
        # conjugate pair from the root relations (sum and product), which
        # stay accurate where the u - v difference cancels at tiny k
        mu_r0 = -0.5 * (1.0 / tau + lam1)
        with np.errstate(invalid="ignore"):
            rad = -k2[one_real] / (tau * lam1) - mu_r0**2
        mu_i0 = np.sqrt(np.maximum(rad, 0.0))
        pair0 = mu_r0 + 1j * mu_i0
        polished = _newton_polish(params, k2[one_real], pair0)
        keep = mu_i0 > 1e-6 * np.maximum(1.0, np.abs(lam1))
        pair = np.where(keep, polished, pair0)
        lam[0, one_real] = lam1
        lam[1, one_real] = pair
        lam[2, one_real] = np.conj(pair)

    three_real = ~one_real
    if np.any(three_real):
        pp = p[three_real]
        qq = q[three_real]
        m = 2.0 * np.sqrt(np.maximum(-pp / 3.0, 0.0))
        # arccos argument clipped: disc_d <= 0 guarantees it is in [-1, 1]
        with np.errstate(divide="ignore", invalid="ignore"):
            arg = np.where(m > 0, 3.0 * qq / np.where(m > 0, pp * m, 1.0), 0.0)
        phi = np.arccos(np.clip(arg, -1.0, 1.0))
        ys = np.stack(
            [m * np.cos(phi / 3.0 - 2.0 * math.pi * j / 3.0) for j in range(3)]
        )
        ys = np.sort(ys, axis=0)
        for j in range(3):
            lam[j, three_real] = _newton_polish(
                params, k2[three_real], ys[j] - shift
            )

    # k = 0 has the exact confluent solution {-1/tau, 0, 0}
    at_zero = k == 0.0
    if np.any(at_zero):
        lam[0, at_zero] = -1.0 / tau
        lam[1, at_zero] = 0.0
        lam[2, at_zero] = 0.0
    return lam


def roots_exact(params: ModelParams, k: float) -> GeneralRoots:
    """Roots at a single frequency; see roots_exact_batch for conventions."""
    lam = roots_exact_batch(params, float(k))[:, 0]
    return GeneralRoots(values=(complex(lam[0]), complex(lam[1]), complex(lam[2])))


def roots_small_batch(params: ModelParams, k) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(lambda1, mu_R, mu_I) arrays for frequencies in the pair-structure zone.

    Valid wherever the cubic has one real root and a conjugate pair, which
    covers both the small-frequency and the exterior zone; k = 0 returns the
    confluent values (-1/tau, 0, 0).
    """
    lam = roots_exact_batch(params, k)
    return lam[0].real.copy(), lam[1].real.copy(), np.abs(lam[1].imag)


def root_triple(params: ModelParams, k: float) -> RootTriple:
    eps0 = _safe_eps0(params)
    lam1, mu_r, mu_i = roots_small_batch(params, float(k))
    return RootTriple(
        lambda1=float(lam1[0]),
        mu_r=float(mu_r[0]),
        mu_i=float(mu_i[0]),
        in_small_zone=bool(k <= eps0),
    )


def _safe_eps0(params: ModelParams, override: float | None = None) -> float:
    if override is not None:
        return override
    return epsilon0(params)


def roots_series(
    params: ModelParams, k, order: int = 4, eps0: float | None = None
) -> RootTriple | tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Small-frequency expansion of the root triple, truncated at k**order.

    lambda1 = -1/tau + delta k^2 [+ tau delta (delta - tau) k^4]
    mu_R    = -delta/2 k^2 [- tau delta (delta - tau)/2 k^4]
    mu_I    = k [+ delta (4 tau - delta)/8 k^3]

    order selects which bracketed terms are kept (2, 3 or 4).  Raises
    OutOfZone beyond the small-frequency threshold.
    """
    if order not in (2, 3, 4):
        raise ValueError(f"order must be 2, 3 or 4, got {order}")
    limit = _safe_eps0(params, eps0)
    karr = np.asarray(k, dtype=float)
    if np.any(karr > limit):
        raise OutOfZone(f"k exceeds the small-frequency threshold {limit:.3g}")
    tau, delta = params.tau, params.delta
    k2 = karr * karr
    lam1 = -1.0 / tau + delta * k2
    mu_r = -0.5 * delta * k2
    mu_i = karr.copy()
    if order >= 3:
        mu_i = mu_i + delta * (4.0 * tau - delta) / 8.0 * k2 * karr
    if order >= 4:
        c4 = tau * delta * (delta - tau)
        lam1 = lam1 + c4 * k2 * k2
        mu_r = mu_r - 0.5 * c4 * k2 * k2
    if karr.ndim == 0:
        return RootTriple(float(lam1), float(mu_r), float(mu_i))
    return lam1, mu_r, mu_i


def roots_exact_mp(params: ModelParams, k: float, dps: int = 50):
    """Root triple computed in arbitrary precision (mpmath).

    Returns (lambda1, mu_R, mu_I) as floats of mpmath type.  Intended as the
    oracle for expansion-order measurements, where double precision cannot
    resolve the O(k^6) remainders.
    """
    with mpmath.workdps(dps):
        tau = mpmath.mpf(repr(params.tau))
        delta = mpmath.mpf(repr(params.delta))
        kk = mpmath.mpf(repr(float(k)))
        if kk == 0:
            return -1 / tau, mpmath.mpf(0), mpmath.mpf(0)
        coeffs = [tau, mpmath.mpf(1), (delta + tau) * kk**2, kk**2]
        roots = mpmath.polyroots(coeffs, maxsteps=200, extraprec=80)
        real_roots = [r for r in roots if abs(mpmath.im(r)) < mpmath.mpf(10) ** (-dps + 8)]
        # pick the real root closest to -1/tau; the remaining two are the pair
        lam1 = min(real_roots, key=lambda r: abs(r + 1 / tau))
        pair = [r for r in roots if r is not lam1]
        mu_r = (mpmath.re(pair[0]) + mpmath.re(pair[1])) / 2
        mu_i = abs(mpmath.im(pair[0]))
        return mpmath.re(lam1), mu_r, mu_i


def spectral_abscissa(params: ModelParams, k) -> np.ndarray:
    """max_j Re(lambda_j(k)): the per-mode decay rate (negative for delta>0)."""
    lam = roots_exact_batch(params, k)
    return np.max(lam.real, axis=0)


# ----------------------------------------------------------------------------
# kernel evaluation over a fixed frequency array
# ----------------------------------------------------------------------------


def _pair_multiplier_step(mr, mi2, re, im_over_mui):
    """Multiply (re + i*mu_I*im_over_mui) by (mu_R + i*mu_I) keeping the
    imaginary part factored as mu_I * (...)."""
    return mr * re - mi2 * im_over_mui, re + mr * im_over_mui


class ModeKernels:
    """Evaluator for K0/K1/K2 time derivatives over a frozen frequency array.

    Splits the nodes by root structure: pair nodes (one real root plus a
    conjugate pair; includes k=0 and both asymptotic zones) are evaluated with
    cancellation-free real formulas, three-real-root nodes use the Lagrange
    form, and nodes whose minimum root gap is below GAP_RTOL relative fall
    back to direct ODE integration.
    """

    def __init__(self, params: ModelParams, k, gap_rtol: float = GAP_RTOL):
        self.params = params
        self.k = np.atleast_1d(np.asarray(k, dtype=float))
        lam = roots_exact_batch(params, self.k)
        self.lam = lam

        is_pair = np.abs(lam[1].imag) > 0.0
        at_zero = self.k == 0.0
        is_pair |= at_zero  # confluent limit handled by the pair formulas

        gaps = np.stack(
            [
                np.abs(lam[0] - lam[1]),
                np.abs(lam[0] - lam[2]),
                np.abs(lam[1] - lam[2]),
            ]
        )
        scale = np.maximum(1.0, np.abs(lam).max(axis=0))
        # Pair nodes only degenerate when the real root collides with the pair
        # (the pair's own gap 2*mu_I -> 0 is handled exactly via sinc forms).
        relevant_gap = np.where(is_pair, gaps[0], gaps.min(axis=0))
        degenerate = (relevant_gap < gap_rtol * scale) & ~at_zero

        self.pair_idx = np.nonzero(is_pair & ~degenerate)[0]
        self.real3_idx = np.nonzero(~is_pair & ~degenerate)[0]
        self.ode_idx = np.nonzero(degenerate)[0]

        # pair-node quantities
        p = self.pair_idx
        self.lam1 = lam[0, p].real
        self.mu_r = lam[1, p].real
        self.mu_i = np.abs(lam[1, p].imag)
        self.mu_i2 = self.mu_i**2
        self.denom = (self.lam1 - self.mu_r) ** 2 + self.mu_i2
        self.a_gap = self.mu_r - self.lam1

        # three-real-root Lagrange data
        r = self.real3_idx
        lr = lam[:, r].real
        self.lr = lr
        with np.errstate(divide="ignore", invalid="ignore"):
            self.lagr_den = np.stack(
                [
                    (lr[0] - lr[1]) * (lr[0] - lr[2]),
                    (lr[1] - lr[0]) * (lr[1] - lr[2]),
                    (lr[2] - lr[0]) * (lr[2] - lr[1]),
                ]
            )

    # numerators (M real root, M_R pair, M_I/mu_I pair) per kernel
    def _pair_base(self, kernel: str):
        if kernel == "K0":
            return self.mu_r**2 + self.mu_i2, self.lam1 * self.mu_r, -self.lam1
        if kernel == "K1":
            return (
                -2.0 * self.mu_r,
                -(self.lam1 + self.mu_r),
                np.ones_like(self.mu_r),
            )
        return (
            np.ones_like(self.mu_r),
            np.ones_like(self.mu_r),
            np.zeros_like(self.mu_r),
        )

    def _real3_numer(self, kernel: str):
        lr = self.lr
        if kernel == "K0":
            return np.stack([lr[1] * lr[2], lr[0] * lr[2], lr[0] * lr[1]])
        if kernel == "K1":
            return -np.stack([lr[1] + lr[2], lr[0] + lr[2], lr[0] + lr[1]])
        return np.ones_like(lr)

    def khat(self, kernel: str, ell: int, t: float) -> np.ndarray:
        """d^ell/dt^ell of the kernel at time t, for every node (real array)."""
        if kernel not in K_KERNELS:
            raise ValueError(f"not a solution kernel: {kernel!r}")
        if not (0 <= ell <= 3):
            raise ValueError(f"time derivative must be 0..3, got {ell}")
        out = np.empty_like(self.k)

        if self.pair_idx.size:
            m_real, m_re, m_im = self._pair_base(kernel)
            m_real = m_real * self.lam1**ell
            for _ in range(ell):
                m_re, m_im = _pair_multiplier_step(self.mu_r, self.mu_i2, m_re, m_im)
            phase = self.mu_i * t
            cos_p = np.cos(phase)
            sin_over = t * np.sinc(phase / math.pi)  # sin(mu_I t)/mu_I
            exp_r = np.exp(self.mu_r * t)
            exp_1 = np.exp(self.lam1 * t)
            pair_term = exp_r * (
                -(m_re * cos_p - self.mu_i2 * m_im * sin_over)
                + self.a_gap * (m_re * sin_over + m_im * cos_p)
            )
            out[self.pair_idx] = (exp_1 * m_real + pair_term) / self.denom

        if self.real3_idx.size:
            numer = self._real3_numer(kernel) * self.lr**ell
            vals = np.sum(numer * np.exp(self.lr * t) / self.lagr_den, axis=0)
            out[self.real3_idx] = vals

        for i in self.ode_idx:
            out[i] = self._ode_value(kernel, ell, t, self.k[i])
        return out

    def _ode_value(self, kernel: str, ell: int, t: float, k: float) -> float:
        tau, delta = self.params.tau, self.params.delta
        k2 = k * k

        def rhs(_t, y):
            return [y[1], y[2], -(y[2] + (delta + tau) * k2 * y[1] + k2 * y[0]) / tau]

        y0 = {"K0": [1.0, 0.0, 0.0], "K1": [0.0, 1.0, 0.0], "K2": [0.0, 0.0, 1.0]}[
            kernel
        ]
        if t == 0.0:
            y = y0
        else:
            sol = solve_ivp(
                rhs, (0.0, t), y0, method="DOP853", rtol=1e-11, atol=1e-13
            )
            y = sol.y[:, -1]
        if ell < 3:
            return float(y[ell])
        return float(-(y[2] + (delta + tau) * k2 * y[1] + k2 * y[0]) / tau)

    def exp_factors(self, h: float) -> np.ndarray:
        """exp(lambda_j h) for the three roots at every node, shape (3, n)."""
        return np.exp(self.lam * h)

    def k2_coefficients(self) -> np.ndarray:
        """Partial-fraction coefficients c_j with K2hat = sum_j c_j exp(lambda_j t).

        Only meaningful away from degenerate nodes; the Duhamel integrator
        uses them, and degenerate nodes are vanishingly rare on generic grids
        (callers may check `ode_idx`).
        """
        lam = self.lam
        den = np.stack(
            [
                (lam[0] - lam[1]) * (lam[0] - lam[2]),
                (lam[1] - lam[0]) * (lam[1] - lam[2]),
                (lam[2] - lam[0]) * (lam[2] - lam[1]),
            ]
        )
        with np.errstate(divide="ignore", invalid="ignore"):
            return 1.0 / den


def khat(query: MultiplierQuery, params: ModelParams) -> complex:
    """Single-point kernel value; see ModeKernels for array evaluation."""
    if query.kernel_id not in K_KERNELS:
        raise ValueError("khat expects one of K0/K1/K2")
    ev = ModeKernels(params, np.array([query.k]))
    return complex(ev.khat(query.kernel_id, query.time_derivative, query.t)[0])


def jhat_arrays(kernel: str, t: float, k: np.ndarray, delta: float) -> np.ndarray:
    """Diffusion-wave multipliers J0 = sin(kt)/k * heat, J1 = cos(kt) * heat."""
    k = np.asarray(k, dtype=float)
    heat = np.exp(-0.5 * delta * k * k * t)
    if kernel == "J0":
        return t * np.sinc(k * t / math.pi) * heat
    if kernel == "J1":
        return np.cos(k * t) * heat
    raise ValueError(f"not a diffusion-wave kernel: {kernel!r}")


def nhat_arrays(
    kernel: str, t: float, k: np.ndarray, params: ModelParams
) -> np.ndarray:
    """Correction multipliers N0..N3 entering the second-order profiles."""
    k = np.asarray(k, dtype=float)
    tau, delta = params.tau, params.delta
    k2 = k * k
    slope = (4.0 * tau - delta) / 8.0
    if kernel == "N0":
        return -t * delta * slope * k2 * jhat_arrays("J1", t, k, delta)
    if kernel == "N1":
        return -delta * (slope * k2 * t + 0.5) * k2 * jhat_arrays("J0", t, k, delta)
    if kernel == "N2":
        return -delta * (slope * k2 * t + 1.0) * k2 * jhat_arrays("J1", t, k, delta)
    if kernel == "N3":
        return delta * (slope * k2 * t + 1.5) * k2 * k2 * jhat_arrays("J0", t, k, delta)
    raise ValueError(f"not a correction kernel: {kernel!r}")


def jhat(query: MultiplierQuery, delta: float) -> float:
    if query.kernel_id not in J_KERNELS:
        raise ValueError("jhat expects J0 or J1")
    return float(jhat_arrays(query.kernel_id, query.t, np.array([query.k]), delta)[0])


def nhat(query: MultiplierQuery, params: ModelParams) -> float:
    if query.kernel_id not in N_KERNELS:
        raise ValueError("nhat expects one of N0..N3")
    return float(
        nhat_arrays(query.kernel_id, query.t, np.array([query.k]), params)[0]
    )
