"""Model parameters, regimes, reference rate functions, and initial-data presets.

Everything here is shared by the spectral, linear, and nonlinear parts of the
lab: the physical constants of the third-order model

    tau * psi_ttt + psi_tt - Lap psi - (delta + tau) * Lap psi_t = (nonlinearity),

the viscous/inviscid/chaotic classification by the sign of delta, the
time-dependent comparison rates used in every decay fit, and a small family of
initial-data presets whose Fourier transforms and moments are known in closed
form (so that linear experiments run entirely in frequency space).

Fourier convention: fhat(xi) = int f(x) exp(-i x.xi) dx, so fhat(0) equals the
mass integral exactly and Parseval carries the (2*pi)**(-n) factor.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateThreshold

__all__ = [
    "ModelParams",
    "Regime",
    "DataPreset",
    "RateFunction",
    "classify_regime",
    "epsilon0",
    "rate_eval",
    "moments",
    "data_hat",
]


@dataclass(frozen=True)
class ModelParams:
    """Physical constants of the model; the sound speed is fixed to 1.

    tau          thermal relaxation (> 0)
    delta        diffusivity of sound; its sign selects the regime
    nonlin_ratio B/(2A), only meaningful for nonlinear runs
    dim          spatial dimension, 1, 2 or 3
    """

    tau: float
    delta: float
    dim: int = 1
    nonlin_ratio: float = 0.0

    def __post_init__(self) -> None:
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3, got {self.dim}")
        if self.nonlin_ratio < 0:
            raise ValueError(f"nonlin_ratio must be >= 0, got {self.nonlin_ratio}")


class Regime(enum.Enum):
    VISCOUS = "viscous"
    INVISCID = "inviscid"
    CHAOTIC = "chaotic"


def classify_regime(params: ModelParams) -> Regime:
    """Regime by the sign of the diffusivity of sound."""
    if params.delta > 0:
        return Regime.VISCOUS
    if params.delta == 0:
        return Regime.INVISCID
    return Regime.CHAOTIC


def epsilon0(params: ModelParams) -> float:
    """Suggested small-frequency threshold, capped at 1.

    Uses 1 / ((delta+tau)*(delta+19*tau) - 27*tau**2), which keeps the cubic's
    discriminant below -2*k**2 on (0, epsilon0].  Raises DegenerateThreshold
    when the denominator is non-positive (small delta/tau ratio); callers may
    then supply a threshold manually.
    """
    tau, delta = params.tau, params.delta
    denom = (delta + tau) * (delta + 19.0 * tau) - 27.0 * tau**2
    if denom <= 0:
        raise DegenerateThreshold(
            f"(delta+tau)(delta+19 tau) - 27 tau^2 = {denom:.6g} <= 0 "
            f"for tau={tau}, delta={delta}; supply epsilon0 manually"
        )
    return min(1.0, 1.0 / denom)


@dataclass(frozen=True)
class RateFunction:
    """Reference time-dependent rate: one of the D_n / D_{n,s} / tildeD_{n,s} families.

    family "D_n"      : sqrt growth (n=1), sqrt-log (n=2), algebraic decay (n>=3)
    family "D_{n,s}"  : equals D_n at s=0, (1+t)**(-(s-1)/2 - n/4) for s >= 1
    family "tildeD"   : the nonlinear-bookkeeping variant with the n=2 log factor
    """

    family: str
    n: int
    s: float = 0.0

    _FAMILIES = ("D_n", "D_{n,s}", "tildeD")

    def __post_init__(self) -> None:
        if self.family not in self._FAMILIES:
            raise ValueError(f"unknown rate family {self.family!r}")
        if self.n not in (1, 2, 3):
            raise ValueError(f"n must be 1, 2 or 3, got {self.n}")
        if self.family == "D_{n,s}" and not (self.s == 0.0 or self.s >= 1.0):
            raise ValueError(f"D_(n,s) is defined for s = 0 or s >= 1, got s={self.s}")
        if self.s < 0:
            raise ValueError(f"order s must be >= 0, got {self.s}")


def _d_n(n: int, t):
    if n == 1:
        return np.sqrt(1.0 + t)
    if n == 2:
        return np.sqrt(np.log(math.e + t))
    return (1.0 + t) ** (0.5 - n / 4.0)


def rate_eval(rate: RateFunction, t):
    """Evaluate a rate function at t >= 0 (scalar or array)."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("rate functions are defined for t >= 0")
    n, s = rate.n, rate.s
    if rate.family == "D_n":
        out = _d_n(n, t)
    elif rate.family == "D_{n,s}":
        out = _d_n(n, t) if s == 0.0 else (1.0 + t) ** (-(s - 1.0) / 2.0 - n / 4.0)
    else:  # tildeD
        if n == 1:
            out = (1.0 + t) ** (-s / 2.0 + 0.25)
        elif n == 2:
            out = (1.0 + t) ** (-s / 2.0 - 0.5) * np.log(math.e + t)
        else:
            out = (1.0 + t) ** (-s / 2.0 - n / 4.0)
    return out if out.ndim else float(out)


class PresetKind(enum.Enum):
    GAUSSIAN = "gaussian"
    SHIFTED_GAUSSIAN = "shifted_gaussian"
    DERIVATIVE_GAUSSIAN = "derivative_gaussian"
    ZERO_MEAN = "zero_mean"


@dataclass(frozen=True)
class DataPreset:
    """Initial-data building block with closed-form transform and moments.

    gaussian            A * exp(-|x - x0|^2 / sigma^2)
    shifted_gaussian    same, with x0 != 0 (kept as a distinct kind so scenario
                        files are explicit about breaking radial symmetry)
    derivative_gaussian A * d/dx_1 exp(-|x - x0|^2 / sigma^2)  (zero mean)
    zero_mean           A * (exp(-|x|^2/sigma^2) - 2**(-n) exp(-|x|^2/(2 sigma)^2)),
                        mass cancels exactly by construction

    slot marks which datum (psi_0, psi_1 or psi_2) the preset feeds.
    """

    kind: PresetKind
    amplitude: float = 1.0
    width: float = 1.0
    center: tuple[float, ...] = ()
    slot: int = 0

    def __post_init__(self) -> None:
        if not self.width > 0:
            raise ValueError(f"width must be positive, got {self.width}")
        if self.slot not in (0, 1, 2):
            raise ValueError(f"slot must be 0, 1 or 2, got {self.slot}")

    def center_vec(self, dim: int) -> np.ndarray:
        x0 = np.zeros(dim)
        if self.center:
            if len(self.center) != dim:
                raise ValueError(
                    f"preset center has {len(self.center)} components, dim is {dim}"
                )
            x0[:] = self.center
        if self.kind is PresetKind.GAUSSIAN and np.any(x0 != 0.0):
            raise ValueError("gaussian preset is centered; use shifted_gaussian")
        return x0


def moments(data: DataPreset, dim: int) -> tuple[float, np.ndarray]:
    """Exact mass M = int f dx and first moment P = int x f dx of a preset."""
    a, sig = data.amplitude, data.width
    x0 = data.center_vec(dim)
    gauss_mass = a * (sig * math.sqrt(math.pi)) ** dim
    if data.kind in (PresetKind.GAUSSIAN, PresetKind.SHIFTED_GAUSSIAN):
        return gauss_mass, x0 * gauss_mass
    if data.kind is PresetKind.DERIVATIVE_GAUSSIAN:
        # int x_j d/dx_1 g dx = -delta_{j1} int g dx
        p = np.zeros(dim)
        p[0] = -gauss_mass
        return 0.0, p
    # zero_mean: both component masses cancel; both are centered
    return 0.0, np.zeros(dim)


def data_hat(data: DataPreset, k, dim: int):
    """Closed-form Fourier transform of a preset at frequency k.

    k may be a scalar or array; for dim > 1 it is interpreted as a radial
    magnitude unless it has a trailing axis of length dim (full wave vector).
    Radial evaluation of non-radial presets (shifted or derivative kinds in
    dim > 1) is rejected.
    """
    k = np.asarray(k, dtype=float)
    vector_input = k.ndim > 0 and k.shape[-1] == dim and dim > 1
    a, sig = data.amplitude, data.width
    x0 = data.center_vec(dim)

    if vector_input:
        k2 = np.sum(k * k, axis=-1)
        k_dot_x0 = k @ x0
        k1 = k[..., 0]
    else:
        k2 = k * k
        k_dot_x0 = k * x0[0] if dim == 1 else np.zeros_like(k)
        k1 = k

    gauss = a * (sig * math.sqrt(math.pi)) ** dim * np.exp(-(sig**2) * k2 / 4.0)
    if data.kind is PresetKind.GAUSSIAN:
        return gauss + 0j
    if data.kind is PresetKind.SHIFTED_GAUSSIAN:
        if dim > 1 and not vector_input and np.any(x0 != 0.0):
            raise ValueError("shifted preset in dim > 1 needs full wave vectors")
        return gauss * np.exp(-1j * k_dot_x0)
    if data.kind is PresetKind.DERIVATIVE_GAUSSIAN:
        if dim > 1 and not vector_input:
            raise ValueError("derivative preset in dim > 1 needs full wave vectors")
        return 1j * k1 * gauss * np.exp(-1j * k_dot_x0)
    # zero_mean: second bump at twice the width, mass-matched
    wide = 2.0 * sig
    return (
        a
        * (sig * math.sqrt(math.pi)) ** dim
        * (np.exp(-(sig**2) * k2 / 4.0) - np.exp(-(wide**2) * k2 / 4.0))
        + 0j
    )
