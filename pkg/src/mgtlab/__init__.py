"""Spectral verification lab for the Moore-Gibson-Thompson equation.

Exact per-frequency solutions of the linear Cauchy problem, diffusion-wave
asymptotic profiles with decay-rate and optimality checks, a Duhamel/Picard
solver for the semilinear (Jordan-)MGT equation, and the vanishing
thermal-relaxation limit against the linearized Kuznetsov equation.
"""

from .core import (
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

__version__ = "0.1.0"

__all__ = [
    "ModelParams",
    "Regime",
    "DataPreset",
    "PresetKind",
    "RateFunction",
    "classify_regime",
    "epsilon0",
    "rate_eval",
    "moments",
    "data_hat",
    "__version__",
]
