"""Discretization backends: radial frequency quadrature and periodic grids.

The radial backend carries a complex-valued function of the frequency
magnitude on composite Gauss-Legendre panels.  Panels are geometric near
k = 0 and are split further so that no panel spans more than ~pi/2 of the
phase k*t of the oscillatory factors at the largest time of interest; the
upper end is cut where the per-mode decay exp(max Re lambda(k) * t) makes
contributions negligible.  With presets whose transforms are known in closed
form this measures norms out to t ~ 1e6 with no spatial-domain truncation.

The grid backend is a uniform periodic box [-L, L)^n with FFT transforms,
used by the nonlinear solver (n = 1, 2 at full scale, n = 3 for smoke runs).

Norm convention: ||f||_{Hdot^s}^2 = (2 pi)^(-n) Int |xi|^(2s) |fhat|^2 dxi.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .core import ModelParams, epsilon0
from .errors import BackendMismatch, DegenerateThreshold
from .spectral import spectral_abscissa

__all__ = [
    "RadialSpectralField",
    "GridField",
    "StateSnapshot",
    "build_radial_grid",
    "sphere_area",
    "hs_norm",
    "l1_freq_norm",
    "to_frequency",
    "to_physical",
    "zone_masks",
    "radial_to_physical_1d",
]

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(32)


def sphere_area(n: int) -> float:
    """Surface measure of the unit sphere S^(n-1): 2, 2*pi, 4*pi."""
    return {1: 2.0, 2: 2.0 * math.pi, 3: 4.0 * math.pi}[n]


@dataclass(frozen=True)
class RadialSpectralField:
    """Complex function of the radial frequency sampled on quadrature nodes."""

    nodes: np.ndarray
    weights: np.ndarray
    values: np.ndarray
    dim: int

    def __post_init__(self):
        if self.nodes.shape != self.weights.shape or self.nodes.shape != self.values.shape:
            raise ValueError("nodes, weights and values must share a shape")
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3, got {self.dim}")

    def with_values(self, values: np.ndarray) -> "RadialSpectralField":
        return replace(self, values=np.asarray(values))

    def radial_integral(self, integrand: np.ndarray) -> float:
        """Plain quadrature Int_0^Kmax integrand(k) dk."""
        return float(np.sum(self.weights * integrand))

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("k,weight,re,im\n")
            for k, w, v in zip(self.nodes, self.weights, self.values):
                fh.write(f"{k:.17g},{w:.17g},{v.real:.17g},{v.imag:.17g}\n")


def _split_panels(edges: np.ndarray, t: float, osc_per_panel: float) -> np.ndarray:
    """Subdivide panels so each spans at most osc_per_panel of phase k*t."""
    if t <= 0.0:
        return edges
    out = [edges[0]]
    for a, b in zip(edges[:-1], edges[1:]):
        m = max(1, int(math.ceil((b - a) * t / osc_per_panel)))
        out.extend(np.linspace(a, b, m + 1)[1:])
    return np.asarray(out)


def envelope_cut(params: ModelParams, t: float, drop: float = 45.0) -> float:
    """Largest frequency whose mode still matters at time t.

    Finds where max Re lambda(k) * t <= -drop for all larger k (the per-mode
    amplitude is below e^-drop there), with a 1.5x safety factor.  Returns
    inf when no such frequency exists (small t).
    """
    if t <= 0.0:
        return math.inf
    probe = np.geomspace(1e-6, 1e4, 400)
    absc = spectral_abscissa(params, probe)
    alive = absc * t > -drop
    if not np.any(~alive):
        return math.inf
    # last index where the mode is still alive
    idx = np.nonzero(alive)[0]
    if idx.size == 0:
        return 1.5 * probe[0]
    return 1.5 * probe[min(idx[-1] + 1, probe.size - 1)]


def build_radial_grid(
    params: ModelParams,
    t: float,
    dim: int | None = None,
    k_max: float = 50.0,
    k_min: float = 1e-6,
    panels_per_decade: int = 12,
    osc_per_panel: float = 0.5 * math.pi,
    nodes_per_panel: int = 32,
) -> RadialSpectralField:
    """Composite Gauss-Legendre grid on [0, K] adapted to oscillation at time t.

    Panels: one leading panel [0, k_min], then geometric with
    panels_per_decade up to K = min(k_max, envelope cut at t), every panel
    split so that (width * t) <= osc_per_panel.
    """
    n = dim if dim is not None else params.dim
    if nodes_per_panel == 32:
        gl_nodes, gl_weights = _GL_NODES, _GL_WEIGHTS
    else:
        gl_nodes, gl_weights = np.polynomial.legendre.leggauss(nodes_per_panel)
    k_top = min(k_max, envelope_cut(params, t))
    k_top = max(k_top, 10.0 * k_min)
    decades = math.log10(k_top / k_min)
    n_geo = max(1, int(math.ceil(decades * panels_per_decade)))
    edges = np.concatenate(([0.0], np.geomspace(k_min, k_top, n_geo + 1)))
    edges = _split_panels(edges, t, osc_per_panel)

    half_w = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    nodes = (mid[:, None] + half_w[:, None] * gl_nodes[None, :]).ravel()
    weights = (half_w[:, None] * gl_weights[None, :]).ravel()
    values = np.zeros_like(nodes, dtype=complex)
    return RadialSpectralField(nodes=nodes, weights=weights, values=values, dim=n)


def hs_norm(field, s: float = 0.0) -> float:
    """Homogeneous Sobolev norm ||f||_{Hdot^s}; s = 0 gives the L2 norm."""
    if isinstance(field, RadialSpectralField):
        k = field.nodes
        integrand = k ** (2.0 * s + field.dim - 1) * np.abs(field.values) ** 2
        val = sphere_area(field.dim) * np.sum(field.weights * integrand)
        return math.sqrt(max(val, 0.0) / (2.0 * math.pi) ** field.dim)
    if isinstance(field, GridField):
        return field.hs_norm(s)
    raise TypeError(f"unsupported field type {type(field)!r}")


def l1_freq_norm(field: RadialSpectralField) -> float:
    """(2 pi)^-n Int |fhat| dxi: the Hausdorff-Young bound on ||f||_Linf."""
    k = field.nodes
    integrand = k ** (field.dim - 1) * np.abs(field.values)
    val = sphere_area(field.dim) * np.sum(field.weights * integrand)
    return float(val / (2.0 * math.pi) ** field.dim)


def radial_to_physical_1d(field: RadialSpectralField, x: np.ndarray) -> np.ndarray:
    """Reconstruct a real field on sample points (dim 1 only).

    f(x) = (1/pi) Re Int_0^inf fhat(k) e^{ikx} dk, valid for real f.
    """
    if field.dim != 1:
        raise BackendMismatch("physical reconstruction implemented for dim 1")
    phases = np.exp(1j * np.outer(x, field.nodes))
    return (phases @ (field.weights * field.values)).real / math.pi


def zone_masks(
    params: ModelParams,
    field: RadialSpectralField,
    eps0: float | None = None,
    n0: float | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Smooth partition of unity (chi_int, chi_bdd, chi_ext) at the nodes.

    chi_int is 1 below eps0/10 and 0 above eps0; chi_ext is 0 below N0 and 1
    above 10*N0; both roll off C-infinity smoothly over one decade, and
    chi_bdd = 1 - chi_int - chi_ext.
    """
    if eps0 is None:
        try:
            eps0 = epsilon0(params)
        except DegenerateThreshold:
            eps0 = 0.01
    if n0 is None:
        n0 = 10.0 * max(1.0, 1.0 / (params.delta + params.tau))
    k = field.nodes

    def smooth_step(u):
        # 0 for u <= 0, 1 for u >= 1, C-infinity in between
        u = np.clip(u, 0.0, 1.0)
        with np.errstate(divide="ignore", over="ignore"):
            fa = np.where(u > 0.0, np.exp(-1.0 / np.maximum(u, 1e-300)), 0.0)
            fb = np.where(u < 1.0, np.exp(-1.0 / np.maximum(1.0 - u, 1e-300)), 0.0)
        return fa / (fa + fb)

    with np.errstate(divide="ignore"):
        logk = np.log10(np.where(k > 0, k, 1e-300))
    chi_int = 1.0 - smooth_step(logk - math.log10(eps0) + 1.0)
    chi_ext = smooth_step(logk - math.log10(n0))
    chi_bdd = 1.0 - chi_int - chi_ext
    return chi_int, chi_bdd, chi_ext


# ----------------------------------------------------------------------------
# periodic grid backend
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class GridField:
    """Real or complex field on a uniform periodic box [-L, L)^n.

    In frequency space the values are the continuum-convention transform
    sampled at the discrete dual frequencies: fhat(k) = dx^n * DFT(f).
    """

    dim: int
    n_points: int
    half_length: float
    values: np.ndarray
    space: str  # "physical" | "frequency"

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3, got {self.dim}")
        if self.n_points & (self.n_points - 1):
            raise ValueError(f"points per axis must be a power of 2, got {self.n_points}")
        if self.space not in ("physical", "frequency"):
            raise ValueError(f"space must be physical or frequency, got {self.space}")
        if self.values.shape != (self.n_points,) * self.dim:
            raise ValueError("values shape does not match (N,)*dim")

    @property
    def dx(self) -> float:
        return 2.0 * self.half_length / self.n_points

    def axis_points(self) -> np.ndarray:
        return -self.half_length + self.dx * np.arange(self.n_points)

    def axis_freqs(self) -> np.ndarray:
        return 2.0 * math.pi * np.fft.fftfreq(self.n_points, d=self.dx)

    def freq_magnitude(self) -> np.ndarray:
        ax = self.axis_freqs()
        if self.dim == 1:
            return np.abs(ax)
        grids = np.meshgrid(*([ax] * self.dim), indexing="ij")
        return np.sqrt(sum(g * g for g in grids))

    def hs_norm(self, s: float = 0.0) -> float:
        if self.space != "frequency":
            raise BackendMismatch("hs_norm needs a frequency-space field")
        kmag = self.freq_magnitude()
        dk = math.pi / self.half_length
        w = kmag ** (2.0 * s) if s != 0.0 else 1.0
        total = np.sum(w * np.abs(self.values) ** 2)
        return math.sqrt(total * (dk / (2.0 * math.pi)) ** self.dim)


def _box_phase(field: GridField) -> np.ndarray:
    """exp(i k L) per mode: aligns the DFT with the continuum transform of a
    field whose first sample sits at x = -L."""
    ax = np.exp(1j * field.axis_freqs() * field.half_length)
    phase = ax
    for _ in range(field.dim - 1):
        phase = np.multiply.outer(phase, ax)
    return phase


def to_frequency(field: GridField) -> GridField:
    if field.space == "frequency":
        return field
    vals = np.fft.fftn(field.values) * field.dx**field.dim * _box_phase(field)
    return replace(field, values=vals, space="frequency")


def to_physical(field: GridField) -> GridField:
    if field.space == "physical":
        return field
    vals = np.fft.ifftn(field.values / _box_phase(field)) / field.dx**field.dim
    if np.max(np.abs(vals.imag)) <= 1e-10 * max(np.max(np.abs(vals.real)), 1e-300):
        vals = vals.real
    return replace(field, values=vals, space="physical")


@dataclass(frozen=True)
class StateSnapshot:
    """(psi, psi_t, psi_tt) at one time, all on the same backend and space."""

    t: float
    psi: object
    psi_t: object
    psi_tt: object

    def __post_init__(self):
        kinds = {type(f) for f in (self.psi, self.psi_t, self.psi_tt)}
        if len(kinds) != 1:
            raise ValueError("snapshot fields must share a backend")
