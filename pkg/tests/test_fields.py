import math

import numpy as np
import pytest
from scipy.integrate import quad

from mgtlab.core import DataPreset, ModelParams, PresetKind, data_hat
from mgtlab.errors import BackendMismatch
from mgtlab.fields import (
    GridField,
    build_radial_grid,
    hs_norm,
    l1_freq_norm,
    radial_to_physical_1d,
    to_frequency,
    to_physical,
    zone_masks,
)

P = ModelParams(tau=1.0, delta=1.0, dim=1)
GAUSS = DataPreset(PresetKind.GAUSSIAN, 1.0, 1.0)


def _gauss_field(dim, t=0.0):
    grid = build_radial_grid(ModelParams(tau=1.0, delta=1.0, dim=dim), t, dim)
    return grid.with_values(data_hat(GAUSS, grid.nodes, dim))


def test_l2_norm_closed_form():
    f = _gauss_field(1)
    assert hs_norm(f, 0.0) == pytest.approx((math.pi / 2.0) ** 0.25, rel=1e-12)


def test_zero_field_norm():
    f = _gauss_field(1)
    assert hs_norm(f.with_values(np.zeros_like(f.values)), 1.0) == 0.0


def test_h1_norm_against_adaptive_quadrature():
    f = _gauss_field(3)
    got = hs_norm(f, 1.0)
    integrand = lambda k: k**4 * (math.pi**1.5 * math.exp(-k * k / 4.0)) ** 2
    ref = math.sqrt(4.0 * math.pi * quad(integrand, 0, 60, limit=400)[0] / (2 * math.pi) ** 3)
    assert got == pytest.approx(ref, rel=1e-9)


def test_norm_homogeneity():
    f = _gauss_field(2)
    for s in (0.0, 1.0, 2.5):
        assert hs_norm(f.with_values(3.7 * f.values), s) == pytest.approx(
            3.7 * hs_norm(f, s), rel=1e-12
        )


def test_low_frequency_support_monotonicity():
    f = _gauss_field(1)
    vals = np.where(f.nodes <= 1.0, f.values, 0.0)
    g = f.with_values(vals)
    assert hs_norm(g, 2.0) <= hs_norm(g, 1.0) <= hs_norm(g, 0.5)


def test_tail_negligible_under_kmax_doubling():
    base = build_radial_grid(P, 0.0, 1, k_max=50.0)
    wide = build_radial_grid(P, 0.0, 1, k_max=100.0)
    n1 = hs_norm(base.with_values(data_hat(GAUSS, base.nodes, 1)), 0.0)
    n2 = hs_norm(wide.with_values(data_hat(GAUSS, wide.nodes, 1)), 0.0)
    assert abs(n1 - n2) <= 1e-12 * n1


def test_panel_refinement_convergence_order():
    """2-node panels integrate a Gaussian with observed order >= 3.5."""
    exact = (math.pi / 2.0) ** 0.25
    errs = []
    densities = [4, 8, 16]
    for ppd in densities:
        grid = build_radial_grid(P, 0.0, 1, k_max=12.0, panels_per_decade=ppd, nodes_per_panel=2)
        val = hs_norm(grid.with_values(data_hat(GAUSS, grid.nodes, 1)), 0.0)
        errs.append(abs(val - exact) / exact)
    orders = [
        math.log(errs[i] / errs[i + 1]) / math.log(2.0) for i in range(len(errs) - 1)
    ]
    assert max(orders) >= 3.5


def test_oscillation_adaptive_quadrature_large_time():
    t = 1e4
    grid = build_radial_grid(P, t, 1)
    vals = np.sin(grid.nodes * t) / grid.nodes * np.exp(-grid.nodes**2 * t / 2.0) * data_hat(
        GAUSS, grid.nodes, 1
    )
    got = hs_norm(grid.with_values(vals), 0.0) ** 2
    integrand = lambda k: (math.sin(k * t) / k) ** 2 * math.exp(-k * k * t) * math.pi * math.exp(
        -k * k / 2.0
    )
    ref = quad(integrand, 0, 0.1, limit=3000)[0] / math.pi
    assert got == pytest.approx(ref, rel=1e-8)


def test_hs_norm_rejects_physical_space():
    x = np.linspace(-8, 8, 64, endpoint=False)
    gf = GridField(1, 64, 8.0, np.exp(-(x**2)), "physical")
    with pytest.raises(BackendMismatch):
        hs_norm(gf, 0.0)


def test_grid_roundtrip_and_parseval():
    rng = np.random.default_rng(3)
    vals = rng.normal(size=(128, 128))
    gf = GridField(2, 128, 6.0, vals, "physical")
    freq = to_frequency(gf)
    back = to_physical(freq)
    assert np.max(np.abs(back.values - vals)) <= 1e-12 * np.max(np.abs(vals))
    phys_l2 = math.sqrt(np.sum(vals**2) * gf.dx**2)
    assert freq.hs_norm(0.0) == pytest.approx(phys_l2, rel=1e-10)


def test_grid_single_mode():
    n, L = 64, 4.0
    x = -L + (2 * L / n) * np.arange(n)
    k1 = 2.0 * math.pi * 3 / (2 * L)
    gf = GridField(1, n, L, np.exp(1j * k1 * x), "physical")
    freq = to_frequency(gf)
    mags = np.abs(freq.values)
    assert np.sum(mags > 1e-9 * mags.max()) == 1


def test_grid_transform_matches_analytic():
    n, L = 512, 10.0
    x = -L + (2 * L / n) * np.arange(n)
    gf = GridField(1, n, L, np.exp(-(x**2)), "physical")
    freq = to_frequency(gf)
    ana = data_hat(GAUSS, np.abs(freq.axis_freqs()), 1)
    assert np.max(np.abs(freq.values - ana)) <= 1e-8


def test_zone_partition_of_unity():
    grid = build_radial_grid(P, 0.0, 1)
    ci, cb, ce = zone_masks(P, grid)
    assert np.max(np.abs(ci + cb + ce - 1.0)) <= 1e-14
    eps0 = 1.0 / 13.0
    i_deep = int(np.argmin(np.abs(grid.nodes - eps0 / 10.0)))
    assert ci[i_deep] == pytest.approx(1.0)
    n0 = 10.0 * max(1.0, 1.0 / (P.delta + P.tau))
    i_ext = int(np.argmin(np.abs(grid.nodes - min(10.0 * n0, grid.nodes.max()))))
    assert ce[i_ext] == pytest.approx(1.0)


def test_linf_surrogate_bounds_physical_max():
    f = _gauss_field(1)
    x = np.linspace(-10, 10, 2001)
    phys = radial_to_physical_1d(f, x)
    assert l1_freq_norm(f) >= np.max(np.abs(phys)) - 1e-10


def test_radial_reconstruction_matches_gaussian():
    f = _gauss_field(1)
    x = np.array([-1.5, 0.0, 0.4, 2.0])
    phys = radial_to_physical_1d(f, x)
    assert np.allclose(phys, np.exp(-(x**2)), atol=1e-10)


def test_field_csv_roundtrip(tmp_path):
    f = _gauss_field(1)
    path = tmp_path / "field.csv"
    f.to_csv(path)
    raw = np.loadtxt(path, delimiter=",", skiprows=1)
    assert np.allclose(raw[:, 0], f.nodes)
    assert np.allclose(raw[:, 2] + 1j * raw[:, 3], f.values)
