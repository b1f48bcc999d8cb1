import numpy as np
import pytest

from rdlcqr.exceptions import DegenerateResiduals, InsufficientData
from rdlcqr.kernels import KernelSpec
from rdlcqr.laws import LaplaceLaw, NormalLaw, standardized
from rdlcqr.montecarlo import DgpSpec, draw_sample
from rdlcqr.nuisance import (
    boundary_density,
    boundary_density_with_slope,
    estimate_grid,
    estimate_side_nuisances,
    phi_pair_matrix,
    tau_pair_matrix,
)


def test_known_normal_grid():
    grid = estimate_grid(None, 3, known_law=NormalLaw())
    assert grid.c == pytest.approx([-0.6745, 0.0, 0.6745], abs=2e-4)
    assert grid.f_at_c[1] == pytest.approx(0.3989, abs=1e-4)


def test_known_laplace_unit_variance():
    grid = estimate_grid(None, 1, known_law=standardized(LaplaceLaw()))
    assert grid.f_at_c[0] == pytest.approx(1 / np.sqrt(2), abs=1e-10)


def test_tau_pair_formula():
    pair = tau_pair_matrix(np.array([0.5]))
    assert pair[0, 0] == pytest.approx(0.25)
    taus = np.array([0.25, 0.5, 0.75])
    pair = tau_pair_matrix(taus)
    assert np.allclose(pair, pair.T)
    assert np.allclose(np.diag(pair), taus * (1 - taus))


def test_tau_pair_is_indicator_covariance(rng):
    taus = np.array([0.25, 0.5, 0.75])
    u = rng.random(120_000)
    ind = (u[:, None] <= taus[None, :]).astype(float)
    emp = np.cov(ind, rowvar=False, bias=True)
    assert np.allclose(emp, tau_pair_matrix(taus), atol=1e-2)


def test_grid_antisymmetry_under_symmetrization(rng):
    resid = rng.standard_t(3, 400)
    grid = estimate_grid(resid, 5, symmetrize=True)
    assert np.allclose(grid.c, -grid.c[::-1], atol=1e-12)
    assert np.all(grid.f_at_c > 0)
    assert np.all(np.isfinite(grid.f_at_c))


def test_degenerate_residuals():
    with pytest.raises(DegenerateResiduals):
        estimate_grid(np.zeros(50), 3)
    with pytest.raises(DegenerateResiduals):
        estimate_grid(np.array([]), 3)


def test_boundary_density_uniform(rng, triangular):
    # x uniform on [0, 1]: one-sided density at 0 is 1
    x = rng.random(60_000)
    fx = boundary_density(x, x.size, 0.1, triangular, "above")
    assert fx == pytest.approx(1.0, abs=0.05)
    f0, f1 = boundary_density_with_slope(x, x.size, 0.2, triangular, "above")
    assert f0 == pytest.approx(1.0, abs=0.05)
    assert f1 == pytest.approx(0.0, abs=0.3)


def test_side_nuisances_recover_scale_and_density(triangular):
    spec = DgpSpec(model="lee", dgp=1, n=100_000)
    sample = draw_sample(spec, np.random.default_rng(5))
    xb, yb = sample.side("below")[:2]
    nuis = estimate_side_nuisances(xb, yb, "below", sample.n, 0.15, triangular, 7)
    assert nuis.sigma == pytest.approx(0.5, abs=0.02)
    assert nuis.fx == pytest.approx(0.625, abs=0.05)
    assert nuis.fx_deriv / nuis.fx == pytest.approx(-2.0, abs=0.6)


def test_side_nuisances_insufficient():
    with pytest.raises(InsufficientData):
        estimate_side_nuisances([0.1, 0.2], [1.0, 2.0], "above", 4, 0.1, KernelSpec(), 3)


def test_constant_outcome_degenerates(triangular):
    x = np.linspace(0, 1, 60)
    with pytest.raises(DegenerateResiduals):
        estimate_side_nuisances(x, np.ones_like(x), "above", 60, 0.3, triangular, 3)


def test_phi_pair_independent_residuals(rng):
    ry = rng.standard_normal(30_000)
    rt = rng.standard_normal(30_000)
    gy = estimate_grid(ry, 3)
    gt = estimate_grid(rt, 3)
    phi = phi_pair_matrix(ry, rt, gy, gt)
    assert np.abs(phi).max() < 0.02


def test_phi_pair_comonotone_residuals(rng):
    r = rng.standard_normal(30_000)
    g = estimate_grid(r, 3)
    phi = phi_pair_matrix(r, r, g, g)
    expected = tau_pair_matrix(g.tau)
    assert np.allclose(phi, expected, atol=0.02)
