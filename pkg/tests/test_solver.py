import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rdlcqr.exceptions import CollinearCovariates, InsufficientData
from rdlcqr.kernels import KernelSpec
from rdlcqr.solver import (
    check_loss,
    fit_boundary,
    fit_boundary_with_covariates,
    objective,
    solve_cqr,
    tau_grid,
)

from oracles import lp_composite_fit


def test_objective_trivial_cases():
    # zero residual
    assert objective([1.0], np.zeros((1, 1)), [1.0], [0.5], [1.0], [0.0]) == 0.0
    # check loss of +2 at the median with unit weight
    assert objective([2.0], np.zeros((1, 1)), [1.0], [0.5], [0.0], [0.0]) == pytest.approx(1.0)
    # residual -1 at tau = 1/3 and 2/3: (1 - 1/3) + (1 - 2/3) = 1
    taus = tau_grid(2)
    val = objective([-1.0], np.zeros((1, 1)), [1.0], taus, [0.0, 0.0], [0.0])
    assert val == pytest.approx(1.0)


def test_check_loss_signs():
    assert check_loss(-1.0, 1 / 3) == pytest.approx(2 / 3)
    assert check_loss(1.0, 1 / 3) == pytest.approx(1 / 3)
    assert check_loss(0.0, 0.9) == 0.0


@pytest.mark.parametrize("q", [1, 2, 5])
def test_noiseless_linear_recovery(q, triangular):
    x = np.linspace(0, 1, 40)
    y = 2.0 + 3.0 * x
    fit = fit_boundary(x, y, 0.0, q, 1, 0.8, triangular)
    assert fit.cond_mean == pytest.approx(2.0, abs=1e-8)
    assert fit.slopes[0] == pytest.approx(3.0, abs=1e-7)
    assert np.allclose(fit.intercepts, 2.0, atol=1e-8)
    assert fit.objective_value == pytest.approx(0.0, abs=1e-10)


def test_oracle_equivalence_and_monotone_trace(rng):
    worst = -np.inf
    for _ in range(25):
        n = int(rng.integers(8, 26))
        q = int(rng.choice([1, 3, 5]))
        x = rng.uniform(0, 1, n)
        y = 1.0 + 2.0 * x + rng.standard_normal(n)
        w = np.exp(-x)
        design = x[:, None]
        taus = tau_grid(q)
        a, b, trace, converged = solve_cqr(y, design, w, taus)
        assert converged
        assert np.all(np.diff(trace) <= 0.0)
        _, _, f_lp = lp_composite_fit(y, design, w, taus)
        worst = max(worst, (trace[-1] - f_lp) / max(abs(f_lp), 1e-10))
    assert worst < 1e-8


def test_q1_matches_weighted_median_lp(rng):
    n = 30
    x = rng.uniform(0, 1, n)
    y = np.sin(2 * x) + rng.standard_t(3, n)
    w = np.exp(-2 * x)
    a, b, trace, _ = solve_cqr(y, x[:, None], w, tau_grid(1))
    a_lp, b_lp, f_lp = lp_composite_fit(y, x[:, None], w, tau_grid(1))
    assert trace[-1] == pytest.approx(f_lp, rel=1e-8, abs=1e-10)


@settings(max_examples=15, deadline=None)
@given(
    shift=st.floats(-5, 5, allow_nan=False),
    scale=st.floats(0.1, 4, allow_nan=False),
)
def test_location_scale_equivariance(shift, scale):
    rng = np.random.default_rng(99)
    x = rng.uniform(0, 1, 30)
    y = 1 + x + rng.standard_normal(30)
    w = np.exp(-x)
    taus = tau_grid(3)
    a0, b0, *_ = solve_cqr(y, x[:, None], w, taus)
    a1, b1, *_ = solve_cqr(y + shift, x[:, None], w, taus)
    assert np.allclose(a1, a0 + shift, atol=1e-6)
    assert np.allclose(b1, b0, atol=1e-6)
    a2, b2, *_ = solve_cqr(scale * y, x[:, None], w, taus)
    assert np.allclose(a2, scale * a0, atol=1e-6 * max(1, scale))
    assert np.allclose(b2, scale * b0, atol=1e-6 * max(1, scale))


@pytest.mark.parametrize("q", [1, 3, 7])
def test_q_independence_on_noiseless_polynomial(q, triangular):
    x = np.linspace(0, 1, 60)
    y = 0.3 - 1.2 * x + 0.7 * x * x
    fit = fit_boundary(x, y, 0.0, q, 2, 0.9, triangular)
    assert fit.cond_mean == pytest.approx(0.3, abs=1e-7)
    assert fit.deriv2 == pytest.approx(1.4, abs=1e-5)


def test_insufficient_data(triangular):
    x = np.array([0.1, 0.2, 0.3])
    y = np.array([1.0, 2.0, 3.0])
    with pytest.raises(InsufficientData):
        fit_boundary(x, y, 0.0, 5, 1, 0.5, triangular)
    # distinct-x requirement
    x_tied = np.full(30, 0.2)
    with pytest.raises(InsufficientData):
        fit_boundary(x_tied, np.arange(30.0), 0.0, 1, 1, 0.5, triangular)


def test_trace_records_iterations(lee_sample, triangular):
    xa, ya = lee_sample.side("above")[:2]
    fit = fit_boundary(xa, ya, 0.0, 7, 1, 0.3, triangular)
    assert fit.converged
    assert fit.iterations == fit.trace.size - 1
    assert np.all(np.diff(fit.trace) <= 0.0)
    assert fit.cond_mean == pytest.approx(np.mean(fit.intercepts))


class TestCovariateFit:
    def _pooled(self, rng, beta_cv=0.0):
        n = 300
        x = rng.uniform(-1, 1, n)
        t = (x >= 0).astype(float)
        z = rng.standard_normal(n)
        y = 0.5 + 0.8 * x + 0.3 * t + 0.2 * t * x + beta_cv * z + 0.2 * rng.standard_normal(n)
        return x, y, t, z

    def test_zero_covariate_matches_no_covariate(self, rng, triangular):
        x, y, t, z = self._pooled(rng)
        tau_zero, _ = fit_boundary_with_covariates(
            x, y, t, np.zeros_like(x), 0.0, 3, 0.8, triangular
        )
        tau_none, _ = fit_boundary_with_covariates(
            x, y, t, np.zeros((x.size, 0)), 0.0, 3, 0.8, triangular
        )
        assert tau_zero == pytest.approx(tau_none, abs=1e-9)

    def test_recovers_treatment_coefficient(self, rng, triangular):
        x, y, t, z = self._pooled(rng, beta_cv=0.5)
        tau, fit = fit_boundary_with_covariates(x, y, t, z, 0.0, 5, 0.9, triangular)
        assert tau == pytest.approx(0.3, abs=0.12)
        assert fit.converged

    def test_constant_covariate_rejected(self, rng, triangular):
        x, y, t, _ = self._pooled(rng)
        with pytest.raises(CollinearCovariates):
            fit_boundary_with_covariates(x, y, t, np.ones_like(x), 0.0, 3, 0.8, triangular)

    def test_y_copy_covariate_rejected(self, rng, triangular):
        x, y, t, _ = self._pooled(rng)
        with pytest.raises(CollinearCovariates):
            fit_boundary_with_covariates(x, y, t, y.copy(), 0.0, 3, 0.8, triangular)

    def test_insufficient_data(self, triangular):
        x = np.linspace(-0.2, 0.2, 8)
        y = x.copy()
        t = (x >= 0).astype(float)
        with pytest.raises(InsufficientData):
            fit_boundary_with_covariates(x, y, t, x * 2, 0.0, 7, 0.5, triangular)
