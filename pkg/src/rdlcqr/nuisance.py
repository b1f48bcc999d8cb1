"""Data-driven nuisance quantities: error quantiles and densities, the
conditional error scale at the cutoff, and the boundary design density.

None of these have a prescribed estimator in the inference formulas they
feed, so the choices here are deliberately conventional: a global quartic
least-squares pilot per side supplies residuals and derivative estimates, a
Gaussian kernel density estimate with Silverman bandwidth supplies error
densities, and one-sided kernel sums supply the design density.  Residuals
are standardized to unit variance before quantile and density estimation,
matching the convention of every downstream constant.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import DegenerateResiduals, InsufficientData
from .kernels import KernelSpec, eval_kernel, one_sided_moments
from .laws import ErrorLaw
from .solver import tau_grid

__all__ = ["QuantileGrid", "NuisanceEstimates", "estimate_grid", "estimate_side_nuisances"]


def tau_pair_matrix(taus: np.ndarray) -> np.ndarray:
    """tau_kk' = min(tau_k, tau_k') - tau_k tau_k'."""
    return np.minimum.outer(taus, taus) - np.outer(taus, taus)


@dataclass
class QuantileGrid:
    """Quantile positions with error quantiles and density values."""

    q: int
    tau: np.ndarray
    c: np.ndarray
    f_at_c: np.ndarray
    tau_pair: np.ndarray
    phi_pair: np.ndarray | None = None

    def __post_init__(self):
        if np.any(self.f_at_c <= 0):
            raise DegenerateResiduals("error-density estimate hit zero on the grid")


def _silverman_bandwidth(values: np.ndarray) -> float:
    n = values.size
    sd = values.std(ddof=1) if n > 1 else 0.0
    iqr = np.subtract(*np.percentile(values, [75, 25])) / 1.349
    spread = min(sd, iqr) if iqr > 0 else sd
    if spread <= 0:
        raise DegenerateResiduals("residuals have zero spread")
    return 0.9 * spread * n ** (-0.2)


def _gauss_kde(values: np.ndarray, points: np.ndarray, bw: float) -> np.ndarray:
    z = (points[:, None] - values[None, :]) / bw
    return np.exp(-0.5 * z * z).mean(axis=1) / (bw * np.sqrt(2.0 * np.pi))


def estimate_grid(
    residuals,
    q: int,
    known_law: ErrorLaw | None = None,
    symmetrize: bool = True,
    density_floor: float = 0.0,
) -> QuantileGrid:
    """Error quantiles c_k and density values f(c_k) on the tau grid.

    With ``known_law`` the exact quantiles and densities of the law are used
    (efficiency-table mode).  Otherwise both come from the standardized
    residuals; under the symmetric-error assumption the quantiles are
    antisymmetrized and the density estimate is averaged at +-c_k.  A
    positive ``density_floor`` keeps grids from discrete-valued residuals
    (treatment indicators) usable.
    """
    taus = tau_grid(q)
    pair = tau_pair_matrix(taus)
    if known_law is not None:
        c = np.atleast_1d(np.asarray(known_law.ppf(taus), dtype=float))
        f = np.atleast_1d(np.asarray(known_law.pdf(c), dtype=float))
        return QuantileGrid(q=q, tau=taus, c=c, f_at_c=f, tau_pair=pair)

    resid = np.asarray(residuals, dtype=float)
    if resid.size == 0:
        raise DegenerateResiduals("no residuals available for the quantile grid")
    if resid.max() - resid.min() <= 0:
        raise DegenerateResiduals("residuals have zero spread")
    c = np.quantile(resid, taus)
    bw = _silverman_bandwidth(resid)
    if symmetrize:
        c = 0.5 * (c - c[::-1])
        f = 0.5 * (_gauss_kde(resid, c, bw) + _gauss_kde(resid, -c, bw))
    else:
        f = _gauss_kde(resid, c, bw)
    if density_floor > 0:
        f = np.maximum(f, density_floor)
    return QuantileGrid(q=q, tau=taus, c=c, f_at_c=f, tau_pair=pair)


def phi_pair_matrix(resid_y, resid_t, grid_y: QuantileGrid, grid_t: QuantileGrid) -> np.ndarray:
    """phi_kk' = empirical joint CDF of paired residuals at (c_k, c_k')
    minus tau_k tau_k'."""
    ry = np.asarray(resid_y, dtype=float)
    rt = np.asarray(resid_t, dtype=float)
    if ry.size != rt.size or ry.size == 0:
        raise DegenerateResiduals("paired residuals required for the joint grid")
    below_y = ry[:, None] <= grid_y.c[None, :]
    below_t = rt[:, None] <= grid_t.c[None, :]
    joint = below_y.astype(float).T @ below_t.astype(float) / ry.size
    return joint - np.outer(grid_y.tau, grid_t.tau)


def boundary_density(x_side, n_total: int, bandwidth: float, kernel: KernelSpec, side: str) -> float:
    """One-sided kernel density of the running variable at the cutoff,
    normalized by the one-sided kernel mass (unconditional scaling)."""
    x = np.asarray(x_side, dtype=float)
    mu0 = abs(one_sided_moments(kernel, side).mu[0])
    val = eval_kernel(kernel, x / bandwidth).sum() / (n_total * bandwidth * mu0)
    return float(val)


def boundary_density_with_slope(x_side, n_total, bandwidth, kernel, side):
    """First-order-correct boundary density and slope of the running variable.

    The two one-sided kernel sums S_j = (1/Nh) sum (x/h)^j K(x/h), j = 0, 1,
    have means f(0) mu_j + f'(0) h mu_{j+1} + O(h^2); solving the 2x2 moment
    system removes the leading truncation bias that a naive finite difference
    of boundary density estimates cannot cancel.
    """
    x = np.asarray(x_side, dtype=float)
    u = x / bandwidth
    K = eval_kernel(kernel, u)
    s0 = K.sum() / (n_total * bandwidth)
    s1 = (u * K).sum() / (n_total * bandwidth)
    mu = one_sided_moments(kernel, side).mu
    mat = np.array([[mu[0], mu[1]], [mu[1], mu[2]]])
    f0, f1h = np.linalg.solve(mat, np.array([s0, s1]))
    return float(f0), float(f1h / bandwidth)


@dataclass
class NuisanceEstimates:
    """Everything the variance and bandwidth formulas need on one side."""

    side: str
    sigma: float
    fx: float
    fx_deriv: float
    grid: QuantileGrid
    residuals: np.ndarray = field(repr=False)
    pilot_bandwidth: float
    m2: float
    m3: float
    m2_global: float
    m3_global: float
    quartic_coefs: np.ndarray
    n_side: int
    n_total: int


def estimate_side_nuisances(
    x_side,
    y_side,
    side: str,
    n_total: int,
    pilot_bandwidth: float,
    kernel: KernelSpec,
    q: int,
    symmetrize: bool = True,
    density_floor: float = 0.0,
) -> NuisanceEstimates:
    """Pilot fit and nuisance estimation on one side of the cutoff.

    A global quartic least-squares fit supplies residuals; the curvature
    pilots m2 = m''(0) and m3 = m'''(0) come from a global quintic, one
    polynomial order higher, following the order-(v+2) plug-in convention
    for second and third derivatives; the error scale is a
    leverage-corrected kernel-weighted mean of squared residuals at the
    cutoff; the design density and its slope come from one-sided kernel
    moment sums.
    """
    x = np.asarray(x_side, dtype=float)
    y = np.asarray(y_side, dtype=float)
    if x.size < max(6, q + 2):
        raise InsufficientData(
            f"side {side!r} has {x.size} observations; pilot fit needs at least {max(6, q + 2)}",
            n_effective=x.size,
        )
    if pilot_bandwidth <= 0:
        raise ValueError("pilot bandwidth must be positive")

    X = x[:, None] ** np.arange(5)
    coefs, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coefs
    # leverage-correct the squared residuals: boundary points carry high
    # quartic leverage, which otherwise deflates the local error scale
    gram_inv = np.linalg.pinv(X.T @ X)
    leverage = np.clip(np.einsum("ij,jk,ik->i", X, gram_inv, X), 0.0, 0.99)
    resid_c = resid / np.sqrt(1.0 - leverage)

    w = eval_kernel(kernel, x / pilot_bandwidth)
    if w.sum() <= 0:
        raise InsufficientData(f"no observations inside the pilot window on side {side!r}")
    sigma2 = float((w * resid_c**2).sum() / w.sum())
    sigma = np.sqrt(sigma2)

    window = resid_c[w > 0]
    if sigma <= 0 or window.size < q + 1:
        raise DegenerateResiduals(
            f"pilot residuals on side {side!r} are degenerate (sigma={sigma:.3g}, "
            f"{window.size} in window)"
        )
    grid = estimate_grid(window / sigma, q, symmetrize=symmetrize, density_floor=density_floor)

    fx = boundary_density(x, n_total, pilot_bandwidth, kernel, side)
    # density-slope estimation tolerates far more smoothing than the density
    # itself; a window below half the support makes the slope pilot erratic
    h_slope = max(2.0 * pilot_bandwidth, 0.5 * float(np.max(np.abs(x))))
    _, fx_deriv = boundary_density_with_slope(x, n_total, h_slope, kernel, side)

    if x.size >= 8 and np.unique(x).size >= 7:
        scale = max(float(np.max(np.abs(x))), 1e-12)
        X5 = (x / scale)[:, None] ** np.arange(6)
        coefs5, *_ = np.linalg.lstsq(X5, y, rcond=None)
        m2 = 2.0 * coefs5[2] / scale**2
        m3 = 6.0 * coefs5[3] / scale**3
    else:
        m2, m3 = 2.0 * coefs[2], 6.0 * coefs[3]

    return NuisanceEstimates(
        side=side,
        sigma=sigma,
        fx=fx,
        fx_deriv=float(fx_deriv),
        grid=grid,
        residuals=window / sigma,
        pilot_bandwidth=float(pilot_bandwidth),
        m2=float(m2),
        m3=float(m3),
        m2_global=float(2.0 * coefs[2]),
        m3_global=float(6.0 * coefs[3]),
        quartic_coefs=coefs,
        n_side=int(x.size),
        n_total=int(n_total),
    )
