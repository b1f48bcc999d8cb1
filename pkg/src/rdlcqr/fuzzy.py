"""Fuzzy-design estimation and the null-restricted adjusted test.

The point estimate is the ratio of boundary gaps (outcome over treatment
probability).  Because the ratio breaks down under weak identification, the
test statistic is built on the null-restricted linear combination
(m_Y - tau0 m_T) gap, whose bias-corrected, variance-adjusted form stays
valid when the compliance jump is small.  Its variance sums a ten-term
per-side expression: three terms each for the outcome and treatment
equations and four cross-covariances carried by the joint error CDF of the
two equations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .exceptions import WeakIdentification
from .inference import InferenceResult, SidePieces, side_nuisances, side_pieces, select_bandwidths
from .kernels import KernelSpec, one_sided_moments
from .nuisance import NuisanceEstimates, estimate_side_nuisances, phi_pair_matrix
from .sample import RdSample
from .sandwich import (
    build_asymptotic,
    build_fixed_n,
    build_fixed_n_cross,
    cross_matrix_asymptotic,
    scalar_constants,
)
from .solver import SolverOptions
from .bandwidth import rot_bandwidth

__all__ = ["FuzzySide", "FuzzyComponents", "estimate_fuzzy", "null_restricted_test"]

WEAK_ID_THRESHOLD = 0.05


@dataclass
class FuzzySide:
    """Per-side pieces for both equations plus their cross-covariances.

    The four cross terms (estimate/estimate, bias/bias and the two mixed
    estimate/bias covariances) all scale with the joint-CDF constants of the
    paired residuals.
    """

    y: SidePieces
    t: SidePieces
    cov_mm: float
    cov_bb: float
    cov_m_bt: float
    cov_t_by: float

    def var_tilde(self, tau0: float) -> float:
        """Ten-term adjusted variance of (mY - tau0 mT) - its bias estimate."""
        a = self.y.var_m + self.y.var_b - 2.0 * self.y.cov_mb
        c = self.t.var_m + self.t.var_b - 2.0 * self.t.cov_mb
        b = self.cov_mm + self.cov_bb - self.cov_m_bt - self.cov_t_by
        return a - 2.0 * tau0 * b + tau0**2 * c


@dataclass
class FuzzyComponents:
    above: FuzzySide
    below: FuzzySide
    denominator: float
    gap_y: float
    bandwidths: dict
    n_eff: dict
    diagnostics: dict = field(default_factory=dict)

    def tilde(self, tau0: float) -> float:
        return self.gap_y - tau0 * self.denominator

    def tilde_bias(self, tau0: float) -> float:
        bias_y = self.above.y.bias - self.below.y.bias
        bias_t = self.above.t.bias - self.below.t.bias
        return bias_y - tau0 * bias_t

    def tilde_var(self, tau0: float) -> float:
        return self.above.var_tilde(tau0) + self.below.var_tilde(tau0)


def _degenerate_t_side(x_side, t_side, side, h_t, q, kernel, solver_options):
    """Noise-free treatment equation (sharp compliance on this side)."""
    from .solver import fit_boundary

    fit = fit_boundary(x_side, t_side, 0.0, q, 1, h_t, kernel, solver_options)
    return SidePieces(
        side=side,
        fit=fit,
        m2hat=0.0,
        m2_source="degenerate",
        bias=0.0,
        var_m=0.0,
        var_b=0.0,
        cov_mb=0.0,
        nuis=None,
    )


def _fuzzy_side(
    x_side,
    y_side,
    t_side,
    side: str,
    h_y: float,
    h_t: float,
    q: int,
    kernel: KernelSpec,
    nuis_y: NuisanceEstimates,
    nuis_t: NuisanceEstimates | None,
    mode: str,
    solver_options: SolverOptions | None,
) -> FuzzySide:
    py = side_pieces(x_side, y_side, side, h_y, q, kernel, nuis_y, mode, solver_options)
    if nuis_t is None:
        pt = _degenerate_t_side(x_side, t_side, side, h_t, q, kernel, solver_options)
        return FuzzySide(y=py, t=pt, cov_mm=0.0, cov_bb=0.0, cov_m_bt=0.0, cov_t_by=0.0)
    pt = side_pieces(x_side, t_side, side, h_t, q, kernel, nuis_t, mode, solver_options)
    n_side = np.asarray(x_side).size
    phi = phi_pair_matrix(nuis_y.residuals, nuis_t.residuals, nuis_y.grid, nuis_t.grid)
    q_ = nuis_y.grid.q
    ones = np.ones(q_)
    e2 = np.array([0.0, 1.0])
    if mode == "asymptotic":
        moments = one_sided_moments(kernel, side)
        cst_y = scalar_constants(moments, nuis_y.grid)
        cst_t = scalar_constants(moments, nuis_t.grid)
        set_y1 = build_asymptotic(moments, nuis_y.grid, p=1)
        set_t1 = build_asymptotic(moments, nuis_t.grid, p=1)
        set_y2 = build_asymptotic(moments, nuis_y.grid, p=2)
        set_t2 = build_asymptotic(moments, nuis_t.grid, p=2)
        cross1 = cross_matrix_asymptotic(moments, phi, p=1)
        cross2 = cross_matrix_asymptotic(moments, phi, p=2)
        scale = (
            nuis_y.sigma
            * nuis_t.sigma
            / (nuis_y.n_total * np.sqrt(h_y * h_t) * nuis_y.fx)
        )
        m_yt1 = set_y1.S_inv @ cross1 @ set_t1.S_inv
        m_yt2 = set_y2.S_inv @ cross2 @ set_t2.S_inv
        m_ty2 = set_t2.S_inv @ cross2.T @ set_y2.S_inv
        cov_mm = scale / q_**2 * float(ones @ m_yt1[:q_, :q_] @ ones)
        cov_bb = scale * cst_y.a * cst_t.a * float(e2 @ m_yt2[q_:, q_:] @ e2)
        cov_m_bt = 2.0 * scale * cst_t.a / q_ * float(ones @ m_yt2[:q_, q_:][:, 1])
        cov_t_by = 2.0 * scale * cst_y.a / q_ * float(ones @ m_ty2[:q_, q_:][:, 1])
    else:
        set_y1 = build_fixed_n(x_side, nuis_y.grid, h_y, kernel, nuis_y.sigma, p=1)
        set_t1 = build_fixed_n(x_side, nuis_t.grid, h_t, kernel, nuis_t.sigma, p=1)
        set_y2 = build_fixed_n(x_side, nuis_y.grid, h_y, kernel, nuis_y.sigma, p=2)
        set_t2 = build_fixed_n(x_side, nuis_t.grid, h_t, kernel, nuis_t.sigma, p=2)
        cross1 = build_fixed_n_cross(x_side, phi, h_y, h_t, kernel, p=1)
        cross2 = build_fixed_n_cross(x_side, phi, h_y, h_t, kernel, p=2)
        from .inference import _fixed_n_bias_factor

        d_y = _fixed_n_bias_factor(x_side, nuis_y.grid, h_y, kernel, nuis_y.sigma, set_y1)
        d_t = _fixed_n_bias_factor(x_side, nuis_t.grid, h_t, kernel, nuis_t.sigma, set_t1)
        m_yt1 = set_y1.S_inv @ cross1 @ set_t1.S_inv
        m_yt2 = set_y2.S_inv @ cross2 @ set_t2.S_inv
        m_ty2 = set_t2.S_inv @ cross2.T @ set_y2.S_inv
        nh = n_side * np.sqrt(h_y * h_t)
        cov_mm = float(ones @ m_yt1[:q_, :q_] @ ones) / (q_**2 * nh)
        cov_bb = 4.0 * d_y * d_t * float(e2 @ m_yt2[q_:, q_:] @ e2) / nh
        cov_m_bt = 2.0 * d_t / q_ * float(ones @ m_yt2[:q_, q_:][:, 1]) / nh
        cov_t_by = 2.0 * d_y / q_ * float(ones @ m_ty2[:q_, q_:][:, 1]) / nh
    return FuzzySide(
        y=py,
        t=pt,
        cov_mm=float(cov_mm),
        cov_bb=float(cov_bb),
        cov_m_bt=float(cov_m_bt),
        cov_t_by=float(cov_t_by),
    )


def _fuzzy_components(
    sample: RdSample,
    q: int,
    kernel: KernelSpec,
    bandwidth,
    equal_bandwidth: bool,
    mode: str,
    solver_options: SolverOptions | None,
) -> FuzzyComponents:
    if sample.t is None:
        raise ValueError("fuzzy design requires the treatment array t")
    nuis_ya, nuis_yb = side_nuisances(sample, q, kernel)
    if isinstance(bandwidth, (int, float)):
        from .bandwidth import BandwidthResult

        bw = BandwidthResult("fixed", float(bandwidth), float(bandwidth))
    else:
        bw = select_bandwidths(
            sample, q, kernel, bandwidth, equal_bandwidth, nuisances=(nuis_ya, nuis_yb)
        )
    # the outcome-equation bandwidths are reused for the treatment equation;
    # binary treatment residuals are two-point distributed, so their grid
    # skips symmetrization and floors the density estimate; a constant
    # treatment side is noise-free rather than an error
    from .exceptions import DegenerateResiduals

    xa, ya, ta = sample.side("above")
    xb, yb, tb = sample.side("below")
    try:
        nuis_ta = estimate_side_nuisances(
            xa, ta, "above", sample.n, nuis_ya.pilot_bandwidth, kernel, q,
            symmetrize=False, density_floor=1e-2,
        )
    except DegenerateResiduals:
        nuis_ta = None
    try:
        nuis_tb = estimate_side_nuisances(
            xb, tb, "below", sample.n, nuis_yb.pilot_bandwidth, kernel, q,
            symmetrize=False, density_floor=1e-2,
        )
    except DegenerateResiduals:
        nuis_tb = None
    above = _fuzzy_side(
        xa, ya, ta, "above", bw.h_above, bw.h_above, q, kernel, nuis_ya, nuis_ta, mode,
        solver_options,
    )
    below = _fuzzy_side(
        xb, yb, tb, "below", bw.h_below, bw.h_below, q, kernel, nuis_yb, nuis_tb, mode,
        solver_options,
    )
    gap_y = above.y.fit.cond_mean - below.y.fit.cond_mean
    denom = above.t.fit.cond_mean - below.t.fit.cond_mean
    return FuzzyComponents(
        above=above,
        below=below,
        denominator=float(denom),
        gap_y=float(gap_y),
        bandwidths={
            "h_above": bw.h_above,
            "h_below": bw.h_below,
            "h_t_above": bw.h_above,
            "h_t_below": bw.h_below,
        },
        n_eff={"above": above.y.fit.n_effective, "below": below.y.fit.n_effective},
        diagnostics={"bandwidth_method": bw.method},
    )


def estimate_fuzzy(
    sample: RdSample,
    q: int = 7,
    kernel: KernelSpec | None = None,
    bandwidth="auto",
    equal_bandwidth: bool = True,
    mode: str = "asymptotic",
    level: float = 0.95,
    solver_options: SolverOptions | None = None,
):
    """Ratio estimate with delta-method bias and variance.

    Raises WeakIdentification when the compliance jump is below the
    suppression threshold; the null-restricted test remains available.
    """
    kernel = kernel or KernelSpec()
    comp = _fuzzy_components(sample, q, kernel, bandwidth, equal_bandwidth, mode, solver_options)
    den = comp.denominator
    if abs(den) < WEAK_ID_THRESHOLD:
        raise WeakIdentification(
            f"compliance jump {den:.4f} is below the threshold {WEAK_ID_THRESHOLD}; "
            "use the null-restricted test",
            denominator=den,
        )
    point = comp.gap_y / den
    bias_y = comp.above.y.bias - comp.below.y.bias
    bias_t = comp.above.t.bias - comp.below.t.bias
    bias = bias_y / den - comp.gap_y * bias_t / den**2
    var_y = comp.above.y.var_m + comp.below.y.var_m
    var_t = comp.above.t.var_m + comp.below.t.var_m
    cov_yt = comp.above.cov_mm + comp.below.cov_mm
    var = (
        var_y / den**2
        + comp.gap_y**2 / den**4 * var_t
        - 2.0 * comp.gap_y / den**3 * cov_yt
    )
    se = float(np.sqrt(max(var, 0.0)))
    # adjusted variance of the ratio, from the null-restricted form at the
    # estimated effect, scaled by the compliance jump
    var_adj = comp.tilde_var(point) / den**2
    se_adj = float(np.sqrt(max(var_adj, 0.0)))
    z = float(stats.norm.ppf(0.5 + level / 2.0))
    point_bc = point - bias
    result = InferenceResult(
        estimand="fuzzy",
        point=float(point),
        bias_hat=float(bias),
        point_bc=float(point_bc),
        se_plain=se,
        se_adjusted=se_adj,
        t_plain=float(point / se) if se > 0 else float("nan"),
        t_adjusted=float(point_bc / se_adj) if se_adj > 0 else float("nan"),
        ci_plain=(point - z * se, point + z * se),
        ci_adjusted=(point_bc - z * se_adj, point_bc + z * se_adj),
        level=float(level),
        mode=mode,
        bandwidths=comp.bandwidths,
        n_eff=comp.n_eff,
        diagnostics={**comp.diagnostics, "denominator": den, "gap_y": comp.gap_y},
    )
    return result, comp


def null_restricted_test(
    sample: RdSample,
    tau0: float = 0.0,
    q: int = 7,
    kernel: KernelSpec | None = None,
    bandwidth="auto",
    equal_bandwidth: bool = True,
    mode: str = "asymptotic",
    level: float = 0.95,
    invert_ci: bool = False,
    components: FuzzyComponents | None = None,
    solver_options: SolverOptions | None = None,
) -> InferenceResult:
    """Bias-corrected, variance-adjusted test of a hypothesized ratio.

    Everything is linear or quadratic in tau0, so a component set fitted once
    serves the whole tau0 grid; the optional confidence interval inverts the
    test over 201 grid points spanning six plain standard errors.
    """
    kernel = kernel or KernelSpec()
    comp = components or _fuzzy_components(
        sample, q, kernel, bandwidth, equal_bandwidth, mode, solver_options
    )

    def t_of(t0: float) -> tuple[float, float, float]:
        num = comp.tilde(t0) - comp.tilde_bias(t0)
        var = comp.tilde_var(t0)
        se = np.sqrt(max(var, 1e-300))
        return num / se, num, se

    t_adj, num0, se0 = t_of(tau0)
    p_value = float(2.0 * stats.norm.sf(abs(t_adj)))
    z = float(stats.norm.ppf(0.5 + level / 2.0))

    ci = (float("nan"), float("nan"))
    grid_open = False
    if invert_ci:
        den = comp.denominator
        center = comp.gap_y / den if abs(den) > WEAK_ID_THRESHOLD else tau0
        half = 6.0 * np.sqrt(comp.tilde_var(center)) / max(abs(den), WEAK_ID_THRESHOLD)
        grid = np.linspace(center - half, center + half, 201)
        accepted = np.array([abs(t_of(g)[0]) <= z for g in grid])
        if accepted.any():
            lo = grid[accepted][0]
            hi = grid[accepted][-1]
            open_lo = accepted[0]
            open_hi = accepted[-1]
            grid_open = bool(open_lo or open_hi)
            ci = (
                float(-np.inf) if open_lo else float(lo),
                float(np.inf) if open_hi else float(hi),
            )
        else:
            grid_open = True
    plain_t = (comp.tilde(tau0)) / np.sqrt(
        max(comp.above.y.var_m + comp.below.y.var_m
            + tau0**2 * (comp.above.t.var_m + comp.below.t.var_m)
            - 2 * tau0 * (comp.above.cov_mm + comp.below.cov_mm), 1e-300)
    )
    return InferenceResult(
        estimand="fuzzy",
        point=float(comp.tilde(tau0)),
        bias_hat=float(comp.tilde_bias(tau0)),
        point_bc=float(num0),
        se_plain=float(np.sqrt(max(
            comp.above.y.var_m + comp.below.y.var_m
            + tau0**2 * (comp.above.t.var_m + comp.below.t.var_m)
            - 2 * tau0 * (comp.above.cov_mm + comp.below.cov_mm), 0.0))),
        se_adjusted=float(se0),
        t_plain=float(plain_t),
        t_adjusted=float(t_adj),
        ci_plain=ci,
        ci_adjusted=ci,
        level=float(level),
        mode=mode,
        bandwidths=comp.bandwidths,
        n_eff=comp.n_eff,
        diagnostics={
            **comp.diagnostics,
            "tau0": float(tau0),
            "p_value": p_value,
            "denominator": comp.denominator,
            "ci_from_inversion": invert_ci,
            "ci_open_ended": grid_open,
        },
    )
