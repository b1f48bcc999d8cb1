"""Sharp-design estimation and inference, plus the kink-design estimate.

The point estimate is the gap between the two boundary conditional means,
each the average of composite-quantile intercepts from a local linear fit.
Bias correction subtracts the kernel bias constant times a second-derivative
estimate from a quadratic fit on the same bandwidth; the adjusted variance
adds the sampling variability of that correction and its covariance with the
estimate.  Both large-sample constants and small-sample (fixed-n) empirical
kernel sums are supported for every variance piece.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .bandwidth import (
    BandwidthResult,
    adjusted_mse_bandwidth,
    clamp_bandwidth,
    equal_adjusted_mse_bandwidth,
    rot_bandwidth,
)
from .exceptions import InsufficientData, NegativeAdjustedVariance, SolverDiverged
from .kernels import KernelSpec, one_sided_moments
from .nuisance import NuisanceEstimates, estimate_side_nuisances
from .sample import RdSample
from .sandwich import build_fixed_n, scalar_constants
from .solver import LcqrFit, SolverOptions, fit_boundary

__all__ = [
    "InferenceResult",
    "SidePieces",
    "side_pieces",
    "estimate_sharp",
    "sharp_inference",
    "estimate_kink",
    "select_bandwidths",
    "side_nuisances",
]


@dataclass
class InferenceResult:
    estimand: str
    point: float
    bias_hat: float
    point_bc: float
    se_plain: float
    se_adjusted: float
    t_plain: float
    t_adjusted: float
    ci_plain: tuple[float, float]
    ci_adjusted: tuple[float, float]
    level: float
    mode: str
    bandwidths: dict
    n_eff: dict
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "estimand": self.estimand,
            "point": self.point,
            "bias_hat": self.bias_hat,
            "point_bc": self.point_bc,
            "se_plain": self.se_plain,
            "se_adjusted": self.se_adjusted,
            "t_plain": self.t_plain,
            "t_adjusted": self.t_adjusted,
            "ci_plain": list(self.ci_plain),
            "ci_adjusted": list(self.ci_adjusted),
            "level": self.level,
            "mode": self.mode,
            "bandwidths": self.bandwidths,
            "n_eff": self.n_eff,
            "diagnostics": self.diagnostics,
        }


@dataclass
class SidePieces:
    """Per-side estimate, bias estimate, and variance components.

    var_m, var_b and cov_mb are the variances of the conditional-mean
    estimate and of its estimated bias, and their covariance, all in final
    (unscaled-by-h) units so that the adjusted variance of the side is
    var_m + var_b - 2 cov_mb.
    """

    side: str
    fit: LcqrFit
    m2hat: float
    m2_source: str
    bias: float
    var_m: float
    var_b: float
    cov_mb: float
    nuis: NuisanceEstimates

    @property
    def var_adjusted(self) -> float:
        return self.var_m + self.var_b - 2.0 * self.cov_mb


def side_pieces(
    x_side,
    y_side,
    side: str,
    bandwidth: float,
    q: int,
    kernel: KernelSpec,
    nuis: NuisanceEstimates,
    mode: str = "asymptotic",
    solver_options: SolverOptions | None = None,
) -> SidePieces:
    """Fit one side and assemble its bias and variance components."""
    fit = fit_boundary(x_side, y_side, 0.0, q, 1, bandwidth, kernel, solver_options)
    try:
        fit2 = fit_boundary(x_side, y_side, 0.0, q, 2, bandwidth, kernel, solver_options)
        m2hat, m2_source = fit2.deriv2, "lcqr_p2"
    except (InsufficientData, SolverDiverged):
        # global quartic escape hatch for the curvature
        m2hat, m2_source = nuis.m2, "quartic_ls"

    grid = nuis.grid
    q_ = grid.q
    ones = np.ones(q_)
    if mode == "asymptotic":
        moments = one_sided_moments(kernel, side)
        cst = scalar_constants(moments, grid)
        scale = nuis.sigma**2 / (nuis.n_total * bandwidth * nuis.fx)
        bias = 0.5 * cst.a * m2hat * bandwidth**2
        var_m = cst.b_y * scale
        var_b = cst.a**2 * cst.b_star * scale
        cov_mb = cst.a / q_ * cst.cross_12 * scale
    elif mode == "fixed_n":
        sigma_i = nuis.sigma
        s1 = build_fixed_n(x_side, grid, bandwidth, kernel, sigma_i, p=1)
        s2 = build_fixed_n(x_side, grid, bandwidth, kernel, sigma_i, p=2)
        n_side = np.asarray(x_side).size
        d1 = _fixed_n_bias_factor(x_side, grid, bandwidth, kernel, sigma_i, s1)
        bias = d1 * m2hat * bandwidth**2
        nh = n_side * bandwidth
        var_m = float(ones @ s1.core_block("11") @ ones) / (q_**2 * nh)
        e2 = np.array([0.0, 1.0])
        var_b = 4.0 * d1**2 * float(e2 @ s2.core_block("22") @ e2) / nh
        cov_mb = 2.0 * d1 / q_ * float(ones @ s2.core_block("12")[:, 1]) / nh
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return SidePieces(
        side=side,
        fit=fit,
        m2hat=float(m2hat),
        m2_source=m2_source,
        bias=float(bias),
        var_m=float(var_m),
        var_b=float(var_b),
        cov_mb=float(cov_mb),
        nuis=nuis,
    )


def _fixed_n_bias_factor(x_side, grid, bandwidth, kernel, sigma, s1) -> float:
    """D_n1: the empirical-sum analogue of a(c)/2."""
    from .kernels import eval_kernel

    x = np.asarray(x_side, dtype=float)
    n = x.size
    u = x / bandwidth
    K = eval_kernel(kernel, u)
    sig = np.broadcast_to(np.asarray(sigma, dtype=float), x.shape)
    m2s = float((K * u**2 / sig).sum()) / (n * bandwidth)
    m3s = float((K * u**3 / sig).sum()) / (n * bandwidth)
    fvals = np.asarray(grid.f_at_c, dtype=float)
    q = fvals.size
    ones = np.ones(q)
    inv11 = s1.sinv_block("11")
    inv12 = s1.sinv_block("12")[:, 0]
    return float(ones @ (inv11 @ fvals) * (0.5 * m2s) + ones @ inv12 * fvals.sum() * (0.5 * m3s)) / q


def estimate_sharp(
    sample: RdSample,
    q: int,
    h_above: float,
    h_below: float,
    kernel: KernelSpec | None = None,
    solver_options: SolverOptions | None = None,
):
    """Boundary gap estimate: above-side mean minus below-side mean."""
    kernel = kernel or KernelSpec()
    xa, ya = sample.side("above")[:2]
    xb, yb = sample.side("below")[:2]
    fit_a = fit_boundary(xa, ya, 0.0, q, 1, h_above, kernel, solver_options)
    fit_b = fit_boundary(xb, yb, 0.0, q, 1, h_below, kernel, solver_options)
    return fit_a.cond_mean - fit_b.cond_mean, fit_a, fit_b


def side_nuisances(sample: RdSample, q: int, kernel: KernelSpec, symmetrize: bool = True):
    """Rule-of-thumb pilots and nuisance estimates for both sides."""
    xa, ya = sample.side("above")[:2]
    xb, yb = sample.side("below")[:2]
    pilot_a = rot_bandwidth(xa, ya, kernel, q=q)
    pilot_b = rot_bandwidth(xb, yb, kernel, q=q)
    nuis_a = estimate_side_nuisances(xa, ya, "above", sample.n, pilot_a, kernel, q, symmetrize)
    nuis_b = estimate_side_nuisances(xb, yb, "below", sample.n, pilot_b, kernel, q, symmetrize)
    return nuis_a, nuis_b


def select_bandwidths(
    sample: RdSample,
    q: int,
    kernel: KernelSpec,
    method: str = "auto",
    equal: bool = True,
    value: float | None = None,
    nuisances: tuple[NuisanceEstimates, NuisanceEstimates] | None = None,
) -> BandwidthResult:
    """Dispatch to the requested bandwidth rule.

    ``auto`` is the adjusted-MSE selector (pooled when ``equal``); ``rot``
    the rule-of-thumb plug-in; ``fixed`` uses ``value`` on both sides.
    """
    xa, ya = sample.side("above")[:2]
    xb, yb = sample.side("below")[:2]
    if method == "fixed":
        if value is None or value <= 0:
            raise ValueError("fixed bandwidth requires a positive value")
        return BandwidthResult("fixed", float(value), float(value))
    if method == "rot":
        ha = rot_bandwidth(xa, ya, kernel, q=q)
        hb = rot_bandwidth(xb, yb, kernel, q=q)
        if equal:
            h = 0.5 * (ha + hb)
            return BandwidthResult("rot", h, h)
        return BandwidthResult("rot", ha, hb)
    if method != "auto":
        raise ValueError(f"unknown bandwidth method {method!r}")
    nuis_a, nuis_b = nuisances or side_nuisances(sample, q, kernel)
    if equal:
        return equal_adjusted_mse_bandwidth(nuis_a, nuis_b, sample.x_centered, sample.y, kernel, q)
    res_a = adjusted_mse_bandwidth(nuis_a, xa, ya, kernel, q)
    res_b = adjusted_mse_bandwidth(nuis_b, xb, yb, kernel, q)
    return BandwidthResult(
        "adj_mse_two",
        res_a.h_above,
        res_b.h_above,
        c2_above=res_a.c2_above,
        c2_below=res_b.c2_above,
        c3_above=res_a.c3_above,
        c3_below=res_b.c3_above,
        fallback=res_a.fallback or res_b.fallback,
    )


def _normal_quantile(level: float) -> float:
    return float(stats.norm.ppf(0.5 + level / 2.0))


def assemble_result(
    estimand: str,
    point: float,
    pieces_above: SidePieces,
    pieces_below: SidePieces,
    level: float,
    mode: str,
    tau0: float = 0.0,
    extra_diag: dict | None = None,
) -> InferenceResult:
    """Combine per-side pieces into the bias-corrected, adjusted result."""
    bias = pieces_above.bias - pieces_below.bias
    var_plain = pieces_above.var_m + pieces_below.var_m
    var_adj = pieces_above.var_adjusted + pieces_below.var_adjusted
    if var_adj <= 0:
        raise NegativeAdjustedVariance(
            f"adjusted variance {var_adj:.3e} is not positive",
            var_above=pieces_above.var_adjusted,
            var_below=pieces_below.var_adjusted,
        )
    se_plain = float(np.sqrt(var_plain))
    se_adj = float(np.sqrt(var_adj))
    point_bc = point - bias
    z = _normal_quantile(level)
    diag = {
        "m2_above": pieces_above.m2hat,
        "m2_below": pieces_below.m2hat,
        "m2_source_above": pieces_above.m2_source,
        "m2_source_below": pieces_below.m2_source,
        "sigma_above": pieces_above.nuis.sigma,
        "sigma_below": pieces_below.nuis.sigma,
        "fx_above": pieces_above.nuis.fx,
        "fx_below": pieces_below.nuis.fx,
        "pilot_bandwidth_above": pieces_above.nuis.pilot_bandwidth,
        "pilot_bandwidth_below": pieces_below.nuis.pilot_bandwidth,
    }
    if extra_diag:
        diag.update(extra_diag)
    return InferenceResult(
        estimand=estimand,
        point=float(point),
        bias_hat=float(bias),
        point_bc=float(point_bc),
        se_plain=se_plain,
        se_adjusted=se_adj,
        t_plain=float((point - tau0) / se_plain),
        t_adjusted=float((point_bc - tau0) / se_adj),
        ci_plain=(point - z * se_plain, point + z * se_plain),
        ci_adjusted=(point_bc - z * se_adj, point_bc + z * se_adj),
        level=float(level),
        mode=mode,
        bandwidths={
            "h_above": pieces_above.fit.bandwidth,
            "h_below": pieces_below.fit.bandwidth,
        },
        n_eff={"above": pieces_above.fit.n_effective, "below": pieces_below.fit.n_effective},
        diagnostics=diag,
    )


def sharp_inference(
    sample: RdSample,
    q: int = 7,
    kernel: KernelSpec | None = None,
    bandwidth: str | float = "auto",
    equal_bandwidth: bool = True,
    mode: str = "asymptotic",
    level: float = 0.95,
    tau0: float = 0.0,
    solver_options: SolverOptions | None = None,
) -> InferenceResult:
    """Full sharp pipeline: pilots, bandwidths, fits, adjusted inference."""
    kernel = kernel or KernelSpec()
    nuis_a, nuis_b = side_nuisances(sample, q, kernel)
    if isinstance(bandwidth, (int, float)):
        bw = select_bandwidths(sample, q, kernel, "fixed", equal_bandwidth, float(bandwidth))
    else:
        bw = select_bandwidths(
            sample, q, kernel, bandwidth, equal_bandwidth, nuisances=(nuis_a, nuis_b)
        )
    xa, ya = sample.side("above")[:2]
    xb, yb = sample.side("below")[:2]
    pa = side_pieces(xa, ya, "above", bw.h_above, q, kernel, nuis_a, mode, solver_options)
    pb = side_pieces(xb, yb, "below", bw.h_below, q, kernel, nuis_b, mode, solver_options)
    point = pa.fit.cond_mean - pb.fit.cond_mean
    return assemble_result(
        "sharp",
        point,
        pa,
        pb,
        level,
        mode,
        tau0,
        extra_diag={"bandwidth_method": bw.method, "bandwidth_fallback": bw.fallback},
    )


def estimate_kink(
    sample: RdSample,
    q: int = 7,
    bandwidth: float = 0.3,
    kernel: KernelSpec | None = None,
    level: float = 0.95,
    solver_options: SolverOptions | None = None,
) -> InferenceResult:
    """Slope-gap estimate from cubic fits per side; experimental s.e.

    The standard error comes from the first-slope coordinate of the fixed-n
    sandwich for the cubic fit; no bias correction is attached.
    """
    kernel = kernel or KernelSpec()
    xa, ya = sample.side("above")[:2]
    xb, yb = sample.side("below")[:2]
    fit_a = fit_boundary(xa, ya, 0.0, q, 3, bandwidth, kernel, solver_options)
    fit_b = fit_boundary(xb, yb, 0.0, q, 3, bandwidth, kernel, solver_options)
    point = fit_a.deriv1 - fit_b.deriv1
    var = 0.0
    for x_side, y_side, side in ((xa, ya, "above"), (xb, yb, "below")):
        pilot = rot_bandwidth(x_side, y_side, kernel, q=q, p=3)
        nuis = estimate_side_nuisances(x_side, y_side, side, sample.n, pilot, kernel, q)
        s3 = build_fixed_n(x_side, nuis.grid, bandwidth, kernel, nuis.sigma, p=3)
        slope_var = float(s3.core_block("22")[0, 0])
        var += slope_var / (np.asarray(x_side).size * bandwidth**3)
    se = float(np.sqrt(var))
    z = _normal_quantile(level)
    return InferenceResult(
        estimand="kink",
        point=float(point),
        bias_hat=0.0,
        point_bc=float(point),
        se_plain=se,
        se_adjusted=se,
        t_plain=float(point / se) if se > 0 else float("nan"),
        t_adjusted=float(point / se) if se > 0 else float("nan"),
        ci_plain=(point - z * se, point + z * se),
        ci_adjusted=(point - z * se, point + z * se),
        level=float(level),
        mode="fixed_n",
        bandwidths={"h_above": float(bandwidth), "h_below": float(bandwidth)},
        n_eff={"above": fit_a.n_effective, "below": fit_b.n_effective},
        diagnostics={"experimental": True, "poly_order": 3},
    )
