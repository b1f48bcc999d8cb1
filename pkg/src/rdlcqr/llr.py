"""Local linear regression baseline.

Closed-form kernel-weighted least squares of the outcome on (1, x - point),
with the matching boundary variance constant, serving as the comparison arm
in simulations and the application workflow.  Deliberately baseline-grade:
no robust-adjustment claim is attached to its intervals.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import InsufficientData, SingularDesign
from .kernels import KernelSpec, eval_kernel

__all__ = ["LlrFit", "fit_llr"]


@dataclass
class LlrFit:
    intercept: float
    slope: float
    cond_mean: float
    bandwidth: float
    n_effective: int


def fit_llr(x, y, point: float, bandwidth: float, kernel: KernelSpec | None = None) -> LlrFit:
    """Weighted least squares of y on (1, x - point) with kernel weights."""
    kernel = kernel or KernelSpec()
    if bandwidth <= 0:
        raise ValueError(f"bandwidth must be positive, got {bandwidth}")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    u = (x - point) / bandwidth
    w = eval_kernel(kernel, u)
    keep = w > 0
    xc, yc, wc = x[keep] - point, y[keep], w[keep]
    if xc.size < 2 or np.unique(xc).size < 2:
        raise InsufficientData(
            f"{xc.size} weighted points ({np.unique(xc).size} distinct x) "
            "cannot identify a local line",
            n_effective=int(xc.size),
        )
    s0, s1, s2 = wc.sum(), (wc * xc).sum(), (wc * xc * xc).sum()
    det = s0 * s2 - s1 * s1
    if det <= 0 or not np.isfinite(det):
        raise SingularDesign("weighted design is singular within the window")
    t0, t1 = (wc * yc).sum(), (wc * xc * yc).sum()
    intercept = (s2 * t0 - s1 * t1) / det
    slope = (s0 * t1 - s1 * t0) / det
    return LlrFit(
        intercept=float(intercept),
        slope=float(slope),
        cond_mean=float(intercept),
        bandwidth=float(bandwidth),
        n_effective=int(xc.size),
    )


def llr_inference(sample, bandwidth, kernel=None, level: float = 0.95, bias_correct: bool = False):
    """Boundary-gap estimate with the local linear variance constant.

    Baseline-grade: the variance is the plain kernel constant times the
    estimated error scale over the boundary density, with no adjustment for
    bias-correction noise.  Optional bias correction subtracts the kernel
    bias constant times the pilot quartic curvature.
    """
    from scipy import stats

    from .inference import InferenceResult, side_nuisances
    from .kernels import one_sided_moments
    from .sandwich import llr_variance_constant, scalar_constants

    kernel = kernel or KernelSpec()
    xa, ya = sample.side("above")[:2]
    xb, yb = sample.side("below")[:2]
    fit_a = fit_llr(xa, ya, 0.0, bandwidth, kernel)
    fit_b = fit_llr(xb, yb, 0.0, bandwidth, kernel)
    point = fit_a.cond_mean - fit_b.cond_mean
    nuis_a, nuis_b = side_nuisances(sample, 7, kernel)
    moments = one_sided_moments(kernel, "above")
    b = llr_variance_constant(moments)
    var = b / (sample.n * bandwidth) * (
        nuis_a.sigma**2 / nuis_a.fx + nuis_b.sigma**2 / nuis_b.fx
    )
    se = float(np.sqrt(var))
    a_const = scalar_constants(moments, nuis_a.grid).a
    bias = 0.5 * a_const * (nuis_a.m2_global - nuis_b.m2_global) * bandwidth**2 if bias_correct else 0.0
    point_bc = point - bias
    z = float(stats.norm.ppf(0.5 + level / 2.0))
    return InferenceResult(
        estimand="sharp",
        point=float(point),
        bias_hat=float(bias),
        point_bc=float(point_bc),
        se_plain=se,
        se_adjusted=se,
        t_plain=float(point / se) if se > 0 else float("nan"),
        t_adjusted=float(point_bc / se) if se > 0 else float("nan"),
        ci_plain=(point - z * se, point + z * se),
        ci_adjusted=(point_bc - z * se, point_bc + z * se),
        level=float(level),
        mode="asymptotic",
        bandwidths={"h_above": float(bandwidth), "h_below": float(bandwidth)},
        n_eff={"above": fit_a.n_effective, "below": fit_b.n_effective},
        diagnostics={"estimator": "llr", "baseline_grade": True, "bias_corrected": bias_correct},
    )
