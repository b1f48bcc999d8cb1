"""Bandwidth selection.

Two selectors per side of the cutoff:

* a rule-of-thumb plug-in of order n^(-1/5), from a global quartic fit's
  curvature and residual variance with interior kernel constants; and
* the adjusted-MSE bandwidth of order n^(-1/7), which balances the squared
  bias of the bias-corrected estimator (an h^3 object, with constant C2
  built from third-order bias ratios, the curvature pilots and the design
  density slope) against the bias-correction-adjusted variance constant C3.

The equal-bandwidth variant pools the two sides.  All data-dependent inputs
come from the pilot nuisance estimates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DegenerateCurvature, InsufficientData
from .kernels import KernelSpec, one_sided_moments
from .nuisance import NuisanceEstimates
from .sandwich import ScalarConstants, scalar_constants

__all__ = [
    "BandwidthResult",
    "rot_bandwidth",
    "adjusted_mse_constants",
    "adjusted_mse_bandwidth",
    "equal_adjusted_mse_bandwidth",
    "clamp_bandwidth",
]


@dataclass
class BandwidthResult:
    method: str
    h_above: float
    h_below: float
    c2_above: float | None = None
    c2_below: float | None = None
    c3_above: float | None = None
    c3_below: float | None = None
    fallback: bool = False

    @property
    def equal(self) -> bool:
        return self.h_above == self.h_below


def clamp_bandwidth(h: float, x_side, q: int, p: int) -> float:
    """Clamp to [typical spacing * (q + p + 1), range], guaranteeing fits."""
    x = np.asarray(x_side, dtype=float)
    span = float(np.max(np.abs(x)))
    if span <= 0:
        raise InsufficientData("running variable has no spread on this side")
    floor = span / x.size * (q + p + 1)
    return float(np.clip(h, min(floor, span), span))


def rot_bandwidth(x_side, y_side, kernel: KernelSpec | None = None, q: int = 7, p: int = 1) -> float:
    """Rule-of-thumb plug-in: quartic-fit curvature and residual variance.

    h = [nu0 * sigma^2 * range / (mu2^2 * sum_i m''(x_i)^2)]^(1/5) with the
    full-line kernel constants nu0 = int K^2 and mu2 = int u^2 K.
    """
    kernel = kernel or KernelSpec()
    x = np.asarray(x_side, dtype=float)
    y = np.asarray(y_side, dtype=float)
    if x.size < 10:
        raise InsufficientData(
            f"rule-of-thumb pilot needs at least 10 observations, got {x.size}",
            n_effective=x.size,
        )
    X = x[:, None] ** np.arange(5)
    coefs, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coefs
    sigma2 = float(resid @ resid) / max(x.size - 5, 1)
    curv = 2.0 * coefs[2] + 6.0 * coefs[3] * x + 12.0 * coefs[4] * x**2
    curv_sum = float(curv @ curv)
    mom_a = one_sided_moments(kernel, "above")
    mom_b = one_sided_moments(kernel, "below")
    nu0 = mom_a.nu[0] + mom_b.nu[0]
    mu2 = mom_a.mu[2] + mom_b.mu[2]
    span = float(x.max() - x.min())
    if curv_sum <= 0 or span <= 0:
        raise DegenerateCurvature("quartic pilot found no curvature for the plug-in rule")
    h = (nu0 * sigma2 * span / (mu2**2 * curv_sum)) ** 0.2
    return clamp_bandwidth(h, x, q, p)


def _adjusted_variance_constant(cst: ScalarConstants, q: int) -> float:
    """b_Y + a^2 b* - (2a/q) * cross: the variance constant of the
    bias-corrected estimator, before the sigma^2/f scaling."""
    return cst.b_y + cst.a**2 * cst.b_star - 2.0 * cst.a / q * cst.cross_12


def adjusted_mse_constants(nuis: NuisanceEstimates, kernel: KernelSpec) -> tuple[float, float]:
    """(C2, C3) for one side from pilot nuisances.

    C2 = a_check/6 * m''' + a_tilde/2 * (f_X'/f_X) * m'' drives the cubed-
    bandwidth bias of the bias-corrected estimate; C3 is the adjusted
    variance constant scaled by sigma^2 / f_X (unconditional density, paired
    with the total sample size).
    """
    moments = one_sided_moments(kernel, nuis.side)
    cst = scalar_constants(moments, nuis.grid)
    c2 = cst.a_check / 6.0 * nuis.m3 + cst.a_tilde / 2.0 * (nuis.fx_deriv / nuis.fx) * nuis.m2
    c3 = nuis.sigma**2 / nuis.fx * _adjusted_variance_constant(cst, nuis.grid.q)
    return float(c2), float(c3)


_C2_TINY = 1e-8


def per_side_bandwidth_formula(c2: float, c3: float, n: int) -> float:
    """h = (C3 / (6 C2^2))^(1/7) n^(-1/7)."""
    return float((c3 / (6.0 * c2**2)) ** (1.0 / 7.0) * n ** (-1.0 / 7.0))


def equal_bandwidth_formula(c2_above: float, c2_below: float, c3_above: float,
                            c3_below: float, n: int) -> float:
    """h = ((C3+ + C3-) / (6 (C2+ - C2-)^2))^(1/7) n^(-1/7)."""
    gap = c2_above - c2_below
    return float(((c3_above + c3_below) / (6.0 * gap**2)) ** (1.0 / 7.0) * n ** (-1.0 / 7.0))


def adjusted_mse_bandwidth(
    nuis: NuisanceEstimates, x_side, y_side, kernel: KernelSpec, q: int, p: int = 1
) -> BandwidthResult:
    """Per-side h = (C3 / (6 C2^2))^(1/7) n^(-1/7), curvature-guarded.

    The result is floored at the rule-of-thumb pilot: the adjusted-MSE
    bandwidth has larger asymptotic order than the n^(-1/5) pilot, so a
    selection below it can only reflect pilot noise.
    """
    c2, c3 = adjusted_mse_constants(nuis, kernel)
    if abs(c2) < _C2_TINY or c3 <= 0:
        h = rot_bandwidth(x_side, y_side, kernel, q=q, p=p)
        res = BandwidthResult("rot", h, h, c2_above=c2, c3_above=c3, fallback=True)
        return res
    h = per_side_bandwidth_formula(c2, c3, nuis.n_total)
    h = max(h, nuis.pilot_bandwidth)
    h = clamp_bandwidth(h, x_side, q, p)
    return BandwidthResult("adj_mse_two", h, h, c2_above=c2, c3_above=c3)


def equal_adjusted_mse_bandwidth(
    nuis_above: NuisanceEstimates,
    nuis_below: NuisanceEstimates,
    x,
    y,
    kernel: KernelSpec,
    q: int,
    p: int = 1,
) -> BandwidthResult:
    """Pooled h = ((C3+ + C3-) / (6 (C2+ - C2-)^2))^(1/7) n^(-1/7)."""
    c2a, c3a = adjusted_mse_constants(nuis_above, kernel)
    c2b, c3b = adjusted_mse_constants(nuis_below, kernel)
    gap = c2a - c2b
    x = np.asarray(x, dtype=float)
    if abs(gap) < _C2_TINY or c3a + c3b <= 0:
        mask = x >= 0
        ha = rot_bandwidth(x[mask], np.asarray(y, dtype=float)[mask], kernel, q=q, p=p)
        hb = rot_bandwidth(x[~mask], np.asarray(y, dtype=float)[~mask], kernel, q=q, p=p)
        h = 0.5 * (ha + hb)
        return BandwidthResult(
            "rot", h, h, c2_above=c2a, c2_below=c2b, c3_above=c3a, c3_below=c3b, fallback=True
        )
    h = equal_bandwidth_formula(c2a, c2b, c3a, c3b, nuis_above.n_total)
    # same pilot floor as the per-side rule, pooled across sides
    h = max(h, 0.5 * (nuis_above.pilot_bandwidth + nuis_below.pilot_bandwidth))
    mask = x >= 0
    h = min(clamp_bandwidth(h, x[mask], q, p), clamp_bandwidth(h, x[~mask], q, p))
    return BandwidthResult(
        "adj_mse_equal", h, h, c2_above=c2a, c2_below=c2b, c3_above=c3a, c3_below=c3b
    )
