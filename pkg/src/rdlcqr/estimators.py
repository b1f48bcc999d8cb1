"""Estimator-style wrappers around the functional core.

``LcqrRd`` follows the scikit-learn protocol (constructor hyperparameters,
``fit(x, y, ...)``, fitted attributes with trailing underscores,
``get_params``/``set_params``) so discontinuity estimation composes with the
wider ecosystem; ``predict`` evaluates the fitted boundary regression at new
running-variable values via fresh local fits.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .exceptions import InsufficientData
from .fuzzy import estimate_fuzzy, null_restricted_test
from .inference import estimate_kink, sharp_inference
from .kernels import KernelSpec
from .sample import RdSample
from .solver import fit_boundary

__all__ = ["LcqrRd", "LlrRd"]


def _as_sample(x, y, t=None, z=None, cutoff=0.0) -> RdSample:
    return RdSample(x=np.asarray(x, dtype=float), y=np.asarray(y, dtype=float),
                    t=None if t is None else np.asarray(t, dtype=float),
                    z=None if z is None else np.asarray(z, dtype=float), cutoff=cutoff)


class LcqrRd(BaseEstimator):
    """Composite-quantile discontinuity estimator.

    Parameters
    ----------
    design : 'sharp', 'fuzzy' or 'kink'.
    q : number of quantile positions.
    kernel : kernel family name.
    bandwidth : 'auto' (adjusted-MSE selector), 'rot', or a positive number.
    equal_bandwidth : pool the two sides onto one bandwidth.
    mode : 'asymptotic' or 'fixed_n' variance approximations.
    level : confidence level.
    cutoff : threshold of the running variable.
    tau0 : hypothesized effect for the fuzzy null-restricted test.
    """

    def __init__(
        self,
        design: str = "sharp",
        q: int = 7,
        kernel: str = "triangular",
        bandwidth="auto",
        equal_bandwidth: bool = True,
        mode: str = "asymptotic",
        level: float = 0.95,
        cutoff: float = 0.0,
        tau0: float = 0.0,
    ):
        self.design = design
        self.q = q
        self.kernel = kernel
        self.bandwidth = bandwidth
        self.equal_bandwidth = equal_bandwidth
        self.mode = mode
        self.level = level
        self.cutoff = cutoff
        self.tau0 = tau0

    def fit(self, x, y, t=None):
        """Estimate the design's effect from arrays of observations."""
        sample = _as_sample(x, y, t=t, cutoff=self.cutoff)
        spec = KernelSpec(self.kernel)
        if self.design == "sharp":
            result = sharp_inference(
                sample,
                q=self.q,
                kernel=spec,
                bandwidth=self.bandwidth,
                equal_bandwidth=self.equal_bandwidth,
                mode=self.mode,
                level=self.level,
                tau0=self.tau0,
            )
        elif self.design == "fuzzy":
            if t is None:
                raise ValueError("fuzzy design requires the treatment array t")
            result, components = estimate_fuzzy(
                sample,
                q=self.q,
                kernel=spec,
                bandwidth=self.bandwidth,
                equal_bandwidth=self.equal_bandwidth,
                mode=self.mode,
                level=self.level,
            )
            self.components_ = components
        elif self.design == "kink":
            h = self.bandwidth if isinstance(self.bandwidth, (int, float)) else 0.3
            result = estimate_kink(
                sample, q=self.q, bandwidth=float(h), kernel=spec, level=self.level
            )
        else:
            raise ValueError(f"unknown design {self.design!r}")
        self.result_ = result
        self.sample_ = sample
        self.effect_ = result.point
        self.effect_bc_ = result.point_bc
        self.bias_ = result.bias_hat
        self.se_ = result.se_plain
        self.se_adjusted_ = result.se_adjusted
        self.ci_ = result.ci_adjusted
        self.bandwidths_ = dict(result.bandwidths)
        return self

    def test(self, tau0: float | None = None, invert_ci: bool = False):
        """Fuzzy null-restricted adjusted test at tau0 (fitted sample)."""
        if not hasattr(self, "sample_"):
            raise InsufficientData("call fit before test")
        return null_restricted_test(
            self.sample_,
            tau0=self.tau0 if tau0 is None else tau0,
            q=self.q,
            kernel=KernelSpec(self.kernel),
            bandwidth=self.bandwidth,
            equal_bandwidth=self.equal_bandwidth,
            mode=self.mode,
            level=self.level,
            invert_ci=invert_ci,
        )

    def predict(self, x):
        """Fitted conditional mean of the outcome at new running values.

        Each query point is served by a fresh local fit on its own side of
        the cutoff, at the fitted bandwidths.
        """
        if not hasattr(self, "sample_"):
            raise InsufficientData("call fit before predict")
        x = np.atleast_1d(np.asarray(x, dtype=float))
        spec = KernelSpec(self.kernel)
        out = np.empty_like(x)
        sample = self.sample_
        xa, ya = sample.side("above")[:2]
        xb, yb = sample.side("below")[:2]
        for i, xi in enumerate(x):
            centered = xi - self.cutoff
            if centered >= 0:
                fit = fit_boundary(
                    xa, ya, centered, self.q, 1, self.bandwidths_["h_above"], spec
                )
            else:
                fit = fit_boundary(
                    xb, yb, centered, self.q, 1, self.bandwidths_["h_below"], spec
                )
            out[i] = fit.cond_mean
        return out


class LlrRd(BaseEstimator):
    """Local linear baseline with the matching interface."""

    def __init__(self, bandwidth="rot", kernel: str = "triangular",
                 level: float = 0.95, cutoff: float = 0.0):
        self.bandwidth = bandwidth
        self.kernel = kernel
        self.level = level
        self.cutoff = cutoff

    def fit(self, x, y):
        from .inference import select_bandwidths
        from .llr import llr_inference

        sample = _as_sample(x, y, cutoff=self.cutoff)
        spec = KernelSpec(self.kernel)
        if isinstance(self.bandwidth, (int, float)):
            h = float(self.bandwidth)
        else:
            h = select_bandwidths(sample, 7, spec, "rot", True).h_above
        result = llr_inference(sample, h, spec, level=self.level)
        self.result_ = result
        self.sample_ = sample
        self.effect_ = result.point
        self.se_ = result.se_plain
        self.ci_ = result.ci_plain
        self.bandwidths_ = dict(result.bandwidths)
        return self
