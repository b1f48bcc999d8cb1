"""Boundary efficiency of the composite-quantile estimator against the local
linear baseline.

The efficiency measure is the ratio of optimal mean squared errors, which
collapses to (b_Y / b)^(-4/5): both estimators share the boundary bias
constant, so only the variance constants differ.
"""

from __future__ import annotations

import numpy as np

from .kernels import KernelSpec, one_sided_moments
from .laws import ErrorLaw, law_from_name, standardized
from .nuisance import estimate_grid
from .sandwich import build_asymptotic, llr_variance_constant

__all__ = ["compute_are", "are_table", "variance_ratio"]


def variance_ratio(law: ErrorLaw, q: int, kernel: KernelSpec | None = None) -> float:
    """b_Y / b for a unit-variance law on the above side of the cutoff."""
    kernel = kernel or KernelSpec()
    law = standardized(law)
    grid = estimate_grid(None, q, known_law=law)
    moments = one_sided_moments(kernel, "above")
    sandwich = build_asymptotic(moments, grid, p=1)
    ones = np.ones(q)
    b_y = float(ones @ sandwich.core_block("11") @ ones) / q**2
    return b_y / llr_variance_constant(moments)


def compute_are(law: ErrorLaw | str, q: int, kernel: KernelSpec | None = None) -> float:
    """Asymptotic relative efficiency (b_Y/b)^(-4/5) at the boundary."""
    if isinstance(law, str):
        law = law_from_name(law)
    return variance_ratio(law, q, kernel) ** (-0.8)


def are_table(laws, qs, kernel: KernelSpec | None = None):
    """Grid of efficiency values; rows are laws, columns are q values.

    Returns (law_names, qs, value matrix).
    """
    kernel = kernel or KernelSpec()
    resolved = [law_from_name(law) if isinstance(law, str) else law for law in laws]
    values = np.array([[compute_are(law, q, kernel) for q in qs] for law in resolved])
    return [law.name for law in resolved], list(qs), values
