"""Kernel functions and their one-sided moments.

Boundary estimation at the cutoff only ever sees data on one side, so every
variance/bias constant downstream is built from one-sided moments of the
kernel and of its square:

    mu_j  = integral of u^j K(u) du   over [0, B] (above) or [-B, 0] (below)
    nu_j  = integral of u^j K(u)^2 du over the same range

where B is the kernel's support bound.  Polynomial kernels use closed forms;
the Gaussian kernel is integrated numerically over an effective support of
[0, 8], beyond which its mass is far below the quadrature tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .exceptions import UnsupportedOrder

__all__ = ["KernelSpec", "KernelMoments", "eval_kernel", "one_sided_moments"]

KERNEL_FAMILIES = ("triangular", "epanechnikov", "uniform", "gaussian")

# Effective support for the Gaussian kernel: tail mass beyond 8 is ~6e-16.
_GAUSSIAN_BOUND = 8.0

MAX_MOMENT_ORDER = 7


@dataclass(frozen=True)
class KernelSpec:
    """A bounded symmetric kernel, identified by family name.

    ``support_bound`` is the edge of supp(K); infinite-support kernels carry
    their effective bound instead.
    """

    family: str = "triangular"
    support_bound: float = field(init=False, default=1.0)

    def __post_init__(self):
        if self.family not in KERNEL_FAMILIES:
            raise ValueError(
                f"unknown kernel family {self.family!r}; expected one of {KERNEL_FAMILIES}"
            )
        bound = _GAUSSIAN_BOUND if self.family == "gaussian" else 1.0
        object.__setattr__(self, "support_bound", bound)


@dataclass(frozen=True)
class KernelMoments:
    """One-sided kernel moments mu[j] and nu[j] for j = 0..max_order."""

    side: str
    mu: np.ndarray
    nu: np.ndarray

    def __post_init__(self):
        if self.side not in ("above", "below"):
            raise ValueError(f"side must be 'above' or 'below', got {self.side!r}")


def eval_kernel(spec: KernelSpec, u) -> np.ndarray:
    """Evaluate K(u); zero outside the support for bounded kernels."""
    u = np.asarray(u, dtype=float)
    a = np.abs(u)
    if spec.family == "triangular":
        return np.where(a < 1.0, 1.0 - a, 0.0)
    if spec.family == "epanechnikov":
        return np.where(a < 1.0, 0.75 * (1.0 - u * u), 0.0)
    if spec.family == "uniform":
        return np.where(a < 1.0, 0.5, 0.0)
    # gaussian
    return np.exp(-0.5 * u * u) / np.sqrt(2.0 * np.pi)


def _closed_form_above(family: str, j: int) -> tuple[float, float] | None:
    """(mu_j, nu_j) over [0, 1] for polynomial kernels, None otherwise."""
    if family == "triangular":
        mu = 1.0 / (j + 1) - 1.0 / (j + 2)
        nu = 1.0 / (j + 1) - 2.0 / (j + 2) + 1.0 / (j + 3)
        return mu, nu
    if family == "epanechnikov":
        mu = 0.75 * (1.0 / (j + 1) - 1.0 / (j + 3))
        nu = 0.5625 * (1.0 / (j + 1) - 2.0 / (j + 3) + 1.0 / (j + 5))
        return mu, nu
    if family == "uniform":
        return 0.5 / (j + 1), 0.25 / (j + 1)
    return None


def one_sided_moments(spec: KernelSpec, side: str = "above", max_order: int = MAX_MOMENT_ORDER) -> KernelMoments:
    """Moments of K and K^2 over one side of the cutoff.

    Orders up to 7 are needed downstream (third-order bias constants and the
    second-derivative bias constant), so ``max_order`` below 3 is rejected.
    """
    if max_order < 3 or max_order > 12:
        raise UnsupportedOrder(
            f"max_order must be in [3, 12], got {max_order}", max_order=max_order
        )
    orders = np.arange(max_order + 1)
    mu = np.empty(max_order + 1)
    nu = np.empty(max_order + 1)
    for j in orders:
        closed = _closed_form_above(spec.family, int(j))
        if closed is not None:
            mu[j], nu[j] = closed
        else:
            k = lambda u: u**j * eval_kernel(spec, u)  # noqa: E731
            k2 = lambda u: u**j * eval_kernel(spec, u) ** 2  # noqa: E731
            mu[j], _ = integrate.quad(k, 0.0, spec.support_bound, epsabs=1e-13, epsrel=1e-13)
            nu[j], _ = integrate.quad(k2, 0.0, spec.support_bound, epsabs=1e-13, epsrel=1e-13)
    if side == "below":
        # symmetric kernel: mu_{-,j} = (-1)^j mu_{+,j}, same for nu
        signs = (-1.0) ** orders
        mu = signs * mu
        nu = signs * nu
    return KernelMoments(side=side, mu=mu, nu=nu)
