"""Score and Jacobian matrices behind every variance constant.

The asymptotic matrices combine per-quantile error-density values with
one-sided kernel moments; their fixed-n counterparts replace the moments with
empirical kernel sums so that small-sample Studentization needs no
large-sample limits.  Block layout for q quantiles and polynomial order p:
the leading q-by-q block carries the intercepts, the trailing p-by-p block
the shared slopes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import InsufficientData, SingularS
from .kernels import KernelMoments, KernelSpec, eval_kernel

__all__ = [
    "SandwichSet",
    "ScalarConstants",
    "build_asymptotic",
    "build_fixed_n",
    "build_fixed_n_cross",
    "scalar_constants",
    "cross_constant",
    "llr_variance_constant",
    "CONDITION_LIMIT",
]

CONDITION_LIMIT = 1e12


@dataclass
class SandwichSet:
    """S and Sigma with the inverse of S, partitioned at the q/p boundary."""

    mode: str
    q: int
    p: int
    S: np.ndarray
    Sigma: np.ndarray
    S_inv: np.ndarray

    @property
    def core(self) -> np.ndarray:
        """S^{-1} Sigma S^{-1}."""
        return self.S_inv @ self.Sigma @ self.S_inv

    def core_block(self, which: str) -> np.ndarray:
        m = self.core
        q = self.q
        if which == "11":
            return m[:q, :q]
        if which == "12":
            return m[:q, q:]
        if which == "22":
            return m[q:, q:]
        raise ValueError(f"unknown block {which!r}")

    def sinv_block(self, which: str) -> np.ndarray:
        q = self.q
        if which == "11":
            return self.S_inv[:q, :q]
        if which == "12":
            return self.S_inv[:q, q:]
        if which == "21":
            return self.S_inv[q:, :q]
        if which == "22":
            return self.S_inv[q:, q:]
        raise ValueError(f"unknown block {which!r}")


@dataclass
class ScalarConstants:
    """Kernel/error constants entering bias, variance and bandwidth formulas."""

    a: float
    a_check: float
    a_tilde: float
    a_star: float
    b: float
    b_y: float
    b_star: float
    cross_12: float
    b_yt: float | None = None


def _invert_guarded(S: np.ndarray, label: str) -> np.ndarray:
    cond = np.linalg.cond(S)
    if not np.isfinite(cond) or cond > CONDITION_LIMIT:
        raise SingularS(
            f"{label} matrix condition number {cond:.3g} exceeds {CONDITION_LIMIT:.0e}",
            cond=float(cond),
        )
    return np.linalg.inv(S)


def _compose(mu, nu_like, fvals, pair, q, p):
    """Assemble S from (mu, f) and Sigma from (nu, pair) block by block."""
    S = np.zeros((q + p, q + p))
    S[:q, :q] = np.diag(fvals * mu[0])
    S[:q, q:] = fvals[:, None] * mu[1 : p + 1][None, :]
    S[q:, :q] = S[:q, q:].T
    fsum = fvals.sum()
    jj = np.add.outer(np.arange(1, p + 1), np.arange(1, p + 1))
    S[q:, q:] = fsum * mu[jj]

    Sigma = np.zeros((q + p, q + p))
    Sigma[:q, :q] = nu_like[0] * pair
    row = pair.sum(axis=1)
    Sigma[:q, q:] = row[:, None] * nu_like[1 : p + 1][None, :]
    Sigma[q:, :q] = Sigma[:q, q:].T
    Sigma[q:, q:] = pair.sum() * nu_like[jj]
    return S, Sigma


def build_asymptotic(moments: KernelMoments, grid, p: int) -> SandwichSet:
    """Large-sample S and Sigma from kernel moments and the error grid."""
    if p not in (1, 2, 3):
        raise ValueError(f"p must be 1, 2 or 3, got {p}")
    fvals = np.asarray(grid.f_at_c, dtype=float)
    if np.any(fvals <= 0):
        raise ValueError("error-density values must be strictly positive")
    q = fvals.size
    S, Sigma = _compose(moments.mu, moments.nu, fvals, grid.tau_pair, q, p)
    return SandwichSet(
        mode="asymptotic", q=q, p=p, S=S, Sigma=Sigma, S_inv=_invert_guarded(S, "S")
    )


def _fixed_n_sums(x, bandwidth, kernel, sigma, max_power):
    """Empirical moment sums (1/(n h)) sum K u^j / sigma_i and K^2 u^j."""
    x = np.asarray(x, dtype=float)
    n = x.size
    u = x / bandwidth
    K = eval_kernel(kernel, u)
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), x.shape)
    powers = u[None, :] ** np.arange(max_power + 1)[:, None]
    m = (powers * (K / sigma)[None, :]).sum(axis=1) / (n * bandwidth)
    g = (powers * (K**2)[None, :]).sum(axis=1) / (n * bandwidth)
    return m, g


def build_fixed_n(x, grid, bandwidth, kernel: KernelSpec, sigma, p: int) -> SandwichSet:
    """Fixed-n S and Sigma from empirical kernel sums on one side.

    ``x`` holds the side's running variable centered at the cutoff; ``sigma``
    is the per-point (or scalar) conditional error scale entering S only.
    """
    if p not in (1, 2, 3):
        raise ValueError(f"p must be 1, 2 or 3, got {p}")
    fvals = np.asarray(grid.f_at_c, dtype=float)
    q = fvals.size
    x = np.asarray(x, dtype=float)
    if x.size < q + p + 1:
        raise InsufficientData(
            f"{x.size} observations cannot support a fixed-n sandwich with q={q}, p={p}",
            n_effective=x.size,
        )
    m, g = _fixed_n_sums(x, bandwidth, kernel, sigma, 2 * p)
    S, Sigma = _compose(m, g, fvals, grid.tau_pair, q, p)
    return SandwichSet(
        mode="fixed_n", q=q, p=p, S=S, Sigma=Sigma, S_inv=_invert_guarded(S, "fixed-n S")
    )


def build_fixed_n_cross(x, phi_pair, bandwidth_y, bandwidth_t, kernel: KernelSpec, p: int):
    """Fixed-n cross matrix between outcome and treatment scores.

    Kernel arguments use the outcome bandwidth; normalization carries the
    geometric mean of the two bandwidths.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    u = x / bandwidth_y
    K = eval_kernel(kernel, u)
    powers = u[None, :] ** np.arange(2 * p + 1)[:, None]
    g = (powers * (K**2)[None, :]).sum(axis=1) / (n * np.sqrt(bandwidth_y * bandwidth_t))
    q = phi_pair.shape[0]
    Sigma = np.zeros((q + p, q + p))
    Sigma[:q, :q] = g[0] * phi_pair
    row = phi_pair.sum(axis=1)
    Sigma[:q, q:] = row[:, None] * g[1 : p + 1][None, :]
    Sigma[q:, :q] = Sigma[:q, q:].T
    jj = np.add.outer(np.arange(1, p + 1), np.arange(1, p + 1))
    Sigma[q:, q:] = phi_pair.sum() * g[jj]
    return Sigma


def cross_matrix_asymptotic(moments: KernelMoments, phi_pair, p: int) -> np.ndarray:
    """Large-sample cross matrix: Sigma blocks with phi in place of tau."""
    nu = moments.nu
    q = phi_pair.shape[0]
    Sigma = np.zeros((q + p, q + p))
    Sigma[:q, :q] = nu[0] * phi_pair
    row = phi_pair.sum(axis=1)
    Sigma[:q, q:] = row[:, None] * nu[1 : p + 1][None, :]
    Sigma[q:, :q] = Sigma[:q, q:].T
    jj = np.add.outer(np.arange(1, p + 1), np.arange(1, p + 1))
    Sigma[q:, q:] = phi_pair.sum() * nu[jj]
    return Sigma


def llr_variance_constant(moments: KernelMoments) -> float:
    """Boundary variance constant of the local linear estimator."""
    mu, nu = moments.mu, moments.nu
    num = mu[2] ** 2 * nu[0] - 2.0 * mu[1] * mu[2] * nu[1] + mu[1] ** 2 * nu[2]
    den = (mu[0] * mu[2] - mu[1] ** 2) ** 2
    return num / den


def _bias_ratios(mu):
    den = mu[0] * mu[2] - mu[1] ** 2
    a = (mu[2] ** 2 - mu[1] * mu[3]) / den
    a_check = (mu[2] * mu[3] - mu[1] * mu[4]) / den
    a_tilde = (mu[2] ** 2 - mu[1] * mu[4]) / den
    return a, a_check, a_tilde


def scalar_constants(moments: KernelMoments, grid) -> ScalarConstants:
    """All scalar constants for one side: bias ratios, variance constants,
    the second-derivative constants and the estimate/bias cross term."""
    mu = moments.mu
    a, a_check, a_tilde = _bias_ratios(mu)
    b = llr_variance_constant(moments)

    set_p1 = build_asymptotic(moments, grid, p=1)
    q = set_p1.q
    ones = np.ones(q)
    b_y = float(ones @ set_p1.core_block("11") @ ones) / q**2

    set_p2 = build_asymptotic(moments, grid, p=2)
    e2 = np.array([0.0, 1.0])
    b_star = float(e2 @ set_p2.core_block("22") @ e2)
    cross_12 = float(ones @ set_p2.core_block("12")[:, 1])

    set_p3 = build_asymptotic(moments, grid, p=3)
    fvals = np.asarray(grid.f_at_c, dtype=float)
    e2_3 = np.array([0.0, 1.0, 0.0])
    a_star = float(
        mu[4] * e2_3 @ set_p3.sinv_block("21") @ fvals
        + fvals.sum() * e2_3 @ set_p3.sinv_block("22") @ mu[5:8]
    )
    return ScalarConstants(
        a=a,
        a_check=a_check,
        a_tilde=a_tilde,
        a_star=a_star,
        b=b,
        b_y=b_y,
        b_star=b_star,
        cross_12=cross_12,
    )


def cross_constant(set_y: SandwichSet, set_t: SandwichSet, cross_sigma: np.ndarray) -> float:
    """b_YT: ones' (S_Y^{-1} Sigma_YT S_T^{-1})_{11} ones / q^2."""
    q = set_y.q
    ones = np.ones(q)
    m = set_y.S_inv @ cross_sigma @ set_t.S_inv
    return float(ones @ m[:q, :q] @ ones) / q**2
