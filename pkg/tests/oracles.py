"""Independent oracles used by the test suite.

These deliberately avoid the package's own solution paths: the composite
check-loss problem is restated as a linear program and handed to HiGHS, and
kernel moments are recomputed by adaptive quadrature.
"""

import numpy as np
from scipy import integrate, optimize, sparse

from rdlcqr.kernels import eval_kernel


def lp_composite_fit(y, design, weights, taus):
    """Exact minimizer of the weighted composite check-loss via an LP.

    Variables: q intercepts, m slopes, and split residuals u, v >= 0 with
    y_i - a_k - d_i'beta = u_ik - v_ik.  Objective sums w_i*(tau_k u + (1-tau_k) v).
    Returns (intercepts, slopes, objective).
    """
    y = np.asarray(y, dtype=float)
    design = np.asarray(design, dtype=float)
    weights = np.asarray(weights, dtype=float)
    taus = np.asarray(taus, dtype=float)
    n, m = design.shape
    q = taus.size
    nq = n * q

    cost = np.concatenate(
        [
            np.zeros(q + m),
            (weights[:, None] * taus[None, :]).ravel(),
            (weights[:, None] * (1.0 - taus)[None, :]).ravel(),
        ]
    )
    # constraint rows indexed by (i, k): a_k + d_i'beta + u_ik - v_ik = y_i
    rows, cols, vals = [], [], []
    for i in range(n):
        for k in range(q):
            r = i * q + k
            rows.append(r)
            cols.append(k)
            vals.append(1.0)
            for j in range(m):
                rows.append(r)
                cols.append(q + j)
                vals.append(design[i, j])
            rows.append(r)
            cols.append(q + m + r)
            vals.append(1.0)
            rows.append(r)
            cols.append(q + m + nq + r)
            vals.append(-1.0)
    a_eq = sparse.csr_matrix((vals, (rows, cols)), shape=(nq, q + m + 2 * nq))
    b_eq = np.repeat(y, q)
    bounds = [(None, None)] * (q + m) + [(0, None)] * (2 * nq)
    res = optimize.linprog(cost, A_eq=a_eq, b_eq=b_eq, bounds=bounds, method="highs")
    assert res.status == 0, f"LP oracle failed: {res.message}"
    return res.x[:q], res.x[q : q + m], res.fun


def quad_moment(kernel_spec, j, side="above", squared=False):
    """One-sided kernel moment by adaptive quadrature."""
    f = (
        (lambda u: u**j * eval_kernel(kernel_spec, u) ** 2)
        if squared
        else (lambda u: u**j * eval_kernel(kernel_spec, u))
    )
    bound = kernel_spec.support_bound
    lo, hi = (0.0, bound) if side == "above" else (-bound, 0.0)
    val, _ = integrate.quad(f, lo, hi, epsabs=1e-13, epsrel=1e-13)
    return val
