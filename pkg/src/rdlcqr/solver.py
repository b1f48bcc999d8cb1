"""Composite quantile check-loss minimization at a boundary point.

The objective couples q check losses through a shared set of slope
coefficients:

    sum_k sum_i  w_i * rho_{tau_k}(y_i - a_k - d_i' beta)

with tau_k = k/(q+1), rho_tau(r) = r * (tau - 1{r<0}), kernel weights w_i and
an arbitrary slope design d_i (local polynomial columns, optionally treatment
interactions and covariates).  The problem is convex; it is solved by a
majorize-minimize iteration on the standard epsilon-perturbed quadratic
majorizer of the check loss.  Each accepted step is required not to increase
the exact objective, and the perturbation is annealed across stages so the
iterate converges to the exact minimizer (verified against an LP oracle in
the test suite).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import CollinearCovariates, InsufficientData, SolverDiverged
from .kernels import KernelSpec, eval_kernel

__all__ = [
    "LcqrFit",
    "SolverOptions",
    "check_loss",
    "objective",
    "solve_cqr",
    "fit_boundary",
    "fit_boundary_with_covariates",
    "tau_grid",
]


def tau_grid(q: int) -> np.ndarray:
    """Equally spaced quantile positions k/(q+1), k = 1..q."""
    if q < 1:
        raise ValueError(f"q must be >= 1, got {q}")
    return np.arange(1, q + 1) / (q + 1.0)


def check_loss(r, tau):
    """rho_tau(r) = tau*r - r*1{r<0}, vectorized over r."""
    r = np.asarray(r, dtype=float)
    return r * (tau - (r < 0))


@dataclass
class SolverOptions:
    tol: float = 1e-8
    max_iter: int = 5000
    eps_scale: float = 1e-4
    # perturbation annealing: eps shrinks by eps_decay per stage down to
    # eps_floor_ratio times the response scale
    eps_decay: float = 1e-2
    eps_floor_ratio: float = 1e-12


@dataclass
class LcqrFit:
    """Result of one boundary fit."""

    q: int
    p: int
    intercepts: np.ndarray
    slopes: np.ndarray
    cond_mean: float
    bandwidth: float
    n_effective: int
    objective_value: float
    iterations: int
    converged: bool
    trace: np.ndarray = field(repr=False, default=None)

    @property
    def deriv1(self) -> float:
        """First-derivative estimate (the shared linear slope)."""
        return float(self.slopes[0])

    @property
    def deriv2(self) -> float:
        """Second-derivative estimate 2*b_2; requires p >= 2."""
        if self.p < 2:
            raise ValueError("second derivative needs a fit with p >= 2")
        return 2.0 * float(self.slopes[1])


def objective(y, design, weights, taus, intercepts, slopes) -> float:
    """Exact composite check-loss objective at the given parameters."""
    y = np.asarray(y, dtype=float)
    resid = (y - np.asarray(design, dtype=float) @ np.asarray(slopes, dtype=float))[:, None]
    resid = resid - np.asarray(intercepts, dtype=float)[None, :]
    taus = np.asarray(taus, dtype=float)
    loss = resid * (taus[None, :] - (resid < 0))
    return float(np.asarray(weights, dtype=float) @ loss.sum(axis=1))


def _wls_start(y, design, weights, taus):
    """Weighted LS fit for slopes; intercepts at residual quantiles."""
    n, m = design.shape
    X = np.column_stack([np.ones(n), design])
    sw = np.sqrt(weights)
    coef, *_ = np.linalg.lstsq(sw[:, None] * X, sw * y, rcond=None)
    resid = y - X @ coef
    intercepts = coef[0] + np.quantile(resid, taus)
    return intercepts, coef[1:]


def _interp_row(flat, design, q, m):
    i, k = divmod(int(flat), q)
    row = np.zeros(q + m)
    row[k] = 1.0
    row[q:] = design[i]
    return row, i


def _vertex_certificate(y, design, weights, taus, basis, theta):
    """Dual-feasibility check at an interpolation vertex.

    Stationarity requires sum_ik w_i s_ik row_ik = 0 with s_ik = psi(r_ik)
    fixed off the active set and s_ik free in [tau_k - 1, tau_k] on it.  The
    square solve over the basis rows settles the generic case; at degenerate
    vertices (more zero residuals than parameters) the multipliers may need
    to spread over every active row, which is a small box-constrained
    least-squares feasibility problem.  Returns (certified, worst_row).
    """
    n, m = design.shape
    q = taus.size
    dim = q + m
    resid = (y - design @ theta[q:])[:, None] - theta[:q][None, :]
    psi = taus[None, :] - (resid < 0)
    g = np.empty(dim)
    wpsi = weights[:, None] * psi
    g[:q] = wpsi.sum(axis=0)
    g[q:] = design.T @ wpsi.sum(axis=1)
    mat = np.empty((dim, dim))
    for c, flat in enumerate(basis):
        row, i = _interp_row(flat, design, q, m)
        k = flat % q
        # remove this basis entry's fixed-psi contribution from g
        g -= weights[i] * psi[i, k] * row
        mat[:, c] = weights[i] * row
    try:
        s = np.linalg.solve(mat, -g)
    except np.linalg.LinAlgError:
        return False, -1
    lo = np.array([taus[f % q] - 1.0 for f in basis])
    hi = np.array([taus[f % q] for f in basis])
    viol = np.maximum(lo - s, s - hi)
    worst = int(np.argmax(viol))
    if viol[worst] <= 1e-11:
        return True, worst

    act_tol = 1e-10 * (1.0 + float(np.max(np.abs(y))))
    active = [int(f) for f in np.flatnonzero(np.abs(resid).ravel() <= act_tol)]
    if len(active) > dim and set(basis) <= set(active):
        from scipy.optimize import lsq_linear

        g_act = np.empty(dim)
        g_act[:q] = wpsi.sum(axis=0)
        g_act[q:] = design.T @ wpsi.sum(axis=1)
        mat_act = np.empty((dim, len(active)))
        lo_act = np.empty(len(active))
        hi_act = np.empty(len(active))
        for c, flat in enumerate(active):
            row, i = _interp_row(flat, design, q, m)
            k = flat % q
            g_act -= weights[i] * psi[i, k] * row
            mat_act[:, c] = weights[i] * row
            lo_act[c] = taus[k] - 1.0
            hi_act[c] = taus[k]
        sol = lsq_linear(mat_act, -g_act, bounds=(lo_act, hi_act), method="bvls")
        gap = float(np.max(np.abs(mat_act @ sol.x + g_act)))
        if gap <= 1e-9 * (1.0 + float(np.max(np.abs(g_act)))):
            return True, worst
    return False, worst


def _polish(y, design, weights, taus, a, beta, obj_cur, max_pivots=40):
    """Jump to the exact check-loss minimizer from a nearby iterate.

    The minimum sits at a vertex where q + m residuals vanish.  Starting from
    the q + m smallest current residuals (kept linearly independent), pivot
    toward dual feasibility: while the certificate fails, evict its worst
    basis row and bring in the best replacement from a pool of small-residual
    rows.  A certified vertex is the exact minimizer; it is returned only if
    its objective does not exceed the incoming one.
    """
    n, m = design.shape
    q = taus.size
    dim = q + m
    resid = (y - design @ beta)[:, None] - a[None, :]
    order = np.argsort(np.abs(resid), axis=None)
    # candidate rows: the smallest residuals within each quantile column (the
    # optimum interpolates at least one point per quantile) plus the smallest
    # overall, so slope pivots are reachable too
    per_col = min(n, 6)
    pool = set()
    for k in range(q):
        for i in np.argsort(np.abs(resid[:, k]))[:per_col]:
            pool.add(int(i) * q + k)
    pool.update(int(f) for f in order[: min(order.size, 3 * dim)])

    basis, rows = [], []
    for flat in order:
        row, _ = _interp_row(flat, design, q, m)
        cand = rows + [row]
        if np.linalg.matrix_rank(np.asarray(cand)) == len(cand):
            basis.append(int(flat))
            rows.append(row)
            if len(basis) == dim:
                break
    if len(basis) < dim:
        return None
    pool = sorted(pool | set(basis))

    def solve_vertex(idx):
        mat = np.empty((dim, dim))
        rhs = np.empty(dim)
        for r, flat in enumerate(idx):
            mat[r], i = _interp_row(flat, design, q, m)
            rhs[r] = y[i]
        try:
            theta = np.linalg.solve(mat, rhs)
        except np.linalg.LinAlgError:
            return None
        if not np.all(np.isfinite(theta)) or np.max(np.abs(mat @ theta - rhs)) > 1e-8 * (
            1.0 + np.max(np.abs(rhs))
        ):
            return None
        return theta, objective(y, design, weights, taus, theta[:q], theta[q:])

    cur = solve_vertex(basis)
    if cur is None:
        return None
    theta, obj = cur
    visited = {frozenset(basis)}
    for _ in range(max_pivots):
        certified, worst = _vertex_certificate(y, design, weights, taus, basis, theta)
        if certified:
            if obj <= obj_cur:
                return theta[:q], theta[q:], obj
            return None
        # evict the dual-infeasible row; enter the pool row that minimizes the
        # exact objective, allowing equal-objective basis changes (degenerate
        # vertices) but never revisiting a basis
        best = None
        for cand in pool:
            if cand in basis:
                continue
            trial = list(basis)
            trial[worst] = cand
            if frozenset(trial) in visited:
                continue
            sol = solve_vertex(trial)
            if sol is not None and (best is None or sol[1] < best[2]):
                best = (trial, sol[0], sol[1])
        if best is None or best[2] > obj * (1.0 + 1e-14):
            return None
        basis, theta, obj = best
        visited.add(frozenset(basis))
    return None


def solve_cqr(y, design, weights, taus, options: SolverOptions | None = None):
    """Minimize the composite check-loss objective.

    Parameters
    ----------
    y : (n,) responses, all with positive weight.
    design : (n, m) slope design; the per-quantile intercept column is
        implicit and must not be included.
    weights : (n,) positive kernel weights.
    taus : (q,) quantile positions.
    options : solver controls.

    Returns
    -------
    (intercepts, slopes, obj_trace, converged)
    """
    opts = options or SolverOptions()
    y = np.asarray(y, dtype=float)
    design = np.asarray(design, dtype=float)
    weights = np.asarray(weights, dtype=float)
    taus = np.asarray(taus, dtype=float)
    n, m = design.shape
    q = taus.size

    a, beta = _wls_start(y, design, weights, taus)
    trace = [objective(y, design, weights, taus, a, beta)]

    scale = float(np.sqrt(np.average((y - np.average(y, weights=weights)) ** 2, weights=weights)))
    if scale == 0.0 or trace[0] == 0.0:
        # exact interpolation already; nothing to iterate
        return a, beta, np.asarray(trace), True

    sum_w = float(weights.sum())
    two_tau_m1 = 2.0 * taus - 1.0
    c_tau = float(two_tau_m1.sum())
    dtw = design.T @ weights

    eps = opts.eps_scale * scale
    eps_floor = opts.eps_floor_ratio * scale
    it = 0
    converged = False
    while it < opts.max_iter:
        # at the eps-perturbed optimum the exact objective sits within
        # O(eps * sum_w * q) of the true minimum, so chasing improvements
        # smaller than a sliver of that only wastes iterations: anneal (or
        # polish to the exact vertex) instead
        stage_gain = max(0.01 * eps * sum_w * q, 1e-13 * (1.0 + trace[-1]))
        stage_done = False
        while it < opts.max_iter and not stage_done:
            it += 1
            resid = (y - design @ beta)[:, None] - a[None, :]
            W = weights[:, None] / (eps + np.abs(resid))
            col_w = W.sum(axis=0)
            row_w = W.sum(axis=1)
            G = W.T @ design
            H = design.T @ (row_w[:, None] * design)
            A = np.zeros((q + m, q + m))
            A[:q, :q] = np.diag(col_w)
            A[:q, q:] = G
            A[q:, :q] = G.T
            A[q:, q:] = H
            rhs = np.empty(q + m)
            rhs[:q] = W.T @ y + two_tau_m1 * sum_w
            rhs[q:] = design.T @ (row_w * y) + c_tau * dtw
            try:
                theta = np.linalg.solve(A, rhs)
            except np.linalg.LinAlgError:
                theta, *_ = np.linalg.lstsq(A, rhs, rcond=None)
            a_new, beta_new = theta[:q], theta[q:]
            obj_new = objective(y, design, weights, taus, a_new, beta_new)
            if obj_new > trace[-1]:
                # majorizer of the perturbed loss can no longer reduce the
                # exact loss at this eps; anneal instead of accepting
                stage_done = True
                continue
            delta = max(np.max(np.abs(a_new - a)), np.max(np.abs(beta_new - beta)) if m else 0.0)
            gain = trace[-1] - obj_new
            a, beta = a_new, beta_new
            trace.append(obj_new)
            if delta < opts.tol * (1.0 + float(np.max(np.abs(theta)))) or gain < stage_gain:
                stage_done = True
        polished = _polish(y, design, weights, taus, a, beta, trace[-1])
        if polished is not None:
            a, beta, obj = polished
            trace.append(obj)
            converged = True
            break
        if eps <= eps_floor:
            converged = True
            break
        eps = max(eps * opts.eps_decay, eps_floor)
    if not converged:
        polished = _polish(y, design, weights, taus, a, beta, trace[-1])
        if polished is not None:
            a, beta, obj = polished
            trace.append(obj)
            converged = True
    return a, beta, np.asarray(trace), converged


def _positive_weight_window(x, y, point, bandwidth, kernel, extra=None):
    if bandwidth <= 0:
        raise ValueError(f"bandwidth must be positive, got {bandwidth}")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    u = (x - point) / bandwidth
    w = eval_kernel(kernel, u)
    keep = w > 0
    cols = None if extra is None else np.asarray(extra, dtype=float)[keep]
    return u[keep], y[keep], w[keep], cols


def fit_boundary(
    x,
    y,
    point: float,
    q: int,
    p: int,
    bandwidth: float,
    kernel: KernelSpec | None = None,
    options: SolverOptions | None = None,
) -> LcqrFit:
    """Local polynomial composite quantile fit at ``point``.

    Slopes are shared across the q quantiles; the conditional-mean estimate is
    the average of the fitted intercepts.  Observations with zero kernel
    weight are dropped; identifiability requires at least q + p + 1 of the
    remaining points and p + 1 distinct running-variable values.
    """
    kernel = kernel or KernelSpec()
    taus = tau_grid(q)
    u, yw, w, _ = _positive_weight_window(x, y, point, bandwidth, kernel)
    n_eff = u.size
    if n_eff < q + p + 1 or np.unique(u).size < p + 1:
        raise InsufficientData(
            f"{n_eff} weighted points ({np.unique(u).size} distinct x) cannot "
            f"identify q={q} intercepts plus p={p} slopes",
            n_effective=n_eff,
        )
    # solve in u = (x - point)/h coordinates for conditioning
    design = u[:, None] ** np.arange(1, p + 1)
    a, b_scaled, trace, converged = solve_cqr(yw, design, w, taus, options)
    if not converged:
        opts = options or SolverOptions()
        raise SolverDiverged(
            f"MM iteration cap {opts.max_iter} reached (objective {trace[-1]:.6g})",
            objective_value=float(trace[-1]),
            intercepts=a.tolist(),
        )
    slopes = b_scaled / bandwidth ** np.arange(1, p + 1)
    return LcqrFit(
        q=q,
        p=p,
        intercepts=a,
        slopes=slopes,
        cond_mean=float(np.mean(a)),
        bandwidth=float(bandwidth),
        n_effective=int(n_eff),
        objective_value=float(trace[-1]),
        iterations=int(trace.size - 1),
        converged=bool(converged),
        trace=trace,
    )


def fit_boundary_with_covariates(
    x,
    y,
    t,
    z,
    point: float = 0.0,
    q: int = 7,
    bandwidth: float = 0.3,
    kernel: KernelSpec | None = None,
    options: SolverOptions | None = None,
):
    """Pooled covariate-augmented fit; returns the treatment coefficient.

    The design stacks both sides of the cutoff: shared intercepts a_k, a base
    slope in (x - point), a treatment-dummy level shift (the estimand), the
    treatment-slope interaction, and linear covariate terms.  No standard
    error is attached; callers borrow bias and adjusted s.e. from the
    covariate-free fit.
    """
    kernel = kernel or KernelSpec()
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    z = np.asarray(z, dtype=float)
    if z.ndim == 1:
        z = z[:, None]
    extra = np.column_stack([t, z])
    u, yw, w, cols = _positive_weight_window(x, y, point, bandwidth, kernel, extra=extra)
    tw, zw = cols[:, 0], cols[:, 1:]
    # identically-zero covariates carry no information: drop them so the fit
    # reduces to the covariate-free pooled estimate
    zw = zw[:, np.ptp(zw, axis=0) + np.abs(zw).max(axis=0, initial=0.0) > 0]
    n_eff = u.size
    n_cov = zw.shape[1]
    if n_eff < q + 3 + n_cov + 1:
        raise InsufficientData(
            f"{n_eff} weighted points cannot identify the covariate-augmented fit",
            n_effective=n_eff,
        )
    design = np.column_stack([u, tw, tw * u, zw])
    # constant or outcome-copy covariates make the fit unidentified or
    # vacuous; fail loudly rather than return an arbitrary answer
    full = np.column_stack([np.ones(n_eff), design])
    if np.linalg.matrix_rank(full * np.sqrt(w)[:, None]) < full.shape[1]:
        raise CollinearCovariates(
            "covariate columns are collinear with the local design within the window"
        )
    y_c = yw - np.average(yw, weights=w)
    for j in range(n_cov):
        z_c = zw[:, j] - np.average(zw[:, j], weights=w)
        denom = np.sqrt((w * y_c**2).sum() * (w * z_c**2).sum())
        if denom > 0 and abs((w * y_c * z_c).sum()) > (1.0 - 1e-10) * denom:
            raise CollinearCovariates(
                f"covariate column {j} duplicates the outcome within the window"
            )
    taus = tau_grid(q)
    a, b, trace, converged = solve_cqr(yw, design, w, taus, options)
    if not converged:
        raise SolverDiverged("covariate-augmented MM fit hit the iteration cap")
    fit = LcqrFit(
        q=q,
        p=1,
        intercepts=a,
        slopes=b,
        cond_mean=float(np.mean(a)),
        bandwidth=float(bandwidth),
        n_effective=int(n_eff),
        objective_value=float(trace[-1]),
        iterations=int(trace.size - 1),
        converged=bool(converged),
        trace=trace,
    )
    treatment_coef = float(b[1])
    return treatment_coef, fit
