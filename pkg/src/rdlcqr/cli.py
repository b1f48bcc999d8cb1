"""Command-line interface.

Subcommands: estimate (sharp/fuzzy/kink from a CSV), bandwidth (selector
report), are (boundary efficiency table), simulate (seeded Monte Carlo),
plotdata (binned means, fitted curves and a bandwidth sweep for plotting).
Errors are emitted as machine-readable JSON with stable codes and a nonzero
exit status.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np
import pandas as pd

from .are import are_table
from .exceptions import RdlcqrError
from .fuzzy import estimate_fuzzy, null_restricted_test
from .inference import estimate_kink, select_bandwidths, sharp_inference, side_nuisances
from .io_utils import binned_means, emit_json, load_csv
from .kernels import KernelSpec
from .laws import law_from_name
from .llr import fit_llr, llr_inference
from .montecarlo import KNOWN_ESTIMATORS, DgpSpec, run_study
from .sandwich import llr_variance_constant, scalar_constants
from .kernels import one_sided_moments

__all__ = ["main", "build_parser"]


def _add_data_args(p):
    p.add_argument("--data", required=True, help="input CSV with a header row")
    p.add_argument("--x", default="x", help="running-variable column")
    p.add_argument("--y", default="y", help="outcome column")
    p.add_argument("--t", default=None, help="treatment column (fuzzy designs)")
    p.add_argument("--z", default=None, help="comma-separated covariate columns")
    p.add_argument("--cutoff", type=float, default=0.0)


def _add_common_args(p):
    p.add_argument(
        "--kernel",
        default="triangular",
        choices=["triangular", "epanechnikov", "uniform", "gaussian"],
    )
    p.add_argument("--q", type=int, default=7, help="number of quantile positions")
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--out", default=None, help="output path (default: stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rdlcqr",
        description="Regression discontinuity via local composite quantile regression",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    est = sub.add_parser("estimate", help="treatment-effect estimate and intervals")
    _add_data_args(est)
    _add_common_args(est)
    est.add_argument("--design", default="sharp", choices=["sharp", "fuzzy", "kink"])
    est.add_argument("--estimator", default="lcqr", choices=["lcqr", "llr"])
    est.add_argument("--bandwidth", default="auto", help="auto | rot | <number>")
    est.add_argument("--equal-bandwidth", action="store_true", default=True)
    est.add_argument("--two-bandwidth", dest="equal_bandwidth", action="store_false")
    est.add_argument("--fixed-n", action="store_true", help="small-sample variance mode")
    est.add_argument("--tau0", type=float, default=0.0, help="hypothesized effect")
    est.add_argument("--invert-ci", action="store_true", help="fuzzy test-inversion CI")

    bw = sub.add_parser("bandwidth", help="bandwidth selector report")
    _add_data_args(bw)
    _add_common_args(bw)

    are = sub.add_parser("are", help="boundary efficiency table")
    are.add_argument("--laws", default="normal,laplace,t3,mix3,mix10")
    are.add_argument("--q", default="1,5,9,19,99", help="comma-separated q values")
    are.add_argument(
        "--kernel",
        default="triangular",
        choices=["triangular", "epanechnikov", "uniform", "gaussian"],
    )
    are.add_argument("--format", default="csv", choices=["csv", "md", "json"])
    are.add_argument("--out", default=None)

    sim = sub.add_parser("simulate", help="seeded Monte Carlo study")
    sim.add_argument("--model", default="lee", choices=["lee", "lm"])
    sim.add_argument("--dgp", type=int, default=1, choices=[1, 2, 3, 4, 5])
    sim.add_argument("--hetero", action="store_true")
    sim.add_argument("--n", type=int, default=500)
    sim.add_argument("--reps", type=int, default=1000)
    sim.add_argument("--seed", type=int, default=42)
    sim.add_argument("--estimators", default="cqr,cqr-bc")
    sim.add_argument("--fixed-n", action="store_true", help="add the fixed-n variant")
    sim.add_argument("--equal-bandwidth", action="store_true", default=True)
    sim.add_argument("--two-bandwidth", dest="equal_bandwidth", action="store_false")
    sim.add_argument("--kink-bandwidth", type=float, default=0.3)
    sim.add_argument("--raw-scale", action="store_true", help="draw errors unstandardized")
    sim.add_argument("--fuzzy-jump", default=None, help="lo,hi compliance probabilities")
    sim.add_argument("--q", type=int, default=7)
    sim.add_argument("--level", type=float, default=0.95)
    sim.add_argument(
        "--kernel",
        default="triangular",
        choices=["triangular", "epanechnikov", "uniform", "gaussian"],
    )
    sim.add_argument("--out", default=None)

    plot = sub.add_parser("plotdata", help="binned means, fit curves, bandwidth sweep")
    _add_data_args(plot)
    _add_common_args(plot)
    plot.add_argument("--bins", type=int, default=50)
    plot.add_argument("--sweep-start", type=float, default=0.05)
    plot.add_argument("--sweep-stop", type=float, default=1.0)
    plot.add_argument("--sweep-step", type=float, default=0.025)
    plot.add_argument("--out-prefix", required=True, help="prefix for the emitted CSVs")
    return parser


def _emit(text: str, out: str | None):
    if out is None:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    else:
        with open(out, "w") as fh:
            fh.write(text if text.endswith("\n") else text + "\n")


def _load(args):
    z = args.z.split(",") if args.z else None
    return load_csv(args.data, x=args.x, y=args.y, t=args.t, z=z, cutoff=args.cutoff)


def _bandwidth_arg(value: str):
    if value in ("auto", "rot"):
        return value
    try:
        return float(value)
    except ValueError as exc:
        raise RdlcqrError(f"bandwidth must be auto, rot, or a number, got {value!r}") from exc


def _cmd_estimate(args) -> int:
    sample = _load(args)
    kernel = KernelSpec(args.kernel)
    mode = "fixed_n" if args.fixed_n else "asymptotic"
    bandwidth = _bandwidth_arg(args.bandwidth)
    if args.design == "kink":
        h = bandwidth if isinstance(bandwidth, float) else 0.3
        result = estimate_kink(sample, q=args.q, bandwidth=h, kernel=kernel, level=args.level)
    elif args.design == "fuzzy":
        if sample.t is None:
            raise RdlcqrError("fuzzy design requires --t", code="missing_column")
        if args.invert_ci or args.tau0 != 0.0:
            result = null_restricted_test(
                sample,
                tau0=args.tau0,
                q=args.q,
                kernel=kernel,
                bandwidth=bandwidth,
                equal_bandwidth=args.equal_bandwidth,
                mode=mode,
                level=args.level,
                invert_ci=args.invert_ci,
            )
        else:
            result, _ = estimate_fuzzy(
                sample,
                q=args.q,
                kernel=kernel,
                bandwidth=bandwidth,
                equal_bandwidth=args.equal_bandwidth,
                mode=mode,
                level=args.level,
            )
    elif args.estimator == "llr":
        h = bandwidth if isinstance(bandwidth, float) else None
        if h is None:
            nuis = side_nuisances(sample, args.q, kernel)
            bwres = select_bandwidths(
                sample, args.q, kernel, "rot", args.equal_bandwidth, nuisances=nuis
            )
            h = bwres.h_above
        result = llr_inference(sample, h, kernel, level=args.level)
    else:
        result = sharp_inference(
            sample,
            q=args.q,
            kernel=kernel,
            bandwidth=bandwidth,
            equal_bandwidth=args.equal_bandwidth,
            mode=mode,
            level=args.level,
            tau0=args.tau0,
        )
    _emit(emit_json({"result": result.to_dict()}), args.out)
    return 0


def _cmd_bandwidth(args) -> int:
    sample = _load(args)
    kernel = KernelSpec(args.kernel)
    nuis = side_nuisances(sample, args.q, kernel)
    rows = {}
    for method in ("rot", "auto"):
        for equal in (True, False):
            res = select_bandwidths(sample, args.q, kernel, method, equal, nuisances=nuis)
            rows[f"{res.method}_{'equal' if equal else 'two'}"] = {
                "h_above": res.h_above,
                "h_below": res.h_below,
                "fallback": res.fallback,
            }
    _emit(emit_json({"bandwidths": rows}), args.out)
    return 0


def _cmd_are(args) -> int:
    laws = [law_from_name(name) for name in args.laws.split(",")]
    qs = [int(v) for v in args.q.split(",")]
    kernel = KernelSpec(args.kernel)
    names, qlist, values = are_table(laws, qs, kernel)
    frame = pd.DataFrame(values, index=names, columns=[f"q={v}" for v in qlist])
    frame.index.name = "law"
    if args.format == "csv":
        _emit(frame.round(4).to_csv(), args.out)
    elif args.format == "md":
        header = "| law | " + " | ".join(frame.columns) + " |"
        rule = "|" + "---|" * (len(frame.columns) + 1)
        rows = [
            "| " + str(idx) + " | " + " | ".join(f"{v:.4f}" for v in row) + " |"
            for idx, row in frame.iterrows()
        ]
        _emit("\n".join([header, rule, *rows]), args.out)
    else:
        _emit(
            emit_json(
                {"laws": names, "q": qlist, "are": [list(map(float, row)) for row in values]}
            ),
            args.out,
        )
    return 0


def _cmd_simulate(args) -> int:
    estimators = tuple(e.strip() for e in args.estimators.split(",") if e.strip())
    if args.fixed_n and "cqr-bc" in estimators and "cqr-bc-fn" not in estimators:
        estimators = estimators + ("cqr-bc-fn",)
    for e in estimators:
        if e not in KNOWN_ESTIMATORS:
            raise RdlcqrError(
                f"unknown estimator {e!r}; expected subset of {KNOWN_ESTIMATORS}"
            )
    fuzzy_jump = None
    if args.fuzzy_jump:
        lo, hi = (float(v) for v in args.fuzzy_jump.split(","))
        fuzzy_jump = (lo, hi)
    spec = DgpSpec(
        model=args.model,
        dgp=args.dgp,
        heteroskedastic=args.hetero,
        n=args.n,
        fuzzy_jump=fuzzy_jump,
        raw_scale=args.raw_scale,
    )
    summaries = run_study(
        spec,
        estimators=estimators,
        reps=args.reps,
        seed=args.seed,
        level=args.level,
        q=args.q,
        kernel=KernelSpec(args.kernel),
        equal_bandwidth=args.equal_bandwidth,
        kink_bandwidth=args.kink_bandwidth,
    )
    frame = pd.DataFrame([summaries[e].to_row() for e in estimators])
    text = frame.to_csv(index=False, float_format="%.17g")
    _emit(text, args.out)
    return 0


def _cmd_plotdata(args) -> int:
    sample = _load(args)
    kernel = KernelSpec(args.kernel)
    prefix = args.out_prefix

    bins_rows = []
    curve_rows = []
    for side in ("above", "below"):
        xs, ys = sample.side(side)[:2]
        centers, means, counts = binned_means(xs, ys, args.bins)
        for c, m, k in zip(centers, means, counts):
            bins_rows.append({"side": side, "x": c, "mean": m, "count": k})
        coefs = np.polynomial.polynomial.polyfit(xs, ys, 4)
        grid = np.linspace(xs.min(), xs.max(), 200)
        fitted = np.polynomial.polynomial.polyval(grid, coefs)
        for g, f in zip(grid, fitted):
            curve_rows.append({"side": side, "x": g, "fit": f})
    pd.DataFrame(bins_rows).to_csv(f"{prefix}_bins.csv", index=False, float_format="%.17g")
    pd.DataFrame(curve_rows).to_csv(f"{prefix}_curves.csv", index=False, float_format="%.17g")

    nuis_a, nuis_b = side_nuisances(sample, args.q, kernel)
    moments = one_sided_moments(kernel, "above")
    b_const = llr_variance_constant(moments)
    cst_a = scalar_constants(moments, nuis_a.grid)
    cst_b = scalar_constants(one_sided_moments(kernel, "below"), nuis_b.grid)
    sweep_rows = []
    n_steps = int(round((args.sweep_stop - args.sweep_start) / args.sweep_step)) + 1
    xa, ya = sample.side("above")[:2]
    xb, yb = sample.side("below")[:2]
    from .solver import fit_boundary

    for i in range(n_steps):
        h = args.sweep_start + i * args.sweep_step
        try:
            fa = fit_boundary(xa, ya, 0.0, args.q, 1, h, kernel)
            fb = fit_boundary(xb, yb, 0.0, args.q, 1, h, kernel)
            la = fit_llr(xa, ya, 0.0, h, kernel)
            lb = fit_llr(xb, yb, 0.0, h, kernel)
        except RdlcqrError:
            continue
        point = fa.cond_mean - fb.cond_mean
        point_llr = la.cond_mean - lb.cond_mean
        var_cqr = (
            cst_a.b_y * nuis_a.sigma**2 / nuis_a.fx + cst_b.b_y * nuis_b.sigma**2 / nuis_b.fx
        ) / (sample.n * h)
        var_llr = b_const * (
            nuis_a.sigma**2 / nuis_a.fx + nuis_b.sigma**2 / nuis_b.fx
        ) / (sample.n * h)
        se_cqr, se_llr = float(np.sqrt(var_cqr)), float(np.sqrt(var_llr))
        ratio = se_cqr / se_llr
        sweep_rows.append(
            {"estimator": "lcqr", "h": h, "estimate": point, "se": se_cqr,
             "lo": point - 2 * se_cqr, "hi": point + 2 * se_cqr, "se_ratio": ratio}
        )
        sweep_rows.append(
            {"estimator": "llr", "h": h, "estimate": point_llr, "se": se_llr,
             "lo": point_llr - 2 * se_llr, "hi": point_llr + 2 * se_llr, "se_ratio": ratio}
        )
    pd.DataFrame(sweep_rows).to_csv(f"{prefix}_sweep.csv", index=False, float_format="%.17g")
    _emit(
        emit_json(
            {
                "outputs": {
                    "bins": f"{prefix}_bins.csv",
                    "curves": f"{prefix}_curves.csv",
                    "sweep": f"{prefix}_sweep.csv",
                }
            }
        ),
        None,
    )
    return 0


_COMMANDS = {
    "estimate": _cmd_estimate,
    "bandwidth": _cmd_bandwidth,
    "are": _cmd_are,
    "simulate": _cmd_simulate,
    "plotdata": _cmd_plotdata,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except RdlcqrError as exc:
        sys.stderr.write(emit_json({"error": exc.to_dict()}) + "\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
