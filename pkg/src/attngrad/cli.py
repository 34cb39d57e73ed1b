"""Command-line entry point.

Subcommands: ``gen`` (sample a bounded instance to matrix files),
``grad`` (compute a gradient by any method), ``verify`` (run the
oracle agreement suite on an instance), ``bench`` (scaling benchmark
with CSV output), and ``hardness`` (derivative-bound, Riemann and
reduction-consistency checks on hard instances).

All reports are JSON on stdout carrying the tool version and a full
parameter echo. Exit codes: 0 all checks pass, 1 a check or input
failed, 2 usage error. ``--threads 1`` pins the BLAS/OpenMP pools
before numpy is imported, which makes runs bitwise reproducible.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import __version__

FD_TOL = 1e-5
BRUTE_TOL = 1e-10
REL_TOL = 1e-4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="attngrad",
        description="attention-loss gradients: exact, near-linear approximate, "
        "verification oracles, and hardness-lab checks",
    )
    parser.add_argument("--version", action="version", version=f"attngrad {__version__}")
    parser.add_argument("--threads", type=int, default=None,
                        help="pin BLAS/OpenMP thread count (1 = bitwise reproducible)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="sample a bounded instance into a directory")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--B", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise-sigma", type=float, default=0.1)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("grad", help="compute the gradient of a stored instance")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--method", choices=("exact", "fast", "fd", "brute"), default="exact")
    p.add_argument("--eps", type=float, default=1e-4, help="fast-path accuracy target")
    p.add_argument("--step", type=float, default=1e-4, help="finite-difference step")

    p = sub.add_parser("verify", help="oracle agreement suite on a stored instance")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--eps", type=float, default=1e-4)
    p.add_argument("--step", type=float, default=1e-4)

    p = sub.add_parser("bench", help="scaling benchmark, JSON + CSV")
    p.add_argument("--sizes", required=True, help="comma-separated n values")
    p.add_argument("--d", type=int, default=8)
    p.add_argument("--B", type=float, default=0.8)
    p.add_argument("--eps", type=float, default=1e-2)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--methods", default="exact,fast")
    p.add_argument("--csv", default=None, help="also write rows to this CSV file")

    p = sub.add_parser("hardness", help="hardness-lab checks on generated instances")
    p.add_argument("--n", type=int, default=64)
    p.add_argument("--d", type=int, default=4)
    p.add_argument("--B", type=float, default=1.0)
    p.add_argument("--m", type=int, default=100, help="Riemann sample count")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--frac-B", type=float, default=0.5, dest="frac_b")
    p.add_argument("--grid", type=int, default=101, help="lambda grid points")
    return parser


def _emit(report: dict) -> None:
    json.dump(report, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")


def _cmd_gen(args) -> int:
    from .forward import random_instance, save_instance

    inst = random_instance(args.n, args.d, args.B, args.seed, args.noise_sigma)
    save_instance(inst, args.out, {"seed": args.seed, "noise_sigma": args.noise_sigma,
                                   "tool_version": __version__})
    _emit({"tool_version": __version__, "command": "gen", "out": args.out,
           "n": args.n, "d": args.d, "B": args.B, "seed": args.seed,
           "noise_sigma": args.noise_sigma})
    return 0


def _cmd_grad(args) -> int:
    from .forward import load_instance
    from .gradient import gradient_exact
    from .lowrank import gradient_fast
    from .oracles import brute_kron_gradient, finite_diff_gradient

    inst = load_instance(args.in_dir)
    if args.method == "exact":
        res = gradient_exact(inst)
    elif args.method == "fast":
        res = gradient_fast(inst, args.eps)
    elif args.method == "fd":
        res = finite_diff_gradient(inst, args.step)
    else:
        res = brute_kron_gradient(inst)
    report = {
        "tool_version": __version__, "command": "grad", "in": args.in_dir,
        "n": inst.n, "d": inst.d, "B": inst.B, "method": res.method,
        "elapsed_seconds": res.elapsed_seconds, "g": res.g.tolist(),
    }
    if args.method == "fast":
        report["eps"] = args.eps
        report.update(res.info)
    if args.method == "fd":
        report["step"] = args.step
    _emit(report)
    return 0


def _cmd_verify(args) -> int:
    from .gradient import gradient_exact
    from .forward import load_instance
    from .lowrank import gradient_fast
    from .oracles import BRUTE_D_CAP, BRUTE_N_CAP, brute_kron_gradient, compare, \
        finite_diff_gradient

    inst = load_instance(args.in_dir)
    exact = gradient_exact(inst)
    checks = []

    fd = finite_diff_gradient(inst, args.step)
    diff = compare(exact, fd)
    checks.append({"name": "exact_vs_fd", "max_abs": diff.max_abs,
                   "tol": FD_TOL, "status": "pass" if diff.max_abs <= FD_TOL else "fail"})

    if inst.n <= BRUTE_N_CAP and inst.d <= BRUTE_D_CAP:
        diff = compare(exact, brute_kron_gradient(inst))
        checks.append({"name": "exact_vs_brute", "max_abs": diff.max_abs,
                       "tol": BRUTE_TOL,
                       "status": "pass" if diff.max_abs <= BRUTE_TOL else "fail"})
    else:
        checks.append({"name": "exact_vs_brute", "status": "skipped",
                       "reason": f"brute oracle capped at n<={BRUTE_N_CAP}, d<={BRUTE_D_CAP}"})

    diff = compare(gradient_fast(inst, args.eps), exact)
    checks.append({"name": "fast_vs_exact", "max_abs": diff.max_abs,
                   "tol": args.eps,
                   "status": "pass" if diff.max_abs <= args.eps else "fail"})

    ok = all(c["status"] != "fail" for c in checks)
    _emit({"tool_version": __version__, "command": "verify", "in": args.in_dir,
           "n": inst.n, "d": inst.d, "B": inst.B, "eps": args.eps,
           "step": args.step, "checks": checks, "pass": ok})
    return 0 if ok else 1


def _cmd_bench(args) -> int:
    from .bench import bench_csv_rows, run_scaling_bench

    sizes = [int(tok) for tok in args.sizes.split(",") if tok]
    methods = tuple(tok for tok in args.methods.split(",") if tok)
    reports = run_scaling_bench(sizes, args.d, args.B, args.eps,
                                args.repeats, args.seed, methods)
    rows = bench_csv_rows(reports)
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write("\n".join(rows) + "\n")
    _emit({
        "tool_version": __version__, "command": "bench",
        "sizes": sizes, "d": args.d, "B": args.B, "eps": args.eps,
        "repeats": args.repeats, "seed": args.seed,
        "reports": [
            {"method": r.method, "sizes": r.sizes, "seconds": r.seconds,
             "max_err_vs_exact": r.max_err_vs_exact,
             "fitted_loglog_slope": r.fitted_loglog_slope,
             "errors": r.errors}
            for r in reports
        ],
        "csv": rows if not args.csv else args.csv,
    })
    return 0


def _cmd_hardness(args) -> int:
    import numpy as np

    from .hardness import f_lambda, f_lambda_derivative, factorized_hard_instance, \
        gen_hard_instance, gradient_to_forward, hard_attention_instance, \
        riemann_reduction

    hi = gen_hard_instance(args.n, args.d, args.B, args.frac_b, args.seed)
    grid = np.linspace(0.0, 1.0, args.grid)

    fprimes = np.array([f_lambda_derivative(hi, lam)[0] for lam in grid])
    bound = 8.0 * args.B * args.n
    deriv_ok = bool(np.abs(fprimes).max() <= bound + 1e-9)

    step = 1e-5
    fd_errs = []
    for lam, fp in zip(grid, fprimes):
        fd = (f_lambda(hi, lam + step) - f_lambda(hi, lam - step)) / (2 * step)
        fd_errs.append(float(abs(fd - fp) / (1.0 + abs(fp))))
    fd_ok = max(fd_errs) <= REL_TOL

    report = riemann_reduction(hi, args.m, args.grid, strict=False)

    fhi, q, k = factorized_hard_instance(args.n, args.d, args.B, args.seed)
    red_errs = []
    for lam in np.linspace(0.0, 1.0, 11):
        from_grad = gradient_to_forward(hard_attention_instance(q, k, fhi.V, lam), lam)
        fp, _ = f_lambda_derivative(fhi, lam)
        red_errs.append(float(abs(from_grad - fp) / (1.0 + abs(fp))))
    red_ok = max(red_errs) <= REL_TOL

    ok = deriv_ok and fd_ok and report.holds and red_ok
    _emit({
        "tool_version": __version__, "command": "hardness",
        "n": args.n, "d": args.d, "B": args.B, "m": args.m,
        "seed": args.seed, "frac_B": args.frac_b, "grid_points": args.grid,
        "derivative_bound": {"max_abs_fprime": float(np.abs(fprimes).max()),
                             "bound_8Bn": bound, "pass": deriv_ok},
        "fd_match": {"max_rel_err": max(fd_errs), "tol": REL_TOL, "pass": fd_ok},
        "riemann": {"t_m": report.t_m, "f1_minus_f0": report.f1_minus_f0,
                    "bound_b": report.bound_b, "m": report.m,
                    "max_abs_fsecond": report.max_abs_fsecond,
                    "pass": report.holds},
        "reduction_consistency": {"max_rel_err": max(red_errs), "tol": REL_TOL,
                                  "lambda_points": 11, "pass": red_ok},
        "pass": ok,
    })
    return 0 if ok else 1


_COMMANDS = {
    "gen": _cmd_gen,
    "grad": _cmd_grad,
    "verify": _cmd_verify,
    "bench": _cmd_bench,
    "hardness": _cmd_hardness,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads is not None:
        # must happen before numpy is imported by the lazy command imports
        for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS",
                    "NUMEXPR_NUM_THREADS"):
            os.environ[var] = str(args.threads)
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, OSError) as exc:
        print(f"attngrad {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
