"""Scaling benchmarks contrasting the dense and low-rank gradient paths.

Timings are wall clock from a monotonic source, median of repeats,
excluding instance generation and file I/O. The headline statistic is
the fitted log-log slope of median seconds against n: the dense path
is quadratic in n at fixed d, the factored path near linear.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .forward import random_instance
from .gradient import gradient_exact
from .lowrank import gradient_fast

BENCH_METHODS = ("exact", "fast")


@dataclass
class BenchReport:
    """Per-method scaling measurements across instance sizes."""

    method: str
    sizes: list
    d: int
    B: float
    eps: float
    seconds: list
    max_err_vs_exact: list
    fitted_loglog_slope: float
    seed: int
    tool_version: str = __version__
    errors: dict = field(default_factory=dict)


def fit_loglog_slope(sizes, seconds) -> float:
    """Least-squares slope of log(seconds) against log(n)."""
    sizes = np.asarray(sizes, dtype=np.float64)
    seconds = np.asarray(seconds, dtype=np.float64)
    ok = np.isfinite(seconds) & (seconds > 0)
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(sizes[ok]), np.log(seconds[ok]), 1)[0])


def _median_time(fn, repeats: int):
    times, result = [], None
    for _ in range(repeats):
        t0 = time.perf_counter()
        result = fn()
        times.append(time.perf_counter() - t0)
    return float(np.median(times)), result


def run_scaling_bench(
    sizes, d: int, B: float, eps: float, repeats: int = 3, seed: int = 0,
    methods=BENCH_METHODS,
) -> list[BenchReport]:
    """Time each method on fresh random instances of the given sizes.

    A fast-path failure (rank cap at the given B) is recorded for that
    size and the run continues; failed sizes are excluded from the
    slope fit.
    """
    sizes = sorted(int(n) for n in sizes)
    if len(set(sizes)) != len(sizes):
        raise ValueError("sizes must be distinct")
    runs = {m: {"seconds": [], "err": [], "failures": {}} for m in methods}
    for n in sizes:
        inst = random_instance(n, d, B, seed)
        exact_g = None
        if "exact" in methods:
            secs, res = _median_time(lambda: gradient_exact(inst), repeats)
            runs["exact"]["seconds"].append(secs)
            runs["exact"]["err"].append(0.0)
            exact_g = res.g
        if "fast" in methods:
            try:
                secs, res = _median_time(lambda: gradient_fast(inst, eps), repeats)
            except ValueError as exc:
                runs["fast"]["failures"][n] = str(exc)
                runs["fast"]["seconds"].append(float("nan"))
                runs["fast"]["err"].append(float("nan"))
            else:
                if exact_g is None:
                    exact_g = gradient_exact(inst).g
                runs["fast"]["seconds"].append(secs)
                runs["fast"]["err"].append(float(np.abs(res.g - exact_g).max()))
    return [
        BenchReport(
            method=m, sizes=sizes, d=d, B=B, eps=eps,
            seconds=runs[m]["seconds"], max_err_vs_exact=runs[m]["err"],
            fitted_loglog_slope=fit_loglog_slope(sizes, runs[m]["seconds"]),
            seed=seed, errors=runs[m]["failures"],
        )
        for m in methods
    ]


def bench_csv_rows(reports: list[BenchReport]) -> list[str]:
    """CSV lines (with header) from bench reports: n,method,seconds,max_err."""
    lines = ["n,method,seconds,max_err"]
    for rep in reports:
        for n, secs, err in zip(rep.sizes, rep.seconds, rep.max_err_vs_exact):
            lines.append(f"{n},{rep.method},{secs:.9g},{err:.9g}")
    return lines
