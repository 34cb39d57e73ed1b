"""Independent gradient oracles and comparison utilities.

Two paths that share no code with the production gradient:

* central finite differences of the loss, the canonical check for any
  analytic gradient;
* a brute-force evaluation that assembles the gradient from the
  per-coordinate derivative formula over explicit n x d**2 blocks of
  the lifted matrix (A1 (x) A2) / d.

Both are deliberately slow and capped to small instances.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .core import kron
from .forward import DENSE_N_CAP, AttentionInstance, loss, softmax_cache
from .gradient import GradientResult, _result

# brute path is O(n**2 d**3); keep it honest about its intended scale
BRUTE_N_CAP = 16
BRUTE_D_CAP = 4

DEFAULT_FD_STEP = 1e-4


@dataclass
class DiffReport:
    """Infinity-norm difference between two gradient vectors."""

    max_abs: float
    argmax_index: int
    a_norm: float
    b_norm: float


def finite_diff_gradient(
    inst: AttentionInstance, step: float = DEFAULT_FD_STEP,
    dense_cap: int = DENSE_N_CAP,
) -> GradientResult:
    """Central-difference gradient: (L(X + s E_i) - L(X - s E_i)) / 2s
    for each of the d**2 coordinates of X (row-major order, matching
    ``vec``)."""
    if step <= 0.0:
        raise ValueError("step must be positive")
    t0 = time.perf_counter()
    d = inst.d
    g = np.empty(d * d)
    try:
        for i in range(d * d):
            pert = np.zeros((d, d))
            pert.flat[i] = step
            lp, _ = loss(inst, inst.X + pert, dense_cap)
            lm, _ = loss(inst, inst.X - pert, dense_cap)
            g[i] = (lp - lm) / (2.0 * step)
    except ValueError as exc:
        if "exp range" in str(exc):
            raise ValueError(
                "exp overflow under perturbation; use a smaller step"
            ) from exc
        raise
    return _result(g.reshape(d, d), "finite_diff", t0, {"step": step})


def brute_kron_gradient(
    inst: AttentionInstance, max_n: int = BRUTE_N_CAP, max_d: int = BRUTE_D_CAP,
) -> GradientResult:
    """Sum the per-term derivative formula over all (j0, i0) with the
    j0-th lifted block materialized via ``kron`` one row at a time.

    Never forms the full n**2 x d**2 matrix; still O(n**2 d**3).
    """
    n, d = inst.n, inst.d
    if n > max_n or d > max_d:
        raise ValueError(
            f"brute oracle capped at n<={max_n}, d<={max_d}; got n={n}, d={d}"
        )
    t0 = time.perf_counter()
    cache = softmax_cache(inst)
    c = cache.f @ cache.h - inst.E
    g = np.zeros(d * d)
    for j0 in range(n):
        block = kron(inst.A1[j0:j0 + 1, :], inst.A2) / d    # n x d**2
        f_row = cache.f[j0]
        bf = block.T @ f_row                                 # <col_i, f> for all i
        for i0 in range(d):
            h_col = cache.h[:, i0]
            term = block.T @ (f_row * h_col) - bf * (h_col @ f_row)
            g += c[j0, i0] * term
    return _result(g.reshape(d, d), "brute_kron", t0)


def compare(a: GradientResult, b: GradientResult) -> DiffReport:
    """Max absolute difference between two gradients and where it occurs."""
    if a.g.size != b.g.size:
        raise ValueError(f"gradient lengths differ: {a.g.size} vs {b.g.size}")
    diff = np.abs(a.g - b.g)
    idx = int(np.argmax(diff)) if diff.size else 0
    return DiffReport(
        max_abs=float(diff[idx]) if diff.size else 0.0,
        argmax_index=idx,
        a_norm=float(np.abs(a.g).max()) if a.g.size else 0.0,
        b_norm=float(np.abs(b.g).max()) if b.g.size else 0.0,
    )
