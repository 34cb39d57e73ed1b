"""Forward attention evaluation for one layer.

Given query/key/value-side matrices A1, A2, A3 (n x d), targets E,
and square weights X, Y (d x d), the forward map is

    out = f(X) @ h(Y),   f(X) = softmax rows of exp(A1 X A2^T / d),
                         h(Y) = A3 Y,

and the training objective is L(X) = 0.5 * ||f(X) h(Y) - E||_F^2.

The dense path materializes the n x n attention matrix, so it refuses
n above a configurable cap instead of silently allocating n**2 doubles.
No max-subtraction stabilization is applied inside exp: the entry bound
B enforced at instance construction keeps every exponent in
[-B**2, B**2], well inside float64 range for B <= sqrt(709).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .core import check_finite, exp_entrywise, read_matrix, row_sums, write_matrix

# dense-path refusal threshold; n x n doubles above this is deliberate opt-in
DENSE_N_CAP = 16384

# largest entry bound for which exp(B**2) stays finite
MAX_ENTRY_BOUND = float(np.sqrt(709.0))

# slack for the B-bound checks: instances generated by rescaling sit
# exactly on the bound up to rounding
_BOUND_SLACK = 1e-9

_MATRIX_FILES = ("A1", "A2", "A3", "E", "X", "Y")


@dataclass
class AttentionInstance:
    """One attention optimization problem.

    A1, A2, A3, E are n x d; X, Y are d x d; B bounds both
    ``max|A1 @ X|`` and ``max|A2|`` so that every entry of
    ``A1 X A2^T / d`` lies in [-B**2, B**2].
    """

    A1: np.ndarray
    A2: np.ndarray
    A3: np.ndarray
    E: np.ndarray
    X: np.ndarray
    Y: np.ndarray
    B: float

    def __post_init__(self):
        for name in ("A1", "A2", "A3", "E", "X", "Y"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.ndim != 2:
                raise ValueError(f"{name} must be a matrix, got shape {arr.shape}")
            check_finite(arr, name)
            setattr(self, name, arr)
        n, d = self.A1.shape
        for name in ("A2", "A3", "E"):
            if getattr(self, name).shape != (n, d):
                raise ValueError(
                    f"{name} has shape {getattr(self, name).shape}, expected {(n, d)}"
                )
        for name in ("X", "Y"):
            if getattr(self, name).shape != (d, d):
                raise ValueError(
                    f"{name} has shape {getattr(self, name).shape}, expected {(d, d)}"
                )
        if not 0.0 <= self.B <= MAX_ENTRY_BOUND:
            raise ValueError(
                f"entry bound B={self.B} outside [0, {MAX_ENTRY_BOUND:.3f}]"
            )
        tol = self.B + _BOUND_SLACK * (1.0 + self.B)
        a1x = np.abs(self.A1 @ self.X).max() if d else 0.0
        if a1x > tol:
            raise ValueError(f"max|A1 @ X| = {a1x:.6g} exceeds B = {self.B:.6g}")
        a2 = np.abs(self.A2).max() if self.A2.size else 0.0
        if a2 > tol:
            raise ValueError(f"max|A2| = {a2:.6g} exceeds B = {self.B:.6g}")

    @property
    def n(self) -> int:
        return self.A1.shape[0]

    @property
    def d(self) -> int:
        return self.A1.shape[1]


@dataclass
class SoftmaxCache:
    """Row-normalized attention matrix f, its row sums, and h = A3 Y."""

    f: np.ndarray
    alpha: np.ndarray
    h: np.ndarray


def _check_dense_cap(n: int, dense_cap: int) -> None:
    if n > dense_cap:
        raise ValueError(
            f"dense path refused: n={n} exceeds cap {dense_cap}; "
            "use the low-rank fast path (gradient_fast)"
        )


def compute_exp_matrix(
    inst: AttentionInstance, x_override: np.ndarray | None = None,
    dense_cap: int = DENSE_N_CAP,
) -> np.ndarray:
    """The n x n matrix exp(A1 X A2^T / d), entrywise.

    With a valid instance every entry lies in [exp(-B**2), exp(B**2)].
    ``x_override`` substitutes a different X without revalidating the
    B bound (used by finite-difference perturbation).
    """
    _check_dense_cap(inst.n, dense_cap)
    x = inst.X if x_override is None else x_override
    return exp_entrywise(inst.A1 @ x @ inst.A2.T / inst.d)


def compute_softmax(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-normalize a positive matrix: returns (f, alpha) with
    alpha = row sums of m and f = diag(alpha)^-1 m."""
    alpha = row_sums(m)
    if (alpha <= 0.0).any():
        raise ValueError("nonpositive row sum in softmax normalization")
    return m / alpha[:, None], alpha


def compute_h(a3: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Value projection h = A3 Y; column i0 is A3 @ Y[:, i0]."""
    a3 = np.asarray(a3, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if a3.shape[1] != y.shape[0]:
        raise ValueError(f"compute_h: inner dimensions {a3.shape} x {y.shape}")
    return a3 @ y


def softmax_cache(
    inst: AttentionInstance, x_override: np.ndarray | None = None,
    dense_cap: int = DENSE_N_CAP,
) -> SoftmaxCache:
    f, alpha = compute_softmax(compute_exp_matrix(inst, x_override, dense_cap))
    return SoftmaxCache(f=f, alpha=alpha, h=compute_h(inst.A3, inst.Y))


def forward(
    inst: AttentionInstance, x_override: np.ndarray | None = None,
    dense_cap: int = DENSE_N_CAP,
) -> np.ndarray:
    """One attention layer: f(X) @ h(Y), an n x d matrix."""
    cache = softmax_cache(inst, x_override, dense_cap)
    return cache.f @ cache.h


def loss(
    inst: AttentionInstance, x_override: np.ndarray | None = None,
    dense_cap: int = DENSE_N_CAP,
) -> tuple[float, np.ndarray]:
    """Loss L(X) = 0.5 ||f h - E||_F^2 and the residual c = f h - E."""
    c = forward(inst, x_override, dense_cap) - inst.E
    return 0.5 * float((c * c).sum()), c


def random_instance(
    n: int, d: int, B: float, seed: int, noise_sigma: float = 0.1,
    dense_cap: int = DENSE_N_CAP,
) -> AttentionInstance:
    """Sample a bounded instance: A1, A2, A3, Y iid uniform [-1, 1], A2
    rescaled to max|A2| = B, X rescaled to max|A1 X| = B, and E set to
    the forward output plus Gaussian noise so gradients are nonzero.

    B = 0 forces X = 0 and A2 = 0. Deterministic under ``seed``.
    """
    rng = np.random.default_rng(seed)
    a1 = rng.uniform(-1.0, 1.0, (n, d))
    a2 = rng.uniform(-1.0, 1.0, (n, d))
    a3 = rng.uniform(-1.0, 1.0, (n, d))
    x = rng.uniform(-1.0, 1.0, (d, d))
    y = rng.uniform(-1.0, 1.0, (d, d))
    if B == 0.0:
        a2 = np.zeros_like(a2)
        x = np.zeros_like(x)
    else:
        a2 *= B / np.abs(a2).max()
        scale = np.abs(a1 @ x).max()
        if scale == 0.0:
            raise ValueError("degenerate sample: A1 @ X vanished")
        x *= B / scale
    inst = AttentionInstance(A1=a1, A2=a2, A3=a3, E=np.zeros((n, d)), X=x, Y=y, B=B)
    e = forward(inst, dense_cap=dense_cap) + noise_sigma * rng.standard_normal((n, d))
    return AttentionInstance(A1=a1, A2=a2, A3=a3, E=e, X=x, Y=y, B=B)


def save_instance(inst: AttentionInstance, out_dir, meta: dict | None = None) -> None:
    """Write A1.mat ... Y.mat plus meta.json into ``out_dir``."""
    os.makedirs(out_dir, exist_ok=True)
    for name in _MATRIX_FILES:
        write_matrix(getattr(inst, name), os.path.join(out_dir, f"{name}.mat"))
    record = {"n": inst.n, "d": inst.d, "B": inst.B}
    if meta:
        record.update(meta)
    with open(os.path.join(out_dir, "meta.json"), "w") as fh:
        json.dump(record, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_instance(in_dir) -> AttentionInstance:
    """Load an instance directory written by :func:`save_instance`,
    revalidating every invariant."""
    meta_path = os.path.join(in_dir, "meta.json")
    with open(meta_path) as fh:
        meta = json.load(fh)
    mats = {name: read_matrix(os.path.join(in_dir, f"{name}.mat")) for name in _MATRIX_FILES}
    return AttentionInstance(B=float(meta["B"]), **mats)
