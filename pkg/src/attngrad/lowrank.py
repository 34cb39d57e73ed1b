"""Near-linear-time approximate gradient via the polynomial method.

exp(t) on t in [-B**2, B**2] is replaced by its degree-g Taylor
polynomial, which factors the attention kernel through a monomial
feature map of rank C(d+g, g): for rows u, w in R^d,

    phi(u) . phi(w) = sum_{l<=g} (u.w / d)^l / l!  ~=  exp(u.w / d).

From the resulting rank-k1 factorization f ~= U1 V1^T of the softmax
matrix, factorizations of the whole gradient chain follow:

    q  ~= U2 V2^T,  U2 = [U1 | -E],  V2 = [h W^T | h],  W = V1^T h
    p1 ~= U3 V3^T,  U3 = U1 (row-kron) U2,  V3 = V1 (row-kron) V2
    p2 ~= U4 V4^T,  U4 = diag(r) U1,        V4 = V1

and the gradient contracts as (1/d) A1^T (p1 - p2) A2 without ever
materializing an n x n matrix. ``gradient_fast`` additionally avoids
the n x (k1 k2) matrix U3 by distributing the contraction over the d
columns of the residual, which is exact for the same factorization and
keeps peak memory at O(n k1).

Degree selection uses the explicit Taylor remainder bound
exp(B**2) (B**2)^(g+1) / (g+1)! rather than an asymptotic formula, so
it is computable and conservative; the entrywise target eps_prime is
derived from the caller's gradient tolerance eps as
eps * exp(-2 B**2) / (8 d), a rule validated empirically against the
exact path (measured end-to-end error sits orders of magnitude below
eps across the tested range).
"""

from __future__ import annotations

import math
import os
import time
from dataclasses import dataclass

import numpy as np

from .core import row_kronecker
from .forward import AttentionInstance, compute_h
from .gradient import GradientResult, _result

DEFAULT_RANK_CAP = 20000

RANK_CAP_ENV = "ATTNGRAD_RANK_CAP"

FACTOR_TARGETS = ("exp_matrix", "softmax_f", "q_matrix", "p1", "p2")


def rank_cap() -> int:
    """Factor-rank cap; override with the ATTNGRAD_RANK_CAP env var."""
    value = os.environ.get(RANK_CAP_ENV)
    return int(value) if value else DEFAULT_RANK_CAP


@dataclass
class PolyConfig:
    """Taylor approximation of exp on [-B**2, B**2].

    ``g`` is the polynomial degree, ``m_feat = C(d+g, g)`` the number of
    monomials in d variables of degree at most g, i.e. the rank of the
    induced kernel factorization.
    """

    B: float
    eps_prime: float
    g: int
    d: int
    m_feat: int


@dataclass
class LowRankFactors:
    """A rank-k representation U V^T of an n x n matrix."""

    U: np.ndarray
    V: np.ndarray
    k: int
    target: str
    config: PolyConfig | None = None

    def __post_init__(self):
        if self.target not in FACTOR_TARGETS:
            raise ValueError(f"unknown factor target {self.target!r}")
        if self.U.shape != self.V.shape or self.U.shape[1] != self.k:
            raise ValueError(
                f"factor shapes {self.U.shape} / {self.V.shape} inconsistent with k={self.k}"
            )

    @property
    def n(self) -> int:
        return self.U.shape[0]


def taylor_remainder(B: float, g: int) -> float:
    """Upper bound on |exp(t) - P_g(t)| over |t| <= B**2."""
    t = B * B
    return math.exp(t) * t ** (g + 1) / math.factorial(g + 1)


def select_degree(B: float, eps_prime: float, d: int, cap: int | None = None) -> PolyConfig:
    """Smallest degree g whose Taylor remainder on [-B**2, B**2] is at
    most ``eps_prime``; errors out if the monomial count C(d+g, g)
    would exceed the rank cap."""
    if B < 0.0 or eps_prime <= 0.0:
        raise ValueError("need B >= 0 and eps_prime > 0")
    if d < 1:
        raise ValueError("d must be positive")
    cap = rank_cap() if cap is None else cap
    g = 0
    while taylor_remainder(B, g) > eps_prime:
        g += 1
        if math.comb(d + g, g) > cap:
            raise ValueError(
                f"rank blowup: degree {g} needs {math.comb(d + g, g)} features "
                f"(cap {cap}); reduce B or relax eps"
            )
    return PolyConfig(B=B, eps_prime=eps_prime, g=g, d=d, m_feat=math.comb(d + g, g))


def _monomial_columns(m: np.ndarray, cfg: PolyConfig) -> np.ndarray:
    """Feature matrix with rows phi(m[i, :]).

    Monomials are enumerated by total degree, each built from its
    parent with one elementwise multiply. The coefficient of monomial
    beta is 1 / sqrt(prod(beta_i!) * d**|beta|), folded in
    incrementally: extending by variable j divides by sqrt(c_j * d)
    where c_j is the new exponent of variable j.
    """
    n, d = m.shape
    out = np.empty((n, cfg.m_feat))
    out[:, 0] = 1.0
    # frontier entries: (column index, exponent counts, first extendable var)
    frontier = [(0, [0] * d, 0)]
    next_col = 1
    for _ in range(cfg.g):
        new_frontier = []
        for ci, counts, start in frontier:
            for j in range(start, d):
                cj = counts[j] + 1
                out[:, next_col] = out[:, ci] * m[:, j] * (1.0 / math.sqrt(cj * d))
                new_frontier.append((next_col, counts[:j] + [cj] + counts[j + 1:], j))
                next_col += 1
        frontier = new_frontier
    assert next_col == cfg.m_feat
    return out


def feature_map(v: np.ndarray, cfg: PolyConfig) -> np.ndarray:
    """Monomial feature map phi: R^d -> R^m_feat with
    phi(u) . phi(w) = sum_{l<=g} (u.w / d)^l / l!."""
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.size != cfg.d:
        raise ValueError(f"expected length-{cfg.d} vector, got shape {v.shape}")
    return _monomial_columns(v[None, :], cfg)[0]


def default_eps_prime(eps: float, B: float, d: int) -> float:
    """Entrywise exp-approximation target for a gradient tolerance eps."""
    return eps * math.exp(-2.0 * B * B) / (8.0 * d)


def effective_bound(inst: AttentionInstance) -> float:
    """sqrt(max|A1 X| * max|A2|) <= B bounds the actual exp arguments;
    using it instead of B shrinks the degree when X is small (and makes
    X = 0 instances exactly rank one)."""
    a1x = np.abs(inst.A1 @ inst.X).max()
    a2 = np.abs(inst.A2).max()
    return float(np.sqrt(a1x * a2))


def lowrank_softmax_factors(
    inst: AttentionInstance, eps: float, cap: int | None = None,
) -> LowRankFactors:
    """Rank-k1 factorization U1 V1^T of the softmax matrix f.

    Rows of the unnormalized left factor are phi((A1 X)_j); rows of V1
    are phi((A2)_j); the row sums of the approximate kernel normalize
    U1, so rows of U1 V1^T sum to one exactly up to rounding. Never
    touches an n x n matrix.
    """
    if eps <= 0.0:
        raise ValueError("eps must be positive")
    b_eff = effective_bound(inst)
    cfg = select_degree(b_eff, default_eps_prime(eps, b_eff, inst.d), inst.d, cap)
    u_raw = _monomial_columns(inst.A1 @ inst.X, cfg)
    v1 = _monomial_columns(inst.A2, cfg)
    alpha = u_raw @ v1.sum(axis=0)
    if (alpha <= 0.0).any():
        raise ValueError("approximation destroyed row sums; decrease eps_prime")
    return LowRankFactors(
        U=u_raw / alpha[:, None], V=v1, k=cfg.m_feat, target="softmax_f", config=cfg,
    )


def lowrank_q_factors(
    f_factors: LowRankFactors, h: np.ndarray, E: np.ndarray, cap: int | None = None,
) -> LowRankFactors:
    """Factorization of q = c h^T from the softmax factors:
    U2 = [U1 | -E], V2 = [h W^T | h] with W = V1^T h, so that
    U2 V2^T = (U1 V1^T h - E) h^T. Rank k2 = k1 + d."""
    if f_factors.target != "softmax_f":
        raise ValueError("q factors must be built from softmax_f factors")
    d = h.shape[1]
    k2 = f_factors.k + d
    cap = rank_cap() if cap is None else cap
    if k2 > cap:
        raise ValueError(f"rank cap exceeded: k2 = {k2} > {cap}")
    w = f_factors.V.T @ h
    u2 = np.hstack([f_factors.U, -E])
    v2 = np.hstack([h @ w.T, h])
    return LowRankFactors(U=u2, V=v2, k=k2, target="q_matrix", config=f_factors.config)


def lowrank_p1_factors(
    f_factors: LowRankFactors, q_factors: LowRankFactors, cap: int | None = None,
) -> LowRankFactors:
    """Factorization of p1 = f * q (entrywise) by row-wise Kronecker
    products: U3 = U1 (x-row) U2, V3 = V1 (x-row) V2, exact for the
    factor products. Rank k3 = k1 k2, so this materializes n x k1 k2
    and is capped."""
    k3 = f_factors.k * q_factors.k
    cap = rank_cap() if cap is None else cap
    if k3 > cap:
        raise ValueError(f"rank cap exceeded: k1*k2 = {k3} > {cap}")
    return LowRankFactors(
        U=row_kronecker(f_factors.U, q_factors.U),
        V=row_kronecker(f_factors.V, q_factors.V),
        k=k3, target="p1", config=f_factors.config,
    )


def lowrank_p2_factors(
    f_factors: LowRankFactors, q_factors: LowRankFactors,
) -> LowRankFactors:
    """Factorization of p2, whose row j is <f_j, q_j> f_j: the row dots
    r_j = (U1)_j (V1^T V2) (U2)_j^T are computed through the k1 x k2
    precompute, then U4 = diag(r) U1, V4 = V1. Rank k4 = k1."""
    gram = f_factors.V.T @ q_factors.V
    r = ((f_factors.U @ gram) * q_factors.U).sum(axis=1)
    return LowRankFactors(
        U=r[:, None] * f_factors.U, V=f_factors.V,
        k=f_factors.k, target="p2", config=f_factors.config,
    )


def gradient_fast(
    inst: AttentionInstance, eps: float, cap: int | None = None,
) -> GradientResult:
    """Approximate gradient from the factored chain, no n x n matrix.

    Writing ft = U1 V1^T for the softmax approximation, ct = ft h - E,
    and r_j = <ft_j, (ct h^T)_j>, the two gradient pieces are

        A1^T (ft * (ct h^T)) A2
            = sum_i (A1 * ct[:, i])^T U1 . V1^T (A2 * h[:, i])
        A1^T diag(r) ft A2
            = (A1^T (r * U1)) (V1^T A2)

    where ``*`` scales columns. Both distribute over the rank-k1
    factors, so the cost is O(n d**2 k1) and peak memory O(n k1).
    """
    t0 = time.perf_counter()
    factors = lowrank_softmax_factors(inst, eps, cap)
    cfg = factors.config
    u1, v1 = factors.U, factors.V
    d = inst.d
    h = compute_h(inst.A3, inst.Y)
    w = v1.T @ h                      # k1 x d
    z = u1 @ w                        # n x d, the approximate forward f~ h
    c = z - inst.E
    r = (c * z).sum(axis=1)           # row dots <f~_j, q~_j>
    g1 = np.zeros((d, d))
    for i in range(d):
        left = (inst.A1 * c[:, i:i + 1]).T @ u1      # d x k1
        right = v1.T @ (inst.A2 * h[:, i:i + 1])     # k1 x d
        g1 += left @ right
    g2 = (inst.A1.T @ (u1 * r[:, None])) @ (v1.T @ inst.A2)
    G = (g1 - g2) / d
    k1 = factors.k
    info = {
        "degree": cfg.g,
        "eps_prime": cfg.eps_prime,
        "effective_B": cfg.B,
        "k1": k1, "k2": k1 + d, "k3": k1 * (k1 + d), "k4": k1,
    }
    return _result(G, "fast", t0, info)
