"""Acceptance suite: one test per criterion, each printing a pass/fail
line with its measured statistic (run pytest with -s to see them).

The headline asymptotics are not reproducible as theorems at desk
scale; these are the property-based and measured-scaling checks the
artifact commits to, at their stated tolerances and budgets.
"""

import math
import time

import numpy as np

from attngrad.bench import run_scaling_bench
from attngrad.core import kron, row_kronecker, vec
from attngrad.forward import compute_exp_matrix, compute_softmax, random_instance
from attngrad.gradient import compute_p, gradient_exact
from attngrad.hardness import (
    f_lambda,
    f_lambda_derivative,
    factorized_hard_instance,
    gen_hard_instance,
    gradient_to_forward,
    hard_attention_instance,
    riemann_reduction,
    riemann_sum,
)
from attngrad.lowrank import PolyConfig, feature_map, gradient_fast
from attngrad.oracles import brute_kron_gradient, finite_diff_gradient
from tests.test_lowrank import uniform_softmax_instance


def report(num, name, ok, detail):
    print(f"ACCEPTANCE {num} {name}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, f"criterion {num} ({name}): {detail}"


def test_criterion_1_oracle_triple_agreement():
    t0 = time.time()
    combos = [(n, d) for n in (8, 16, 32) for d in (2, 3, 4)]
    worst_brute, worst_fd = 0.0, 0.0
    for seed in range(50):
        n, d = combos[seed % len(combos)]
        inst = random_instance(n, d, 1.0, seed=seed)
        g = gradient_exact(inst).g
        worst_brute = max(worst_brute, np.abs(g - brute_kron_gradient(inst, max_n=32).g).max())
        worst_fd = max(worst_fd, np.abs(g - finite_diff_gradient(inst, 1e-4).g).max())
    elapsed = time.time() - t0
    ok = worst_brute <= 1e-10 and worst_fd <= 1e-5 and elapsed < 60
    report(1, "oracle triple agreement", ok,
           f"max|exact-brute|={worst_brute:.2e}<=1e-10, "
           f"max|exact-fd|={worst_fd:.2e}<=1e-5, {elapsed:.1f}s<60s")


def test_criterion_2_fast_vs_exact_accuracy():
    t0 = time.time()
    eps, worst = 1e-4, 0.0
    for seed in range(10):
        for n in (256, 512, 1024):
            inst = random_instance(n, 8, 0.8, seed=seed)
            err = np.abs(gradient_fast(inst, eps).g - gradient_exact(inst).g).max()
            worst = max(worst, err)
    elapsed = time.time() - t0
    ok = worst <= eps and elapsed < 300
    report(2, "fast-vs-exact accuracy", ok,
           f"max err={worst:.2e}<=eps={eps}, n in {{256,512,1024}}, d=8, "
           f"B=0.8, 10 seeds, {elapsed:.1f}s<300s")


def test_criterion_3_degenerate_exactness():
    worst, ranks = 0.0, []
    # zero effective bound two ways: X = 0 with generic A2, and the
    # fully degenerate generated B = 0 instance
    for inst in (uniform_softmax_instance(4096, 4, seed=0),
                 random_instance(2048, 4, 0.0, seed=1)):
        res = gradient_fast(inst, 1e-6)
        ranks.append(res.info["k1"])
        worst = max(worst, np.abs(res.g - gradient_exact(inst).g).max())
    ok = worst <= 1e-12 and ranks == [1, 1]
    report(3, "degenerate exactness at B=0", ok,
           f"max|fast-exact|={worst:.2e}<=1e-12, ranks k1={ranks}==1, n up to 4096")


def test_criterion_4_scaling_separation():
    t0 = time.time()
    reports = run_scaling_bench([1024, 2048, 4096, 8192], d=8, B=0.8,
                                eps=1e-2, repeats=3, seed=0)
    slopes = {r.method: r.fitted_loglog_slope for r in reports}
    elapsed = time.time() - t0
    ok = slopes["fast"] <= 1.3 and slopes["exact"] >= 1.8 and elapsed < 1800
    report(4, "scaling separation", ok,
           f"slope fast={slopes['fast']:.3f}<=1.3, "
           f"slope exact={slopes['exact']:.3f}>=1.8, {elapsed:.0f}s<1800s")


def test_criterion_5_derivative_bounds():
    t0 = time.time()
    grid = np.linspace(0.0, 1.0, 101)
    step = 1e-5
    ok, detail = True, []
    for n in (64, 256):
        for B in (1.0, 5.0):
            hi = gen_hard_instance(n, 4, B, seed=0)
            worst_rel, worst_abs = 0.0, 0.0
            for lam in grid:
                fp, _ = f_lambda_derivative(hi, lam)
                worst_abs = max(worst_abs, abs(fp))
                fd = (f_lambda(hi, lam + step) - f_lambda(hi, lam - step)) / (2 * step)
                worst_rel = max(worst_rel, abs(fd - fp) / (1.0 + abs(fp)))
            ok = ok and worst_abs <= 8 * B * n and worst_rel <= 1e-4
            detail.append(f"n={n},B={B}: max|f'|={worst_abs:.3g}<={8 * B * n:.0f}, "
                          f"fd rel={worst_rel:.1e}")
    elapsed = time.time() - t0
    ok = ok and elapsed < 120
    report(5, "derivative bounds 8Bn", ok, "; ".join(detail) + f"; {elapsed:.1f}s<120s")


def test_criterion_6_riemann_sum_bound():
    # analytic test function f(lam) = lam^2: f' = 2 lam, |f''| = 2
    t10 = riemann_sum(lambda lam: 2 * lam, 10)
    analytic_ok = t10 == 0.9 and abs(t10 - 1.0) <= 2.0 / 10
    ok, worst = analytic_ok, 0.0
    for n in (64, 256):
        for B in (1.0, 5.0):
            hi = gen_hard_instance(n, 4, B, seed=0)
            for m in (10, 100, 1000):
                rep = riemann_reduction(hi, m, strict=False)
                gap = abs(rep.t_m - rep.f1_minus_f0) - rep.bound_b / m
                worst = max(worst, gap)
                ok = ok and rep.holds
    report(6, "Riemann-sum bound", ok,
           f"t_10(lam^2)={t10}==0.9 with bound 0.2; hard instances worst "
           f"slack={worst:.2e}<=0, m in {{10,100,1000}}")


def test_criterion_7_reduction_consistency():
    hi, q, k = factorized_hard_instance(16, 4, 1.0, seed=0)
    worst = 0.0
    for lam in np.linspace(0.0, 1.0, 11):
        from_grad = gradient_to_forward(hard_attention_instance(q, k, hi.V, lam), lam)
        fp, _ = f_lambda_derivative(hi, lam)
        worst = max(worst, abs(from_grad - fp) / (1.0 + abs(fp)))
    ok = worst <= 1e-4
    report(7, "gradient-to-forward reduction", ok,
           f"max rel err={worst:.2e}<=1e-4 over 11 lambda points, n=16, d=4")


def test_criterion_8_algebraic_identities():
    rng = np.random.default_rng(0)
    checks = {}

    worst = 0.0
    for _ in range(20):
        n, k1, k2 = 5, 3, 2
        u1, v1 = rng.uniform(-1, 1, (n, k1)), rng.uniform(-1, 1, (n, k1))
        u2, v2 = rng.uniform(-1, 1, (n, k2)), rng.uniform(-1, 1, (n, k2))
        lhs = (u1 @ v1.T) * (u2 @ v2.T)
        rhs = row_kronecker(u1, u2) @ row_kronecker(v1, v2).T
        worst = max(worst, np.abs(lhs - rhs).max())
    checks["row-kron"] = worst <= 1e-10 * k1 * k2

    worst = 0.0
    for n in (2, 5, 8):
        for d in (1, 2, 3):
            a1, a2 = rng.standard_normal((2, n, d))
            x = rng.standard_normal((d, d))
            worst = max(worst, np.abs(vec(a1 @ x @ a2.T) - kron(a1, a2) @ vec(x)).max())
    checks["tensor-trick"] = worst <= 1e-12

    worst = 0.0
    for seed in range(10):
        inst = random_instance(20, 3, 1.0, seed=seed)
        f, _ = compute_softmax(compute_exp_matrix(inst))
        worst = max(worst, np.abs(f.sum(1) - 1.0).max())
    checks["softmax-rows"] = worst <= 1e-10

    worst = 0.0
    for seed in range(10):
        f, _ = compute_softmax(np.exp(rng.standard_normal((12, 12))))
        p = compute_p(f, rng.standard_normal((12, 12)))
        worst = max(worst, np.abs(p.sum(1)).max())
    checks["p-row-null"] = worst <= 1e-10

    worst = 0.0
    for _ in range(50):
        d = int(rng.integers(1, 5))
        g = int(rng.integers(0, 7))
        cfg = PolyConfig(B=1.0, eps_prime=1.0, g=g, d=d, m_feat=math.comb(d + g, g))
        qv, kv = rng.uniform(-1, 1, (2, d))
        t = qv @ kv / d
        poly = sum(t ** l / math.factorial(l) for l in range(g + 1))
        worst = max(worst, abs(feature_map(qv, cfg) @ feature_map(kv, cfg) - poly))
    checks["feature-map"] = worst <= 1e-12

    ok = all(checks.values())
    report(8, "algebraic identities", ok,
           ", ".join(f"{k}={'ok' if v else 'FAIL'}" for k, v in checks.items()))
