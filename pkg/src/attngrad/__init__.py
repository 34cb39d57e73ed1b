"""attngrad: exact and near-linear-time gradients for the single-layer
attention loss, with verification oracles and a hardness lab."""

__version__ = "0.1.0"

from .core import (
    diag_scale,
    exp_entrywise,
    kron,
    matmul,
    read_matrix,
    row_kronecker,
    row_sums,
    unvec,
    vec,
    write_matrix,
)
from .forward import (
    AttentionInstance,
    SoftmaxCache,
    compute_exp_matrix,
    compute_h,
    compute_softmax,
    forward,
    load_instance,
    loss,
    random_instance,
    save_instance,
)
from .gradient import GradientResult, compute_p, compute_q, grad_entry, gradient_exact
from .lowrank import (
    LowRankFactors,
    PolyConfig,
    feature_map,
    gradient_fast,
    lowrank_p1_factors,
    lowrank_p2_factors,
    lowrank_q_factors,
    lowrank_softmax_factors,
    select_degree,
)
from .hardness import (
    HardInstance,
    ReductionReport,
    f_lambda,
    f_lambda_derivative,
    factorized_hard_instance,
    gen_hard_instance,
    gradient_to_forward,
    hard_attention_instance,
    riemann_reduction,
    riemann_sum,
)
from .oracles import DiffReport, brute_kron_gradient, compare, finite_diff_gradient

__all__ = [name for name in dir() if not name.startswith("_")]
