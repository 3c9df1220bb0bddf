"""Diagonal-scaling optimizers with auxiliary-loss Hessian imitation,
plus the benchmark harness that compares them across learning rates."""

from .numcore import SeededRng, ShapeError, as_matrix, elementwise, matmul
from .network import (
    ForwardCache,
    GradientSet,
    Layer,
    MlpModel,
    backward_seeded,
    dual_backward,
    forward,
    init_mlp,
    load_model,
    save_model,
)
from .losses import LossPair, verify_hessian_identity
from .optimizers import (
    Adam,
    AdamW,
    HyperParams,
    Lehi,
    Lehibrid,
    alpha_k,
    make_optimizer,
)
from .bounds import (
    BoundInputs,
    check_bound_on_trajectory,
    geometric_lemma_check,
    lemma_sum_check,
    rk_distribution,
    theorem_bound,
)
from .data import Dataset, Standardizer, load_csv, load_idx, minibatches, split, synthetic_regression
from .harness import (
    RunConfig,
    RunRecord,
    SelectionScore,
    StabilityVerdict,
    SweepConfig,
    combine_score,
    ema_smooth,
    selection_score,
    stability_report,
    sweep,
    train,
)

__version__ = "0.1.0"
