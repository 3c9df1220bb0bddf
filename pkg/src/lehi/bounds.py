"""Numerical convergence-bound and lemma-inequality checks.

The expected squared gradient norm at a randomized stopping index R_K,
P[R_K = k] ∝ 1 − β₁^{K−k+1}, is bounded for the auxiliary-scaled update
rule by

    (2M / (α K̃)) (f(w₁) − f_inf)
      + E ( (1/K̃) log(1 + M² / ((1−β₂) ε)) − (K/K̃) log β₂ )

with K̃ = K − β₁/(1−β₁), valid when K > 1/(1−β₁), gradients unbiased, the
gradient of f L-Lipschitz, f bounded below by f_inf, and both gradient
streams bounded by sqrt(M² − ε) in infinity norm, where

    E = α d M L (1−β₁) / ((1−β₁/β₂)(1−β₂))
      + 12 d M² sqrt(1−β₁) / ((1−β₁/β₂)^{3/2} sqrt(1−β₂))
      + 2 α² d L² β₁ / ((1−β₁/β₂)(1−β₂)^{3/2}).

check_bound_on_trajectory exercises the inequality end to end on
f(w) = sum_i log cosh(w_i), whose constants are all known analytically
(L = 1, f_inf = 0, gradient bounded by 1), with a constant-ones auxiliary
gradient, run deterministically full batch so the unbiasedness assumption
holds exactly and the left-hand side is computable in closed form.

The two lemma checks evaluate proved inequalities on concrete sequences;
a reported violation indicates an implementation bug, never a tight case.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .optimizers import HyperParams, Lehi


@dataclass(frozen=True)
class BoundInputs:
    alpha: float
    beta1: float
    beta2: float
    eps: float
    K: int
    M: float  # seed-norm bound: gradients stay within sqrt(M^2 - eps)
    L: float  # gradient Lipschitz constant
    d: int  # parameter dimension
    f1: float  # initial loss value
    finf: float  # lower bound of the loss

    def __post_init__(self):
        if not 0.0 <= self.beta1 < self.beta2 < 1.0:
            raise ValueError("need 0 <= beta1 < beta2 < 1")
        if self.alpha <= 0 or self.eps <= 0:
            raise ValueError("alpha and eps must be positive")
        if self.K <= 1.0 / (1.0 - self.beta1):
            raise ValueError("iteration count must exceed 1/(1 - beta1)")
        if self.M * self.M <= self.eps:
            raise ValueError("need M^2 > eps")
        if self.L <= 0:
            raise ValueError("L must be positive")
        if self.f1 < self.finf:
            raise ValueError("f1 must be at least finf")
        if self.d < 1:
            raise ValueError("d must be at least 1")


def rk_distribution(beta1: float, K: int) -> np.ndarray:
    """Stopping-index probabilities over k = 1..K.

    Weights 1 − β₁^{K−k+1} are computed as −expm1((K−k+1) log β₁) so they
    stay accurate for β₁ near 1, and normalized with exact summation.
    """
    if K < 1:
        raise ValueError("K must be at least 1")
    if not 0.0 <= beta1 < 1.0:
        raise ValueError("beta1 must be in [0, 1)")
    if beta1 == 0.0:
        return np.full(K, 1.0 / K)
    exponents = np.arange(K, 0, -1, dtype=np.float64)  # K-k+1 for k=1..K
    weights = -np.expm1(exponents * math.log(beta1))
    return weights / math.fsum(weights)


def theorem_bound(inputs: BoundInputs) -> float:
    """Right-hand side of the convergence bound."""
    a, b1, b2 = inputs.alpha, inputs.beta1, inputs.beta2
    eps, K, M, L, d = inputs.eps, inputs.K, inputs.M, inputs.L, inputs.d
    k_tilde = K - b1 / (1.0 - b1)
    ratio = 1.0 - b1 / b2
    e_const = (
        a * d * M * L * (1.0 - b1) / (ratio * (1.0 - b2))
        + 12.0 * d * M * M * math.sqrt(1.0 - b1) / (ratio**1.5 * math.sqrt(1.0 - b2))
        + 2.0 * a * a * d * L * L * b1 / (ratio * (1.0 - b2) ** 1.5)
    )
    log_term = math.log1p(M * M / ((1.0 - b2) * eps)) / k_tilde
    return (2.0 * M / (a * k_tilde)) * (inputs.f1 - inputs.finf) + e_const * (
        log_term - (K / k_tilde) * math.log(b2)
    )


def log_cosh_value(w: np.ndarray) -> float:
    """sum_i log cosh(w_i), computed without overflow."""
    aw = np.abs(w)
    return float((aw + np.log1p(np.exp(-2.0 * aw)) - math.log(2.0)).sum())


def log_cosh_grad(w: np.ndarray) -> np.ndarray:
    return np.tanh(w)


def check_bound_on_trajectory(
    hp: HyperParams,
    K: int,
    d: int = 10,
    w_start: float = 0.5,
) -> dict:
    """Run full-batch updates on the log-cosh test function and compare
    the exact R_K-weighted expected squared gradient norm to the bound.

    The auxiliary gradient is the constant ones vector (the squared-error
    pairing on an identity prediction map), so both gradient streams are
    bounded by 1 and M² = 1 + ε certifies the norm assumption.
    """
    M = math.sqrt(1.0 + hp.eps)
    w1 = np.full((d, 1), float(w_start))
    inputs = BoundInputs(
        alpha=hp.alpha,
        beta1=hp.beta1,
        beta2=hp.beta2,
        eps=hp.eps,
        K=K,
        M=M,
        L=1.0,
        d=d,
        f1=log_cosh_value(w1),
        finf=0.0,
    )
    opt = Lehi(hp)
    aux = np.ones_like(w1)
    w = w1
    grad_sq = np.empty(K)
    for k in range(K):
        g = log_cosh_grad(w)
        grad_sq[k] = float((g * g).sum())
        (w,) = opt.step([w], [g], [aux])
    probs = rk_distribution(hp.beta1, K)
    lhs = math.fsum(probs * grad_sq)
    rhs = theorem_bound(inputs)
    return {"lhs": lhs, "rhs": rhs, "satisfied": lhs <= rhs}


def lemma_sum_check(
    a: np.ndarray, beta1: float, beta2: float, eps: float
) -> dict:
    """Evaluate the two momentum/second-moment sum inequalities on a
    concrete sequence.

    With b_k = sum_j β₂^{k-j} a_j² and c_k = sum_j β₁^{k-j} a_j:

        sum_j c_j²/(ε+b_j) <= (log(1+b_k/ε) − k log β₂) / ((1−β₁)(1−β₁/β₂))
        sum_j a_j²/(ε+b_j) <=  log(1+b_k/ε) − k log β₂
    """
    if not (0.0 <= beta1 < beta2 < 1.0):
        raise ValueError("need 0 <= beta1 < beta2 < 1")
    if eps <= 0:
        raise ValueError("eps must be positive")
    a = np.asarray(a, dtype=np.float64).ravel()
    k = a.size
    b = c = 0.0
    lhs1 = lhs2 = 0.0
    for a_j in a:
        b = beta2 * b + a_j * a_j
        c = beta1 * c + a_j
        lhs1 += c * c / (eps + b)
        lhs2 += a_j * a_j / (eps + b)
    base = math.log1p(b / eps) - k * math.log(beta2)
    rhs1 = base / ((1.0 - beta1) * (1.0 - beta1 / beta2))
    rhs2 = base
    return {
        "lhs1": lhs1,
        "rhs1": rhs1,
        "lhs2": lhs2,
        "rhs2": rhs2,
        "ok": lhs1 <= rhs1 and lhs2 <= rhs2,
    }


def geometric_lemma_check(beta: float, k: int) -> dict:
    """Partial geometric-weighted sums against their closed-form bounds:

        sum_{j=0}^{k-1} β^j sqrt(j+1)     <= 2 / (1−β)^{3/2}
        sum_{j=0}^{k-1} β^j sqrt(j)(j+1)  <= 4β / (1−β)^{5/2}
    """
    if not 0.0 < beta < 1.0:
        raise ValueError("beta must be in (0, 1)")
    if k < 1:
        raise ValueError("k must be at least 1")
    j = np.arange(k, dtype=np.float64)
    powers = beta**j
    sum1 = float(np.sum(powers * np.sqrt(j + 1.0)))
    sum2 = float(np.sum(powers * np.sqrt(j) * (j + 1.0)))
    bound1 = 2.0 / (1.0 - beta) ** 1.5
    bound2 = 4.0 * beta / (1.0 - beta) ** 2.5
    return {
        "sum1": sum1,
        "bound1": bound1,
        "sum2": sum2,
        "bound2": bound2,
        "ok": sum1 <= bound1 and sum2 <= bound2,
    }
