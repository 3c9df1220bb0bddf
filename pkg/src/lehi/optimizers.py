"""Diagonal-scaling parameter updates.

All four update rules share one core recurrence on each parameter tensor:

    m ← β₁ m + g
    v ← β₂ v + s²          s is the second-moment source
    w ← w − α_k m / sqrt(ε + v)

with the monotone bias-corrected step size

    α_k = α (1 − β₁) sqrt(1 − β₂^k) / sqrt(1 − β₂).

The rules differ only in where s comes from: the primary gradient (adam,
adamw), the auxiliary gradient (lehi), or the two alternating per
iteration (lehibrid).  adamw additionally subtracts a decoupled decay
term α_k λ w.  ε sits inside the square root.  The shared code path makes
"lehi fed its own gradient as the auxiliary" bit-identical to adam.

Non-finite gradients are applied as-is and never raise here; divergence
accounting is the training harness's job.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .numcore import ShapeError

OPTIMIZER_KINDS = ("adam", "adamw", "lehi", "lehibrid")

# mirrors the benchmark setups: tighter ε for the adam family, looser for
# the auxiliary-scaled family
DEFAULT_EPS = {"adam": 1e-7, "adamw": 1e-7, "lehi": 1e-2, "lehibrid": 1e-2}


@dataclass(frozen=True)
class HyperParams:
    alpha: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.beta1 < 1.0:
            raise ValueError("beta1 must be in [0, 1)")
        if not self.beta1 < self.beta2 < 1.0:
            raise ValueError("beta2 must be in (beta1, 1)")
        if self.alpha <= 0.0:
            raise ValueError("alpha must be positive")
        if self.eps <= 0.0:
            raise ValueError("eps must be positive")
        if self.weight_decay < 0.0:
            raise ValueError("weight_decay must be nonnegative")


def alpha_k(hp: HyperParams, k: int) -> float:
    """Step size at iteration k >= 1; nondecreasing in k with limit
    alpha (1-beta1)/sqrt(1-beta2)."""
    if k < 1:
        raise ValueError("iteration count starts at 1")
    return hp.alpha * (1.0 - hp.beta1) * math.sqrt(1.0 - hp.beta2**k) / math.sqrt(
        1.0 - hp.beta2
    )


def alpha_schedule(hp: HyperParams, horizon: int) -> np.ndarray:
    """The first ``horizon`` step sizes as an array."""
    k = np.arange(1, horizon + 1, dtype=np.float64)
    return (
        hp.alpha
        * (1.0 - hp.beta1)
        * np.sqrt(1.0 - hp.beta2**k)
        / math.sqrt(1.0 - hp.beta2)
    )


class DiagonalScalingOptimizer:
    """Base class holding the (m, v, k) state; subclasses pick the
    second-moment source."""

    kind = "base"
    needs_aux = False

    def __init__(self, hp: HyperParams):
        self.hp = hp
        self.m: list[np.ndarray] | None = None
        self.v: list[np.ndarray] | None = None
        self.k = 1

    def _init_state(self, params: list[np.ndarray]) -> None:
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def _second_source(
        self, grad: list[np.ndarray], aux_grad: list[np.ndarray] | None
    ) -> list[np.ndarray]:
        raise NotImplementedError

    def step(
        self,
        params: list[np.ndarray],
        grad: list[np.ndarray],
        aux_grad: list[np.ndarray] | None = None,
    ) -> list[np.ndarray]:
        """Apply one update; returns fresh parameter arrays."""
        if self.needs_aux and aux_grad is None:
            raise ValueError(f"{self.kind} needs an auxiliary gradient")
        if self.m is None:
            self._init_state(params)
        if len(grad) != len(params):
            raise ShapeError("gradient count does not match parameters")
        source = self._second_source(grad, aux_grad)
        hp = self.hp
        a_k = alpha_k(hp, self.k)
        new_params = []
        for i, (w, g, s) in enumerate(zip(params, grad, source)):
            if g.shape != w.shape or s.shape != w.shape:
                raise ShapeError(f"gradient shape mismatch at tensor {i}")
            self.m[i] = hp.beta1 * self.m[i] + g
            self.v[i] = hp.beta2 * self.v[i] + s * s
            new_params.append(self._update(w, self.m[i], self.v[i], a_k))
        self.k += 1
        return new_params

    def _update(self, w: np.ndarray, m: np.ndarray, v: np.ndarray, a_k: float) -> np.ndarray:
        return w - a_k * (m / np.sqrt(self.hp.eps + v))


class Adam(DiagonalScalingOptimizer):
    kind = "adam"

    def _second_source(self, grad, aux_grad):
        return grad


class AdamW(Adam):
    """Adam plus decoupled decay: w ← w − α_k m/sqrt(ε+v) − α_k λ w,
    applied uniformly to every parameter tensor."""

    kind = "adamw"

    def _update(self, w, m, v, a_k):
        return w - a_k * (m / np.sqrt(self.hp.eps + v)) - a_k * self.hp.weight_decay * w


class Lehi(DiagonalScalingOptimizer):
    """Second moment accumulates squared auxiliary-gradient elements."""

    kind = "lehi"
    needs_aux = True

    def _second_source(self, grad, aux_grad):
        return aux_grad


class Lehibrid(DiagonalScalingOptimizer):
    """Alternates the second-moment source between the auxiliary and the
    primary gradient.  By default odd iterations (k = 1, 3, ...) use the
    auxiliary gradient; start_with_aux=False flips the parity."""

    kind = "lehibrid"
    needs_aux = True

    def __init__(self, hp: HyperParams, start_with_aux: bool = True):
        super().__init__(hp)
        self.start_with_aux = start_with_aux

    def _second_source(self, grad, aux_grad):
        odd = self.k % 2 == 1
        use_aux = odd if self.start_with_aux else not odd
        return aux_grad if use_aux else grad


def make_optimizer(kind: str, hp: HyperParams, **kwargs) -> DiagonalScalingOptimizer:
    classes = {"adam": Adam, "adamw": AdamW, "lehi": Lehi, "lehibrid": Lehibrid}
    if kind not in classes:
        raise ValueError(f"unknown optimizer kind {kind!r}")
    return classes[kind](hp, **kwargs)
