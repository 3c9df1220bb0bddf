"""Primary losses paired with curvature-imitating auxiliary seed vectors.

Each supported loss kind provides three things evaluated on a logits
matrix p (q x batch) and targets y of the same shape:

  * loss_value    batch-mean loss
  * primary_seed  the prediction-space loss gradient, scaled 1/N
  * aux_seed      a vector v with v_i^2 equal to the i-th diagonal entry
                  of the prediction-space loss Hessian, scaled 1/sqrt(N)

so that squaring a backpropagated auxiliary seed accumulates
Hessian-diagonal imitations at 1/N scale.  N defaults to the batch size.

Closed forms (per component, before batch scaling):

  mse            v = 1                                (Hessian diag = 1)
  bce            v = 1 / (e^{p/2} + e^{-p/2})          v^2 = s(p)(1-s(p))
  multiclass-ce  v = (1/2) sqrt(1 - (2 s_i - 1)^2)     v^2 = s_i(1-s_i)

with s the logistic sigmoid resp. the softmax component.  The multiclass
form drops softmax cross terms; its square still matches the Hessian
diagonal exactly, which is the quantity the second-moment update needs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numcore import ShapeError

LOSS_KINDS = ("mse", "bce", "multiclass-ce")

# beyond this |p| the stable bce auxiliary branch e^{-|p|/2} is exact to
# double precision (relative error under e^{-80})
_BCE_GUARD = 40.0


def sigmoid(p: np.ndarray) -> np.ndarray:
    """Logistic sigmoid, computed on the non-overflowing branch per sign."""
    p = np.asarray(p, dtype=np.float64)
    out = np.empty_like(p)
    pos = p >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-p[pos]))
    ep = np.exp(p[~pos])
    out[~pos] = ep / (1.0 + ep)
    return out


def softplus(p: np.ndarray) -> np.ndarray:
    """log(1 + e^p) without overflow."""
    p = np.asarray(p, dtype=np.float64)
    return np.maximum(p, 0.0) + np.log1p(np.exp(-np.abs(p)))


def softmax_columns(p: np.ndarray) -> np.ndarray:
    """Column-wise max-shifted softmax."""
    shifted = p - p.max(axis=0, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=0, keepdims=True)


def logsumexp_columns(p: np.ndarray) -> np.ndarray:
    m = p.max(axis=0, keepdims=True)
    return (m + np.log(np.exp(p - m).sum(axis=0, keepdims=True)))[0]


def _check_pair_shapes(p: np.ndarray, y: np.ndarray) -> None:
    if p.ndim != 2 or y.ndim != 2 or p.shape != y.shape:
        raise ShapeError(f"logits {p.shape} and targets {y.shape} must match")


def _check_binary_targets(y: np.ndarray) -> None:
    if not np.isin(y, (0.0, 1.0)).all():
        raise ValueError("bce targets must be 0 or 1")


def _check_one_hot(y: np.ndarray) -> None:
    if not np.isin(y, (0.0, 1.0)).all() or not np.allclose(y.sum(axis=0), 1.0):
        raise ValueError("multiclass targets must be one-hot columns")


@dataclass(frozen=True)
class LossPair:
    """A loss kind plus the batch-scale N used by the seed conventions.

    batch_scale=None means "the column count of the logits at call time",
    which is what the training loop wants; identity checks pin it to 1.
    """

    kind: str
    batch_scale: int | None = None

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ValueError(f"unknown loss kind {self.kind!r}")
        if self.batch_scale is not None and self.batch_scale < 1:
            raise ValueError("batch_scale must be a positive count")

    def _n(self, p: np.ndarray) -> int:
        return self.batch_scale if self.batch_scale is not None else p.shape[1]

    def loss_value(self, p: np.ndarray, y: np.ndarray) -> float:
        """Batch-mean loss."""
        p = np.asarray(p, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        _check_pair_shapes(p, y)
        if self.kind == "mse":
            per_pair = 0.5 * np.square(p - y).sum(axis=0)
        elif self.kind == "bce":
            _check_binary_targets(y)
            # -y log s(p) - (1-y) log(1-s(p)) == softplus((1-2y) p) for
            # binary y; this form never cancels, even at saturated logits
            per_pair = softplus((1.0 - 2.0 * y) * p).sum(axis=0)
        else:
            _check_one_hot(y)
            per_pair = logsumexp_columns(p) - (y * p).sum(axis=0)
        return float(per_pair.mean())

    def primary_seed(self, p: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Exact prediction-space loss gradient, scaled by 1/N."""
        p = np.asarray(p, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        _check_pair_shapes(p, y)
        if self.kind == "mse":
            raw = p - y
        elif self.kind == "bce":
            _check_binary_targets(y)
            raw = sigmoid(p) - y
        else:
            _check_one_hot(y)
            raw = softmax_columns(p) - y
        return raw / self._n(p)

    def aux_seed(self, p: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Hessian-diagonal-imitating seed, scaled by 1/sqrt(N).

        Independent of y for every supported kind.
        """
        p = np.asarray(p, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        _check_pair_shapes(p, y)
        if self.kind == "mse":
            raw = np.ones_like(p)
        elif self.kind == "bce":
            ap = np.abs(p)
            safe = np.where(ap <= _BCE_GUARD, p, 0.0)
            raw = np.where(
                ap <= _BCE_GUARD,
                1.0 / (np.exp(0.5 * safe) + np.exp(-0.5 * safe)),
                np.exp(-0.5 * ap),
            )
        else:
            s = softmax_columns(p)
            # (1/2) sqrt(1 - (2s-1)^2) factored as sqrt(s(1-s)): identical
            # algebraically, but free of cancellation at saturated logits
            raw = np.sqrt(s * (1.0 - s))
        return raw / np.sqrt(self._n(p))


# default central-difference steps: the multiclass loss sits at O(1) values
# where rounding dominates a 1e-4 step, so it gets a larger one
_FD_STEP = {"mse": 1e-4, "bce": 1e-4, "multiclass-ce": 3e-4}


def verify_hessian_identity(
    pair: LossPair,
    p: np.ndarray,
    y: np.ndarray,
    tol: float,
    step: float | None = None,
) -> dict:
    """Compare squared auxiliary seeds against the finite-difference
    Hessian diagonal of the per-pair loss.

    Single-pair check (one logits column, N = 1).  Returns the maximum
    absolute deviation over components and whether it is within tol.
    """
    if step is None:
        step = _FD_STEP[pair.kind]
    p = np.asarray(p, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    _check_pair_shapes(p, y)
    if p.shape[1] != 1:
        raise ShapeError("identity check is stated per pair: pass one column")
    unit = LossPair(pair.kind, batch_scale=1)
    v = unit.aux_seed(p, y)
    max_err = 0.0
    for i in range(p.shape[0]):
        hi, lo = p.copy(), p.copy()
        hi[i, 0] += step
        lo[i, 0] -= step
        second = (
            unit.loss_value(hi, y) - 2.0 * unit.loss_value(p, y) + unit.loss_value(lo, y)
        ) / (step * step)
        max_err = max(max_err, abs(float(v[i, 0]) ** 2 - second))
    return {"max_abs_error": max_err, "tol": tol, "ok": max_err < tol}
