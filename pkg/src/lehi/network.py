"""Multilayer perceptron with cached forward and seeded backward passes.

The backward pass is a vector-Jacobian product: any seed matrix with the
shape of the network output can be pulled back through the prediction
Jacobian.  Backpropagating the loss gradient gives the ordinary training
gradient; backpropagating an auxiliary seed from the losses module gives
the curvature-imitating gradient.  Both reuse the same forward cache, so
a dual backward costs one forward pass plus two cheap backward sweeps.

Serialization format (little-endian, see save_model/load_model):

    magic   4 bytes   b"MLP\\x01"
    u32     layer count L
    L x (u32 out_dim, u32 in_dim, u8 activation)   activation: 0=identity, 1=relu
    L x (f64[out*in] weights row-major, f64[out] biases)
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .numcore import SeededRng, ShapeError

ACTIVATIONS = ("identity", "relu")
_ACT_CODE = {"identity": 0, "relu": 1}
_ACT_NAME = {code: name for name, code in _ACT_CODE.items()}


@dataclass
class Layer:
    weights: np.ndarray  # out x in
    biases: np.ndarray  # out x 1
    activation: str = "relu"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.weights.ndim != 2:
            raise ShapeError("layer weights must be 2-D")
        if self.biases.shape != (self.weights.shape[0], 1):
            raise ShapeError(
                f"bias shape {self.biases.shape} does not match "
                f"{self.weights.shape[0]} outputs"
            )


@dataclass
class MlpModel:
    """Layers chained in order; the final activation must be identity so
    losses consume raw logits."""

    layers: list[Layer]

    def __post_init__(self):
        if not self.layers:
            raise ValueError("model needs at least one layer")
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if nxt.weights.shape[1] != prev.weights.shape[0]:
                raise ShapeError(
                    f"layer dimensions do not chain: {prev.weights.shape} -> "
                    f"{nxt.weights.shape}"
                )
        if self.layers[-1].activation != "identity":
            raise ValueError("final layer activation must be identity")

    @property
    def input_dim(self) -> int:
        return self.layers[0].weights.shape[1]

    @property
    def output_dim(self) -> int:
        return self.layers[-1].weights.shape[0]

    @property
    def dims(self) -> list[int]:
        return [self.input_dim] + [l.weights.shape[0] for l in self.layers]

    def parameters(self) -> list[np.ndarray]:
        """Flat parameter list: W1, b1, W2, b2, ..."""
        out: list[np.ndarray] = []
        for layer in self.layers:
            out.append(layer.weights)
            out.append(layer.biases)
        return out

    def set_parameters(self, params: list[np.ndarray]) -> None:
        if len(params) != 2 * len(self.layers):
            raise ShapeError("parameter count does not match model")
        for i, layer in enumerate(self.layers):
            w, b = params[2 * i], params[2 * i + 1]
            if w.shape != layer.weights.shape or b.shape != layer.biases.shape:
                raise ShapeError(f"parameter shape mismatch at layer {i}")
            layer.weights = w
            layer.biases = b


@dataclass
class ForwardCache:
    """Everything a backward pass with an arbitrary seed needs."""

    inputs: list[np.ndarray]  # activation entering each layer
    preacts: list[np.ndarray]  # W x + b per layer
    outputs: np.ndarray  # final logits (== last preact, identity output)


@dataclass
class GradientSet:
    """Per-layer weight and bias gradients, shape-congruent with a model."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def arrays(self) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def max_abs(self) -> float:
        """Infinity norm over all entries (nan if any entry is nan)."""
        return max(float(np.max(np.abs(a))) for a in self.arrays())

    def all_finite(self) -> bool:
        return all(np.isfinite(a).all() for a in self.arrays())

    @classmethod
    def zeros_like(cls, model: MlpModel) -> "GradientSet":
        return cls(
            weights=[np.zeros_like(l.weights) for l in model.layers],
            biases=[np.zeros_like(l.biases) for l in model.layers],
        )


def init_mlp(dims: list[int], rng: SeededRng, hidden_activation: str = "relu") -> MlpModel:
    """Gaussian init: stddev sqrt(2/fan_in) for relu layers, sqrt(1/fan_in)
    for the identity output layer; biases start at zero."""
    if len(dims) < 2:
        raise ValueError("dims needs at least input and output sizes")
    layers = []
    for i in range(len(dims) - 1):
        fan_in, fan_out = dims[i], dims[i + 1]
        last = i == len(dims) - 2
        act = "identity" if last else hidden_activation
        gain = 1.0 if act == "identity" else 2.0
        w = rng.normal(fan_out, fan_in, stddev=np.sqrt(gain / fan_in))
        layers.append(Layer(w, np.zeros((fan_out, 1)), act))
    return MlpModel(layers)


def forward(model: MlpModel, x: np.ndarray) -> ForwardCache:
    """Run the network on a d_x x batch input, caching every intermediate."""
    if x.ndim != 2 or x.shape[0] != model.input_dim:
        raise ShapeError(
            f"input shape {x.shape} does not match model input dim {model.input_dim}"
        )
    inputs, preacts = [], []
    a = np.asarray(x, dtype=np.float64)
    for layer in model.layers:
        inputs.append(a)
        z = layer.weights @ a + layer.biases
        preacts.append(z)
        a = np.maximum(z, 0.0) if layer.activation == "relu" else z
    return ForwardCache(inputs=inputs, preacts=preacts, outputs=a)


def _check_seed(model: MlpModel, cache: ForwardCache, seed: np.ndarray) -> None:
    if len(cache.inputs) != len(model.layers):
        raise ShapeError("cache does not match model depth")
    if seed.shape != cache.outputs.shape:
        raise ShapeError(
            f"seed shape {seed.shape} does not match outputs {cache.outputs.shape}"
        )


def backward_seeded(
    model: MlpModel,
    cache: ForwardCache,
    seed: np.ndarray,
    average: bool = True,
) -> GradientSet:
    """Pull a seed matrix back through the prediction Jacobian.

    Returns sum_j (grad_w p)(x_j) seed_j over the batch, divided by the
    batch size when ``average`` is True.  Seeding with the per-sample loss
    gradient therefore yields the batch-mean training gradient.  Callers
    whose seeds already carry a batch convention pass average=False.
    """
    _check_seed(model, cache, seed)
    batch = seed.shape[1]
    scale = 1.0 / batch if average else 1.0
    n_layers = len(model.layers)
    grad_w: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
    grad_b: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
    delta = np.asarray(seed, dtype=np.float64)
    for l in range(n_layers - 1, -1, -1):
        layer = model.layers[l]
        if layer.activation == "relu":
            delta = delta * (cache.preacts[l] > 0.0)
        grad_w[l] = scale * (delta @ cache.inputs[l].T)
        grad_b[l] = scale * delta.sum(axis=1, keepdims=True)
        if l > 0:
            delta = layer.weights.T @ delta
    return GradientSet(weights=grad_w, biases=grad_b)


def dual_backward(
    model: MlpModel,
    cache: ForwardCache,
    seed_primary: np.ndarray,
    seed_aux: np.ndarray,
    average: bool = True,
) -> tuple[GradientSet, GradientSet]:
    """Two backward passes over one shared forward cache.

    Bit-identical to two independent backward_seeded calls; the saving is
    the single forward pass.
    """
    return (
        backward_seeded(model, cache, seed_primary, average=average),
        backward_seeded(model, cache, seed_aux, average=average),
    )


def save_model(model: MlpModel, path: str) -> None:
    """Write the documented binary layout (see module docstring)."""
    with open(path, "wb") as fh:
        fh.write(b"MLP\x01")
        fh.write(struct.pack("<I", len(model.layers)))
        for layer in model.layers:
            out_dim, in_dim = layer.weights.shape
            fh.write(struct.pack("<IIB", out_dim, in_dim, _ACT_CODE[layer.activation]))
        for layer in model.layers:
            fh.write(np.ascontiguousarray(layer.weights, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(layer.biases, dtype="<f8").tobytes())


def load_model(path: str) -> MlpModel:
    with open(path, "rb") as fh:
        if fh.read(4) != b"MLP\x01":
            raise ValueError(f"{path}: not a serialized model (bad magic)")
        (n_layers,) = struct.unpack("<I", fh.read(4))
        shapes = []
        for _ in range(n_layers):
            out_dim, in_dim, act = struct.unpack("<IIB", fh.read(9))
            shapes.append((out_dim, in_dim, _ACT_NAME[act]))
        layers = []
        for out_dim, in_dim, act in shapes:
            w = np.frombuffer(fh.read(8 * out_dim * in_dim), dtype="<f8")
            b = np.frombuffer(fh.read(8 * out_dim), dtype="<f8")
            layers.append(
                Layer(
                    w.reshape(out_dim, in_dim).astype(np.float64),
                    b.reshape(out_dim, 1).astype(np.float64),
                    act,
                )
            )
    return MlpModel(layers)
