"""Small NumPy neural-network core shared by the learning-based optimizers.

Dense layers with tanh/relu/linear activations, a 3x3 same-padding
convolution, and Adam with bias-corrected moments and global-norm clipping.
Forward passes return a tape that the matching backward pass consumes.
"""

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .exceptions import DimensionMismatch

ADAM_EPS = 1e-8


def _tanh_grad(y: np.ndarray) -> np.ndarray:
    return 1.0 - y**2


def _relu_grad(y: np.ndarray) -> np.ndarray:
    return (y > 0).astype(y.dtype)


# name -> (activation, derivative expressed through the activation output)
ACTIVATIONS: Dict[str, Tuple] = {
    "tanh": (np.tanh, _tanh_grad),
    "relu": (lambda z: np.maximum(z, 0.0), _relu_grad),
    "linear": (lambda z: z, np.ones_like),
}


@dataclass
class MlpSpec:
    """Layer sizes (input first) and one activation tag per layer.

    ``output_gain`` scales the initial weights of the last layer.
    """

    sizes: List[int]
    activations: List[str]
    output_gain: float = 1.0

    def __post_init__(self):
        if len(self.sizes) < 2:
            raise ValueError("an MLP needs an input and an output size")
        if len(self.activations) != len(self.sizes) - 1:
            raise DimensionMismatch("one activation per layer is required")
        if any(n < 1 for n in self.sizes):
            raise ValueError("layer sizes must be positive")
        unknown = [a for a in self.activations if a not in ACTIVATIONS]
        if unknown:
            raise ValueError(f"Unknown activation(s): {unknown}")


@dataclass
class MlpParams:
    weights: List[np.ndarray]
    biases: List[np.ndarray]
    activations: List[str]

    def __post_init__(self):
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if b.shape != (w.shape[1],):
                raise DimensionMismatch(
                    f"layer {i}: bias {b.shape} vs weight {w.shape}"
                )
            if i and w.shape[0] != self.weights[i - 1].shape[1]:
                raise DimensionMismatch(f"layer {i} does not match the previous layer")

    def arrays(self) -> List[np.ndarray]:
        """Parameters in optimizer order: W0, b0, W1, b1, ..."""
        out: List[np.ndarray] = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out

    def with_arrays(self, arrays: Sequence[np.ndarray]) -> "MlpParams":
        return MlpParams(
            weights=list(arrays[0::2]),
            biases=list(arrays[1::2]),
            activations=list(self.activations),
        )

    def copy(self) -> "MlpParams":
        return self.with_arrays([a.copy() for a in self.arrays()])

    @property
    def n_params(self) -> int:
        return sum(a.size for a in self.arrays())


@dataclass
class MlpTape:
    params: MlpParams
    inputs: List[np.ndarray]
    outputs: List[np.ndarray]
    squeeze: bool


def mlp_init(spec: MlpSpec, seed: int) -> MlpParams:
    """Glorot-uniform weights and zero biases from a seeded generator."""
    rng = np.random.default_rng(seed)
    weights = []
    for i, (n_in, n_out) in enumerate(zip(spec.sizes[:-1], spec.sizes[1:])):
        limit = math.sqrt(6.0 / (n_in + n_out))
        w = rng.uniform(-limit, limit, size=(n_in, n_out))
        if i == len(spec.sizes) - 2:
            w *= spec.output_gain
        weights.append(w)
    biases = [np.zeros(n) for n in spec.sizes[1:]]
    return MlpParams(weights=weights, biases=biases, activations=list(spec.activations))


def mlp_forward(params: MlpParams, x: np.ndarray) -> Tuple[np.ndarray, MlpTape]:
    """Evaluate the network on one input vector or a (batch, n_in) matrix."""
    x = np.asarray(x, dtype=float)
    squeeze = x.ndim == 1
    h = x[None, :] if squeeze else x
    if h.shape[1] != params.weights[0].shape[0]:
        raise DimensionMismatch(
            f"input has {h.shape[1]} features, "
            f"network expects {params.weights[0].shape[0]}"
        )
    inputs, outputs = [], []
    for w, b, act in zip(params.weights, params.biases, params.activations):
        inputs.append(h)
        h = ACTIVATIONS[act][0](h @ w + b)
        outputs.append(h)
    tape = MlpTape(params=params, inputs=inputs, outputs=outputs, squeeze=squeeze)
    return (h[0] if squeeze else h), tape


def mlp_backward(tape: MlpTape, grad_out: np.ndarray) -> Tuple[MlpParams, np.ndarray]:
    """Backpropagate dL/d(output) through the tape.

    Returns:
        Tuple of parameter gradients (as :class:`MlpParams`) and dL/d(input)
    """
    delta = np.asarray(grad_out, dtype=float)
    if tape.squeeze:
        delta = delta[None, :]
    if delta.shape != tape.outputs[-1].shape:
        raise DimensionMismatch(
            f"output gradient {delta.shape} vs {tape.outputs[-1].shape}"
        )

    n_layers = len(tape.params.weights)
    grad_w: List[np.ndarray] = [np.empty(0)] * n_layers
    grad_b: List[np.ndarray] = [np.empty(0)] * n_layers
    for i in reversed(range(n_layers)):
        act = tape.params.activations[i]
        delta = delta * ACTIVATIONS[act][1](tape.outputs[i])
        grad_w[i] = tape.inputs[i].T @ delta
        grad_b[i] = delta.sum(axis=0)
        delta = delta @ tape.params.weights[i].T

    activations = list(tape.params.activations)
    grads = MlpParams(weights=grad_w, biases=grad_b, activations=activations)
    return grads, (delta[0] if tape.squeeze else delta)


# Convolution


@dataclass
class ConvParams:
    """Weights (out_channels, in_channels, 3, 3) and biases (out_channels,)."""

    weight: np.ndarray
    bias: np.ndarray

    @classmethod
    def init(
        cls, in_channels: int, out_channels: int, rng: np.random.Generator
    ) -> "ConvParams":
        fan_in = in_channels * 9
        limit = math.sqrt(6.0 / (fan_in + out_channels * 9))
        return cls(
            weight=rng.uniform(-limit, limit, size=(out_channels, in_channels, 3, 3)),
            bias=np.zeros(out_channels),
        )


@dataclass
class ConvTape:
    params: ConvParams
    windows: np.ndarray  # (batch, in, H, W, 3, 3)
    input_shape: Tuple[int, ...]


def conv_forward(params: ConvParams, x: np.ndarray) -> Tuple[np.ndarray, ConvTape]:
    """3x3 cross-correlation with zero 'same' padding on (batch, in, H, W) input."""
    if x.ndim != 4 or x.shape[1] != params.weight.shape[1]:
        raise DimensionMismatch(f"conv input {x.shape} vs weight {params.weight.shape}")
    padded = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    windows = sliding_window_view(padded, (3, 3), axis=(2, 3))
    out = np.einsum("bchwij,ocij->bohw", windows, params.weight)
    out += params.bias[None, :, None, None]
    return out, ConvTape(params=params, windows=windows, input_shape=x.shape)


def conv_backward(
    tape: ConvTape, grad_out: np.ndarray
) -> Tuple[ConvParams, np.ndarray]:
    """Gradients of a 3x3 same convolution: (parameter grads, input grad)."""
    weight = tape.params.weight
    grad_weight = np.einsum("bohw,bchwij->ocij", grad_out, tape.windows)
    grad_bias = grad_out.sum(axis=(0, 2, 3))

    batch, channels, height, width = tape.input_shape
    grad_padded = np.zeros((batch, channels, height + 2, width + 2))
    for i in range(3):
        for j in range(3):
            grad_padded[:, :, i : i + height, j : j + width] += np.einsum(
                "bohw,oc->bchw", grad_out, weight[:, :, i, j]
            )
    return ConvParams(grad_weight, grad_bias), grad_padded[:, :, 1:-1, 1:-1]


# Adam


@dataclass
class AdamState:
    first: List[np.ndarray] = field(default_factory=list)
    second: List[np.ndarray] = field(default_factory=list)
    t: int = 0

    @classmethod
    def zeros_like(cls, arrays: Sequence[np.ndarray]) -> "AdamState":
        return cls(
            first=[np.zeros_like(a, dtype=float) for a in arrays],
            second=[np.zeros_like(a, dtype=float) for a in arrays],
        )


def global_norm(arrays: Sequence[np.ndarray]) -> float:
    return float(math.sqrt(sum(float(np.sum(a * a)) for a in arrays)))


def clip_by_global_norm(
    grads: Sequence[np.ndarray], max_norm: Optional[float]
) -> List[np.ndarray]:
    """Rescale all gradients together so their joint norm is at most ``max_norm``."""
    grads = list(grads)
    if max_norm is None:
        return grads
    norm = global_norm(grads)
    if norm <= max_norm or norm == 0.0:
        return grads
    return [g * (max_norm / norm) for g in grads]


def adam_step(
    params: Sequence[np.ndarray],
    grads: Sequence[np.ndarray],
    state: AdamState,
    lr: float,
    clip: Optional[float] = None,
    betas: Tuple[float, float] = (0.9, 0.999),
) -> List[np.ndarray]:
    """One Adam update; ``state`` is advanced in place, parameters are returned new.

    Raises:
        DimensionMismatch: If parameter, gradient and state shapes disagree
    """
    if len(params) != len(grads):
        raise DimensionMismatch("one gradient per parameter array is required")
    if not state.first:
        fresh = AdamState.zeros_like(params)
        state.first, state.second = fresh.first, fresh.second
    for p, g, m in zip(params, grads, state.first):
        if p.shape != g.shape or p.shape != m.shape:
            raise DimensionMismatch(
                f"parameter {p.shape}, gradient {g.shape}, state {m.shape}"
            )

    grads = clip_by_global_norm(grads, clip)
    beta1, beta2 = betas
    state.t += 1
    updated = []
    for i, (p, g) in enumerate(zip(params, grads)):
        state.first[i] = beta1 * state.first[i] + (1.0 - beta1) * g
        state.second[i] = beta2 * state.second[i] + (1.0 - beta2) * g * g
        m_hat = state.first[i] / (1.0 - beta1**state.t)
        v_hat = state.second[i] / (1.0 - beta2**state.t)
        updated.append(p - lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS))
    return updated
