"""A small dense-network engine in float64 numpy.

Networks are stacks of affine layers with ``relu``, ``linear`` or ``softmax``
activation. Each ``forward`` returns a cache that ``backward`` consumes.
Training uses Adam. The module also has the batch power-normalization layer
used by the transmitter, plus a central-difference gradient checker.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .numerics import RngStream

ACTIVATIONS = ("relu", "linear", "softmax")
PROB_FLOOR = 1e-12


class StaleCacheError(RuntimeError):
    """A forward cache was used after the parameters changed."""


@dataclass(frozen=True)
class LayerSpec:
    input_width: int
    output_width: int
    activation: str = "relu"

    def __post_init__(self):
        if self.input_width < 1 or self.output_width < 1:
            raise ValueError("layer widths must be >= 1")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


def mlp_specs(input_width: int, hidden: Sequence[int], output_width: int,
              output_activation: str = "linear") -> tuple[LayerSpec, ...]:
    """ReLU hidden layers followed by one output layer."""
    widths = [int(input_width), *map(int, hidden), int(output_width)]
    acts = ["relu"] * len(hidden) + [output_activation]
    return tuple(LayerSpec(a, b, act) for a, b, act in zip(widths[:-1], widths[1:], acts))


@dataclass
class MlpParams:
    specs: tuple[LayerSpec, ...]
    weights: list[np.ndarray]  # each (output, input)
    biases: list[np.ndarray]
    version: int = field(default=0, compare=False)

    def __post_init__(self):
        self.specs = tuple(self.specs)
        if not self.specs:
            raise ValueError("network needs at least one layer")
        if len(self.weights) != len(self.specs) or len(self.biases) != len(self.specs):
            raise ValueError("one weight matrix and bias per layer")
        for i, spec in enumerate(self.specs):
            if spec.activation == "softmax" and i != len(self.specs) - 1:
                raise ValueError("softmax is only allowed on the final layer")
            if i and spec.input_width != self.specs[i - 1].output_width:
                raise ValueError(f"layer {i} input width does not match previous output")
            if self.weights[i].shape != (spec.output_width, spec.input_width):
                raise ValueError(f"layer {i} weight shape {self.weights[i].shape} does not match its layer spec")
            if self.biases[i].shape != (spec.output_width,):
                raise ValueError(f"layer {i} bias shape {self.biases[i].shape} does not match its layer spec")

    @classmethod
    def initialize(cls, specs: Sequence[LayerSpec], rng: RngStream) -> "MlpParams":
        """Glorot-uniform weights, zero biases."""
        weights, biases = [], []
        for spec in specs:
            limit = np.sqrt(6.0 / (spec.input_width + spec.output_width))
            u = rng.uniform((spec.output_width, spec.input_width))
            weights.append((2.0 * u - 1.0) * limit)
            biases.append(np.zeros(spec.output_width))
        return cls(tuple(specs), weights, biases)

    @property
    def input_width(self) -> int:
        return self.specs[0].input_width

    @property
    def output_width(self) -> int:
        return self.specs[-1].output_width

    def arrays(self) -> list[np.ndarray]:
        """Parameter arrays in the order ``W0, b0, W1, b1, ...`` (live references)."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def n_parameters(self) -> int:
        return sum(a.size for a in self.arrays())

    def copy(self) -> "MlpParams":
        return MlpParams(self.specs, [w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def touch(self):
        """Mark parameters as modified so older caches are rejected."""
        self.version += 1


@dataclass
class ForwardCache:
    inputs: list[np.ndarray]
    pre_activations: list[np.ndarray]
    output: np.ndarray
    version: int
    params_id: int


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_backward(probs: np.ndarray, grad_probs: np.ndarray) -> np.ndarray:
    """Vector-Jacobian product of softmax: gradient w.r.t. the logits."""
    return probs * (grad_probs - np.sum(grad_probs * probs, axis=-1, keepdims=True))


def _activate(z, activation):
    if activation == "relu":
        return np.maximum(z, 0.0)
    if activation == "softmax":
        return softmax(z)
    return z


def forward(params: MlpParams, x: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[-1] != params.input_width:
        raise ValueError(f"input width {x.shape[-1]} does not match network input {params.input_width}")
    inputs, pre = [], []
    a = x
    for spec, w, b in zip(params.specs, params.weights, params.biases):
        inputs.append(a)
        z = a @ w.T + b
        pre.append(z)
        a = _activate(z, spec.activation)
    return a, ForwardCache(inputs, pre, a, params.version, id(params))


def predict(params: MlpParams, x: np.ndarray) -> np.ndarray:
    """Forward pass without keeping intermediate activations."""
    a = np.asarray(x, dtype=np.float64)
    if a.shape[-1] != params.input_width:
        raise ValueError(f"input width {a.shape[-1]} does not match network input {params.input_width}")
    for spec, w, b in zip(params.specs, params.weights, params.biases):
        a = _activate(a @ w.T + b, spec.activation)
    return a


def backward(params: MlpParams, cache: ForwardCache, grad_out: np.ndarray, *,
             wrt_logits: bool = False) -> tuple[list[np.ndarray], np.ndarray]:
    """Backpropagate ``grad_out`` through the network.

    ``grad_out`` is the loss gradient w.r.t. the network output, or w.r.t.
    the final pre-activation when ``wrt_logits`` is set (the usual route for
    a softmax + cross-entropy head). Returns parameter gradients in
    :meth:`MlpParams.arrays` order and the gradient w.r.t. the input.
    """
    if cache.params_id != id(params) or cache.version != params.version:
        raise StaleCacheError("forward cache does not belong to the current parameters")
    grads: list[np.ndarray] = [None] * (2 * len(params.specs))
    g = np.asarray(grad_out, dtype=np.float64).reshape(cache.output.shape)
    for i in reversed(range(len(params.specs))):
        spec = params.specs[i]
        if not (wrt_logits and i == len(params.specs) - 1):
            if spec.activation == "relu":
                g = g * (cache.pre_activations[i] > 0)
            elif spec.activation == "softmax":
                g = softmax_backward(cache.output, g)
        grads[2 * i] = g.T @ cache.inputs[i]
        grads[2 * i + 1] = g.sum(axis=0)
        g = g @ params.weights[i]
    return grads, g


def cross_entropy(probs: np.ndarray, labels: np.ndarray) -> float:
    """Mean negative log-probability of the true class; probabilities floored at 1e-12."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels)
    if labels.min() < 0 or labels.max() >= probs.shape[-1]:
        raise ValueError("label out of range")
    p = probs[np.arange(labels.size), labels]
    return float(-np.mean(np.log(np.maximum(p, PROB_FLOOR))))


def one_hot(labels: np.ndarray, n_classes: int) -> np.ndarray:
    out = np.zeros((np.size(labels), n_classes))
    out[np.arange(np.size(labels)), labels] = 1.0
    return out


def softmax_cross_entropy_grad(probs: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Gradient of :func:`cross_entropy` w.r.t. the softmax logits, ``(p - onehot)/M``."""
    return (probs - one_hot(labels, probs.shape[-1])) / probs.shape[0]


@dataclass
class NormCache:
    x_in: np.ndarray
    rms: float


def power_normalize(x: np.ndarray) -> tuple[np.ndarray, NormCache]:
    """Scale a complex batch so its mean per-symbol power is exactly one."""
    x = np.asarray(x, dtype=np.complex128)
    mean_power = np.mean(x.real**2 + x.imag**2)
    if not mean_power > 0:
        raise ValueError("cannot normalize an all-zero batch")
    rms = float(np.sqrt(mean_power))
    return x / rms, NormCache(x, rms)


def power_normalize_backward(grad: np.ndarray, cache: NormCache) -> np.ndarray:
    """Gradient through :func:`power_normalize`.

    Complex gradients use the ``dL/dRe + j dL/dIm`` convention. The second
    term couples the batch through the shared normalizer.
    """
    grad = np.asarray(grad, dtype=np.complex128)
    if grad.shape != cache.x_in.shape:
        raise StaleCacheError("gradient shape does not match the normalization cache")
    x, r = cache.x_in, cache.rms
    radial = np.sum(x.real * grad.real + x.imag * grad.imag)
    return grad / r - x * radial / (x.size * r**3)


@dataclass
class AdamState:
    first_moment: list[np.ndarray]
    second_moment: list[np.ndarray]
    step_count: int = 0
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if self.step_count < 0:
            raise ValueError("step_count must be >= 0")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("betas must be in [0, 1)")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")

    @classmethod
    def for_params(cls, params: MlpParams, learning_rate: float = 1e-3, **kw) -> "AdamState":
        arrays = params.arrays()
        return cls([np.zeros_like(a) for a in arrays], [np.zeros_like(a) for a in arrays],
                   learning_rate=learning_rate, **kw)


def adam_step(state: AdamState, params: MlpParams, grads: Sequence[np.ndarray]) -> tuple[MlpParams, AdamState]:
    """One bias-corrected Adam update, applied in place; returns ``(params, state)``."""
    arrays = params.arrays()
    if len(grads) != len(arrays):
        raise ValueError("gradient list does not match parameters")
    for a, g in zip(arrays, grads):
        if a.shape != np.shape(g):
            raise ValueError(f"gradient shape {np.shape(g)} does not match parameter {a.shape}")
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for a, g, m, v in zip(arrays, grads, state.first_moment, state.second_moment):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        a -= state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.epsilon)
    params.touch()
    return params, state


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-4) -> np.ndarray:
    """Elementwise ``|a - n| / max(|a|, |n|, floor)``.

    The floor keeps central-difference roundoff (about ``eps * |loss| / step``,
    ~1e-9 at step 1e-6) from dominating entries whose true gradient is
    itself near zero.
    """
    a = np.asarray(analytic)
    n = np.asarray(numeric)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


def numerical_gradient(loss_fn: Callable[[], float], arrays: Sequence[np.ndarray],
                       step: float = 1e-6) -> list[np.ndarray]:
    """Central differences of ``loss_fn()`` w.r.t. every entry of ``arrays`` (perturbed in place)."""
    out = []
    for arr in arrays:
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = loss_fn()
            flat[i] = orig - step
            down = loss_fn()
            flat[i] = orig
            gflat[i] = (up - down) / (2.0 * step)
        out.append(g)
    return out


def params_to_dict(prefix: str, params: MlpParams) -> dict:
    out = {f"{prefix}/specs": np.array(json.dumps(
        [[s.input_width, s.output_width, s.activation] for s in params.specs]))}
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        out[f"{prefix}/W{i}"] = w
        out[f"{prefix}/b{i}"] = b
    return out


def params_from_dict(prefix: str, data) -> MlpParams:
    specs = tuple(LayerSpec(int(a), int(b), str(act))
                  for a, b, act in json.loads(str(data[f"{prefix}/specs"])))
    weights = [np.array(data[f"{prefix}/W{i}"], dtype=np.float64) for i in range(len(specs))]
    biases = [np.array(data[f"{prefix}/b{i}"], dtype=np.float64) for i in range(len(specs))]
    return MlpParams(specs, weights, biases)


def save_params(path, params: MlpParams):
    np.savez(path, **params_to_dict("net", params))


def load_params(path) -> MlpParams:
    with np.load(path) as data:
        return params_from_dict("net", data)
