"""Small dense-network engine: tanh hidden layers, sigmoid output, MSE loss, Adam.

Weights are stored as ``(fan_out, fan_in)`` matrices so a layer computes
``a @ W.T + b`` on a row-major batch of samples.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import InvalidInputError


@dataclass(frozen=True)
class NetworkArch:
    hidden_widths: tuple[int, ...] = (200,) * 15
    input_dim: int = 6
    output_dim: int = 3

    def __post_init__(self):
        object.__setattr__(self, "hidden_widths", tuple(int(w) for w in self.hidden_widths))
        if self.input_dim < 1 or self.output_dim < 1:
            raise InvalidInputError("input_dim and output_dim must be positive")
        if any(w < 1 for w in self.hidden_widths):
            raise InvalidInputError(f"hidden widths must be >= 1, got {self.hidden_widths}")

    @classmethod
    def uniform(cls, depth: int, width: int) -> "NetworkArch":
        return cls(hidden_widths=(width,) * depth)

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden_widths, self.output_dim)

    @property
    def n_layers(self) -> int:
        return len(self.hidden_widths) + 1

    def shapes(self) -> list[tuple[tuple[int, int], tuple[int]]]:
        sizes = self.layer_sizes
        return [((sizes[i + 1], sizes[i]), (sizes[i + 1],)) for i in range(len(sizes) - 1)]

    @property
    def n_params(self) -> int:
        return sum(w[0] * w[1] + b[0] for w, b in self.shapes())


@dataclass
class NetworkParams:
    arch: NetworkArch
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        shapes = self.arch.shapes()
        if len(self.weights) != len(shapes) or len(self.biases) != len(shapes):
            raise InvalidInputError(
                f"expected {len(shapes)} layers, got {len(self.weights)} weights / {len(self.biases)} biases"
            )
        for i, ((ws, bs), w, b) in enumerate(zip(shapes, self.weights, self.biases)):
            if w.shape != ws or b.shape != bs:
                raise InvalidInputError(f"layer {i}: expected W{ws} b{bs}, got W{w.shape} b{b.shape}")

    @property
    def dtype(self) -> np.dtype:
        return self.weights[0].dtype

    def arrays(self) -> list[np.ndarray]:
        """Parameter arrays in layer order, weight before bias."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def copy(self) -> "NetworkParams":
        return NetworkParams(self.arch, [w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def zeros_like(self) -> "NetworkParams":
        return NetworkParams(self.arch, [np.zeros_like(w) for w in self.weights], [np.zeros_like(b) for b in self.biases])

    def all_finite(self) -> bool:
        return all(np.isfinite(a).all() for a in self.arrays())

    def astype(self, dtype) -> "NetworkParams":
        return NetworkParams(
            self.arch, [w.astype(dtype) for w in self.weights], [b.astype(dtype) for b in self.biases]
        )

    def equals(self, other: "NetworkParams") -> bool:
        return self.arch == other.arch and all(
            a.dtype == b.dtype and np.array_equal(a, b) for a, b in zip(self.arrays(), other.arrays())
        )


# Gradients share the parameter layout.
Gradients = NetworkParams


def init_params(arch: NetworkArch, seed: int, dtype=np.float64) -> NetworkParams:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for (fan_out, fan_in), bshape in arch.shapes():
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)).astype(dtype))
        biases.append(np.zeros(bshape, dtype=dtype))
    return NetworkParams(arch, weights, biases)


def _as_batch(x, width: int, name: str, dtype) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=dtype)
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != width:
        raise InvalidInputError(f"{name} must have trailing dimension {width}, got shape {np.shape(x)}")
    return arr, single


def forward(params: NetworkParams, inputs) -> tuple[np.ndarray, list[np.ndarray]]:
    """Evaluate the network on one sample ``(6,)`` or a batch ``(n, 6)``.

    Returns the sigmoid outputs and the list of layer activations, input first,
    which ``backward`` reuses.
    """
    a, single = _as_batch(inputs, params.arch.input_dim, "inputs", params.dtype)
    if not np.isfinite(a).all():
        raise InvalidInputError("inputs contain non-finite values")
    cache = [a]
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = a @ w.T
        z += b
        a = expit(z, out=z) if i == last else np.tanh(z, out=z)
        cache.append(a)
    out = a[0] if single else a
    return out, cache


def backward(params: NetworkParams, batch_inputs, batch_targets) -> tuple[float, Gradients]:
    """Mean squared error over samples and channels, and its exact gradient."""
    x, _ = _as_batch(batch_inputs, params.arch.input_dim, "batch_inputs", params.dtype)
    t, _ = _as_batch(batch_targets, params.arch.output_dim, "batch_targets", params.dtype)
    if x.shape[0] == 0:
        raise InvalidInputError("empty batch")
    if x.shape[0] != t.shape[0]:
        raise InvalidInputError(f"{x.shape[0]} inputs but {t.shape[0]} targets")
    out, cache = forward(params, x)
    diff = out - t
    loss = float(np.mean(diff * diff))

    # dL/dz at the sigmoid layer
    delta = diff * (2.0 / diff.size)
    delta *= out * (1.0 - out)
    n = len(params.weights)
    gw: list[np.ndarray] = [None] * n  # type: ignore[list-item]
    gb: list[np.ndarray] = [None] * n  # type: ignore[list-item]
    for i in range(n - 1, -1, -1):
        a_prev = cache[i]
        gw[i] = delta.T @ a_prev
        gb[i] = delta.sum(axis=0)
        if i > 0:
            delta = delta @ params.weights[i]
            delta *= 1.0 - a_prev * a_prev
    return loss, NetworkParams(params.arch, gw, gb)


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    _scratch: list[np.ndarray] = field(default_factory=list, repr=False, compare=False)

    @classmethod
    def fresh(cls, params: NetworkParams, beta1=0.9, beta2=0.999, epsilon=1e-8) -> "AdamState":
        arrays = params.arrays()
        return cls(
            m=[np.zeros_like(a) for a in arrays],
            v=[np.zeros_like(a) for a in arrays],
            beta1=beta1,
            beta2=beta2,
            epsilon=epsilon,
        )


def adam_step(params: NetworkParams, grads: Gradients, state: AdamState, lr: float):
    """One bias-corrected Adam update. Mutates ``params`` and ``state`` in place and returns both."""
    if not lr > 0:
        raise InvalidInputError(f"learning rate must be positive, got {lr}")
    p_arrays, g_arrays = params.arrays(), grads.arrays()
    if len(p_arrays) != len(g_arrays) or len(p_arrays) != len(state.m):
        raise InvalidInputError("parameter, gradient and optimizer state layouts differ")
    for p, g, m in zip(p_arrays, g_arrays, state.m):
        if p.shape != g.shape or p.shape != m.shape:
            raise InvalidInputError(f"shape mismatch: param {p.shape}, grad {g.shape}, state {m.shape}")
    if not state._scratch:
        state._scratch = [np.empty_like(p) for p in p_arrays]

    state.step_count += 1
    b1, b2, eps = state.beta1, state.beta2, state.epsilon
    t = state.step_count
    step = lr / (1.0 - b1**t)
    vcorr = 1.0 / (1.0 - b2**t)
    for p, g, m, v, s in zip(p_arrays, g_arrays, state.m, state.v, state._scratch):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        np.multiply(g, g, out=s)
        s *= 1.0 - b2
        v += s
        # p -= lr * m_hat / (sqrt(v_hat) + eps)
        np.multiply(v, vcorr, out=s)
        np.sqrt(s, out=s)
        s += eps
        np.divide(m, s, out=s)
        s *= step
        p -= s
    return params, state
