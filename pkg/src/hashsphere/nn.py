"""Small fully-connected decoder with hand-written backward pass and Adam."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

HIDDEN_ACTIVATIONS = ("identity", "relu", "leaky_relu")
OUTPUT_ACTIVATIONS = ("exponential", "sigmoid", "identity")
LEAKY_SLOPE = 0.01
EXP_CLAMP = 30.0
REL_L2_EPS = 0.01


class StaleCacheError(RuntimeError):
    """Backward called with a cache from before the last parameter update."""


class NonFiniteError(FloatingPointError):
    pass


@dataclass(frozen=True)
class MLPConfig:
    input_width: int
    output_width: int = 3
    hidden_layers: int = 2
    hidden_width: int = 16
    hidden_activation: str = "identity"
    output_activation: str = "exponential"

    def __post_init__(self):
        if min(self.input_width, self.output_width, self.hidden_width) < 1 or self.hidden_layers < 0:
            raise ValueError("layer widths must be >= 1 and hidden_layers >= 0")
        if self.hidden_activation not in HIDDEN_ACTIVATIONS:
            raise ValueError(f"hidden activation must be one of {HIDDEN_ACTIVATIONS}")
        if self.output_activation not in OUTPUT_ACTIVATIONS:
            raise ValueError(f"output activation must be one of {OUTPUT_ACTIVATIONS}")

    @property
    def widths(self) -> list[int]:
        return [self.input_width] + [self.hidden_width] * self.hidden_layers + [self.output_width]

    def param_count(self) -> int:
        w = self.widths
        return sum(a * b + b for a, b in zip(w, w[1:]))


@dataclass
class MLPParams:
    weights: list[np.ndarray]  # (in, out) per layer
    biases: list[np.ndarray]
    version: int = 0

    def arrays(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def astype(self, dtype) -> "MLPParams":
        return MLPParams([w.astype(dtype) for w in self.weights], [b.astype(dtype) for b in self.biases])


@dataclass
class ForwardCache:
    inputs: list[np.ndarray]  # input to each layer
    pre: list[np.ndarray]  # pre-activation of each layer
    output: np.ndarray
    version: int


def init_mlp(cfg: MLPConfig, seed: int, dtype=np.float32) -> MLPParams:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    w = cfg.widths
    for fan_in, fan_out in zip(w, w[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(dtype))
        biases.append(np.zeros(fan_out, dtype=dtype))
    return MLPParams(weights, biases)


def _hidden(z, kind):
    if kind == "relu":
        return np.maximum(z, 0)
    if kind == "leaky_relu":
        return np.where(z > 0, z, LEAKY_SLOPE * z)
    return z


def _hidden_grad(z, kind):
    if kind == "relu":
        return (z > 0).astype(z.dtype)
    if kind == "leaky_relu":
        return np.where(z > 0, 1.0, LEAKY_SLOPE).astype(z.dtype)
    return None


def _output(z, kind):
    if kind == "exponential":
        return np.exp(np.clip(z, -EXP_CLAMP, EXP_CLAMP))
    if kind == "sigmoid":
        return 0.5 * (1.0 + np.tanh(0.5 * z))
    return z


def mlp_forward(x: np.ndarray, params: MLPParams, cfg: MLPConfig) -> tuple[np.ndarray, ForwardCache]:
    x = np.asarray(x)
    if x.ndim != 2 or x.shape[1] != cfg.input_width:
        raise ValueError(f"expected input of shape (n, {cfg.input_width}), got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise NonFiniteError("non-finite MLP input")
    inputs, pre = [], []
    h = x
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        inputs.append(h)
        z = h @ w + b
        pre.append(z)
        h = _output(z, cfg.output_activation) if i == last else _hidden(z, cfg.hidden_activation)
    return h, ForwardCache(inputs, pre, h, params.version)


def mlp_backward(cache: ForwardCache, upstream: np.ndarray, params: MLPParams, cfg: MLPConfig) -> tuple[MLPParams, np.ndarray]:
    """Gradients of ``sum(upstream * output)`` w.r.t. parameters and input."""
    if cache.version != params.version:
        raise StaleCacheError("forward cache predates the current parameters")
    g = np.asarray(upstream, dtype=cache.output.dtype)
    if g.shape != cache.output.shape:
        raise ValueError(f"upstream shape {g.shape} does not match output {cache.output.shape}")
    last = len(params.weights) - 1
    z = cache.pre[last]
    if cfg.output_activation == "exponential":
        g = g * np.where(np.abs(z) <= EXP_CLAMP, cache.output, 0.0)
    elif cfg.output_activation == "sigmoid":
        g = g * cache.output * (1.0 - cache.output)
    gw = [None] * len(params.weights)
    gb = [None] * len(params.weights)
    for i in range(last, -1, -1):
        if i != last:
            d = _hidden_grad(cache.pre[i], cfg.hidden_activation)
            if d is not None:
                g = g * d
        gw[i] = cache.inputs[i].T @ g
        gb[i] = g.sum(axis=0)
        g = g @ params.weights[i].T
    return MLPParams(gw, gb), g


def relative_l2_loss(pred, target, eps: float = REL_L2_EPS, denom=None) -> tuple[float, np.ndarray]:
    """Mean of ``(pred - target)**2 / (pred**2 + eps)`` with the denominator held constant.

    ``denom`` overrides the normalizer (e.g. frozen at a reference
    prediction for finite-difference checks).
    """
    pred = np.asarray(pred)
    target = np.asarray(target)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    if denom is None:
        denom = pred.astype(np.float64) ** 2 + eps
    diff = pred.astype(np.float64) - target
    loss = float(np.mean(diff * diff / denom))
    grad = 2.0 * diff / denom / diff.size
    return loss, grad.astype(pred.dtype)


def l2_regularization(arrays, lam: float) -> tuple[float, list[np.ndarray]]:
    if lam < 0:
        raise ValueError("regularization strength must be non-negative")
    penalty = float(lam * sum(np.sum(np.asarray(a, dtype=np.float64) ** 2) for a in arrays))
    return penalty, [2.0 * lam * np.asarray(a, dtype=np.float64) for a in arrays]


@dataclass
class AdamState:
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


def adam_step(params: list[np.ndarray], grads: list[np.ndarray], state: AdamState) -> list[np.ndarray]:
    """One bias-corrected Adam update, in place; returns ``params``.

    Raises :class:`NonFiniteError` before touching anything if a gradient
    is not finite.
    """
    if len(params) != len(grads):
        raise ValueError("params and grads must align")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteError("non-finite gradient; step rejected")
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    state.step += 1
    c1 = 1.0 - state.beta1**state.step
    c2 = 1.0 - state.beta2**state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        g = g.astype(p.dtype, copy=False)
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= (state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)).astype(p.dtype)
    return params
