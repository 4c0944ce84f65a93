"""Small numpy network stack: ReLU MLPs, categorical heads and Adam.

Parameters are kept as explicit values (:class:`MlpParams`, :class:`AdamState`)
and every function is pure, so two calls with the same inputs and seed give
bit-identical results.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError


@dataclass
class MlpParams:
    """Weights ``W[k]`` of shape ``(fan_in, fan_out)`` and biases ``b[k]``."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ShapeError("need one bias per weight matrix and at least one layer")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ShapeError(f"layer {k}: weight {w.shape} / bias {b.shape}")
            if k and self.weights[k - 1].shape[1] != w.shape[0]:
                raise ShapeError(
                    f"layer {k} expects {w.shape[0]} inputs, "
                    f"previous layer gives {self.weights[k - 1].shape[1]}"
                )

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[1]

    def arrays(self) -> list[np.ndarray]:
        """Flat list ``[W0, b0, W1, b1, ...]``; the order used by gradients and Adam."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    @classmethod
    def from_arrays(cls, arrays) -> "MlpParams":
        arrays = list(arrays)
        return cls(weights=arrays[0::2], biases=arrays[1::2])

    def copy(self) -> "MlpParams":
        return MlpParams.from_arrays(a.copy() for a in self.arrays())

    def all_finite(self) -> bool:
        return all(np.isfinite(a).all() for a in self.arrays())


def init_mlp(in_dim, out_dim, hidden=(256, 256, 256), seed=0, out_scale=1.0) -> MlpParams:
    """Fan-in scaled uniform initialisation, ``U(-1/sqrt(fan_in), 1/sqrt(fan_in))``.

    ``out_scale`` shrinks the last layer; 0.01 starts a policy close to uniform.
    """
    rng = np.random.default_rng(seed)
    sizes = [in_dim, *hidden, out_dim]
    weights, biases = [], []
    for k, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        bound = 1.0 / np.sqrt(fan_in)
        scale = out_scale if k == len(sizes) - 2 else 1.0
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)) * scale)
        biases.append(rng.uniform(-bound, bound, size=fan_out) * scale)
    return MlpParams(weights, biases)


def _check_input(params: MlpParams, x: np.ndarray):
    if x.shape[-1] != params.in_dim:
        raise ShapeError(f"input has {x.shape[-1]} features, network expects {params.in_dim}")


def mlp_forward(params: MlpParams, x) -> np.ndarray:
    """Affine layers with ReLU between them (none after the last). Accepts ``(d,)`` or ``(B, d)``."""
    x = np.asarray(x, dtype=float)
    _check_input(params, x)
    h = x
    last = len(params.weights) - 1
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ w + b
        if k < last:
            h = np.maximum(h, 0.0)
    return h


def forward_with_cache(params: MlpParams, x):
    """Forward pass that also returns the per-layer inputs needed by :func:`backward`."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    _check_input(params, x)
    inputs = []
    h = x
    last = len(params.weights) - 1
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        inputs.append(h)
        h = h @ w + b
        if k < last:
            h = np.maximum(h, 0.0)
    return h, inputs


def backward(params: MlpParams, inputs, upstream) -> list[np.ndarray]:
    """Reverse-mode pass for ``sum(output * upstream)``; gradients in :meth:`MlpParams.arrays` order."""
    g = np.atleast_2d(upstream)
    n = len(params.weights)
    grads = [None] * (2 * n)
    for k in range(n - 1, -1, -1):
        h_in = inputs[k]
        grads[2 * k] = h_in.T @ g
        grads[2 * k + 1] = g.sum(axis=0)
        if k:
            g = (g @ params.weights[k].T) * (h_in > 0.0)
    return grads


def mlp_gradients(params: MlpParams, x, upstream) -> list[np.ndarray]:
    """Exact gradients of ``output . upstream`` w.r.t. every parameter.

    For batched input the contributions of all rows are summed.
    """
    x = np.asarray(x, dtype=float)
    upstream = np.asarray(upstream, dtype=float)
    out, inputs = forward_with_cache(params, x)
    if upstream.shape[-1] != params.out_dim or np.atleast_2d(upstream).shape[0] != out.shape[0]:
        raise ShapeError(f"upstream {upstream.shape} does not match output {out.shape}")
    return backward(params, inputs, upstream)


def log_softmax(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=float)
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax_logprob(logits, action: int) -> float:
    logits = np.asarray(logits, dtype=float)
    if not 0 <= action < logits.shape[-1]:
        raise IndexError(f"action {action} outside [0, {logits.shape[-1]})")
    return float(log_softmax(logits)[action])


def categorical_sample(logits, rng: np.random.Generator):
    """Inverse-CDF draw from ``softmax(logits)``, one uniform per row.

    A single row returns an ``int``; a ``(B, A)`` array returns ``B`` indices.
    """
    logits = np.asarray(logits, dtype=float)
    if np.isnan(logits).any():
        raise ValueError("NaN logits")
    single = logits.ndim == 1
    probs = np.exp(log_softmax(np.atleast_2d(logits)))
    cdf = np.cumsum(probs, axis=-1)
    u = rng.random(cdf.shape[0])
    idx = (u[:, None] >= cdf).sum(axis=-1)
    idx = np.minimum(idx, logits.shape[-1] - 1)
    return int(idx[0]) if single else idx


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params: MlpParams, **hyper) -> "AdamState":
        arrays = params.arrays()
        return cls(
            m=[np.zeros_like(a) for a in arrays],
            v=[np.zeros_like(a) for a in arrays],
            **hyper,
        )


def adam_step(state: AdamState, params: MlpParams, grads) -> tuple[MlpParams, AdamState]:
    """One bias-corrected Adam *descent* step; returns new params and state.

    Raises ``FloatingPointError`` on non-finite gradients and leaves both inputs untouched.
    """
    arrays = params.arrays()
    if len(grads) != len(arrays):
        raise ShapeError(f"{len(grads)} gradients for {len(arrays)} parameter arrays")
    for a, g in zip(arrays, grads):
        if a.shape != g.shape:
            raise ShapeError(f"gradient {g.shape} for parameter {a.shape}")
        if not np.isfinite(g).all():
            raise FloatingPointError("non-finite gradient, update skipped")
    t = state.t + 1
    b1, b2 = state.beta1, state.beta2
    new_m, new_v, new_p = [], [], []
    for a, g, m, v in zip(arrays, grads, state.m, state.v):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        new_p.append(a - state.lr * m_hat / (np.sqrt(v_hat) + state.eps))
        new_m.append(m)
        new_v.append(v)
    new_state = AdamState(new_m, new_v, t, state.lr, b1, b2, state.eps)
    return MlpParams.from_arrays(new_p), new_state
