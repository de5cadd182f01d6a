"""Deterministic dense-matrix numerics: layers, dropout, Adam, gradient oracle.

Everything operates on float64 numpy arrays.  Randomness always flows through
an explicit RngStream so that a fixed seed reproduces every draw bit-for-bit,
and streams can be split into independent child streams for parallel work.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError, ShapeError


class RngStream:
    """Seedable, splittable random stream (PCG64 under the hood).

    Identical seeds yield identical draw sequences.  ``spawn(n)`` derives n
    statistically independent child streams whose draws do not depend on how
    much the parent has already been consumed at spawn time beyond the spawn
    counter, so parallel workers get disjoint reproducible streams.
    """

    def __init__(self, seed: int = 0, _seq: np.random.SeedSequence | None = None):
        self.seed = int(seed)
        self._seq = _seq if _seq is not None else np.random.SeedSequence(self.seed)
        self._gen = np.random.Generator(np.random.PCG64(self._seq))

    def spawn(self, n: int) -> list["RngStream"]:
        return [RngStream(self.seed, _seq=s) for s in self._seq.spawn(n)]

    def normal(self, size=None, loc=0.0, scale=1.0) -> np.ndarray:
        return self._gen.normal(loc, scale, size)

    def uniform(self, size=None, low=0.0, high=1.0) -> np.ndarray:
        return self._gen.uniform(low, high, size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def integers(self, low, high=None, size=None) -> np.ndarray:
        return self._gen.integers(low, high, size)

    def choice(self, n, size=None, replace=True) -> np.ndarray:
        return self._gen.choice(n, size=size, replace=replace)

    def exponential(self, scale=1.0, size=None) -> np.ndarray:
        return self._gen.exponential(scale, size)


def as_stream(rng) -> RngStream:
    """Accept an RngStream or a plain integer seed."""
    if isinstance(rng, RngStream):
        return rng
    if rng is None:
        return RngStream(0)
    return RngStream(int(rng))


def _as_f64(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def affine_forward(x, W, b) -> np.ndarray:
    """out[i, j] = sum_m x[i, m] * W[m, j] + b[0, j]."""
    x, W, b = _as_f64(x), _as_f64(W), _as_f64(b)
    if x.ndim != 2 or W.ndim != 2:
        raise ShapeError(f"affine_forward expects 2-D operands, got {x.shape} and {W.shape}")
    if x.shape[1] != W.shape[0]:
        raise ShapeError(f"affine_forward: x has {x.shape[1]} columns but W has {W.shape[0]} rows")
    b = b.reshape(1, -1)
    if b.shape[1] != W.shape[1]:
        raise ShapeError(f"affine_forward: b has width {b.shape[1]}, W has {W.shape[1]} columns")
    return x @ W + b


def affine_backward(x, W, upstream):
    """Gradients of the affine map given upstream dL/dout.

    Returns (grad_x, grad_W, grad_b).
    """
    x, W, upstream = _as_f64(x), _as_f64(W), _as_f64(upstream)
    if upstream.shape != (x.shape[0], W.shape[1]):
        raise ShapeError(
            f"affine_backward: upstream shape {upstream.shape} does not match "
            f"({x.shape[0]}, {W.shape[1]})"
        )
    grad_x = upstream @ W.T
    grad_W = x.T @ upstream
    grad_b = upstream.sum(axis=0, keepdims=True)
    return grad_x, grad_W, grad_b


def relu_forward(x) -> np.ndarray:
    return np.maximum(0.0, _as_f64(x))


def relu_backward(upstream, x) -> np.ndarray:
    """Mask the upstream gradient where the forward input was <= 0.

    The subgradient at exactly 0 is taken to be 0.
    """
    upstream, x = _as_f64(upstream), _as_f64(x)
    if upstream.shape != x.shape:
        raise ShapeError(f"relu_backward: shapes {upstream.shape} vs {x.shape}")
    return upstream * (x > 0.0)


def dropout_forward(x, rate: float, training: bool, rng: RngStream | None = None):
    """Inverted dropout: zero entries with probability ``rate`` and scale
    survivors by 1/(1-rate) so inference is a pure identity.

    Returns (out, mask) where mask already carries the 1/(1-rate) scaling,
    so backward is just upstream * mask.
    """
    x = _as_f64(x)
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x, np.ones_like(x)
    keep = as_stream(rng).uniform(size=x.shape) >= rate
    mask = keep / (1.0 - rate)
    return x * mask, mask


def dropout_backward(upstream, mask) -> np.ndarray:
    return _as_f64(upstream) * mask


def init_weights(fan_in: int, fan_out: int, rng) -> np.ndarray:
    """He-normal weights: i.i.d. zero mean, variance 2/fan_in."""
    if fan_in < 1 or fan_out < 1:
        raise ValueError(f"init_weights needs positive fans, got ({fan_in}, {fan_out})")
    return as_stream(rng).normal(size=(fan_in, fan_out)) * np.sqrt(2.0 / fan_in)


@dataclass
class AdamState:
    """First/second moment buffers and step counter for a parameter list."""

    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params, beta1=0.9, beta2=0.999, eps=1e-8) -> "AdamState":
        return cls(
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
            t=0,
            beta1=beta1,
            beta2=beta2,
            eps=eps,
        )


def adam_step(params, grads, state: AdamState, lr: float) -> AdamState:
    """One bias-corrected Adam update, applied to ``params`` in place."""
    if lr <= 0:
        raise ValueError(f"learning rate must be positive, got {lr}")
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ShapeError("adam_step: params, grads and state lengths differ")
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise NumericError("adam_step: non-finite gradient")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**state.t
    bc2 = 1.0 - b2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ShapeError(f"adam_step: param shape {p.shape} vs grad {g.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return state


def finite_diff_grad(f, x, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function of a matrix.

    Used throughout the test suite as the independent oracle for every
    analytic backward pass.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    x = _as_f64(x).copy()
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        orig = x[idx]
        x[idx] = orig + h
        f_plus = float(f(x))
        x[idx] = orig - h
        f_minus = float(f(x))
        x[idx] = orig
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise NumericError(f"finite_diff_grad: non-finite value at index {idx}")
        grad[idx] = (f_plus - f_minus) / (2.0 * h)
        it.iternext()
    return grad
