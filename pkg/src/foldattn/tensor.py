"""Dense tensor primitives for attention encoders.

Arrays are plain numpy ndarrays, row-major, channels on the last axis.
Everything here is a pure function of its inputs; nothing mutates its
arguments. Element type follows the inputs (float32 for benchmarking,
float64 for gradient checks).
"""

from __future__ import annotations

import contextlib
import contextvars
from collections import Counter

import numpy as np

Array = np.ndarray

GELU_TANH_COEFF = 0.044715  # cubic coefficient of the tanh approximation
_SQRT_2_OVER_PI = 0.7978845608028654


class DimensionError(ValueError):
    """Shapes of the operands do not fit the operation."""


class DivisibilityError(ValueError):
    """A dimension is not divisible by the requested factor."""


def tensor(values, dtype=np.float64) -> Array:
    """Build a validated dense array (rank 1..3, every axis >= 1)."""
    a = np.ascontiguousarray(values, dtype=dtype)
    if a.ndim < 1 or a.ndim > 3:
        raise DimensionError(f"tensor rank must be 1..3, got {a.ndim}")
    if any(s < 1 for s in a.shape):
        raise DimensionError(f"tensor axes must be >= 1, got shape {a.shape}")
    return a


# ---------------------------------------------------------------------------
# Optional FLOP accounting.
#
# A counter is installed with `count_flops()`; while active, every matmul
# adds 2*m*k*n operations under its tag ("linear" for projection/FFN-style
# products, "score" for attention-score products).
# ---------------------------------------------------------------------------

_ACTIVE_COUNTER: contextvars.ContextVar = contextvars.ContextVar(
    "foldattn_flop_counter", default=None
)


class FlopCounter:
    def __init__(self):
        self.by_tag: Counter = Counter()

    def add(self, tag: str, flops: int) -> None:
        self.by_tag[tag] += flops

    @property
    def total(self) -> int:
        return sum(self.by_tag.values())

    def __repr__(self):
        return f"FlopCounter({dict(self.by_tag)})"


@contextlib.contextmanager
def count_flops(counter: FlopCounter | None = None):
    fc = counter if counter is not None else FlopCounter()
    token = _ACTIVE_COUNTER.set(fc)
    try:
        yield fc
    finally:
        _ACTIVE_COUNTER.reset(token)


def matmul(a: Array, b: Array, tag: str = "linear") -> Array:
    """2-D matrix product a[m,k] @ b[k,n], counted as 2*m*k*n FLOPs."""
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul needs 2-D operands, got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul inner dimensions disagree: {a.shape} @ {b.shape}")
    fc = _ACTIVE_COUNTER.get()
    if fc is not None:
        m, k = a.shape
        fc.add(tag, 2 * m * k * b.shape[1])
    return a @ b


def softmax_lastdim(x: Array) -> Array:
    """Softmax over the last axis with max-subtraction.

    -inf entries are allowed (they contribute exactly zero), as long as at
    least one entry per slice is finite.
    """
    m = np.max(x, axis=-1, keepdims=True)
    e = np.exp(x - m)
    return e / np.sum(e, axis=-1, keepdims=True)


def layer_norm(x: Array, gain: Array, shift: Array, eps: float = 1e-5) -> Array:
    """Normalize each token over its channels, then apply the affine map."""
    d = x.shape[-1]
    if gain.shape != (d,) or shift.shape != (d,):
        raise DimensionError(
            f"layer_norm affine length mismatch: channels {d}, "
            f"gain {gain.shape}, shift {shift.shape}"
        )
    mu = np.mean(x, axis=-1, keepdims=True)
    var = np.mean((x - mu) ** 2, axis=-1, keepdims=True)
    return gain * ((x - mu) / np.sqrt(var + eps)) + shift


def split_channels(x: Array, n: int) -> Array:
    """Split each of T tokens into n channel-contiguous sub-tokens.

    [T, D] -> [n*T, D/n]; sub-tokens of token t occupy rows t*n .. t*n+n-1.
    A pure reshape: the first D/n channels become the first sub-token, and
    so on.
    """
    if x.ndim != 2:
        raise DimensionError(f"split_channels needs a 2-D input, got {x.shape}")
    t, d = x.shape
    if n < 1 or d % n != 0:
        raise DivisibilityError(f"channel dim {d} not divisible by n={n}")
    return x.reshape(t * n, d // n)


def concat_channels(x: Array, n: int) -> Array:
    """Inverse of split_channels: [n*T, D/n] -> [T, D], exact."""
    if x.ndim != 2:
        raise DimensionError(f"concat_channels needs a 2-D input, got {x.shape}")
    rows, d = x.shape
    if n < 1 or rows % n != 0:
        raise DivisibilityError(f"row count {rows} not divisible by n={n}")
    return x.reshape(rows // n, d * n)


def activation(x: Array, kind: str) -> Array:
    if kind == "relu":
        return np.maximum(x, np.array(0, dtype=x.dtype))
    if kind == "gelu":
        # tanh approximation; bit-stable, no erf dependency
        inner = _SQRT_2_OVER_PI * (x + GELU_TANH_COEFF * x**3)
        return 0.5 * x * (1.0 + np.tanh(inner))
    raise ValueError(f"unknown activation kind: {kind!r}")
