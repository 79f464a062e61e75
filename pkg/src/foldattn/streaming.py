"""Chunked low-latency inference over an encoder stack.

The encoder consumes feature frames in chunks of C tokens. Every token
attends to its own chunk plus the last L tokens before the chunk, which
keeps the attention context T = C + L small while the embedding width D
stays large. Streaming uses per-layer key/value caches (N*L sub-token
rows for folding layers); offline_forward applies the equivalent
block-causal mask in one shot and is the oracle streaming is checked
against.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .folding import FoldingLayerParams, fold, layer_forward, unfold
from .layers import (
    LN_EPS,
    LayerParams,
    LayerSpec,
    attention_scores,
    ffn_forward,
    full_mask,
    init_params,
)
from .tensor import Array, DimensionError, layer_norm, matmul


@dataclass(frozen=True)
class EncoderSpec:
    """A stack of attention layers behind a linear input projection."""

    layers: tuple[LayerSpec, ...]
    feature_dim: int = 80
    chunk_size: int = 8
    left_context: int = 24

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if not self.layers:
            raise ValueError("encoder needs at least one layer")
        widths = {spec.outer_dim for spec in self.layers}
        if len(widths) != 1:
            raise ValueError(f"layers disagree on token width: {sorted(widths)}")
        if self.chunk_size < 1:
            raise ValueError("chunk_size must be >= 1")
        if self.left_context < 0:
            raise ValueError("left_context must be >= 0")
        if self.feature_dim < 1:
            raise ValueError("feature_dim must be >= 1")

    @property
    def width(self) -> int:
        return self.layers[0].outer_dim


@dataclass
class EncoderParams:
    in_proj_w: Array
    in_proj_b: Array
    layers: list  # LayerParams | FoldingLayerParams, one per spec layer


@dataclass
class EncoderModel:
    spec: EncoderSpec
    params: EncoderParams


def init_encoder(spec: EncoderSpec, seed: int, dtype=np.float64) -> EncoderModel:
    """Deterministic per-layer seeded initialization."""
    rng = np.random.default_rng(seed)
    limit = np.sqrt(6.0 / (spec.feature_dim + spec.width))
    in_w = rng.uniform(-limit, limit, size=(spec.feature_dim, spec.width)).astype(dtype)
    in_b = np.zeros(spec.width, dtype=dtype)
    layer_params = []
    for i, lspec in enumerate(spec.layers):
        inner = init_params(lspec, seed=seed + 1 + i, dtype=dtype)
        if lspec.kind == "folding":
            layer_params.append(FoldingLayerParams(inner, lspec.folding_factor))
        else:
            layer_params.append(inner)
    return EncoderModel(spec, EncoderParams(in_w, in_b, layer_params))


def block_causal_mask(total: int, chunk: int, left: int) -> Array:
    """Token i attends its own chunk plus the last `left` tokens before it."""
    idx = np.arange(total)
    qc = idx[:, None] // chunk
    kc = idx[None, :] // chunk
    same_chunk = qc == kc
    history = (idx[None, :] < qc * chunk) & (idx[None, :] >= qc * chunk - left)
    return same_chunk | history


def input_projection(params: EncoderParams, frames: Array) -> Array:
    if frames.ndim != 2 or frames.shape[1] != params.in_proj_w.shape[0]:
        raise DimensionError(
            f"frames shape {frames.shape} incompatible with feature dim "
            f"{params.in_proj_w.shape[0]}"
        )
    return matmul(frames, params.in_proj_w) + params.in_proj_b


def offline_forward(model: EncoderModel, frames: Array) -> Array:
    """Single-shot forward under the block-causal mask implied by (C, L)."""
    spec = model.spec
    x = input_projection(model.params, frames)
    mask = block_causal_mask(x.shape[0], spec.chunk_size, spec.left_context)
    for lspec, lparams in zip(spec.layers, model.params.layers):
        x = layer_forward(x, lspec, lparams, mask)
    return x


# ---------------------------------------------------------------------------
# Streaming state
# ---------------------------------------------------------------------------


@dataclass
class LayerCache:
    """Key/value rows of the most recent history tokens for one layer."""

    capacity: int  # rows: L for standard layers, N*L for folding layers
    k: Array
    v: Array

    def append(self, k_new: Array, v_new: Array) -> None:
        k = np.concatenate([self.k, k_new])
        v = np.concatenate([self.v, v_new])
        if k.shape[0] > self.capacity:
            k = k[k.shape[0] - self.capacity:]
            v = v[v.shape[0] - self.capacity:]
        self.k, self.v = k, v


@dataclass
class StreamState:
    model: EncoderModel
    caches: list[LayerCache]
    tokens_processed: int = 0


def init_stream(model: EncoderModel, dtype=np.float64) -> StreamState:
    """Fresh stream: empty caches, zero token counter."""
    spec = model.spec
    caches = []
    for lspec in spec.layers:
        n = lspec.folding_factor
        caches.append(
            LayerCache(
                capacity=n * spec.left_context,
                k=np.zeros((0, lspec.embed_dim), dtype=dtype),
                v=np.zeros((0, lspec.embed_dim), dtype=dtype),
            )
        )
    return StreamState(model=model, caches=caches)


def _layer_step(x: Array, lspec: LayerSpec, lparams, cache: LayerCache) -> Array:
    """One layer on one chunk, attending over cached history K/V."""
    if lspec.kind == "folding":
        inner = lparams.inner
        n = lparams.folding_factor
        xs = fold(x, n)
        out = _standard_step(xs, lspec, inner, cache)
        return unfold(out, n)
    return _standard_step(x, lspec, lparams, cache)


def _standard_step(x: Array, lspec: LayerSpec, params: LayerParams, cache: LayerCache) -> Array:
    xn = layer_norm(x, params.ln1_gain, params.ln1_shift, LN_EPS)
    k_new = matmul(xn, params.wk) + params.bk
    v_new = matmul(xn, params.wv) + params.bv
    q = matmul(xn, params.wq) + params.bq

    k_all = np.concatenate([cache.k, k_new])
    v_all = np.concatenate([cache.v, v_new])
    # chunk queries may see every cached token and the whole chunk
    mask = full_mask(x.shape[0], k_all.shape[0])

    d = lspec.embed_dim // lspec.heads
    attn = np.empty_like(q)
    for h in range(lspec.heads):
        sl = slice(h * d, (h + 1) * d)
        scores = attention_scores(q[:, sl], k_all[:, sl], mask, d)
        attn[:, sl] = matmul(scores, v_all[:, sl], tag="score")
    y = x + (matmul(attn, params.wo) + params.bo)
    out = y + ffn_forward(
        layer_norm(y, params.ln2_gain, params.ln2_shift, LN_EPS), params, lspec.activation
    )
    cache.append(k_new, v_new)
    return out


def process_chunk(state: StreamState, frames: Array) -> Array:
    """Encode one chunk of feature frames (a final short chunk is fine)."""
    x = input_projection(state.model.params, frames)
    for lspec, lparams, cache in zip(
        state.model.spec.layers, state.model.params.layers, state.caches
    ):
        x = _layer_step(x, lspec, lparams, cache)
    state.tokens_processed += frames.shape[0]
    return x


def stream_forward(model: EncoderModel, frames: Array, dtype=np.float64) -> Array:
    """Replay a whole utterance chunk by chunk; concatenated outputs."""
    state = init_stream(model, dtype=dtype)
    c = model.spec.chunk_size
    outs = [
        process_chunk(state, frames[start:start + c])
        for start in range(0, frames.shape[0], c)
    ]
    return np.concatenate(outs)
