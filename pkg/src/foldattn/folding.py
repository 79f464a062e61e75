"""Folding attention: run a standard attention layer on channel sub-tokens.

A folding layer with factor N splits every D-channel token into N
contiguous D/N-channel sub-tokens, runs a full standard attention layer
(attention + FFN, residuals and norms at sub-token width) over the N*T
sub-token sequence, and concatenates each token's N sub-tokens back
together. Linear-layer work drops by 1/N and linear-layer parameters by
1/N^2, while attention-score work grows by N; with T much smaller than D
that trade is heavily favorable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .layers import LayerParams, LayerSpec, attention_layer_forward
from .tensor import Array, DivisibilityError, concat_channels, split_channels


@dataclass
class FoldingLayerParams:
    """Weights of a folding layer: a standard layer at sub-token width."""

    inner: LayerParams
    folding_factor: int


def fold(x: Array, n: int) -> Array:
    """[T, D] -> [n*T, D/n], parent-major sub-token order."""
    return split_channels(x, n)


def unfold(x: Array, n: int) -> Array:
    """Exact inverse of fold."""
    return concat_channels(x, n)


def expand_mask(mask: Array, n: int) -> Array:
    """Lift a token-level mask to sub-tokens.

    Sub-token (t, i) may attend sub-token (u, j) iff token t may attend
    token u; sub-tokens sharing a parent always see each other, which is
    what lets their query/key inner products couple the parent's channel
    groups.
    """
    if n == 1:
        return mask
    return np.repeat(np.repeat(mask, n, axis=0), n, axis=1)


def folding_layer_forward(
    x: Array, params: FoldingLayerParams, mask: Array, spec: LayerSpec
) -> Array:
    """fold -> standard attention layer at sub-token width -> unfold."""
    n = params.folding_factor
    inner_spec = LayerSpec(
        kind="standard",
        embed_dim=spec.embed_dim,
        ffn_dim=spec.ffn_dim,
        heads=spec.heads,
        activation=spec.activation,
        use_bias=spec.use_bias,
    )
    sub = attention_layer_forward(fold(x, n), params.inner, expand_mask(mask, n), inner_spec)
    return unfold(sub, n)


def layer_forward(x: Array, spec: LayerSpec, params, mask: Array) -> Array:
    """Dispatch on the layer kind; mask is always token-level [T, T]."""
    if spec.kind == "standard":
        return attention_layer_forward(x, params, mask, spec)
    return folding_layer_forward(x, params, mask, spec)


def derive_folding_spec(std: LayerSpec, n: int) -> LayerSpec:
    """Folding counterpart of a standard layer spec.

    Sub-token width, FFN width, and head count all divide by n, so head
    width stays constant. n=1 returns the spec unchanged.
    """
    if n == 1:
        return std
    if std.kind != "standard":
        raise ValueError("derive_folding_spec expects a standard spec")
    for value, name in ((std.embed_dim, "embed_dim"), (std.ffn_dim, "ffn_dim"),
                        (std.heads, "heads")):
        if value % n != 0:
            raise DivisibilityError(f"{name} {value} not divisible by folding factor {n}")
    return LayerSpec(
        kind="folding",
        embed_dim=std.embed_dim // n,
        ffn_dim=std.ffn_dim // n,
        heads=std.heads // n,
        folding_factor=n,
        activation=std.activation,
        use_bias=std.use_bias,
    )
