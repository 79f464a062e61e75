"""Standard attention layer: multi-head self-attention followed by an FFN.

One "attention layer" here means the full block: pre-norm multi-head
attention with a residual connection, then a pre-norm feedforward network
with a residual connection. Masks are boolean [queries x keys] matrices;
disallowed positions get -inf logits, so a masked key contributes exactly
zero weight and zero gradient.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .tensor import (
    Array,
    DimensionError,
    DivisibilityError,
    activation,
    layer_norm,
    matmul,
    softmax_lastdim,
)

LN_EPS = 1e-5


@dataclass(frozen=True)
class LayerSpec:
    """Declarative description of one attention layer.

    For folding layers, embed_dim/ffn_dim/heads describe the sub-token
    (inner) widths; the layer consumes tokens of width
    embed_dim * folding_factor.
    """

    kind: str = "standard"
    embed_dim: int = 512
    ffn_dim: int = 2048
    heads: int = 8
    folding_factor: int = 1
    activation: str = "relu"
    use_bias: bool = True

    def __post_init__(self):
        if self.kind not in ("standard", "folding"):
            raise ValueError(f"unknown layer kind: {self.kind!r}")
        if self.kind == "standard" and self.folding_factor != 1:
            raise ValueError("standard layers require folding_factor == 1")
        if min(self.embed_dim, self.ffn_dim, self.heads, self.folding_factor) < 1:
            raise ValueError("layer dimensions must be positive")
        if self.embed_dim % self.heads != 0:
            raise DivisibilityError(
                f"embed_dim {self.embed_dim} not divisible by heads {self.heads}"
            )

    @property
    def outer_dim(self) -> int:
        """Width of the tokens this layer consumes and produces."""
        return self.embed_dim * self.folding_factor


@dataclass
class LayerParams:
    """Weights of one attention layer (all numpy arrays).

    wq/wk/wv/wo: [D, D]; b*: [D]; ffn_w1: [D, F]; ffn_b1: [F];
    ffn_w2: [F, D]; ffn_b2: [D]; ln*_gain/shift: [D].
    """

    wq: Array
    wk: Array
    wv: Array
    wo: Array
    bq: Array
    bk: Array
    bv: Array
    bo: Array
    ffn_w1: Array
    ffn_b1: Array
    ffn_w2: Array
    ffn_b2: Array
    ln1_gain: Array
    ln1_shift: Array
    ln2_gain: Array
    ln2_shift: Array

    def block_names(self):
        return [f.name for f in fields(self)]

    def blocks(self) -> dict[str, Array]:
        return {name: getattr(self, name) for name in self.block_names()}


WEIGHT_BLOCKS = ("wq", "wk", "wv", "wo", "ffn_w1", "ffn_w2")


def param_blocks(params: LayerParams, spec: LayerSpec) -> dict[str, Array]:
    """Trainable blocks of a layer; biases and norm affines only when
    the spec enables them (use_bias=False means pure weight matrices)."""
    if spec.use_bias:
        return params.blocks()
    return {name: getattr(params, name) for name in WEIGHT_BLOCKS}


def full_mask(tq: int, tk: int | None = None) -> Array:
    return np.ones((tq, tk if tk is not None else tq), dtype=bool)


def causal_mask(t: int) -> Array:
    return np.tril(np.ones((t, t), dtype=bool))


def validate_mask(mask: Array, tq: int, tk: int) -> None:
    if mask.shape != (tq, tk):
        raise DimensionError(f"mask shape {mask.shape} != ({tq}, {tk})")
    if not mask.any(axis=1).all():
        raise ValueError("attention mask has a query row with no allowed key")


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int, dtype) -> Array:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(dtype)


def init_params(spec: LayerSpec, seed: int, dtype=np.float64) -> LayerParams:
    """Seeded Glorot-uniform weights, zero biases, unit norm gains."""
    d, f = spec.embed_dim, spec.ffn_dim
    rng = np.random.default_rng(seed)
    zeros = lambda n: np.zeros(n, dtype=dtype)
    ones = lambda n: np.ones(n, dtype=dtype)
    return LayerParams(
        wq=_glorot(rng, d, d, dtype),
        wk=_glorot(rng, d, d, dtype),
        wv=_glorot(rng, d, d, dtype),
        wo=_glorot(rng, d, d, dtype),
        bq=zeros(d),
        bk=zeros(d),
        bv=zeros(d),
        bo=zeros(d),
        ffn_w1=_glorot(rng, d, f, dtype),
        ffn_b1=zeros(f),
        ffn_w2=_glorot(rng, f, d, dtype),
        ffn_b2=zeros(d),
        ln1_gain=ones(d),
        ln1_shift=zeros(d),
        ln2_gain=ones(d),
        ln2_shift=zeros(d),
    )


def attention_scores(
    q: Array, k: Array, mask: Array, head_width: int
) -> Array:
    """Masked, scaled, row-stochastic scores for one head."""
    logits = matmul(q, k.T, tag="score") / np.sqrt(head_width)
    logits = np.where(mask, logits, -np.inf)
    return softmax_lastdim(logits)


def mha_forward(
    x: Array,
    params: LayerParams,
    mask: Array,
    heads: int,
    kv: Array | None = None,
    return_scores: bool = False,
):
    """Multi-head self-attention.

    `x` provides the queries; keys/values come from `kv` when given
    (streaming uses cached history there), else from `x` itself. Head h
    uses channels [h*d : (h+1)*d] with d = D/heads; scores are scaled by
    1/sqrt(d) and masked positions are excluded exactly.
    """
    d_model = x.shape[1]
    if d_model % heads != 0:
        raise DimensionError(f"embed dim {d_model} not divisible by heads {heads}")
    src = x if kv is None else kv
    validate_mask(mask, x.shape[0], src.shape[0])

    q = matmul(x, params.wq) + params.bq
    k = matmul(src, params.wk) + params.bk
    v = matmul(src, params.wv) + params.bv

    d = d_model // heads
    out = np.empty_like(q)
    all_scores = []
    for h in range(heads):
        sl = slice(h * d, (h + 1) * d)
        scores = attention_scores(q[:, sl], k[:, sl], mask, d)
        out[:, sl] = matmul(scores, v[:, sl], tag="score")
        if return_scores:
            all_scores.append(scores)
    y = matmul(out, params.wo) + params.bo
    if return_scores:
        return y, np.stack(all_scores)
    return y


def ffn_forward(x: Array, params: LayerParams, act: str = "relu") -> Array:
    h = activation(matmul(x, params.ffn_w1) + params.ffn_b1, act)
    return matmul(h, params.ffn_w2) + params.ffn_b2


def attention_layer_forward(
    x: Array, params: LayerParams, mask: Array, spec: LayerSpec
) -> Array:
    """Pre-norm residual block: x + MHA(ln1(x)), then + FFN(ln2(.))."""
    if spec.kind != "standard":
        raise ValueError("attention_layer_forward expects a standard spec")
    y = x + mha_forward(layer_norm(x, params.ln1_gain, params.ln1_shift, LN_EPS),
                        params, mask, spec.heads)
    return y + ffn_forward(layer_norm(y, params.ln2_gain, params.ln2_shift, LN_EPS),
                           params, spec.activation)
