"""Analytic backward passes and finite-difference gradient verification.

Backward functions recompute the forward intermediates they need instead
of keeping a tape; at desk scale that is cheap and keeps every pass a
pure, deterministic function. Masked attention positions carry exactly
zero weight, so their keys and values receive exactly zero gradient.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .folding import FoldingLayerParams, expand_mask, fold, layer_forward, unfold
from .layers import (
    LN_EPS,
    LayerParams,
    LayerSpec,
    mha_forward,
    param_blocks,
    softmax_lastdim,
    validate_mask,
)
from .streaming import (
    EncoderModel,
    EncoderParams,
    block_causal_mask,
    input_projection,
    offline_forward,
)
from .tensor import GELU_TANH_COEFF, Array, activation, layer_norm

_SQRT_2_OVER_PI = 0.7978845608028654


def zero_grads_like(params: LayerParams) -> LayerParams:
    return LayerParams(**{k: np.zeros_like(v) for k, v in params.blocks().items()})


def linear_backward(x: Array, w: Array, g: Array):
    """Adjoint of y = x @ w + b: returns (dx, dw, db)."""
    return g @ w.T, x.T @ g, g.sum(axis=0)


def activation_backward(x: Array, kind: str, g: Array) -> Array:
    if kind == "relu":
        return g * (x > 0)
    if kind == "gelu":
        u = _SQRT_2_OVER_PI * (x + GELU_TANH_COEFF * x**3)
        t = np.tanh(u)
        du = _SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_TANH_COEFF * x**2)
        return g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t**2) * du)
    raise ValueError(f"unknown activation kind: {kind!r}")


def softmax_lastdim_backward(s: Array, g: Array) -> Array:
    """Adjoint of softmax given its output s."""
    return (g - np.sum(g * s, axis=-1, keepdims=True)) * s


def layer_norm_backward(x: Array, gain: Array, eps: float, g: Array):
    """Returns (dx, dgain, dshift) for y = gain * xhat + shift."""
    d = x.shape[-1]
    mu = np.mean(x, axis=-1, keepdims=True)
    var = np.mean((x - mu) ** 2, axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mu) * inv_std

    dgain = np.sum(g * xhat, axis=tuple(range(x.ndim - 1)))
    dshift = np.sum(g, axis=tuple(range(x.ndim - 1)))
    dxhat = g * gain
    dx = inv_std / d * (
        d * dxhat
        - np.sum(dxhat, axis=-1, keepdims=True)
        - xhat * np.sum(dxhat * xhat, axis=-1, keepdims=True)
    )
    return dx, dgain, dshift


def mha_backward(
    x: Array, params: LayerParams, mask: Array, heads: int, g: Array
):
    """Adjoint of mha_forward (self-attention). Returns (dx, grads).

    grads is a LayerParams container; only the attention blocks are
    nonzero.
    """
    t, d_model = x.shape
    validate_mask(mask, t, t)
    d = d_model // heads
    scale = 1.0 / np.sqrt(d)

    q = x @ params.wq + params.bq
    k = x @ params.wk + params.bk
    v = x @ params.wv + params.bv

    concat = np.empty_like(q)
    per_head_scores = []
    for h in range(heads):
        sl = slice(h * d, (h + 1) * d)
        logits = np.where(mask, (q[:, sl] @ k[:, sl].T) * scale, -np.inf)
        s = softmax_lastdim(logits)
        per_head_scores.append(s)
        concat[:, sl] = s @ v[:, sl]

    grads = zero_grads_like(params)
    d_concat, grads.wo, grads.bo = linear_backward(concat, params.wo, g)

    dq = np.empty_like(q)
    dk = np.empty_like(k)
    dv = np.empty_like(v)
    for h in range(heads):
        sl = slice(h * d, (h + 1) * d)
        s = per_head_scores[h]
        ds = d_concat[:, sl] @ v[:, sl].T
        dv[:, sl] = s.T @ d_concat[:, sl]
        dlogits = softmax_lastdim_backward(s, ds) * scale
        dq[:, sl] = dlogits @ k[:, sl]
        dk[:, sl] = dlogits.T @ q[:, sl]

    dx_q, grads.wq, grads.bq = linear_backward(x, params.wq, dq)
    dx_k, grads.wk, grads.bk = linear_backward(x, params.wk, dk)
    dx_v, grads.wv, grads.bv = linear_backward(x, params.wv, dv)
    return dx_q + dx_k + dx_v, grads


def ffn_backward(x: Array, params: LayerParams, act: str, g: Array):
    """Adjoint of ffn_forward. Returns (dx, grads with FFN blocks set)."""
    pre = x @ params.ffn_w1 + params.ffn_b1
    h = activation(pre, act)

    grads = zero_grads_like(params)
    dh, grads.ffn_w2, grads.ffn_b2 = linear_backward(h, params.ffn_w2, g)
    dpre = activation_backward(pre, act, dh)
    dx, grads.ffn_w1, grads.ffn_b1 = linear_backward(x, params.ffn_w1, dpre)
    return dx, grads


def _add_grads(a: LayerParams, b: LayerParams) -> LayerParams:
    return LayerParams(**{k: av + getattr(b, k) for k, av in a.blocks().items()})


def attention_layer_backward(
    x: Array, params: LayerParams, mask: Array, spec: LayerSpec, g: Array
):
    """Adjoint of attention_layer_forward. Returns (dx, grads)."""
    xn1 = layer_norm(x, params.ln1_gain, params.ln1_shift, LN_EPS)
    y = x + mha_forward(xn1, params, mask, spec.heads)
    xn2 = layer_norm(y, params.ln2_gain, params.ln2_shift, LN_EPS)

    dxn2, ffn_grads = ffn_backward(xn2, params, spec.activation, g)
    dy_ln2, dln2_gain, dln2_shift = layer_norm_backward(y, params.ln2_gain, LN_EPS, dxn2)
    dy = g + dy_ln2

    dxn1, mha_grads = mha_backward(xn1, params, mask, spec.heads, dy)
    dx_ln1, dln1_gain, dln1_shift = layer_norm_backward(x, params.ln1_gain, LN_EPS, dxn1)
    dx = dy + dx_ln1

    grads = _add_grads(mha_grads, ffn_grads)
    grads.ln1_gain, grads.ln1_shift = dln1_gain, dln1_shift
    grads.ln2_gain, grads.ln2_shift = dln2_gain, dln2_shift
    return dx, grads


def folding_layer_backward(
    x: Array, params: FoldingLayerParams, mask: Array, spec: LayerSpec, g: Array
):
    """Adjoint of folding_layer_forward: fold/unfold are reshape adjoints."""
    n = params.folding_factor
    inner_spec = LayerSpec(
        kind="standard",
        embed_dim=spec.embed_dim,
        ffn_dim=spec.ffn_dim,
        heads=spec.heads,
        activation=spec.activation,
        use_bias=spec.use_bias,
    )
    d_sub, inner_grads = attention_layer_backward(
        fold(x, n), params.inner, expand_mask(mask, n), inner_spec, fold(g, n)
    )
    return unfold(d_sub, n), FoldingLayerParams(inner_grads, n)


def layer_backward(x: Array, spec: LayerSpec, params, mask: Array, g: Array):
    if spec.kind == "standard":
        return attention_layer_backward(x, params, mask, spec, g)
    return folding_layer_backward(x, params, mask, spec, g)


def encoder_backward(model: EncoderModel, frames: Array, g: Array):
    """Adjoint of offline_forward. Returns (dframes, EncoderParams grads)."""
    spec, params = model.spec, model.params
    mask = block_causal_mask(frames.shape[0], spec.chunk_size, spec.left_context)

    inputs = [input_projection(params, frames)]
    for lspec, lparams in zip(spec.layers, params.layers):
        inputs.append(layer_forward(inputs[-1], lspec, lparams, mask))

    dx = g
    layer_grads = [None] * len(spec.layers)
    for i in reversed(range(len(spec.layers))):
        dx, layer_grads[i] = layer_backward(
            inputs[i], spec.layers[i], params.layers[i], mask, dx
        )
    dframes, din_w, din_b = linear_backward(frames, params.in_proj_w, dx)
    return dframes, EncoderParams(din_w, din_b, layer_grads)


# ---------------------------------------------------------------------------
# Finite-difference verification
# ---------------------------------------------------------------------------


@dataclass
class BlockCheck:
    name: str
    max_rel_err: float
    argmax_coord: tuple
    checked: int


@dataclass
class GradCheckReport:
    blocks: list[BlockCheck]
    passed: bool
    eps: float
    threshold: float
    dtype: str

    def worst(self) -> BlockCheck:
        return max(self.blocks, key=lambda b: b.max_rel_err)


def _rel_err(a: float, n: float) -> float:
    """|a - n| scaled by max(|a|, |n|, 1): relative above 1, absolute below."""
    return abs(a - n) / max(abs(a), abs(n), 1.0)


def encoder_param_blocks(model: EncoderModel) -> dict[str, Array]:
    """Named trainable arrays of an encoder, respecting use_bias."""
    blocks = {"in_proj_w": model.params.in_proj_w, "in_proj_b": model.params.in_proj_b}
    for i, (lspec, lparams) in enumerate(zip(model.spec.layers, model.params.layers)):
        inner = lparams.inner if lspec.kind == "folding" else lparams
        for name, arr in param_blocks(inner, lspec).items():
            blocks[f"layer{i}.{name}"] = arr
    return blocks


def encoder_grad_blocks(model: EncoderModel, grads: EncoderParams) -> dict[str, Array]:
    blocks = {"in_proj_w": grads.in_proj_w, "in_proj_b": grads.in_proj_b}
    for i, (lspec, lgrads) in enumerate(zip(model.spec.layers, grads.layers)):
        inner = lgrads.inner if lspec.kind == "folding" else lgrads
        for name, arr in param_blocks(inner, lspec).items():
            blocks[f"layer{i}.{name}"] = arr
    return blocks


def grad_check(
    model: EncoderModel,
    frames: Array,
    seed: int,
    eps: float = 1e-6,
    threshold: float = 1e-5,
    samples_per_block: int = 200,
) -> GradCheckReport:
    """Compare analytic gradients of sum(out^2) with central differences.

    For every parameter block, a deterministic random subsample of at
    most `samples_per_block` coordinates is perturbed by +-eps. Requires
    double precision parameters.
    """
    if model.params.in_proj_w.dtype != np.float64:
        raise ValueError("grad_check requires float64 parameters")

    def loss() -> float:
        out = offline_forward(model, frames)
        return float(np.sum(out * out))

    out = offline_forward(model, frames)
    _, analytic = encoder_backward(model, frames, 2.0 * out)
    a_blocks = encoder_grad_blocks(model, analytic)
    p_blocks = encoder_param_blocks(model)

    rng = np.random.default_rng(seed)
    checks = []
    for name, arr in p_blocks.items():
        a_grad = a_blocks[name]
        size = arr.size
        if size <= samples_per_block:
            coords = np.arange(size)
        else:
            coords = rng.choice(size, size=samples_per_block, replace=False)
        worst, worst_coord = 0.0, ()
        flat = arr.reshape(-1)
        for c in coords:
            orig = flat[c]
            flat[c] = orig + eps
            lp = loss()
            flat[c] = orig - eps
            lm = loss()
            flat[c] = orig
            numeric = (lp - lm) / (2.0 * eps)
            err = _rel_err(float(a_grad.reshape(-1)[c]), numeric)
            if err >= worst:
                worst = err
                worst_coord = np.unravel_index(int(c), arr.shape)
        checks.append(BlockCheck(name, worst, tuple(int(i) for i in worst_coord), len(coords)))

    passed = all(b.max_rel_err < threshold for b in checks)
    return GradCheckReport(checks, passed, eps, threshold, str(frames.dtype))
