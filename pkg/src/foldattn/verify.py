"""Deterministic invariant suites behind `foldattn verify`.

Each suite returns CheckResult rows; a failing row carries the seed or
counterexample needed to reproduce it. Suites: fold (fold/unfold and
degeneracy), grad (finite-difference gradient checks), stream
(streaming/offline equivalence, causality, locality), flops (FLOP and
parameter conservation, the small-context regime inequalities).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import grad_check, mha_backward
from .costmodel import count_params, encoder_cost, flops_per_token
from .folding import (
    derive_folding_spec,
    expand_mask,
    fold,
    folding_layer_forward,
    unfold,
)
from .folding import FoldingLayerParams
from .layers import LayerSpec, attention_layer_forward, causal_mask, full_mask, init_params
from .streaming import (
    EncoderSpec,
    init_encoder,
    offline_forward,
    stream_forward,
)
from .tensor import FlopCounter, count_flops

SUITE_NAMES = ("fold", "grad", "stream", "flops")


@dataclass
class CheckResult:
    suite: str
    name: str
    passed: bool
    detail: str = ""


def _check(suite, name, passed, detail=""):
    return CheckResult(suite, name, bool(passed), detail)


# ---------------------------------------------------------------------------
# fold suite
# ---------------------------------------------------------------------------


def suite_fold(seed: int = 0) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    results = []

    ok = True
    bad = ""
    for t, d, n in [(1, 4, 2), (3, 6, 3), (2, 2, 2), (5, 8, 4), (4, 12, 1)]:
        x = rng.standard_normal((t, d))
        if not np.array_equal(unfold(fold(x, n), n), x):
            ok, bad = False, f"T={t}, D={d}, n={n}, seed={seed}"
            break
    results.append(_check("fold", "fold_unfold_roundtrip_bitexact", ok, bad))

    x = np.array([[1.0, 2.0, 3.0, 4.0]])
    results.append(
        _check(
            "fold",
            "channel_assignment_first_block_first_subtoken",
            np.array_equal(fold(x, 2), [[1.0, 2.0], [3.0, 4.0]]),
        )
    )

    spec = LayerSpec(kind="standard", embed_dim=8, ffn_dim=16, heads=2)
    params = init_params(spec, seed=seed + 1)
    xin = rng.standard_normal((4, 8))
    mask = causal_mask(4)
    std_out = attention_layer_forward(xin, params, mask, spec)
    fold_out = folding_layer_forward(xin, FoldingLayerParams(params, 1), mask, spec)
    results.append(
        _check(
            "fold",
            "factor_one_equals_standard_bitexact",
            np.array_equal(std_out, fold_out),
            f"max|diff|={np.max(np.abs(std_out - fold_out)):.3g}",
        )
    )

    m = expand_mask(causal_mask(2), 2)
    want = np.array(
        [
            [True, True, False, False],
            [True, True, False, False],
            [True, True, True, True],
            [True, True, True, True],
        ]
    )
    results.append(_check("fold", "mask_expansion_block_structure", np.array_equal(m, want)))

    fspec = derive_folding_spec(LayerSpec(embed_dim=16, ffn_dim=32, heads=4), 2)
    fparams = FoldingLayerParams(init_params(fspec, seed=seed + 2), 2)
    x2 = rng.standard_normal((3, 16))
    mask2 = full_mask(3)
    inner_spec = LayerSpec(kind="standard", embed_dim=8, ffn_dim=16, heads=2)
    manual = unfold(
        attention_layer_forward(fold(x2, 2), fparams.inner, expand_mask(mask2, 2), inner_spec),
        2,
    )
    got = folding_layer_forward(x2, fparams, mask2, fspec)
    results.append(
        _check(
            "fold",
            "composition_matches_manual_fold_standard_unfold",
            np.allclose(got, manual, rtol=0, atol=1e-10),
            f"max|diff|={np.max(np.abs(got - manual)):.3g}",
        )
    )
    return results


# ---------------------------------------------------------------------------
# grad suite
# ---------------------------------------------------------------------------


def _single_layer_encoder(lspec: LayerSpec, feature_dim=6, chunk=2, left=4, seed=0):
    spec = EncoderSpec(
        layers=(lspec,), feature_dim=feature_dim, chunk_size=chunk, left_context=left
    )
    return init_encoder(spec, seed=seed)


def suite_grad(seed: int = 0) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    results = []

    cases = [
        ("standard_layer", LayerSpec(kind="standard", embed_dim=8, ffn_dim=16, heads=2,
                                     activation="gelu"), 4),
        ("folding_layer", derive_folding_spec(
            LayerSpec(embed_dim=8, ffn_dim=16, heads=2, activation="gelu"), 2), 3),
        ("relu_standard_layer", LayerSpec(kind="standard", embed_dim=8, ffn_dim=16, heads=2,
                                          activation="relu"), 4),
    ]
    for name, lspec, t in cases:
        model = _single_layer_encoder(lspec, seed=seed + 11)
        frames = rng.standard_normal((t, model.spec.feature_dim))
        report = grad_check(model, frames, seed=seed + 13)
        worst = report.worst()
        results.append(
            _check(
                "grad",
                f"grad_check_{name}",
                report.passed,
                f"worst block {worst.name} rel_err={worst.max_rel_err:.3g} seed={seed}",
            )
        )

    x = rng.standard_normal((3, 8))
    g2 = fold(x, 2)
    results.append(
        _check("grad", "fold_unfold_adjoint_roundtrip_bitexact",
               np.array_equal(unfold(g2, 2), x))
    )

    # a fully masked key column must receive exactly zero gradient
    spec = LayerSpec(kind="standard", embed_dim=8, ffn_dim=16, heads=2)
    params = init_params(spec, seed=seed + 17)
    t = 5
    mask = full_mask(t)
    mask[:, 3] = False
    xin = rng.standard_normal((t, 8))
    # token 3 still contributes through its own query; isolate the k/v path
    # by zeroing the query-side upstream at row 3
    upstream = rng.standard_normal((t, 8))
    upstream[3] = 0.0
    dx, _ = mha_backward(xin, params, mask, spec.heads, upstream)
    results.append(
        _check(
            "grad",
            "masked_key_gradient_exactly_zero",
            np.all(dx[3] == 0.0),
            f"max|grad|={np.max(np.abs(dx[3])):.3g}",
        )
    )
    return results


# ---------------------------------------------------------------------------
# stream suite
# ---------------------------------------------------------------------------


def random_encoder_spec(rng: np.random.Generator) -> EncoderSpec:
    """Small random stack: mixed folding/standard, width <= 32."""
    width = int(rng.choice([8, 16, 32]))
    heads = int(rng.choice([1, 2]))
    std = LayerSpec(kind="standard", embed_dim=width, ffn_dim=2 * width, heads=2 * heads,
                    activation=str(rng.choice(["relu", "gelu"])))
    fold_spec = derive_folding_spec(std, 2)
    n_layers = int(rng.integers(1, 5))
    layers = tuple(
        fold_spec if rng.random() < 0.5 else std for _ in range(n_layers)
    )
    return EncoderSpec(
        layers=layers,
        feature_dim=int(rng.integers(3, 12)),
        chunk_size=int(rng.integers(1, 6)),
        left_context=int(rng.integers(0, 9)),
    )


def suite_stream(seed: int = 0, cases: int = 50) -> list[CheckResult]:
    results = []

    worst = 0.0
    bad = ""
    for case in range(cases):
        rng = np.random.default_rng(seed + case)
        spec = random_encoder_spec(rng)
        model = init_encoder(spec, seed=seed + 1000 + case)
        total = int(rng.integers(1, 31))
        frames = rng.standard_normal((total, spec.feature_dim))
        diff = np.max(np.abs(stream_forward(model, frames) - offline_forward(model, frames)))
        if diff > worst:
            worst, bad = float(diff), f"case seed={seed + case}"
        if diff >= 1e-10:
            break
    results.append(
        _check("stream", "stream_equals_offline_double_1e-10", worst < 1e-10,
               f"worst max|diff|={worst:.3g} {bad}")
    )

    worst32 = 0.0
    bad32 = ""
    for case in range(10):
        rng = np.random.default_rng(seed + 500 + case)
        spec = random_encoder_spec(rng)
        model = init_encoder(spec, seed=seed + 2000 + case, dtype=np.float32)
        total = int(rng.integers(1, 31))
        frames = rng.standard_normal((total, spec.feature_dim)).astype(np.float32)
        diff = np.max(
            np.abs(
                stream_forward(model, frames, dtype=np.float32)
                - offline_forward(model, frames)
            )
        )
        if diff > worst32:
            worst32, bad32 = float(diff), f"case seed={seed + 500 + case}"
    results.append(
        _check("stream", "stream_equals_offline_single_1e-5", worst32 < 1e-5,
               f"worst max|diff|={worst32:.3g} {bad32}")
    )

    # causality: later frames never change earlier chunk outputs
    rng = np.random.default_rng(seed + 42)
    spec = random_encoder_spec(rng)
    model = init_encoder(spec, seed=seed + 3000)
    c = spec.chunk_size
    total = 3 * c
    frames = rng.standard_normal((total, spec.feature_dim))
    out_a = offline_forward(model, frames)
    frames_b = frames.copy()
    frames_b[2 * c:] += rng.standard_normal((c, spec.feature_dim))
    out_b = offline_forward(model, frames_b)
    results.append(
        _check("stream", "causality_exact",
               np.array_equal(out_a[: 2 * c], out_b[: 2 * c]),
               f"seed={seed + 42}")
    )

    # context locality for a single layer: frames older than L + chunk are invisible
    std = LayerSpec(kind="standard", embed_dim=8, ffn_dim=16, heads=2)
    spec1 = EncoderSpec(layers=(std,), feature_dim=5, chunk_size=2, left_context=2)
    model1 = init_encoder(spec1, seed=seed + 4000)
    frames = np.random.default_rng(seed + 7).standard_normal((8, 5))
    far_past = frames.copy()
    far_past[:2] += 10.0  # tokens 0..1 are > L tokens before the last chunk (6..7)
    a = offline_forward(model1, frames)[6:]
    b = offline_forward(model1, far_past)[6:]
    results.append(
        _check("stream", "context_locality_single_layer_exact", np.array_equal(a, b))
    )

    # one chunk with empty history equals the offline pass bit for bit
    rng = np.random.default_rng(seed + 9)
    spec = random_encoder_spec(rng)
    model = init_encoder(spec, seed=seed + 5000)
    frames = rng.standard_normal((spec.chunk_size, spec.feature_dim))
    results.append(
        _check(
            "stream",
            "single_chunk_equals_offline_exact",
            np.array_equal(stream_forward(model, frames), offline_forward(model, frames)),
        )
    )
    return results


# ---------------------------------------------------------------------------
# flops suite
# ---------------------------------------------------------------------------


def _layer_flops(lspec: LayerSpec, t: int, seed: int) -> FlopCounter:
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((t, lspec.outer_dim))
    mask = full_mask(t)
    params = init_params(lspec, seed=seed + 1)
    if lspec.kind == "folding":
        params = FoldingLayerParams(params, lspec.folding_factor)
    with count_flops() as fc:
        if lspec.kind == "folding":
            folding_layer_forward(x, params, mask, lspec)
        else:
            attention_layer_forward(x, params, mask, lspec)
    return fc


def suite_flops(seed: int = 0) -> list[CheckResult]:
    results = []
    t = 6
    std = LayerSpec(kind="standard", embed_dim=16, ffn_dim=32, heads=4, use_bias=False)
    fold_spec = derive_folding_spec(std, 2)

    fc_std = _layer_flops(std, t, seed)
    fc_fold = _layer_flops(fold_spec, t, seed + 1)

    n = 2
    results.append(
        _check(
            "flops",
            "linear_flops_ratio_exactly_1_over_n",
            fc_fold.by_tag["linear"] * n == fc_std.by_tag["linear"],
            f"fold={fc_fold.by_tag['linear']} std={fc_std.by_tag['linear']}",
        )
    )
    results.append(
        _check(
            "flops",
            "score_flops_ratio_exactly_n",
            fc_fold.by_tag["score"] == n * fc_std.by_tag["score"],
            f"fold={fc_fold.by_tag['score']} std={fc_std.by_tag['score']}",
        )
    )
    lin_std, _ = flops_per_token(std, t)
    lin_fold, _ = flops_per_token(fold_spec, t)
    results.append(
        _check(
            "flops",
            "n_for_one_substitution_preserves_linear_flops",
            n * lin_fold == lin_std,
            f"{n} folding layers total={n * lin_fold}, one standard={lin_std}",
        )
    )
    results.append(
        _check(
            "flops",
            "closed_form_matches_counted_linear_flops",
            lin_std * t == fc_std.by_tag["linear"] and lin_fold * t == fc_fold.by_tag["linear"],
            f"closed std={lin_std * t} counted={fc_std.by_tag['linear']}",
        )
    )

    results.append(
        _check(
            "flops",
            "param_ratio_exactly_n_squared_biases_off",
            count_params(std) == n * n * count_params(fold_spec),
            f"std={count_params(std)} fold={count_params(fold_spec)}",
        )
    )

    # default regime: linear work and weight bytes dwarf score work and bytes
    big = LayerSpec(kind="standard", embed_dim=512, ffn_dim=2048, heads=8)
    spec = EncoderSpec(layers=(big,), feature_dim=80, chunk_size=8, left_context=24)
    report = encoder_cost(spec, t=32)
    lin, score = report.linear_flops_per_token, report.score_flops_per_token
    results.append(
        _check("flops", "regime_linear_flops_over_50x_score",
               lin > 50 * score, f"linear={lin} score={score}")
    )
    weight_bytes = report.weight_bytes
    score_bytes = report.score_memory_elements * 4
    results.append(
        _check("flops", "regime_weight_bytes_over_100x_score_bytes",
               weight_bytes > 100 * score_bytes,
               f"weights={weight_bytes} scores={score_bytes}")
    )

    # accounting consistency: closed-form count equals real initialized arrays
    from .autodiff import encoder_param_blocks

    mixed = EncoderSpec(
        layers=(fold_spec, std), feature_dim=7, chunk_size=2, left_context=3
    )
    model = init_encoder(mixed, seed=seed + 2)
    actual = sum(arr.size for arr in encoder_param_blocks(model).values())
    counted = encoder_cost(mixed).params_total
    results.append(
        _check("flops", "cost_report_matches_initialized_element_count",
               actual == counted, f"actual={actual} counted={counted}")
    )
    return results


def run_suites(names: list[str], seed: int = 0) -> list[CheckResult]:
    suites = {
        "fold": suite_fold,
        "grad": suite_grad,
        "stream": suite_stream,
        "flops": suite_flops,
    }
    results = []
    for name in names:
        results.extend(suites[name](seed=seed))
    return results
