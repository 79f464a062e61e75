import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from foldattn.folding import (
    FoldingLayerParams,
    derive_folding_spec,
    expand_mask,
    fold,
    folding_layer_forward,
    unfold,
)
from foldattn.layers import (
    LayerSpec,
    attention_layer_forward,
    causal_mask,
    full_mask,
    init_params,
    param_blocks,
)
from foldattn.tensor import DivisibilityError, count_flops


class TestFoldUnfold:
    def test_channel_assignment_rule(self):
        assert np.array_equal(fold(np.array([[1.0, 2.0, 3.0, 4.0]]), 2),
                              [[1.0, 2.0], [3.0, 4.0]])
        assert np.array_equal(unfold(np.array([[1.0, 2.0], [3.0, 4.0]]), 2),
                              [[1.0, 2.0, 3.0, 4.0]])

    def test_factor_one_identity(self):
        x = np.arange(8.0).reshape(2, 4)
        assert np.array_equal(fold(x, 1), x)
        assert np.array_equal(unfold(x, 1), x)

    def test_subtoken_order_is_parent_major(self):
        x = np.array([[10.0, 11.0], [20.0, 21.0]])  # tokens t0, t1 with 2 channels
        got = fold(x, 2)
        assert np.array_equal(got, [[10.0], [11.0], [20.0], [21.0]])

    def test_roundtrip_exact_random(self):
        x = np.random.default_rng(0).standard_normal((5, 12))
        for n in (1, 2, 3, 4, 6, 12):
            assert np.array_equal(unfold(fold(x, n), n), x)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 4), st.integers(1, 4), st.integers(1, 3))
    def test_element_conservation(self, t, per, n):
        x = np.random.default_rng(t + per + n).standard_normal((t, per * n))
        assert fold(x, n).size == x.size

    def test_divisibility_error(self):
        with pytest.raises(DivisibilityError):
            fold(np.zeros((2, 5)), 2)
        with pytest.raises(DivisibilityError):
            unfold(np.zeros((5, 2)), 2)


class TestExpandMask:
    def test_full_stays_full(self):
        assert expand_mask(full_mask(3), 2).all()

    def test_causal_becomes_block_lower_triangular(self):
        got = expand_mask(causal_mask(2), 2)
        want = np.array(
            [
                [1, 1, 0, 0],
                [1, 1, 0, 0],
                [1, 1, 1, 1],
                [1, 1, 1, 1],
            ],
            dtype=bool,
        )
        assert np.array_equal(got, want)

    def test_diagonal_becomes_block_diagonal(self):
        got = expand_mask(np.eye(2, dtype=bool), 2)
        want = np.zeros((4, 4), dtype=bool)
        want[:2, :2] = True
        want[2:, 2:] = True
        assert np.array_equal(got, want)


class TestDeriveFoldingSpec:
    def test_reference_dims(self):
        std = LayerSpec(embed_dim=512, ffn_dim=2048, heads=8)
        f = derive_folding_spec(std, 2)
        assert (f.embed_dim, f.ffn_dim, f.heads) == (256, 1024, 4)
        assert f.kind == "folding" and f.folding_factor == 2
        assert f.outer_dim == 512

    def test_factor_one_unchanged(self):
        std = LayerSpec(embed_dim=8, ffn_dim=16, heads=2)
        assert derive_folding_spec(std, 1) == std

    def test_weight_param_ratio_exactly_n_squared(self):
        std = LayerSpec(embed_dim=512, ffn_dim=2048, heads=8, use_bias=False)
        f = derive_folding_spec(std, 2)
        p_std = param_blocks(init_params(std, 0), std)
        p_fold = param_blocks(init_params(f, 0), f)
        n_std = sum(a.size for a in p_std.values())
        n_fold = sum(a.size for a in p_fold.values())
        assert n_std == 4 * n_fold

    def test_divisibility_error_names_dimension(self):
        with pytest.raises(DivisibilityError, match="heads"):
            derive_folding_spec(LayerSpec(embed_dim=8, ffn_dim=16, heads=1), 2)


class TestFoldingLayerForward:
    def test_factor_one_bitexact_vs_standard(self):
        spec = LayerSpec(embed_dim=8, ffn_dim=16, heads=2)
        p = init_params(spec, 1)
        x = np.random.default_rng(2).standard_normal((4, 8))
        mask = causal_mask(4)
        std = attention_layer_forward(x, p, mask, spec)
        fld = folding_layer_forward(x, FoldingLayerParams(p, 1), mask, spec)
        assert np.array_equal(std, fld)

    def test_output_shape(self):
        std = LayerSpec(embed_dim=8, ffn_dim=16, heads=2)
        fspec = derive_folding_spec(std, 2)
        fp = FoldingLayerParams(init_params(fspec, 3), 2)
        x = np.random.default_rng(4).standard_normal((5, 8))
        assert folding_layer_forward(x, fp, full_mask(5), fspec).shape == (5, 8)

    def test_matches_manual_composition(self):
        std = LayerSpec(embed_dim=8, ffn_dim=16, heads=2)
        fspec = derive_folding_spec(std, 2)
        fp = FoldingLayerParams(init_params(fspec, 5), 2)
        x = np.random.default_rng(6).standard_normal((3, 8))
        mask = causal_mask(3)
        inner_spec = LayerSpec(embed_dim=4, ffn_dim=8, heads=1)
        want = unfold(
            attention_layer_forward(fold(x, 2), fp.inner, expand_mask(mask, 2), inner_spec), 2
        )
        got = folding_layer_forward(x, fp, mask, fspec)
        assert np.max(np.abs(got - want)) < 1e-10

    def test_intra_token_jacobian_block_nonzero(self):
        # channel of sub-token 1 must influence the channels of sub-token 0
        # of the same parent through query/key inner products
        std = LayerSpec(embed_dim=8, ffn_dim=16, heads=2, activation="gelu")
        fspec = derive_folding_spec(std, 2)
        fp = FoldingLayerParams(init_params(fspec, 7), 2)
        x = np.random.default_rng(8).standard_normal((3, 8))
        mask = full_mask(3)
        h = 1e-6
        token, in_ch, out_ch = 1, 6, 0  # in_ch is in sub-token 1, out_ch in sub-token 0
        xp = x.copy()
        xp[token, in_ch] += h
        xm = x.copy()
        xm[token, in_ch] -= h
        deriv = (
            folding_layer_forward(xp, fp, mask, fspec)[token, out_ch]
            - folding_layer_forward(xm, fp, mask, fspec)[token, out_ch]
        ) / (2 * h)
        assert abs(deriv) > 1e-9


class TestFlopRatios:
    def _count(self, lspec, params, x, mask):
        with count_flops() as fc:
            if lspec.kind == "folding":
                folding_layer_forward(x, params, mask, lspec)
            else:
                attention_layer_forward(x, params, mask, lspec)
        return fc

    def test_linear_flops_exactly_one_over_n(self):
        t, n = 6, 2
        std = LayerSpec(embed_dim=16, ffn_dim=32, heads=4)
        fspec = derive_folding_spec(std, n)
        x = np.random.default_rng(9).standard_normal((t, 16))
        mask = full_mask(t)
        fc_std = self._count(std, init_params(std, 0), x, mask)
        fc_fold = self._count(fspec, FoldingLayerParams(init_params(fspec, 0), n), x, mask)
        assert fc_std.by_tag["linear"] == n * fc_fold.by_tag["linear"]

    def test_score_flops_exactly_n_times(self):
        t, n = 5, 2
        std = LayerSpec(embed_dim=16, ffn_dim=32, heads=4)
        fspec = derive_folding_spec(std, n)
        x = np.random.default_rng(10).standard_normal((t, 16))
        mask = full_mask(t)
        fc_std = self._count(std, init_params(std, 0), x, mask)
        fc_fold = self._count(fspec, FoldingLayerParams(init_params(fspec, 0), n), x, mask)
        assert fc_fold.by_tag["score"] == n * fc_std.by_tag["score"]
