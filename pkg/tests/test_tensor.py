import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from foldattn.tensor import (
    DimensionError,
    DivisibilityError,
    activation,
    concat_channels,
    count_flops,
    layer_norm,
    matmul,
    softmax_lastdim,
    split_channels,
    tensor,
)


def matmul_oracle(a, b):
    """Naive triple loop, independent of numpy's matmul path."""
    m, k = a.shape
    k2, n = b.shape
    assert k == k2
    out = np.zeros((m, n), dtype=np.float64)
    for i in range(m):
        for j in range(n):
            acc = 0.0
            for t in range(k):
                acc += float(a[i, t]) * float(b[t, j])
            out[i, j] = acc
    return out


class TestTensorConstructor:
    def test_validates_rank(self):
        with pytest.raises(DimensionError):
            tensor(np.zeros((2, 2, 2, 2)))

    def test_rejects_empty_axis(self):
        with pytest.raises(DimensionError):
            tensor(np.zeros((0, 3)))

    def test_shape_matches_data_length(self):
        t = tensor([[1.0, 2.0], [3.0, 4.0]])
        assert t.shape == (2, 2)
        assert t.size == 4


class TestMatmul:
    def test_identity(self):
        x = np.array([[1.0, 2.0], [3.0, 4.0]])
        assert np.array_equal(matmul(np.eye(2), x), x)

    def test_row_times_column(self):
        out = matmul(np.array([[1.0, 2.0]]), np.array([[3.0], [4.0]]))
        assert np.array_equal(out, [[11.0]])

    def test_matches_triple_loop_oracle(self):
        rng = np.random.default_rng(0)
        a = rng.standard_normal((8, 8))
        b = rng.standard_normal((8, 8))
        assert np.max(np.abs(matmul(a, b) - matmul_oracle(a, b))) < 1e-12

    def test_shape_mismatch_names_both_shapes(self):
        with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 2\)"):
            matmul(np.zeros((2, 3)), np.zeros((2, 2)))

    def test_flop_accounting_is_2mkn(self):
        with count_flops() as fc:
            matmul(np.zeros((3, 5)), np.zeros((5, 7)))
            matmul(np.zeros((2, 2)), np.zeros((2, 2)), tag="score")
        assert fc.by_tag["linear"] == 2 * 3 * 5 * 7
        assert fc.by_tag["score"] == 2 * 2 * 2 * 2
        assert fc.total == 2 * 3 * 5 * 7 + 16

    def test_no_counting_outside_context(self):
        with count_flops() as fc:
            pass
        matmul(np.zeros((2, 2)), np.zeros((2, 2)))
        assert fc.total == 0


class TestSoftmax:
    def test_uniform_on_zeros(self):
        assert np.allclose(softmax_lastdim(np.zeros(4)), 0.25, atol=1e-15)

    def test_no_overflow_on_large_logit(self):
        out = softmax_lastdim(np.array([1000.0, 0.0]))
        assert abs(out[0] - 1.0) < 1e-12
        assert abs(out[1] - 0.0) < 1e-12

    def test_log2_closed_form(self):
        out = softmax_lastdim(np.array([np.log(2.0), 0.0]))
        assert np.allclose(out, [2.0 / 3.0, 1.0 / 3.0], atol=1e-15)

    @settings(max_examples=60, deadline=None)
    @given(
        st.lists(st.floats(min_value=-1e3, max_value=1e3), min_size=1, max_size=8),
        st.sampled_from([1e-3, 1.0, 1e3]),
    )
    def test_rows_sum_to_one(self, values, scale):
        x = np.array(values) * scale
        out = softmax_lastdim(x)
        assert np.all(out >= 0)
        assert abs(out.sum() - 1.0) < 1e-6


class TestLayerNorm:
    def test_constant_token_is_zeroed(self):
        x = np.full((3, 4), 7.0)
        out = layer_norm(x, np.ones(4), np.zeros(4), eps=1e-5)
        assert np.allclose(out, 0.0, atol=1e-12)

    def test_two_point_token(self):
        out = layer_norm(np.array([[1.0, 3.0]]), np.ones(2), np.zeros(2), eps=0.0)
        assert np.allclose(out, [[-1.0, 1.0]], atol=1e-12)

    def test_matches_two_pass_statistics_oracle(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((5, 9))
        gain = rng.standard_normal(9)
        shift = rng.standard_normal(9)
        eps = 1e-5
        want = np.empty_like(x)
        for t in range(5):
            mu = sum(x[t]) / 9
            var = sum((v - mu) ** 2 for v in x[t]) / 9
            want[t] = gain * (x[t] - mu) / np.sqrt(var + eps) + shift
        assert np.max(np.abs(layer_norm(x, gain, shift, eps) - want)) < 1e-12

    def test_affine_length_mismatch(self):
        with pytest.raises(DimensionError):
            layer_norm(np.zeros((2, 4)), np.ones(3), np.zeros(4))


class TestSplitConcat:
    def test_channel_assignment(self):
        out = split_channels(np.array([[1.0, 2.0, 3.0, 4.0]]), 2)
        assert np.array_equal(out, [[1.0, 2.0], [3.0, 4.0]])

    def test_n_one_is_identity(self):
        x = np.arange(6.0).reshape(2, 3)
        assert np.array_equal(split_channels(x, 1), x)
        assert np.array_equal(concat_channels(x, 1), x)

    def test_roundtrip_exact(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal((3, 6))
        assert np.array_equal(concat_channels(split_channels(x, 3), 3), x)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 5), st.integers(1, 4), st.integers(1, 4))
    def test_roundtrip_property(self, t, per, n):
        rng = np.random.default_rng(t * 100 + per * 10 + n)
        x = rng.standard_normal((t, per * n))
        assert np.array_equal(concat_channels(split_channels(x, n), n), x)

    def test_divisibility_error_reports_dims(self):
        with pytest.raises(DivisibilityError, match="5.*2|2.*5"):
            split_channels(np.zeros((1, 5)), 2)


class TestActivation:
    def test_relu(self):
        assert np.array_equal(activation(np.array([-1.0, 0.0, 2.0]), "relu"), [0.0, 0.0, 2.0])

    def test_gelu_zero_fixed_point(self):
        assert activation(np.array([0.0]), "gelu")[0] == 0.0

    def test_gelu_at_three(self):
        # tanh approximation evaluated directly:
        # 0.5*3*(1 + tanh(sqrt(2/pi)*(3 + 0.044715*27)))
        want = 0.5 * 3.0 * (1.0 + np.tanh(np.sqrt(2.0 / np.pi) * (3.0 + 0.044715 * 27.0)))
        got = activation(np.array([3.0]), "gelu")[0]
        assert abs(got - want) < 1e-12
        assert abs(got - 2.9964) < 1e-3

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            activation(np.zeros(2), "swish")
