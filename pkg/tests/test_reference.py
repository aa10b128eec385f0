from fractions import Fraction

import numpy as np
import pytest

from convkit.decompose import (
    ConvWeights,
    DepthwiseWeights,
    PointwiseWeights,
    dac_decompose,
)
from convkit.errors import ValidationError
from convkit.reference import (
    MacCounter,
    conv2d,
    dense,
    depthwise_conv,
    flatten_map,
    maxpool2,
    pointwise_conv,
    relu,
)
from tests.conftest import naive_conv2d


class TestConv2d:
    def test_identity_1x1_kernel(self, rng):
        x = rng.standard_normal((5, 4, 1)).astype(np.float32)
        layer = ConvWeights(np.ones((1, 1, 1, 1), np.float32))
        counter = MacCounter()
        out = conv2d(x, layer, counter)
        np.testing.assert_allclose(out, x)
        assert counter.total == 5 * 4

    def test_zero_input_bias_broadcast(self):
        layer = ConvWeights(
            np.ones((2, 1, 1, 1), np.float32), bias=np.array([1.5, -2.0], np.float32)
        )
        out = conv2d(np.zeros((3, 3, 1), np.float32), layer)
        np.testing.assert_allclose(out[:, :, 0], 1.5)
        np.testing.assert_allclose(out[:, :, 1], -2.0)

    def test_hand_enumerated_2x2_kernel(self):
        x = np.ones((3, 3, 1), np.float32)
        layer = ConvWeights(np.ones((1, 2, 2, 1), np.float32))
        counter = MacCounter()
        out = conv2d(x, layer, counter)
        assert out.shape == (2, 2, 1)
        np.testing.assert_allclose(out, 4.0)
        assert counter.total == 2 * 2 * 1 * 2 * 2 * 1

    def test_channel_mismatch(self, rng):
        layer = ConvWeights(rng.standard_normal((1, 2, 2, 3)).astype(np.float32))
        with pytest.raises(ValidationError, match="channels"):
            conv2d(np.zeros((4, 4, 2), np.float32), layer)

    def test_kernel_larger_than_padded_input(self):
        layer = ConvWeights(np.zeros((1, 5, 5, 1), np.float32))
        with pytest.raises(ValidationError, match="larger than"):
            conv2d(np.zeros((3, 3, 1), np.float32), layer)

    @pytest.mark.parametrize("stride,padding", [((1, 1), (0, 0)), ((2, 1), (1, 2)), ((2, 2), (1, 1))])
    def test_against_independent_loop_nest(self, rng, stride, padding):
        x = rng.standard_normal((7, 6, 3)).astype(np.float32)
        layer = ConvWeights(
            rng.standard_normal((4, 3, 2, 3)).astype(np.float32),
            bias=rng.standard_normal(4).astype(np.float32),
            stride=stride,
            padding=padding,
        )
        got = conv2d(x, layer)
        want = naive_conv2d(x, layer.weights, layer.bias, stride, padding)
        np.testing.assert_allclose(got, want, rtol=1e-5, atol=1e-6)

    def test_linearity(self, rng):
        x1 = rng.standard_normal((5, 5, 2)).astype(np.float32)
        x2 = rng.standard_normal((5, 5, 2)).astype(np.float32)
        layer = ConvWeights(rng.standard_normal((3, 3, 3, 2)).astype(np.float32), padding=(1, 1))
        lhs = conv2d((2.0 * x1 + x2).astype(np.float32), layer)
        rhs = 2.0 * conv2d(x1, layer) + conv2d(x2, layer)
        np.testing.assert_allclose(lhs, rhs, atol=1e-4)


class TestDepthwise:
    def test_identity_multiplier1(self, rng):
        x = rng.standard_normal((4, 4, 3)).astype(np.float32)
        ident = DepthwiseWeights(np.ones((3, 1, 1, 1), np.float32), multiplier=1, channels=3)
        np.testing.assert_allclose(depthwise_conv(x, ident), x)

    def test_scalar_kernels_multiplier2(self):
        x = np.arange(8, dtype=np.float32).reshape(2, 4, 1)
        dw = DepthwiseWeights(
            np.array([1.0, 2.0], np.float32).reshape(2, 1, 1, 1), multiplier=2, channels=1
        )
        out = depthwise_conv(x, dw)
        np.testing.assert_allclose(out[:, :, 0], x[:, :, 0])
        np.testing.assert_allclose(out[:, :, 1], 2 * x[:, :, 0])

    def test_against_per_channel_conv_oracle(self, rng):
        c, r = 2, 2
        x = rng.standard_normal((3, 3, c)).astype(np.float32)
        w = rng.standard_normal((c * r, 2, 2, 1)).astype(np.float32)
        dw = DepthwiseWeights(w, multiplier=r, channels=c)
        counter = MacCounter()
        out = depthwise_conv(x, dw, counter)
        for i in range(c):
            for t in range(r):
                j = i * r + t
                single = naive_conv2d(x[:, :, i : i + 1], w[j : j + 1])
                np.testing.assert_allclose(out[:, :, j], single[:, :, 0], rtol=1e-5, atol=1e-6)
        assert counter.total == 2 * 2 * 2 * 2 * (c * r)

    def test_channel_mismatch(self, rng):
        dw = DepthwiseWeights(np.zeros((4, 1, 1, 1), np.float32), multiplier=2, channels=2)
        with pytest.raises(ValidationError, match="channels"):
            depthwise_conv(np.zeros((2, 2, 3), np.float32), dw)


class TestPointwise:
    def test_identity_weights(self, rng):
        x = rng.standard_normal((3, 3, 4)).astype(np.float32)
        w = np.eye(4, dtype=np.float32).reshape(4, 1, 1, 4)
        np.testing.assert_allclose(pointwise_conv(x, PointwiseWeights(w)), x)

    def test_zero_weights_bias_only(self):
        w = np.zeros((2, 1, 1, 3), np.float32)
        b = np.array([4.0, -1.0], np.float32)
        out = pointwise_conv(np.ones((2, 2, 3), np.float32), PointwiseWeights(w, b))
        np.testing.assert_allclose(out[:, :, 0], 4.0)
        np.testing.assert_allclose(out[:, :, 1], -1.0)

    def test_against_per_pixel_matvec(self, rng):
        x = rng.standard_normal((2, 2, 3)).astype(np.float32)
        w = rng.standard_normal((2, 1, 1, 3)).astype(np.float32)
        counter = MacCounter()
        out = pointwise_conv(x, PointwiseWeights(w), counter)
        for px in range(2):
            for py in range(2):
                want = w[:, 0, 0, :].astype(np.float64) @ x[px, py].astype(np.float64)
                np.testing.assert_allclose(out[px, py], want, rtol=1e-6)
        assert counter.total == 2 * 2 * 3 * 2


class TestAuxOps:
    def test_relu(self):
        np.testing.assert_array_equal(relu(np.array([-1.0, 2.0])), [0.0, 2.0])

    def test_maxpool_constant(self):
        out = maxpool2(np.full((4, 6, 2), 3.5, np.float32))
        assert out.shape == (2, 3, 2)
        np.testing.assert_allclose(out, 3.5)

    def test_dense_identity(self, rng):
        x = rng.standard_normal(5).astype(np.float32)
        counter = MacCounter()
        out = dense(x, np.eye(5, dtype=np.float32), counter=counter)
        np.testing.assert_allclose(out, x)
        assert counter.total == 25

    def test_flatten_rowmajor(self):
        x = np.arange(12, dtype=np.float32).reshape(2, 3, 2)
        np.testing.assert_array_equal(flatten_map(x), np.arange(12))


class TestDacFunctionalEquivalence:
    def test_full_rank_matches_original_conv(self, rng):
        layer = ConvWeights(
            rng.standard_normal((4, 3, 3, 3)).astype(np.float32) * 0.3,
            bias=rng.standard_normal(4).astype(np.float32),
            padding=(1, 1),
        )
        pair = dac_decompose(layer, min(4, 9))
        x = rng.standard_normal((6, 6, 3)).astype(np.float32)
        direct = conv2d(x, layer)
        via_pair = pointwise_conv(depthwise_conv(x, pair.depthwise), pair.pointwise)
        assert np.abs(direct - via_pair).max() <= 1e-4

    def test_truncated_pair_matches_reconstructed_weights(self, rng):
        from convkit.decompose import reconstruct

        layer = ConvWeights(rng.standard_normal((4, 3, 3, 2)).astype(np.float32) * 0.3)
        pair = dac_decompose(layer, 2)
        x = rng.standard_normal((5, 5, 2)).astype(np.float32)
        recon_layer = ConvWeights(reconstruct(pair), stride=layer.stride, padding=layer.padding)
        direct = conv2d(x, recon_layer)
        via_pair = pointwise_conv(depthwise_conv(x, pair.depthwise), pair.pointwise)
        assert np.abs(direct - via_pair).max() <= 1e-4


def test_mac_ratio_law(rng):
    # (depthwise + pointwise MACs) / conv MACs == r/n + r/(kw*kh) exactly
    n, kw, kh, c = 8, 3, 3, 4
    layer = ConvWeights(
        rng.standard_normal((n, kw, kh, c)).astype(np.float32), padding=(1, 1)
    )
    x = rng.standard_normal((6, 6, c)).astype(np.float32)
    for r in range(1, min(n, kw * kh) + 1):
        pair = dac_decompose(layer, r)
        c_orig, c_pair = MacCounter(), MacCounter()
        conv2d(x, layer, c_orig)
        pointwise_conv(depthwise_conv(x, pair.depthwise, c_pair), pair.pointwise, c_pair)
        assert Fraction(c_pair.total, c_orig.total) == Fraction(r, n) + Fraction(r, kw * kh)
