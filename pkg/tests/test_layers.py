import numpy as np
import pytest

from evofuse.errors import DimensionError, SpecError
from evofuse.net import layers

from oracles import conv2d_oracle, finite_diff_grad, relative_err

GRAD_TOL = 1e-3
FD_H = 1e-3


def spaced_values(rng, shape, step=0.01):
    """Random tensors whose entries differ by >= step and sit away from zero,
    so +-h perturbations cannot flip max-pool or ReLU decisions during
    finite differencing."""
    n = int(np.prod(shape))
    vals = (rng.permutation(n) + 0.5 - n / 2) * step + rng.uniform(-0.002, 0.002, n)
    return vals.reshape(shape)


class TestConvForward:
    def test_1x1_identity(self, rng):
        x = rng.random((1, 3, 4, 4))
        w = np.ones((3, 1, 1, 1))
        out = layers.conv2d_forward(x, w, None, groups=3)
        np.testing.assert_allclose(out, x)

    def test_all_ones_kernel_interior(self):
        x = np.ones((1, 1, 4, 4))
        w = np.ones((1, 1, 3, 3))
        b = np.array([0.25])
        out = layers.conv2d_forward(x, w, b, pad=0)
        np.testing.assert_allclose(out, 9.0 + 0.25)

    def test_matches_naive_oracle_grouped(self, rng):
        x = rng.standard_normal((2, 4, 6, 6))
        w = rng.standard_normal((6, 2, 3, 3))
        b = rng.standard_normal(6)
        fast = layers.conv2d_forward(x, w, b, stride=1, pad=1, groups=2)
        slow = conv2d_oracle(x, w, b, stride=1, pad=1, groups=2)
        assert np.max(np.abs(fast - slow)) < 1e-6

    def test_matches_naive_oracle_strided(self, rng):
        x = rng.standard_normal((1, 3, 7, 7))
        w = rng.standard_normal((4, 3, 3, 3))
        b = rng.standard_normal(4)
        fast = layers.conv2d_forward(x, w, b, stride=2, pad=1)
        slow = conv2d_oracle(x, w, b, stride=2, pad=1)
        assert fast.shape == (1, 4, 4, 4)
        assert np.max(np.abs(fast - slow)) < 1e-6

    def test_groups_must_divide(self, rng):
        with pytest.raises(SpecError):
            layers.conv2d_forward(rng.random((1, 3, 4, 4)), rng.random((4, 1, 3, 3)), None, groups=2)

    def test_groups_one_equals_ungrouped(self, rng):
        x = rng.standard_normal((1, 4, 5, 5))
        w = rng.standard_normal((4, 4, 3, 3))
        a = layers.conv2d_forward(x, w, None, pad=1, groups=1)
        b = layers.conv2d_forward(x, w, None, pad=1)
        np.testing.assert_array_equal(a, b)


class TestConvBackward:
    def test_zero_grad_out(self, rng):
        x = rng.random((1, 2, 5, 5))
        w = rng.random((4, 2, 3, 3))
        gx, gw, gb = layers.conv2d_backward(x, w, np.zeros((1, 4, 5, 5)), pad=1)
        assert not gx.any() and not gw.any() and not gb.any()

    def test_single_pixel_1x1(self, rng):
        x = rng.random((1, 1, 1, 1))
        w = rng.random((1, 1, 1, 1))
        g = rng.random((1, 1, 1, 1))
        gx, gw, gb = layers.conv2d_backward(x, w, g)
        assert abs(gw[0, 0, 0, 0] - x[0, 0, 0, 0] * g[0, 0, 0, 0]) < 1e-12
        assert abs(gx[0, 0, 0, 0] - w[0, 0, 0, 0] * g[0, 0, 0, 0]) < 1e-12

    @pytest.mark.parametrize("groups,stride", [(1, 1), (2, 1), (4, 1), (1, 2)])
    def test_matches_finite_differences(self, rng, groups, stride):
        x = rng.standard_normal((2, 4, 6, 6))
        w = 0.3 * rng.standard_normal((4, 4 // groups, 3, 3))
        b = 0.1 * rng.standard_normal(4)
        target = rng.standard_normal(
            layers.conv2d_forward(x, w, b, stride=stride, pad=1, groups=groups).shape
        )

        def loss():
            out = layers.conv2d_forward(x, w, b, stride=stride, pad=1, groups=groups)
            return float((out * target).sum())

        out = layers.conv2d_forward(x, w, b, stride=stride, pad=1, groups=groups)
        gx, gw, gb = layers.conv2d_backward(x, w, target, stride=stride, pad=1, groups=groups)
        assert relative_err(finite_diff_grad(loss, x, FD_H), gx) < GRAD_TOL
        assert relative_err(finite_diff_grad(loss, w, FD_H), gw) < GRAD_TOL
        assert relative_err(finite_diff_grad(loss, b, FD_H), gb) < GRAD_TOL


class TestChannelShuffle:
    def test_groups_one_identity(self, rng):
        x = rng.random((1, 6, 2, 2))
        np.testing.assert_array_equal(layers.channel_shuffle(x, 1), x)

    def test_four_channels_two_groups(self):
        x = np.arange(4, dtype=float).reshape(1, 4, 1, 1)
        out = layers.channel_shuffle(x, 2)
        assert out.ravel().tolist() == [0.0, 2.0, 1.0, 3.0]

    def test_inverse_composition(self, rng):
        x = rng.random((2, 12, 3, 3))
        for g in (2, 3, 4, 6):
            back = layers.channel_shuffle(layers.channel_shuffle(x, g), 12 // g)
            np.testing.assert_array_equal(back, x)

    def test_indivisible_rejected(self, rng):
        with pytest.raises(SpecError):
            layers.channel_shuffle(rng.random((1, 5, 2, 2)), 2)

    def test_backward_is_inverse_permutation(self, rng):
        x = rng.random((1, 8, 2, 2))
        g = rng.random((1, 8, 2, 2))
        # <shuffle(x), g> == <x, shuffle_backward(g)>
        lhs = float((layers.channel_shuffle(x, 4) * g).sum())
        rhs = float((x * layers.channel_shuffle_backward(g, 4)).sum())
        assert abs(lhs - rhs) < 1e-12


class TestBatchNorm:
    def test_eval_identity_params(self, rng):
        x = rng.random((2, 3, 4, 4))
        out, _ = layers.batchnorm_forward(
            x, np.ones(3), np.zeros(3), np.zeros(3), np.ones(3), mode="eval"
        )
        assert np.max(np.abs(out - x)) < 1e-4  # eps-only deviation

    def test_train_normalizes(self, rng):
        x = 3.0 + 2.0 * rng.standard_normal((4, 3, 8, 8))
        scale = np.array([1.0, 2.0, 0.5])
        shift = np.array([0.0, 1.0, -1.0])
        out, _ = layers.batchnorm_forward(
            x, scale, shift, np.zeros(3), np.ones(3), mode="train"
        )
        np.testing.assert_allclose(out.mean(axis=(0, 2, 3)), shift, atol=1e-3)
        np.testing.assert_allclose(out.var(axis=(0, 2, 3)), scale**2, rtol=1e-3)

    def test_running_stats_updated(self, rng):
        x = rng.standard_normal((2, 2, 4, 4)) + 5.0
        rm, rv = np.zeros(2), np.ones(2)
        layers.batchnorm_forward(x, np.ones(2), np.zeros(2), rm, rv, mode="train")
        np.testing.assert_allclose(rm, 0.1 * x.mean(axis=(0, 2, 3)), atol=1e-12)

    def test_matches_statistics_oracle(self, rng):
        x = rng.standard_normal((3, 2, 5, 5))
        scale = rng.random(2) + 0.5
        shift = rng.standard_normal(2)
        out, _ = layers.batchnorm_forward(x, scale, shift, np.zeros(2), np.ones(2), "train")
        mu = x.mean(axis=(0, 2, 3), keepdims=True)
        var = x.var(axis=(0, 2, 3), keepdims=True)
        expected = scale[None, :, None, None] * (x - mu) / np.sqrt(var + 1e-5) + shift[
            None, :, None, None
        ]
        assert np.max(np.abs(out - expected)) < 1e-12

    def test_train_backward_finite_differences(self, rng):
        x = rng.standard_normal((2, 3, 4, 4))
        scale = rng.random(3) + 0.5
        shift = rng.standard_normal(3)
        target = rng.standard_normal(x.shape)

        def loss():
            out, _ = layers.batchnorm_forward(
                x, scale, shift, np.zeros(3), np.ones(3), "train"
            )
            return float((out * target).sum())

        _, cache = layers.batchnorm_forward(x, scale, shift, np.zeros(3), np.ones(3), "train")
        gx, gscale, gshift = layers.batchnorm_backward(target, scale, cache)
        assert relative_err(finite_diff_grad(loss, x, FD_H), gx) < GRAD_TOL
        assert relative_err(finite_diff_grad(loss, scale, FD_H), gscale) < GRAD_TOL
        assert relative_err(finite_diff_grad(loss, shift, FD_H), gshift) < GRAD_TOL


class TestPoolAndUpsample:
    def test_constant_pool_tie_top_left(self):
        x = np.full((1, 1, 4, 4), 0.7)
        out, idx = layers.maxpool2_forward(x)
        np.testing.assert_allclose(out, 0.7)
        assert (idx == 0).all()  # ties resolve to the top-left corner

    def test_upsample_of_pool_on_blockconstant(self, rng):
        small = rng.random((1, 2, 3, 3))
        x = layers.upsample_nearest(small)
        out, _ = layers.maxpool2_forward(x)
        np.testing.assert_array_equal(layers.upsample_nearest(out), x)

    def test_pool_matches_window_max(self, rng):
        x = rng.random((2, 3, 4, 4))
        out, _ = layers.maxpool2_forward(x)
        for n in range(2):
            for c in range(3):
                for i in range(2):
                    for j in range(2):
                        window = x[n, c, 2 * i : 2 * i + 2, 2 * j : 2 * j + 2]
                        assert out[n, c, i, j] == window.max()

    def test_odd_dims_rejected(self, rng):
        with pytest.raises(DimensionError):
            layers.maxpool2_forward(rng.random((1, 1, 5, 4)))

    def test_pool_backward_finite_differences(self, rng):
        x = spaced_values(rng, (2, 2, 4, 4))
        target = rng.standard_normal((2, 2, 2, 2))

        def loss():
            out, _ = layers.maxpool2_forward(x)
            return float((out * target).sum())

        out, idx = layers.maxpool2_forward(x)
        gx = layers.maxpool2_backward(target, idx, x.shape)
        assert relative_err(finite_diff_grad(loss, x, FD_H), gx) < GRAD_TOL

    def test_upsample_backward_adjoint(self, rng):
        x = rng.random((1, 2, 3, 3))
        g = rng.random((1, 2, 6, 6))
        lhs = float((layers.upsample_nearest(x) * g).sum())
        rhs = float((x * layers.upsample_nearest_backward(g)).sum())
        assert abs(lhs - rhs) < 1e-12


class TestFire:
    def params(self, rng, cin=4, squeeze=2, e1=3, e3=3):
        mk = lambda cout, cin_, k: (
            0.4 * rng.standard_normal((cout, cin_, k, k)),
            0.2 * rng.standard_normal(cout),
        )
        return mk(squeeze, cin, 1), mk(e1, squeeze, 1), mk(e3, squeeze, 3)

    def test_zero_weights_zero_output(self, rng):
        x = rng.random((1, 4, 5, 5))
        zeros = lambda cout, cin_, k: (np.zeros((cout, cin_, k, k)), np.zeros(cout))
        out, _ = layers.fire_forward(x, zeros(2, 4, 1), zeros(3, 2, 1), zeros(3, 2, 3))
        assert not out.any()

    def test_output_channels_concat(self, rng):
        sq, e1, e3 = self.params(rng)
        out, _ = layers.fire_forward(rng.random((1, 4, 5, 5)), sq, e1, e3)
        assert out.shape == (1, 6, 5, 5)

    def test_equals_primitive_composition(self, rng):
        sq, e1, e3 = self.params(rng)
        x = rng.standard_normal((2, 4, 6, 6))
        out, _ = layers.fire_forward(x, sq, e1, e3)
        s = layers.relu(layers.conv2d_forward(x, sq[0], sq[1], pad=0))
        o1 = layers.conv2d_forward(s, e1[0], e1[1], pad=0)
        o3 = layers.conv2d_forward(s, e3[0], e3[1], pad=1)
        expected = layers.relu(np.concatenate([o1, o3], axis=1))
        assert np.max(np.abs(out - expected)) < 1e-6

    def test_squeeze_wider_than_expand_rejected(self, rng):
        sq, e1, e3 = self.params(rng, squeeze=2)
        wide_sq = (np.zeros((7, 4, 1, 1)), np.zeros(7))
        with pytest.raises(SpecError):
            layers.fire_forward(rng.random((1, 4, 5, 5)), wide_sq, e1, e3)

    def test_backward_finite_differences(self):
        # seed chosen so every internal pre-activation clears the ReLU kink
        # by more than the finite-difference step
        rng = np.random.default_rng(20)
        sq, e1, e3 = self.params(rng)
        x = spaced_values(rng, (1, 4, 5, 5), step=0.05)
        s_pre = layers.conv2d_forward(x, sq[0], sq[1], pad=0)
        assert np.abs(s_pre).min() > 10 * FD_H
        target = rng.standard_normal((1, 6, 5, 5))

        def loss():
            out, _ = layers.fire_forward(x, sq, e1, e3)
            return float((out * target).sum())

        out, cache = layers.fire_forward(x, sq, e1, e3)
        gx, gsq, ge1, ge3 = layers.fire_backward(x, sq, e1, e3, target, cache)
        assert relative_err(finite_diff_grad(loss, x, FD_H), gx) < GRAD_TOL
        for (gw, gb), (w, b) in zip((gsq, ge1, ge3), (sq, e1, e3)):
            assert relative_err(finite_diff_grad(loss, w, FD_H), gw) < GRAD_TOL
            assert relative_err(finite_diff_grad(loss, b, FD_H), gb) < GRAD_TOL


def test_finite_check_flag(rng):
    x = rng.random((1, 1, 4, 4))
    x[0, 0, 0, 0] = np.inf
    w = np.ones((1, 1, 1, 1))
    layers.conv2d_forward(x, w, None)  # silent by default
    layers.CHECK_FINITE = True
    try:
        with pytest.raises(FloatingPointError):
            layers.conv2d_forward(x, w, None)
    finally:
        layers.CHECK_FINITE = False


class TestActivations:
    def test_sigmoid_backward_finite_differences(self, rng):
        x = rng.standard_normal((2, 1, 4, 4))
        target = rng.standard_normal(x.shape)

        def loss():
            return float((layers.sigmoid(x) * target).sum())

        y = layers.sigmoid(x)
        gx = layers.sigmoid_backward(target, y)
        assert relative_err(finite_diff_grad(loss, x, FD_H), gx) < GRAD_TOL

    def test_relu_backward(self, rng):
        x = spaced_values(rng, (2, 2, 3, 3))
        g = rng.standard_normal(x.shape)
        gx = layers.relu_backward(g, x)
        assert relative_err(finite_diff_grad(
            lambda: float((layers.relu(x) * g).sum()), x, FD_H), gx) < GRAD_TOL
