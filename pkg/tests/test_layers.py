import numpy as np
import pytest

from oracles import naive_conv3d
from specpart.errors import ConfigError, NumericError, ShapeError
from specpart.layers import (
    Conv3dParams,
    DenseParams,
    conv3d_backward,
    conv3d_forward,
    conv3d_output_shape,
    dense_backward,
    dense_forward,
    dropout_backward,
    dropout_forward,
    pointwise_backward,
    pointwise_forward,
    relu_backward,
    relu_forward,
    softmax,
)


def central_diff(f, arr, epsilon=1e-5):
    """Central finite differences of scalar f wrt every element of arr."""
    grad = np.zeros_like(arr, dtype=np.float64)
    flat = arr.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + epsilon
        up = f()
        flat[i] = keep - epsilon
        down = f()
        flat[i] = keep
        gflat[i] = (up - down) / (2 * epsilon)
    return grad


def assert_grads_close(analytic, numeric, rtol=1e-4):
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-4)
    rel = np.abs(analytic - numeric) / denom
    assert rel.max() <= rtol, f"max relative gradient error {rel.max():.3e}"


# ---------------------------------------------------------------- conv3d


def test_conv_all_ones_closed_form():
    x = np.ones((1, 5, 5, 100))
    params = Conv3dParams(
        kernels=np.ones((1, 1, 2, 2, 9)), biases=np.zeros(1), stride=(1, 1, 2)
    )
    out = conv3d_forward(x, params)
    assert out.shape == (1, 4, 4, 46)
    np.testing.assert_allclose(out, 36.0, rtol=0, atol=1e-12)


def test_conv_identity_kernel(rng):
    x = rng.random((1, 4, 4, 6))
    params = Conv3dParams(kernels=np.ones((1, 1, 1, 1, 1)), biases=np.zeros(1))
    np.testing.assert_array_equal(conv3d_forward(x, params), x)


def test_conv_matches_naive_oracle(rng):
    x = rng.uniform(-1, 1, (2, 4, 4, 10))
    params = Conv3dParams(
        kernels=rng.uniform(-1, 1, (3, 2, 3, 3, 4)),
        biases=rng.uniform(-1, 1, 3),
        stride=(1, 1, 2),
    )
    expected = naive_conv3d(x, params.kernels, params.biases, (1, 1, 2), (0, 0))
    np.testing.assert_allclose(conv3d_forward(x, params), expected, rtol=0, atol=1e-12)


def test_conv_matches_naive_oracle_with_padding_and_strides(rng):
    x = rng.uniform(-1, 1, (2, 3, 2, 8))
    params = Conv3dParams(
        kernels=rng.uniform(-1, 1, (2, 2, 3, 3, 3)),
        biases=rng.uniform(-1, 1, 2),
        stride=(2, 1, 3),
        spatial_padding=(1, 1),
    )
    expected = naive_conv3d(x, params.kernels, params.biases, (2, 1, 3), (1, 1))
    np.testing.assert_allclose(conv3d_forward(x, params), expected, rtol=0, atol=1e-12)


def test_conv_output_shape_formulas():
    params = Conv3dParams(
        kernels=np.zeros((5, 3, 3, 3, 5)),
        biases=np.zeros(5),
        stride=(1, 1, 2),
        spatial_padding=(1, 1),
    )
    assert conv3d_output_shape((3, 2, 2, 42), params) == (5, 2, 2, 19)


def test_conv_kernel_larger_than_input():
    params = Conv3dParams(kernels=np.zeros((1, 1, 4, 4, 2)), biases=np.zeros(1))
    with pytest.raises(ShapeError):
        conv3d_forward(np.zeros((1, 3, 3, 5)), params)


def test_conv_kernel_deeper_than_bands():
    params = Conv3dParams(kernels=np.zeros((1, 1, 1, 1, 6)), biases=np.zeros(1))
    with pytest.raises(ShapeError):
        conv3d_forward(np.zeros((1, 3, 3, 5)), params)


def test_conv_channel_mismatch():
    params = Conv3dParams(kernels=np.zeros((1, 2, 1, 1, 1)), biases=np.zeros(1))
    with pytest.raises(ShapeError):
        conv3d_forward(np.zeros((1, 3, 3, 5)), params)


def test_conv_bias_gradient_is_output_sum(rng):
    x = rng.random((1, 4, 4, 9))
    params = Conv3dParams(
        kernels=rng.random((2, 1, 2, 2, 3)), biases=np.zeros(2), stride=(1, 1, 2)
    )
    out_shape = conv3d_output_shape(x.shape, params)
    grad_out = np.ones(out_shape)
    _, _, grad_b = conv3d_backward(x, params, grad_out)
    voxels = np.prod(out_shape[1:])
    np.testing.assert_allclose(grad_b, voxels, rtol=0, atol=1e-12)


def test_conv_zero_grad_out(rng):
    x = rng.random((2, 3, 3, 6))
    params = Conv3dParams(kernels=rng.random((1, 2, 2, 2, 3)), biases=rng.random(1))
    gi, gk, gb = conv3d_backward(x, params, np.zeros(conv3d_output_shape(x.shape, params)))
    assert not gi.any() and not gk.any() and not gb.any()


def test_conv_backward_matches_finite_differences(rng):
    x = rng.uniform(-1, 1, (2, 4, 3, 7))
    params = Conv3dParams(
        kernels=rng.uniform(-1, 1, (3, 2, 2, 2, 3)),
        biases=rng.uniform(-1, 1, 3),
        stride=(1, 1, 2),
        spatial_padding=(1, 0),
    )
    grad_out = rng.uniform(-1, 1, conv3d_output_shape(x.shape, params))

    def loss():
        return float(np.sum(grad_out * conv3d_forward(x, params)))

    gi, gk, gb = conv3d_backward(x, params, grad_out)
    assert_grads_close(gi, central_diff(loss, x))
    assert_grads_close(gk, central_diff(loss, params.kernels))
    assert_grads_close(gb, central_diff(loss, params.biases))


def test_conv_backward_rejects_wrong_grad_shape(rng):
    x = rng.random((1, 4, 4, 6))
    params = Conv3dParams(kernels=rng.random((1, 1, 2, 2, 3)), biases=np.zeros(1))
    with pytest.raises(ShapeError):
        conv3d_backward(x, params, np.zeros((1, 2, 3, 4)))


# ---------------------------------------------------------------- pointwise


def test_pointwise_identity(rng):
    x = rng.random((3, 3, 5))
    np.testing.assert_array_equal(pointwise_forward(x, np.array(1.0), np.array(0.0)), x)


def test_pointwise_affine():
    x = np.full((2, 2, 3), 0.5)
    np.testing.assert_allclose(
        pointwise_forward(x, np.array(2.0), np.array(1.0)), 2.0, atol=0
    )


def test_pointwise_shared_gradients(rng):
    x = rng.uniform(-1, 1, (3, 3, 6))
    w = np.array(0.7)
    b = np.array(-0.1)
    grad_out = rng.uniform(-1, 1, x.shape)

    def loss():
        return float(np.sum(grad_out * pointwise_forward(x, w, b)))

    gx, gw, gb = pointwise_backward(x, w, grad_out)
    assert_grads_close(gx, central_diff(loss, x))
    assert_grads_close(np.atleast_1d(gw), central_diff(loss, w).reshape(1))
    assert_grads_close(np.atleast_1d(gb), central_diff(loss, b).reshape(1))


def test_pointwise_per_band_gradients(rng):
    x = rng.uniform(-1, 1, (3, 3, 4))
    w = rng.uniform(-1, 1, 4)
    b = rng.uniform(-1, 1, 4)
    grad_out = rng.uniform(-1, 1, x.shape)

    def loss():
        return float(np.sum(grad_out * pointwise_forward(x, w, b)))

    gx, gw, gb = pointwise_backward(x, w, grad_out)
    assert_grads_close(gx, central_diff(loss, x))
    assert_grads_close(gw, central_diff(loss, w))
    assert_grads_close(gb, central_diff(loss, b))


def test_pointwise_per_band_length_mismatch(rng):
    with pytest.raises(ShapeError):
        pointwise_forward(rng.random((2, 2, 5)), np.ones(4), np.zeros(4))


# ---------------------------------------------------------------- relu


def test_relu_basic():
    np.testing.assert_array_equal(
        relu_forward(np.array([-1.0, 0.0, 2.0])), np.array([0.0, 0.0, 2.0])
    )


def test_relu_positive_passthrough(rng):
    t = rng.random((4, 4)) + 0.1
    g = rng.random((4, 4))
    np.testing.assert_array_equal(relu_forward(t), t)
    np.testing.assert_array_equal(relu_backward(t, g), g)


def test_relu_gradient_away_from_kink(rng):
    t = rng.uniform(-1, 1, (5, 5))
    t[np.abs(t) < 1e-3] = 0.5  # keep clear of the kink
    grad_out = rng.uniform(-1, 1, t.shape)

    def loss():
        return float(np.sum(grad_out * relu_forward(t)))

    assert_grads_close(relu_backward(t, grad_out), central_diff(loss, t))


# ---------------------------------------------------------------- dropout


def test_dropout_inference_is_identity(rng):
    t = rng.random((10, 10))
    out, _ = dropout_forward(t, 0.5, seed=3, training=False)
    np.testing.assert_array_equal(out, t)


def test_dropout_p_zero_identity(rng):
    t = rng.random((10, 10))
    out, state = dropout_forward(t, 0.0, seed=3, training=True)
    np.testing.assert_array_equal(out, t)
    assert state.mask.all()


def test_dropout_statistics():
    t = np.ones(10_000)
    out, state = dropout_forward(t, 0.5, seed=99, training=True)
    zero_frac = np.mean(out == 0.0)
    assert 0.47 <= zero_frac <= 0.53
    assert abs(out.mean() - t.mean()) <= 0.05 * t.mean()
    np.testing.assert_array_equal(out == 0.0, state.mask == 0.0)


def test_dropout_deterministic_mask(rng):
    t = rng.random(1000)
    a, _ = dropout_forward(t, 0.3, seed=7, training=True)
    b, _ = dropout_forward(t, 0.3, seed=7, training=True)
    np.testing.assert_array_equal(a, b)


def test_dropout_backward_applies_same_mask(rng):
    t = rng.random(200)
    out, state = dropout_forward(t, 0.4, seed=5, training=True)
    g = rng.random(200)
    gi = dropout_backward(g, state)
    np.testing.assert_allclose(gi, g * state.mask / 0.6, atol=0)


@pytest.mark.parametrize("p", [-0.1, 1.0, 1.5])
def test_dropout_rate_validation(p, rng):
    with pytest.raises(ConfigError):
        dropout_forward(rng.random(4), p, seed=1, training=True)


# ---------------------------------------------------------------- dense


def test_dense_identity(rng):
    x = rng.random(4)
    params = DenseParams(weights=np.eye(4), biases=np.zeros(4))
    np.testing.assert_array_equal(dense_forward(x, params), x)


def test_dense_hand_case():
    params = DenseParams(
        weights=np.array([[1.0, 1.0], [1.0, -1.0]]), biases=np.zeros(2)
    )
    np.testing.assert_array_equal(
        dense_forward(np.array([3.0, 2.0]), params), np.array([5.0, 1.0])
    )


def test_dense_gradients(rng):
    x = rng.uniform(-1, 1, 30)
    params = DenseParams(
        weights=rng.uniform(-1, 1, (20, 30)), biases=rng.uniform(-1, 1, 20)
    )
    grad_out = rng.uniform(-1, 1, 20)

    def loss():
        return float(np.sum(grad_out * dense_forward(x, params)))

    gx, gw, gb = dense_backward(x, params, grad_out)
    assert_grads_close(gx, central_diff(loss, x))
    assert_grads_close(gw, central_diff(loss, params.weights))
    assert_grads_close(gb, central_diff(loss, params.biases))


def test_dense_shape_mismatch(rng):
    params = DenseParams(weights=rng.random((3, 4)), biases=np.zeros(3))
    with pytest.raises(ShapeError):
        dense_forward(rng.random(5), params)
    with pytest.raises(ShapeError):
        dense_backward(rng.random(4), params, rng.random(2))


# ---------------------------------------------------------------- softmax


def test_softmax_uniform():
    np.testing.assert_allclose(softmax(np.zeros(3)), 1.0 / 3.0, atol=1e-15)


def test_softmax_large_logits_stable():
    out = softmax(np.array([1000.0, 0.0]))
    assert np.all(np.isfinite(out))
    np.testing.assert_allclose(out, [1.0, 0.0], atol=1e-12)


def test_softmax_preserves_argmax(rng):
    for _ in range(50):
        logits = rng.uniform(-5, 5, int(rng.integers(2, 9)))
        assert np.argmax(softmax(logits)) == np.argmax(logits)


def test_softmax_probability_vector(rng):
    for _ in range(50):
        out = softmax(rng.uniform(-30, 30, 7))
        assert np.all(out >= 0)
        assert abs(out.sum() - 1.0) <= 1e-12


def test_softmax_rejects_non_finite():
    with pytest.raises(NumericError):
        softmax(np.array([1.0, np.nan]))
