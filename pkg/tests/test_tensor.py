import numpy as np
import pytest
from hypothesis import given, strategies as st

from microgan.errors import ShapeError, SizeError, SpecError, StatisticsError
from microgan.tensor import (ConvSpec, Tensor, activation, batchnorm2d, conv2d, conv2d_array,
                             conv_transpose2d, conv_transpose2d_array, default_dtype, precision,
                             tensor_new)

import oracles

seeds = st.integers(0, 2 ** 32 - 1)


# tensor_new / Tensor

def test_tensor_new_zero_fill():
    t = tensor_new((2, 2), 0.0)
    assert t.shape == (2, 2)
    assert np.array_equal(t.data, np.zeros((2, 2)))


def test_tensor_new_latent_shape_from_rng_buffer():
    buf = np.random.default_rng(0).standard_normal(1000)
    t = tensor_new((1, 1000, 1, 1), buf)
    assert t.shape == (1, 1000, 1, 1)
    assert np.array_equal(t.data.reshape(-1), buf.astype(np.float32))


def test_tensor_new_buffer_copy():
    buf = np.array([1.0, 2.0, 3.0])
    t = tensor_new((3,), buf)
    buf[0] = 99
    assert t.data.tolist() == [1.0, 2.0, 3.0]


@pytest.mark.parametrize("shape,fill", [((2, 2), [1, 2, 3]), ((), 0.0), ((0, 3), 0.0), ((2, -1), 1.0)])
def test_tensor_new_size_errors(shape, fill):
    with pytest.raises(SizeError):
        tensor_new(shape, fill)


@given(st.lists(st.integers(1, 5), min_size=1, max_size=4))
def test_default_strides_row_major(shape):
    t = tensor_new(shape, 1.0)
    expected, acc = [], 1
    for s in reversed(shape):
        expected.append(acc)
        acc *= s
    assert t.strides == tuple(reversed(expected))


def test_default_dtype_is_32_bit_and_precision_restores():
    assert default_dtype() == np.float32
    with precision("float64"):
        assert Tensor([1.0]).dtype == np.float64
    assert Tensor([1.0]).dtype == np.float32
    with pytest.raises(ValueError):
        with precision("float16"):
            pass


# conv2d

def test_conv2d_discriminator_first_layer_shape():
    spec = ConvSpec(3, 64, (4, 4), (2, 2), (1, 1))
    out = conv2d(tensor_new((1, 3, 64, 64), 0.5), tensor_new((64, 3, 4, 4), 0.01), spec)
    assert out.shape == (1, 64, 32, 32)


def test_conv2d_identity_kernel(rng):
    x = Tensor(rng.standard_normal((2, 1, 5, 4)))
    out = conv2d(x, tensor_new((1, 1, 1, 1), 1.0), ConvSpec(1, 1, (1, 1)))
    assert np.array_equal(out.data, x.data)


def test_conv2d_sum_of_entries():
    x = tensor_new((1, 1, 2, 2), [1, 2, 3, 4])
    out = conv2d(x, tensor_new((1, 1, 2, 2), 1.0), ConvSpec(1, 1, (2, 2)))
    assert out.data.tolist() == [[[[10.0]]]]


def test_conv2d_zero_padding_semantics():
    # 3x3 ones over a padded 1x1 input: every output sees only the centre value.
    x = tensor_new((1, 1, 1, 1), 2.0)
    out = conv2d(x, tensor_new((1, 1, 3, 3), 1.0), ConvSpec(1, 1, (3, 3), padding=(1, 1)))
    assert out.data.tolist() == [[[[2.0]]]]


def test_conv_errors():
    x = tensor_new((1, 3, 8, 8), 0.0)
    with pytest.raises(ShapeError):
        conv2d(x, tensor_new((4, 2, 3, 3), 0.0), ConvSpec(2, 4, (3, 3)))
    with pytest.raises(ShapeError):
        conv2d(x, tensor_new((4, 3, 3, 3), 0.0), ConvSpec(3, 4, (2, 2)))
    with pytest.raises(SpecError):
        conv2d(x, tensor_new((4, 3, 9, 9), 0.0), ConvSpec(3, 4, (9, 9)))
    with pytest.raises(SpecError):
        conv2d(x, tensor_new((3, 4, 3, 3), 0.0), ConvSpec(3, 4, (3, 3), transposed=True))
    with pytest.raises(ShapeError):
        conv2d(tensor_new((3, 8, 8), 0.0), tensor_new((4, 3, 3, 3), 0.0), ConvSpec(3, 4, (3, 3)))
    with pytest.raises(SpecError):
        ConvSpec(3, 4, (3, 3), bias=True)


@given(seeds)
def test_conv2d_matches_loop_oracle_bit_exact(seed):
    rng = np.random.default_rng(seed)
    x, w, s, p = oracles.random_conv_case(rng)
    assert np.array_equal(conv2d_array(x, w, s, p), oracles.conv2d_loops(x, w, s, p))


@given(seeds)
def test_conv2d_float32_matches_loop_oracle(seed):
    rng = np.random.default_rng(seed)
    x, w, s, p = oracles.random_conv_case(rng)
    x, w = x.astype(np.float32), w.astype(np.float32)
    assert np.array_equal(conv2d_array(x, w, s, p), oracles.conv2d_loops(x, w, s, p))


# conv_transpose2d

def test_conv_transpose2d_generator_first_layer_shape():
    spec = ConvSpec(1000, 512, (4, 4), transposed=True)
    out = conv_transpose2d(tensor_new((1, 1000, 1, 1), 1.0), tensor_new((1000, 512, 4, 4), 0.0), spec)
    assert out.shape == (1, 512, 4, 4)


def test_conv_transpose2d_single_scatter(rng):
    w = rng.standard_normal((1, 1, 2, 2))
    out = conv_transpose2d(Tensor([[[[3.0]]]], dtype=np.float64), Tensor(w, dtype=np.float64),
                           ConvSpec(1, 1, (2, 2), transposed=True))
    assert np.array_equal(out.data[0, 0], 3.0 * w[0, 0])


@given(seeds)
def test_conv_transpose2d_matches_loop_oracle_bit_exact(seed):
    rng = np.random.default_rng(seed)
    x, w, s, p = oracles.random_conv_case(rng)
    y = rng.standard_normal(conv2d_array(x, w, s, p).shape)
    natural = [(a - 1) * st - 2 * pd + k for a, st, pd, k in zip(y.shape[2:], s, p, w.shape[2:])]
    if min(natural) > 0:
        expected = oracles.conv_transpose2d_loops(y, w, s, p)
        assert np.array_equal(conv_transpose2d_array(y, w, s, p), expected)
    # Padded output size, as used by the conv2d input gradient.
    hw = x.shape[2:]
    assert np.array_equal(conv_transpose2d_array(y, w, s, p, out_hw=hw),
                          oracles.conv_transpose2d_loops(y, w, s, p, out_hw=hw))


@given(seeds)
def test_adjoint_identity(seed):
    rng = np.random.default_rng(seed)
    x, w, s, p = oracles.random_conv_case(rng)
    cx = conv2d_array(x, w, s, p)
    y = rng.standard_normal(cx.shape)
    lhs = float(np.sum(cx * y))
    rhs = float(np.sum(x * conv_transpose2d_array(y, w, s, p, out_hw=x.shape[2:])))
    assert abs(lhs - rhs) <= 1e-10 * abs(lhs)


def test_kernels_are_pure(rng):
    x, w, s, p = oracles.random_conv_case(rng)
    x0, w0 = x.copy(), w.copy()
    a, b = conv2d_array(x, w, s, p), conv2d_array(x, w, s, p)
    assert a.tobytes() == b.tobytes()
    assert np.array_equal(x, x0) and np.array_equal(w, w0)


# batchnorm

def _bn_inputs(c, dtype=np.float64):
    return (Tensor(np.ones(c), dtype), Tensor(np.zeros(c), dtype),
            Tensor(np.zeros(c), dtype), Tensor(np.ones(c), dtype))


@given(st.floats(-100, 100), seeds)
def test_batchnorm_constant_input_gives_beta(c, seed):
    rng = np.random.default_rng(seed)
    gamma = Tensor(rng.normal(1, 0.2, 3), np.float64)
    beta = Tensor(rng.standard_normal(3), np.float64)
    x = Tensor(np.full((2, 3, 4, 4), c), np.float64)
    out = batchnorm2d(x, gamma, beta, Tensor(np.zeros(3), np.float64), Tensor(np.ones(3), np.float64))
    assert np.array_equal(out.data, np.broadcast_to(beta.data.reshape(1, 3, 1, 1), x.shape))


def test_batchnorm_defaults_match_layer_listing():
    import inspect
    sig = inspect.signature(batchnorm2d)
    assert sig.parameters["eps"].default == 1e-5
    assert sig.parameters["momentum"].default == 0.1


@given(seeds)
def test_batchnorm_normalizes_per_channel(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(3.0, 2.5, size=(4, 3, 5, 5))
    gamma, beta, rm, rv = _bn_inputs(3)
    out = batchnorm2d(Tensor(x, np.float64), gamma, beta, rm, rv).data
    mean, var = oracles.channel_stats(out)
    assert np.all(np.abs(mean) < 1e-6)
    assert np.all(np.abs(var - 1) < 1e-4)


def test_batchnorm_running_stats_update(rng):
    x = rng.normal(1.0, 2.0, size=(3, 2, 4, 4))
    gamma, beta, rm, rv = _bn_inputs(2)
    batchnorm2d(Tensor(x, np.float64), gamma, beta, rm, rv, momentum=0.1)
    mean, var = oracles.channel_stats(x)
    m = 3 * 4 * 4
    np.testing.assert_allclose(rm.data, 0.1 * mean, rtol=1e-12)
    np.testing.assert_allclose(rv.data, 0.9 + 0.1 * var * m / (m - 1), rtol=1e-12)


def test_batchnorm_eval_uses_running_stats(rng):
    x = rng.standard_normal((2, 2, 3, 3))
    gamma, beta = Tensor([2.0, 1.0], np.float64), Tensor([0.5, -1.0], np.float64)
    rm, rv = Tensor([1.0, -2.0], np.float64), Tensor([4.0, 0.25], np.float64)
    out = batchnorm2d(Tensor(x, np.float64), gamma, beta, rm, rv, mode="eval").data
    for c in range(2):
        expected = (x[:, c] - rm.data[c]) / np.sqrt(rv.data[c] + 1e-5) * gamma.data[c] + beta.data[c]
        np.testing.assert_allclose(out[:, c], expected, rtol=1e-12)
    assert rm.data.tolist() == [1.0, -2.0]


def test_batchnorm_single_value_per_channel_is_an_error():
    gamma, beta, rm, rv = _bn_inputs(2)
    with pytest.raises(StatisticsError):
        batchnorm2d(Tensor(np.ones((1, 2, 1, 1)), np.float64), gamma, beta, rm, rv)
    # Eval mode needs no batch statistics.
    batchnorm2d(Tensor(np.ones((1, 2, 1, 1)), np.float64), gamma, beta, rm, rv, mode="eval")


# activations

def test_activation_examples():
    assert activation(Tensor([-1.0]), "leaky_relu", 0.2).data.tolist() == pytest.approx([-0.2])
    assert activation(Tensor([0.0]), "tanh").data.tolist() == [0.0]
    assert activation(Tensor([0.0]), "sigmoid").data.tolist() == [0.5]
    assert activation(Tensor([-3.0, -0.5, -1e-9]), "relu").data.tolist() == [0.0, 0.0, 0.0]


def test_activation_slope_iff_leaky():
    with pytest.raises(ValueError):
        activation(Tensor([1.0]), "relu", 0.2)
    with pytest.raises(ValueError):
        activation(Tensor([1.0]), "leaky_relu")


@given(st.lists(st.floats(-1e4, 1e4), min_size=1, max_size=20))
def test_activation_ranges_and_shape(values):
    x = Tensor(values, np.float64)
    s = activation(x, "sigmoid").data
    t = activation(x, "tanh").data
    assert s.shape == t.shape == x.shape
    assert np.all((s >= 0) & (s <= 1)) and np.all(np.isfinite(s))
    assert np.all((t >= -1) & (t <= 1))
    np.testing.assert_allclose(s, 0.5 * (1 + np.tanh(np.asarray(values) / 2)), atol=1e-15)
