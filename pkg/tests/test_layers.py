import numpy as np
import pytest
from hypothesis import given, strategies as st

from microgan.errors import ShapeError
from microgan.layers import (Activation, BatchNorm2d, Conv2d, ConvTranspose2d, InitSpec, ModelSpec,
                             Sequential, build_discriminator, build_generator, init_weights,
                             sequential_forward, summary)
from microgan.tensor import Tensor

import oracles

# (kind, in, out, stride, padding) per conv; "bn", "relu", "lrelu", "tanh", "sigmoid" otherwise.
GENERATOR_STACK = [
    ("convT", 1000, 512, 1, 0), "bn512", "relu",
    ("convT", 512, 256, 2, 1), "bn256", "relu",
    ("convT", 256, 128, 2, 1), "bn128", "relu",
    ("convT", 128, 64, 2, 1), "bn64", "relu",
    ("convT", 64, 3, 2, 1), "tanh",
]
DISCRIMINATOR_STACK = [
    ("conv", 3, 64, 2, 1), "lrelu",
    ("conv", 64, 128, 2, 1), "bn128", "lrelu",
    ("conv", 128, 256, 2, 1), "bn256", "lrelu",
    ("conv", 256, 512, 2, 1), "bn512", "lrelu",
    ("conv", 512, 1, 1, 0), "sigmoid",
]


def _describe(layer):
    if isinstance(layer, (Conv2d, ConvTranspose2d)):
        s = layer.spec
        assert s.kernel == (4, 4) and s.bias is False
        assert s.stride[0] == s.stride[1] and s.padding[0] == s.padding[1]
        kind = "convT" if isinstance(layer, ConvTranspose2d) else "conv"
        assert s.transposed == (kind == "convT")
        return (kind, s.in_channels, s.out_channels, s.stride[0], s.padding[0])
    if isinstance(layer, BatchNorm2d):
        assert (layer.eps, layer.momentum) == (1e-5, 0.1)
        return f"bn{layer.num_features}"
    assert isinstance(layer, Activation)
    if layer.fn == "leaky_relu":
        assert layer.slope == 0.2
        return "lrelu"
    return layer.fn


def test_generator_stack_entry_for_entry():
    assert [_describe(layer) for layer in build_generator()] == GENERATOR_STACK


def test_discriminator_stack_entry_for_entry():
    assert [_describe(layer) for layer in build_discriminator()] == DISCRIMINATOR_STACK


def test_generator_printout():
    text = summary(build_generator(), "Generator")
    lines = text.splitlines()
    assert lines[:2] == ["Generator(", "  (main): Sequential("]
    assert lines[2] == "    (0): ConvTranspose2d(1000, 512, kernel_size=(4, 4), stride=(1, 1), bias=False)"
    assert lines[3] == ("    (1): BatchNorm2d(512, eps=1e-05, momentum=0.1, affine=True, "
                        "track_running_stats=True)")
    assert lines[4] == "    (2): ReLU(inplace=True)"
    assert lines[5] == ("    (3): ConvTranspose2d(512, 256, kernel_size=(4, 4), stride=(2, 2), "
                        "padding=(1, 1), bias=False)")
    assert lines[-3] == "    (13): Tanh()"
    assert len(lines) == 14 + 4


def test_discriminator_printout():
    lines = summary(build_discriminator(), "Discriminator").splitlines()
    assert lines[3] == "    (1): LeakyReLU(negative_slope=0.2, inplace=True)"
    assert lines[13] == "    (11): Conv2d(512, 1, kernel_size=(4, 4), stride=(1, 1), bias=False)"
    assert lines[14] == "    (12): Sigmoid()"


def test_no_batchnorm_on_generator_output_or_after_first_discriminator_conv():
    G, D = build_generator(), build_discriminator()
    assert not isinstance(G[-2], BatchNorm2d) and isinstance(G[-2], ConvTranspose2d)
    assert isinstance(D[1], Activation) and D[1].fn == "leaky_relu"


def test_no_dense_or_pooling_layers():
    allowed = (Conv2d, ConvTranspose2d, BatchNorm2d, Activation)
    for model in (build_generator(), build_discriminator()):
        assert all(isinstance(layer, allowed) for layer in model)


def test_parameter_counts_match_analytic_sum():
    g_convs = [(1000, 512), (512, 256), (256, 128), (128, 64), (64, 3)]
    d_convs = [(3, 64), (64, 128), (128, 256), (256, 512), (512, 1)]
    g_expected = oracles.conv_param_count(g_convs) + 2 * (512 + 256 + 128 + 64)
    d_expected = oracles.conv_param_count(d_convs) + 2 * (128 + 256 + 512)
    assert build_generator().parameter_count() == g_expected == 10_949_504
    assert build_discriminator().parameter_count() == d_expected == 2_765_568


def test_conv_layers_carry_no_bias_and_bn_has_four_vectors():
    for model in (build_generator(), build_discriminator()):
        for layer in model:
            if isinstance(layer, (Conv2d, ConvTranspose2d)):
                assert set(layer.parameters()) == {"weight"}
            if isinstance(layer, BatchNorm2d):
                c = layer.num_features
                tensors = {**layer.parameters(), **layer.buffers()}
                assert set(tensors) == {"gamma", "beta", "running_mean", "running_var"}
                assert all(t.shape == (c,) for t in tensors.values())


def test_init_statistics_on_the_large_kernel():
    G = init_weights(build_generator(), InitSpec(seed=3))
    w = G[0].weight.data.astype(np.float64)
    assert w.size == 8_192_000
    assert abs(w.mean()) < 0.01 * 0.02
    assert abs(w.std() - 0.02) < 0.01 * 0.02
    gammas = np.concatenate([layer.gamma.data for layer in G if isinstance(layer, BatchNorm2d)])
    assert abs(gammas.mean() - 1.0) < 0.05 and abs(gammas.std() - 0.2) < 0.02


def test_init_constants_and_determinism():
    spec = ModelSpec.shrunk(4)
    a = init_weights(build_discriminator(spec), InitSpec(seed=11))
    b = init_weights(build_discriminator(spec), InitSpec(seed=11))
    c = init_weights(build_discriminator(spec), InitSpec(seed=12))
    for name, t in a.state_dict().items():
        assert t.data.tobytes() == b.state_dict()[name].data.tobytes()
    assert any(not np.array_equal(t.data, c.state_dict()[n].data) for n, t in a.named_parameters().items())
    for layer in a:
        if isinstance(layer, BatchNorm2d):
            assert not layer.beta.data.any()
            assert np.all(layer.running_var.data == 1) and not layer.running_mean.data.any()


def test_init_draw_order_is_layer_then_row_major():
    spec = ModelSpec.shrunk(8, image_size=8)
    D = init_weights(build_discriminator(spec), InitSpec(seed=5))
    rng = np.random.default_rng(5)
    for layer in D:
        if isinstance(layer, Conv2d):
            expected = rng.normal(0.0, 0.02, size=layer.weight.shape).astype(np.float32)
            assert np.array_equal(layer.weight.data, expected)
        elif isinstance(layer, BatchNorm2d):
            expected = rng.normal(1.0, 0.2, size=layer.num_features).astype(np.float32)
            assert np.array_equal(layer.gamma.data, expected)


def test_literal_init_reading_is_selectable():
    G = init_weights(build_generator(ModelSpec.shrunk(8, image_size=8)),
                     InitSpec(conv_std=0.2, bn_gamma_mean=0.0, bn_gamma_std=0.2, seed=1))
    assert 0.15 < G[0].weight.data.std() < 0.25
    with pytest.raises(ValueError):
        InitSpec(conv_std=0.0)


def test_full_size_shape_chains():
    spec = ModelSpec()
    G = init_weights(build_generator(spec), InitSpec(seed=0))
    D = init_weights(build_discriminator(spec), InitSpec(seed=1))
    z = Tensor(np.random.default_rng(0).standard_normal((2, 1000, 1, 1)))
    x = sequential_forward(G, z, "train")
    assert x.shape == (2, 3, 64, 64)
    y = sequential_forward(D, x, "eval")
    assert y.shape == (2, 1, 1, 1)
    assert np.all((y.data > 0) & (y.data < 1))


def test_empty_model_is_identity():
    x = Tensor([[1.0, 2.0]])
    assert sequential_forward(Sequential([]), x) is x


def test_shape_error_names_layer_index():
    D = build_discriminator(ModelSpec.shrunk(4))
    with pytest.raises(ShapeError, match="layer 0"):
        D.forward(Tensor(np.zeros((1, 1, 16, 16))))
    G = build_generator(ModelSpec.shrunk(4))
    with pytest.raises(ShapeError, match="layer 0"):
        G.forward(Tensor(np.zeros((1, 7, 1, 1))))


def test_shrunk_models_keep_the_topology():
    spec = ModelSpec.shrunk(4)
    assert spec.latent_dim == 250
    G, D = build_generator(spec), build_discriminator(spec)
    assert [type(layer) for layer in G][-2:] == [ConvTranspose2d, Activation]
    assert G[-1].fn == "tanh" and D[-1].fn == "sigmoid"
    init_weights(G, InitSpec(seed=0))
    init_weights(D, InitSpec(seed=1))
    x = G.forward(Tensor(np.zeros((3, 250, 1, 1))))
    assert x.shape == (3, 3, 16, 16)
    assert D.forward(x).shape == (3, 1, 1, 1)


def test_bad_model_specs():
    with pytest.raises(ValueError):
        ModelSpec(image_size=48)
    with pytest.raises(ValueError):
        ModelSpec(width_divisor=5)


def test_builders_are_deterministic_constructors():
    assert repr(build_generator()) == repr(build_generator())
    assert list(build_discriminator().state_dict()) == list(build_discriminator().state_dict())


_shrunk = ModelSpec.shrunk(8, image_size=8)
_G = init_weights(build_generator(_shrunk), InitSpec(seed=2))
_D = init_weights(build_discriminator(_shrunk), InitSpec(seed=3))


@given(st.floats(-1e6, 1e6), st.integers(0, 2 ** 32 - 1))
def test_output_ranges_for_any_finite_input(scale, seed):
    rng = np.random.default_rng(seed)
    z = Tensor(scale * rng.standard_normal((2, _shrunk.latent_dim, 1, 1)))
    for mode in ("train", "eval"):
        x = _G.forward(z, mode)
        assert np.all((x.data >= -1) & (x.data <= 1))
        y = _D.forward(Tensor(scale * rng.standard_normal((2, 3, 8, 8))), mode)
        assert np.all((y.data >= 0) & (y.data <= 1))


def test_eval_forward_keeps_running_stats():
    before = {k: v.data.copy() for k, v in _G.named_buffers().items()}
    _G.forward(Tensor(np.ones((2, _shrunk.latent_dim, 1, 1))), "eval")
    assert all(np.array_equal(before[k], v.data) for k, v in _G.named_buffers().items())
