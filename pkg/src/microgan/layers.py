"""Layers, weight initialization, and the generator/discriminator stacks."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autograd as ad
from .errors import ShapeError, SpecError
from .tensor import ConvSpec, Tensor, default_dtype


class Layer:
    kind = "layer"

    def forward(self, x: Tensor, mode: str = "train", tape=None) -> Tensor:
        raise NotImplementedError

    def parameters(self) -> dict[str, Tensor]:
        return {}

    def buffers(self) -> dict[str, Tensor]:
        return {}


class Conv2d(Layer):
    kind = "conv"

    def __init__(self, in_channels, out_channels, kernel_size=4, stride=1, padding=0):
        self.spec = ConvSpec(in_channels, out_channels, _pair(kernel_size), _pair(stride),
                             _pair(padding))
        self.weight = Tensor(np.zeros((out_channels, in_channels, *self.spec.kernel)))

    def forward(self, x, mode="train", tape=None):
        return ad.conv2d(x, self.weight, self.spec, tape)

    def parameters(self):
        return {"weight": self.weight}

    def __repr__(self):
        return f"Conv2d({_conv_args(self.spec)})"


class ConvTranspose2d(Layer):
    kind = "convT"

    def __init__(self, in_channels, out_channels, kernel_size=4, stride=1, padding=0):
        self.spec = ConvSpec(in_channels, out_channels, _pair(kernel_size), _pair(stride),
                             _pair(padding), transposed=True)
        self.weight = Tensor(np.zeros((in_channels, out_channels, *self.spec.kernel)))

    def forward(self, x, mode="train", tape=None):
        return ad.conv_transpose2d(x, self.weight, self.spec, tape)

    def parameters(self):
        return {"weight": self.weight}

    def __repr__(self):
        return f"ConvTranspose2d({_conv_args(self.spec)})"


class BatchNorm2d(Layer):
    kind = "batchnorm"

    def __init__(self, num_features, eps=1e-5, momentum=0.1):
        self.num_features = num_features
        self.eps = eps
        self.momentum = momentum
        self.gamma = Tensor(np.ones(num_features))
        self.beta = Tensor(np.zeros(num_features))
        self.running_mean = Tensor(np.zeros(num_features))
        self.running_var = Tensor(np.ones(num_features))

    def forward(self, x, mode="train", tape=None):
        return ad.batchnorm2d(x, self.gamma, self.beta, self.running_mean, self.running_var,
                              mode, self.eps, self.momentum, tape)

    def parameters(self):
        return {"gamma": self.gamma, "beta": self.beta}

    def buffers(self):
        return {"running_mean": self.running_mean, "running_var": self.running_var}

    def __repr__(self):
        return (f"BatchNorm2d({self.num_features}, eps={self.eps:g}, momentum={self.momentum}, "
                "affine=True, track_running_stats=True)")


class Activation(Layer):
    kind = "activation"
    _names = {"relu": "ReLU(inplace=True)", "tanh": "Tanh()", "sigmoid": "Sigmoid()"}

    def __init__(self, fn: str, slope: float | None = None):
        if (fn == "leaky_relu") != (slope is not None):
            raise ValueError("slope is given iff fn == 'leaky_relu'")
        self.fn = fn
        self.slope = slope

    def forward(self, x, mode="train", tape=None):
        return ad.activation(x, self.fn, self.slope, tape)

    def __repr__(self):
        if self.fn == "leaky_relu":
            return f"LeakyReLU(negative_slope={self.slope}, inplace=True)"
        return self._names[self.fn]


def _pair(v):
    return (v, v) if isinstance(v, int) else tuple(v)


def _conv_args(spec: ConvSpec) -> str:
    s = (f"{spec.in_channels}, {spec.out_channels}, kernel_size={spec.kernel}, "
         f"stride={spec.stride}")
    if spec.padding != (0, 0):
        s += f", padding={spec.padding}"
    return s + ", bias=False"


class Sequential:
    def __init__(self, layers=(), name="main"):
        self.layers: list[Layer] = list(layers)
        self.name = name

    def __len__(self):
        return len(self.layers)

    def __getitem__(self, i):
        return self.layers[i]

    def __iter__(self):
        return iter(self.layers)

    def forward(self, x: Tensor, mode: str = "train", tape=None) -> Tensor:
        for i, layer in enumerate(self.layers):
            try:
                x = layer.forward(x, mode, tape)
            except (ShapeError, SpecError) as exc:
                raise ShapeError(f"layer {i} ({layer!r}): {exc}") from exc
        return x

    __call__ = forward

    def named_parameters(self) -> dict[str, Tensor]:
        return {f"{self.name}.{i}.{k}": v for i, layer in enumerate(self.layers)
                for k, v in layer.parameters().items()}

    def named_buffers(self) -> dict[str, Tensor]:
        return {f"{self.name}.{i}.{k}": v for i, layer in enumerate(self.layers)
                for k, v in layer.buffers().items()}

    def state_dict(self) -> dict[str, Tensor]:
        return {**self.named_parameters(), **self.named_buffers()}

    def parameter_count(self) -> int:
        return sum(p.size for p in self.named_parameters().values())

    def __repr__(self):
        lines = [f"  ({self.name}): Sequential("]
        lines += [f"    ({i}): {layer!r}" for i, layer in enumerate(self.layers)]
        lines.append("  )")
        return "\n".join(lines)


@dataclass(frozen=True)
class InitSpec:
    conv_mean: float = 0.0
    conv_std: float = 0.02
    bn_gamma_mean: float = 1.0
    bn_gamma_std: float = 0.2
    bn_beta: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.conv_std <= 0 or self.bn_gamma_std <= 0:
            raise ValueError("normal-init std must be positive")


def init_weights(model: Sequential, init: InitSpec, rng: np.random.Generator | None = None):
    """Draw every parameter in layer order, row-major within each tensor."""
    if rng is None:
        rng = np.random.default_rng(init.seed)
    dtype = default_dtype()
    for layer in model:
        if isinstance(layer, (Conv2d, ConvTranspose2d)):
            w = rng.normal(init.conv_mean, init.conv_std, size=layer.weight.shape)
            layer.weight.data = w.astype(dtype)
        elif isinstance(layer, BatchNorm2d):
            c = layer.num_features
            layer.gamma.data = rng.normal(init.bn_gamma_mean, init.bn_gamma_std, size=c).astype(dtype)
            layer.beta.data = np.full(c, init.bn_beta, dtype=dtype)
            layer.running_mean.data = np.zeros(c, dtype=dtype)
            layer.running_var.data = np.ones(c, dtype=dtype)
    return model


@dataclass(frozen=True)
class ModelSpec:
    """Architecture knobs. The defaults are the full 64x64 model."""

    latent_dim: int = 1000
    image_size: int = 64
    width_divisor: int = 1
    channels: int = 3
    base_width: int = 64

    def __post_init__(self):
        depth = math.log2(self.image_size) - 2
        if self.image_size < 8 or depth != int(depth):
            raise ValueError(f"image_size must be a power of two >= 8, got {self.image_size}")
        if self.base_width % self.width_divisor:
            raise ValueError("width_divisor must divide base_width")

    @property
    def depth(self) -> int:
        return int(math.log2(self.image_size)) - 2

    def widths(self) -> list[int]:
        """Discriminator widths, shallow to deep; the generator uses them reversed."""
        base = self.base_width // self.width_divisor
        return [base * 2 ** i for i in range(self.depth)]

    @classmethod
    def shrunk(cls, factor=4, image_size=16, latent_dim=None):
        return cls(latent_dim=latent_dim or 1000 // factor, image_size=image_size,
                   width_divisor=factor)


def build_generator(spec: ModelSpec = ModelSpec()) -> Sequential:
    widths = spec.widths()[::-1]
    layers: list[Layer] = [ConvTranspose2d(spec.latent_dim, widths[0], 4, 1, 0),
                           BatchNorm2d(widths[0]), Activation("relu")]
    for cin, cout in zip(widths, widths[1:]):
        layers += [ConvTranspose2d(cin, cout, 4, 2, 1), BatchNorm2d(cout), Activation("relu")]
    layers += [ConvTranspose2d(widths[-1], spec.channels, 4, 2, 1), Activation("tanh")]
    return Sequential(layers)


def build_discriminator(spec: ModelSpec = ModelSpec()) -> Sequential:
    widths = spec.widths()
    layers: list[Layer] = [Conv2d(spec.channels, widths[0], 4, 2, 1), Activation("leaky_relu", 0.2)]
    for cin, cout in zip(widths, widths[1:]):
        layers += [Conv2d(cin, cout, 4, 2, 1), BatchNorm2d(cout), Activation("leaky_relu", 0.2)]
    layers += [Conv2d(widths[-1], 1, 4, 1, 0), Activation("sigmoid")]
    return Sequential(layers)


def sequential_forward(model: Sequential, input: Tensor, mode: str = "train", tape=None) -> Tensor:
    return model.forward(input, mode, tape)


def summary(model: Sequential, title: str) -> str:
    return f"{title}(\n{model!r}\n)"
