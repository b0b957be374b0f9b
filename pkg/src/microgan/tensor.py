"""Strided tensors and the forward numerical kernels.

Every kernel here is a pure function of its inputs. Convolution sums are
accumulated in a fixed order (input channel, then kernel row, then kernel
column) so results are bit-reproducible and comparable against a naive loop.
"""
from __future__ import annotations

import contextlib
import math
from dataclasses import dataclass

import numpy as np

from .errors import ShapeError, SizeError, SpecError, StatisticsError

_DTYPES = {"float32": np.float32, "float64": np.float64}
_default_dtype = np.dtype(np.float32)


def default_dtype() -> np.dtype:
    return _default_dtype


def set_default_dtype(name) -> None:
    """Select the global compute dtype: "float32" (training) or "float64" (gradcheck)."""
    global _default_dtype
    dtype = np.dtype(_DTYPES.get(name, name))
    if dtype not in (np.float32, np.float64):
        raise ValueError(f"unsupported dtype {name!r}")
    _default_dtype = dtype


@contextlib.contextmanager
def precision(name):
    prev = _default_dtype
    set_default_dtype(name)
    try:
        yield
    finally:
        set_default_dtype(prev)


class Tensor:
    """N-dimensional float array with row-major default strides."""

    __slots__ = ("data", "__weakref__")

    def __init__(self, data, dtype=None):
        arr = np.asarray(data, dtype=dtype or _default_dtype)
        if arr.ndim == 0:
            arr = arr.reshape(1)
        self.data = arr

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def strides(self) -> tuple[int, ...]:
        """Strides in elements, not bytes."""
        return tuple(s // self.data.itemsize for s in self.data.strides)

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise SizeError(f"item() needs a single element, tensor has {self.data.size}")
        return float(self.data.reshape(-1)[0])

    def copy(self) -> "Tensor":
        return Tensor(self.data.copy(), dtype=self.data.dtype)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype.name})"


def tensor_new(shape, fill=0.0, dtype=None) -> Tensor:
    """Allocate a tensor of ``shape`` from a scalar fill or a flat buffer."""
    shape = tuple(int(s) for s in shape)
    if not shape or any(s < 1 for s in shape):
        raise SizeError(f"shape must be nonempty with extents >= 1, got {shape}")
    dtype = dtype or _default_dtype
    if np.isscalar(fill):
        return Tensor(np.full(shape, fill, dtype=dtype))
    buf = np.asarray(fill, dtype=dtype).reshape(-1)
    if buf.size != math.prod(shape):
        raise SizeError(f"buffer has {buf.size} elements, shape {shape} needs {math.prod(shape)}")
    return Tensor(buf.reshape(shape).copy())


@dataclass(frozen=True)
class ConvSpec:
    in_channels: int
    out_channels: int
    kernel: tuple[int, int] = (4, 4)
    stride: tuple[int, int] = (1, 1)
    padding: tuple[int, int] = (0, 0)
    transposed: bool = False
    bias: bool = False

    def __post_init__(self):
        if self.in_channels < 1 or self.out_channels < 1:
            raise SpecError("channel counts must be positive")
        if min(self.kernel) < 1 or min(self.stride) < 1 or min(self.padding) < 0:
            raise SpecError(f"bad kernel/stride/padding in {self}")
        if self.bias:
            raise SpecError("bias terms are not supported")

    def output_hw(self, h: int, w: int) -> tuple[int, int]:
        (kh, kw), (sh, sw), (ph, pw) = self.kernel, self.stride, self.padding
        if self.transposed:
            out = ((h - 1) * sh - 2 * ph + kh, (w - 1) * sw - 2 * pw + kw)
        else:
            out = ((h + 2 * ph - kh) // sh + 1, (w + 2 * pw - kw) // sw + 1)
        if min(out) < 1:
            raise SpecError(f"non-positive output extent {out} for input {(h, w)} under {self}")
        return out


def _check_conv(x: np.ndarray, w: np.ndarray, spec: ConvSpec, transposed: bool):
    if spec.transposed != transposed:
        kind = "conv_transpose2d" if transposed else "conv2d"
        raise SpecError(f"{kind} called with transposed={spec.transposed}")
    if x.ndim != 4:
        raise ShapeError(f"expected N x C x H x W input, got shape {x.shape}")
    if transposed:
        expected = (spec.in_channels, spec.out_channels, *spec.kernel)
    else:
        expected = (spec.out_channels, spec.in_channels, *spec.kernel)
    if w.shape != expected:
        raise ShapeError(f"weight shape {w.shape} does not match {expected}")
    if x.shape[1] != spec.in_channels:
        raise ShapeError(f"input has {x.shape[1]} channels, layer expects {spec.in_channels}")


def conv2d_array(x: np.ndarray, w: np.ndarray, stride, padding) -> np.ndarray:
    """Direct zero-padded convolution on raw arrays. ``w`` is Cout x Cin x kh x kw."""
    n, cin, h, wd = x.shape
    cout, _, kh, kw = w.shape
    (sh, sw), (ph, pw) = stride, padding
    ho = (h + 2 * ph - kh) // sh + 1
    wo = (wd + 2 * pw - kw) // sw + 1
    dtype = np.result_type(x, w)
    # Work channel-last so every step touches contiguous (N, Cout) blocks.
    xp = np.zeros((cin, h + 2 * ph, wd + 2 * pw, n), dtype=dtype)
    xp[:, ph:ph + h, pw:pw + wd] = x.transpose(1, 2, 3, 0)
    wt = np.ascontiguousarray(w.transpose(1, 2, 3, 0), dtype=dtype)
    out = np.zeros((ho, wo, n, cout), dtype=dtype)
    tmp = np.empty_like(out)
    for ci in range(cin):
        for dy in range(kh):
            for dx in range(kw):
                patch = xp[ci, dy:dy + sh * (ho - 1) + 1:sh, dx:dx + sw * (wo - 1) + 1:sw, :, None]
                np.multiply(patch, wt[ci, dy, dx], out=tmp)
                out += tmp
    return np.ascontiguousarray(out.transpose(2, 3, 0, 1))


def conv_transpose2d_array(x: np.ndarray, w: np.ndarray, stride, padding, out_hw=None) -> np.ndarray:
    """Scatter-add transposed convolution on raw arrays. ``w`` is Cin x Cout x kh x kw.

    ``out_hw`` may request a larger output than the minimal (H-1)*s - 2p + k;
    the extra rows/columns receive whatever taps reach them.
    """
    n, cin, h, wd = x.shape
    _, cout, kh, kw = w.shape
    (sh, sw), (ph, pw) = stride, padding
    if out_hw is None:
        out_hw = ((h - 1) * sh - 2 * ph + kh, (wd - 1) * sw - 2 * pw + kw)
    ho, wo = out_hw
    dtype = np.result_type(x, w)
    bh = max((h - 1) * sh + kh, ph + ho)
    bw = max((wd - 1) * sw + kw, pw + wo)
    xt = np.ascontiguousarray(x.transpose(1, 2, 3, 0), dtype=dtype)
    wt = np.ascontiguousarray(w.transpose(0, 2, 3, 1), dtype=dtype)
    buf = np.zeros((bh, bw, n, cout), dtype=dtype)
    if h == 1 and wd == 1:
        # Taps of one input channel never overlap here: add them all at once.
        tmp = np.empty((kh, kw, n, cout), dtype=dtype)
        view = buf[:kh, :kw]
        for ci in range(cin):
            np.multiply(xt[ci, 0, 0, :, None], wt[ci, :, :, None, :], out=tmp)
            view += tmp
    else:
        tmp = np.empty((h, wd, n, cout), dtype=dtype)
        for ci in range(cin):
            xc = xt[ci, :, :, :, None]
            for dy in range(kh):
                for dx in range(kw):
                    np.multiply(xc, wt[ci, dy, dx], out=tmp)
                    buf[dy:dy + sh * (h - 1) + 1:sh, dx:dx + sw * (wd - 1) + 1:sw] += tmp
    return np.ascontiguousarray(buf[ph:ph + ho, pw:pw + wo].transpose(2, 3, 0, 1))


def conv2d(input: Tensor, weight: Tensor, spec: ConvSpec) -> Tensor:
    _check_conv(input.data, weight.data, spec, transposed=False)
    spec.output_hw(*input.shape[2:])
    return Tensor(conv2d_array(input.data, weight.data, spec.stride, spec.padding), dtype=input.dtype)


def conv_transpose2d(input: Tensor, weight: Tensor, spec: ConvSpec) -> Tensor:
    _check_conv(input.data, weight.data, spec, transposed=True)
    spec.output_hw(*input.shape[2:])
    return Tensor(conv_transpose2d_array(input.data, weight.data, spec.stride, spec.padding),
                  dtype=input.dtype)


def batchnorm2d(input: Tensor, gamma: Tensor, beta: Tensor, running_mean: Tensor,
                running_var: Tensor, mode: str = "train", eps: float = 1e-5,
                momentum: float = 0.1) -> Tensor:
    """Per-channel batch normalization.

    In train mode the running statistics are updated in place (the unbiased
    batch variance feeds ``running_var``); in eval mode they normalize.
    """
    out, _ = batchnorm2d_array(input.data, gamma.data, beta.data, running_mean.data,
                               running_var.data, mode, eps, momentum)
    return Tensor(out, dtype=input.dtype)


def batchnorm2d_array(x, gamma, beta, running_mean, running_var, mode, eps, momentum):
    """Returns ``(out, (xhat, inv_std))``; the second item is what backward needs."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    if x.ndim != 4 or x.shape[1] != gamma.shape[0]:
        raise ShapeError(f"batchnorm over {gamma.shape[0]} channels got input {x.shape}")
    c = x.shape[1]
    if mode == "train":
        m = x.shape[0] * x.shape[2] * x.shape[3]
        if m < 2:
            raise StatisticsError("train-mode batchnorm needs at least 2 values per channel")
        mean = x.mean(axis=(0, 2, 3))
        var = x.var(axis=(0, 2, 3))
        running_mean *= 1 - momentum
        running_mean += momentum * mean
        running_var *= 1 - momentum
        running_var += momentum * var * (m / (m - 1))
    elif mode == "eval":
        mean, var = running_mean, running_var
    else:
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean.reshape(1, c, 1, 1)) * inv_std.reshape(1, c, 1, 1)
    out = xhat * gamma.reshape(1, c, 1, 1) + beta.reshape(1, c, 1, 1)
    return out.astype(x.dtype, copy=False), (xhat, inv_std)


ACTIVATIONS = ("relu", "leaky_relu", "tanh", "sigmoid")


def activation_array(x: np.ndarray, kind: str, slope=None) -> np.ndarray:
    if (kind == "leaky_relu") != (slope is not None):
        raise ValueError("slope is given iff kind == 'leaky_relu'")
    if kind == "relu":
        return np.maximum(x, 0).astype(x.dtype, copy=False)
    if kind == "leaky_relu":
        return np.where(x >= 0, x, x * x.dtype.type(slope))
    if kind == "tanh":
        return np.tanh(x)
    if kind == "sigmoid":
        # Split by sign so exp never overflows.
        out = np.empty_like(x)
        pos = x >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        out[~pos] = ex / (1.0 + ex)
        return out
    raise ValueError(f"unknown activation {kind!r}")


def activation(input: Tensor, kind: str, slope: float | None = None) -> Tensor:
    return Tensor(activation_array(input.data, kind, slope), dtype=input.dtype)
