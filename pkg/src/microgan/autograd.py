"""Tape-based reverse-mode differentiation over the tensor kernels.

Differentiable ops take an optional ``tape``. When an input is tracked by the
tape (a watched parameter or the output of a recorded op), the op appends a
node holding whatever its backward rule needs. Untracked inputs are constants,
which is how one network's parameters are masked while the other trains.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import tensor as T
from .errors import DeterminismError, RankError
from .tensor import ConvSpec, Tensor

GradientSet = dict  # parameter name -> Tensor holding d(loss)/d(parameter)

LOG_FLOOR = 1e-12


@dataclass
class Node:
    kind: str
    inputs: tuple  # node ids, None for constant inputs
    shape: tuple
    saved: dict = field(default_factory=dict)
    name: str | None = None  # leaf nodes only


class Tape:
    """Records ops in execution order, which is already topological."""

    def __init__(self):
        self.nodes: list[Node] = []
        self._ids: dict[int, int] = {}
        self._keep: list[Tensor] = []  # pins tensors so id() values stay unique

    def watch(self, t: Tensor, name: str) -> Tensor:
        self._add(t, Node("leaf", (), t.shape, name=name))
        return t

    def node_id(self, t: Tensor):
        return self._ids.get(id(t))

    def tracks(self, *ts) -> bool:
        return any(id(t) in self._ids for t in ts)

    def record(self, kind: str, inputs, out: Tensor, **saved) -> Tensor:
        ids = tuple(self.node_id(t) for t in inputs)
        self._add(out, Node(kind, ids, out.shape, saved))
        return out

    def kinds(self) -> set[str]:
        return {n.kind for n in self.nodes if n.kind != "leaf"}

    def _add(self, t: Tensor, node: Node):
        self._ids[id(t)] = len(self.nodes)
        self._keep.append(t)
        self.nodes.append(node)


def detach(t: Tensor) -> Tensor:
    """Same values, but a tape will never see through it."""
    return Tensor(t.data, dtype=t.dtype)


# Ops. Each computes the forward value and records itself when needed.

def conv2d(x: Tensor, w: Tensor, spec: ConvSpec, tape: Tape | None = None) -> Tensor:
    out = T.conv2d(x, w, spec)
    if tape is not None and tape.tracks(x, w):
        tape.record("conv2d", (x, w), out, x=x.data, w=w.data, spec=spec)
    return out


def conv_transpose2d(x: Tensor, w: Tensor, spec: ConvSpec, tape: Tape | None = None) -> Tensor:
    out = T.conv_transpose2d(x, w, spec)
    if tape is not None and tape.tracks(x, w):
        tape.record("conv_transpose2d", (x, w), out, x=x.data, w=w.data, spec=spec)
    return out


def batchnorm2d(x: Tensor, gamma: Tensor, beta: Tensor, running_mean: Tensor,
                running_var: Tensor, mode: str = "train", eps: float = 1e-5,
                momentum: float = 0.1, tape: Tape | None = None) -> Tensor:
    data, (xhat, inv_std) = T.batchnorm2d_array(x.data, gamma.data, beta.data, running_mean.data,
                                                running_var.data, mode, eps, momentum)
    out = Tensor(data, dtype=x.dtype)
    if tape is not None and tape.tracks(x, gamma, beta):
        # Running statistics are buffers: never inputs of the node.
        tape.record("batchnorm2d", (x, gamma, beta), out, xhat=xhat, inv_std=inv_std,
                    gamma=gamma.data, mode=mode)
    return out


def activation(x: Tensor, kind: str, slope: float | None = None, tape: Tape | None = None) -> Tensor:
    out = T.activation(x, kind, slope)
    if tape is not None and tape.tracks(x):
        tape.record(kind, (x,), out, x=x.data, y=out.data, slope=slope)
    return out


def relu(x, tape=None):
    return activation(x, "relu", tape=tape)


def leaky_relu(x, slope=0.2, tape=None):
    return activation(x, "leaky_relu", slope, tape=tape)


def tanh(x, tape=None):
    return activation(x, "tanh", tape=tape)


def sigmoid(x, tape=None):
    return activation(x, "sigmoid", tape=tape)


def mean(x: Tensor, tape: Tape | None = None) -> Tensor:
    out = Tensor(np.mean(x.data, dtype=x.dtype), dtype=x.dtype)
    if tape is not None and tape.tracks(x):
        tape.record("mean", (x,), out, shape=x.shape)
    return out


def log(x: Tensor, tape: Tape | None = None, floor: float = LOG_FLOOR) -> Tensor:
    """Natural log of ``max(x, floor)``."""
    clamped = np.maximum(x.data, x.dtype.type(floor))
    out = Tensor(np.log(clamped), dtype=x.dtype)
    if tape is not None and tape.tracks(x):
        tape.record("log", (x,), out, clamped=clamped)
    return out


def affine(x: Tensor, scale: float, shift: float = 0.0, tape: Tape | None = None) -> Tensor:
    """``scale * x + shift`` with scalar coefficients."""
    out = Tensor(x.data * x.dtype.type(scale) + x.dtype.type(shift), dtype=x.dtype)
    if tape is not None and tape.tracks(x):
        tape.record("affine", (x,), out, scale=scale)
    return out


def add(a: Tensor, b: Tensor, tape: Tape | None = None) -> Tensor:
    if a.shape != b.shape:
        raise ValueError(f"add needs equal shapes, got {a.shape} and {b.shape}")
    out = Tensor(a.data + b.data, dtype=a.dtype)
    if tape is not None and tape.tracks(a, b):
        tape.record("add", (a, b), out)
    return out


def scale_by(x: Tensor, r: Tensor, tape: Tape | None = None) -> Tensor:
    """Elementwise product with a constant tensor ``r`` (never differentiated)."""
    out = Tensor(x.data * r.data, dtype=x.dtype)
    if tape is not None and tape.tracks(x):
        tape.record("scale_by", (x,), out, r=r.data)
    return out


# Backward rules: (node, upstream gradient) -> one gradient (or None) per input.

def _conv2d_backward(node, g):
    x, w, spec = node.saved["x"], node.saved["w"], node.saved["spec"]
    gx = gw = None
    if node.inputs[0] is not None:
        gx = T.conv_transpose2d_array(g, w, spec.stride, spec.padding, out_hw=x.shape[2:])
    if node.inputs[1] is not None:
        gw = conv2d_weight_grad(x, g, w.shape, spec.stride, spec.padding)
    return gx, gw


def _conv_transpose2d_backward(node, g):
    x, w, spec = node.saved["x"], node.saved["w"], node.saved["spec"]
    gx = gw = None
    if node.inputs[0] is not None:
        gx = T.conv2d_array(g, w, spec.stride, spec.padding)
    if node.inputs[1] is not None:
        gw = conv_transpose2d_weight_grad(x, g, w.shape, spec.stride, spec.padding)
    return gx, gw


def conv2d_weight_grad(x, g, w_shape, stride, padding):
    _, cin, h, wd = x.shape
    _, _, kh, kw = w_shape
    (sh, sw), (ph, pw) = stride, padding
    ho, wo = g.shape[2:]
    xp = np.zeros((x.shape[0], cin, h + 2 * ph, wd + 2 * pw), dtype=x.dtype)
    xp[:, :, ph:ph + h, pw:pw + wd] = x
    gw = np.empty(w_shape, dtype=g.dtype)
    for dy in range(kh):
        for dx in range(kw):
            patch = xp[:, :, dy:dy + sh * (ho - 1) + 1:sh, dx:dx + sw * (wo - 1) + 1:sw]
            gw[:, :, dy, dx] = np.tensordot(g, patch, axes=([0, 2, 3], [0, 2, 3]))
    return gw


def conv_transpose2d_weight_grad(x, g, w_shape, stride, padding):
    n, _, h, wd = x.shape
    _, cout, kh, kw = w_shape
    (sh, sw), (ph, pw) = stride, padding
    ho, wo = g.shape[2:]
    bh = max((h - 1) * sh + kh, ph + ho)
    bw = max((wd - 1) * sw + kw, pw + wo)
    gbuf = np.zeros((n, cout, bh, bw), dtype=g.dtype)
    gbuf[:, :, ph:ph + ho, pw:pw + wo] = g
    gw = np.empty(w_shape, dtype=g.dtype)
    for dy in range(kh):
        for dx in range(kw):
            patch = gbuf[:, :, dy:dy + sh * (h - 1) + 1:sh, dx:dx + sw * (wd - 1) + 1:sw]
            gw[:, :, dy, dx] = np.tensordot(x, patch, axes=([0, 2, 3], [0, 2, 3]))
    return gw


def _batchnorm2d_backward(node, g):
    xhat, inv_std, gamma = node.saved["xhat"], node.saved["inv_std"], node.saved["gamma"]
    c = gamma.shape[0]
    axes = (0, 2, 3)
    ggamma = np.sum(g * xhat, axis=axes)
    gbeta = np.sum(g, axis=axes)
    gx = None
    if node.inputs[0] is not None:
        scale = (gamma * inv_std).reshape(1, c, 1, 1)
        if node.saved["mode"] == "train":
            m = g.shape[0] * g.shape[2] * g.shape[3]
            gx = scale * (g - gbeta.reshape(1, c, 1, 1) / m - xhat * ggamma.reshape(1, c, 1, 1) / m)
        else:
            gx = scale * g
    return gx, ggamma, gbeta


def _relu_backward(node, g):
    return (np.where(node.saved["x"] > 0, g, 0).astype(g.dtype, copy=False),)


def _leaky_relu_backward(node, g):
    slope = g.dtype.type(node.saved["slope"])
    return (np.where(node.saved["x"] >= 0, g, g * slope),)


def _tanh_backward(node, g):
    y = node.saved["y"]
    return (g * (1 - y * y),)


def _sigmoid_backward(node, g):
    y = node.saved["y"]
    return (g * y * (1 - y),)


def _mean_backward(node, g):
    shape = node.saved["shape"]
    n = int(np.prod(shape))
    return (np.full(shape, g.reshape(-1)[0] / n, dtype=g.dtype),)


def _log_backward(node, g):
    return (g / node.saved["clamped"],)


def _affine_backward(node, g):
    return (g * g.dtype.type(node.saved["scale"]),)


def _add_backward(node, g):
    return g, g


def _scale_by_backward(node, g):
    return (g * node.saved["r"],)


BACKWARD_RULES: dict[str, Callable] = {
    "conv2d": _conv2d_backward,
    "conv_transpose2d": _conv_transpose2d_backward,
    "batchnorm2d": _batchnorm2d_backward,
    "relu": _relu_backward,
    "leaky_relu": _leaky_relu_backward,
    "tanh": _tanh_backward,
    "sigmoid": _sigmoid_backward,
    "mean": _mean_backward,
    "log": _log_backward,
    "affine": _affine_backward,
    "add": _add_backward,
    "scale_by": _scale_by_backward,
}


def backward(tape: Tape, loss: Tensor, wrt=None) -> GradientSet:
    """Gradients of the scalar ``loss`` for every watched leaf on ``tape``.

    ``wrt`` optionally restricts the result to the named leaves. Leaves the
    loss never reached get zero gradients.
    """
    if loss.size != 1:
        raise RankError(f"loss must be a scalar, got shape {loss.shape}")
    loss_id = tape.node_id(loss)
    grads: dict[int, np.ndarray] = {}
    if loss_id is not None:
        grads[loss_id] = np.ones(loss.shape, dtype=loss.dtype)
        for i in range(loss_id, -1, -1):
            node = tape.nodes[i]
            g = grads.pop(i, None) if node.kind != "leaf" else None
            if g is None:
                continue
            for src, gi in zip(node.inputs, BACKWARD_RULES[node.kind](node, g)):
                if src is None or gi is None:
                    continue
                if src in grads:
                    grads[src] = grads[src] + gi
                else:
                    grads[src] = gi
    out = {}
    for i, node in enumerate(tape.nodes):
        if node.kind != "leaf" or (wrt is not None and node.name not in wrt):
            continue
        g = grads.get(i)
        value = tape._keep[i]
        if g is None:
            g = np.zeros(node.shape, dtype=value.dtype)
        out[node.name] = Tensor(g.reshape(node.shape), dtype=value.dtype)
    return out


@dataclass
class CheckResult:
    name: str
    max_rel_error: float
    coords: int
    skipped: int = 0  # coordinates resampled because a +-h step crossed a kink


_KINKED = {"relu": lambda x: x > 0, "leaky_relu": lambda x: x >= 0}


def _eval(forward, params, watch: bool):
    """Loss value and, when ``watch``, the on/off pattern of every piecewise-linear unit."""
    if not watch:
        return float(forward(params, None).item()), None
    tape = Tape()
    for name, p in params.items():
        tape.watch(p, name)
    value = float(forward(params, tape).item())
    pattern = [_KINKED[n.kind](n.saved["x"]) for n in tape.nodes if n.kind in _KINKED]
    return value, pattern


def _same(a, b) -> bool:
    return len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))


def grad_check(forward, params: dict, h: float = 1e-5, tol: float = 1e-4,
               max_coords: int = 64, seed: int = 0) -> dict[str, CheckResult]:
    """Compare ``backward`` against central differences.

    ``forward(params, tape)`` must return a scalar Tensor and record onto
    ``tape`` when one is given. Parameters are perturbed in place and restored.
    At most ``max_coords`` coordinates per parameter are checked, drawn with a
    fixed seed. A coordinate whose +-h evaluations flip any ReLU/LeakyReLU unit
    relative to the base point is not differentiable on that interval, so it is
    replaced by the next candidate.

    The error reported per parameter is ``max|analytic - numeric|`` over the
    checked coordinates, divided by the largest magnitude of either gradient
    there. ``tol`` is not applied here; callers compare against it.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    tape = Tape()
    for name, p in params.items():
        tape.watch(p, name)
    loss = forward(params, tape)
    analytic = backward(tape, loss, wrt=set(params))
    kinked = any(n.kind in _KINKED for n in tape.nodes)

    base, base_pattern = _eval(forward, params, kinked)
    if base != _eval(forward, params, False)[0] or base != loss.item():
        raise DeterminismError("forward gave different values for identical inputs")

    rng = np.random.default_rng(seed)
    report = {}
    for name, p in params.items():
        flat = p.data.reshape(-1)
        candidates = rng.permutation(flat.size) if flat.size > max_coords else np.arange(flat.size)
        a, num, skipped = [], [], 0
        for idx in candidates:
            if len(num) == max_coords:
                break
            orig = flat[idx]
            flat[idx] = orig + h
            fp, pat_p = _eval(forward, params, kinked)
            flat[idx] = orig - h
            fm, pat_m = _eval(forward, params, kinked)
            flat[idx] = orig
            if kinked and not (_same(pat_p, base_pattern) and _same(pat_m, base_pattern)):
                skipped += 1
                continue
            num.append((fp - fm) / (2 * h))
            a.append(float(analytic[name].data.reshape(-1)[idx]))
        a, num = np.array(a), np.array(num)
        scale = max(np.max(np.abs(a), initial=0.0), np.max(np.abs(num), initial=0.0))
        err = float(np.max(np.abs(a - num)) / scale) if scale > 0 else 0.0
        report[name] = CheckResult(name, err, len(num), skipped)
    return report
