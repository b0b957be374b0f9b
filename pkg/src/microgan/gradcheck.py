"""Finite-difference checks over every backward rule and both shrunk models.

Everything runs in float64. Each check returns the per-parameter report from
:func:`microgan.autograd.grad_check` plus the set of op kinds its tape used.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autograd as ad
from .gan.losses import discriminator_loss, generator_loss
from .layers import InitSpec, ModelSpec, build_discriminator, build_generator, init_weights
from .tensor import ConvSpec, Tensor, precision


@dataclass
class CheckOutcome:
    label: str
    results: dict  # param name -> CheckResult
    kinds: set

    @property
    def worst(self):
        return max(self.results.values(), key=lambda r: r.max_rel_error)


def _weighted_sum(y: Tensor, r: Tensor, tape):
    return ad.mean(ad.scale_by(y, r, tape), tape)


def _rand(rng, *shape, low=None, high=None):
    if low is not None:
        return Tensor(rng.uniform(low, high, size=shape))
    return Tensor(rng.standard_normal(shape))


def op_checks(rng: np.random.Generator):
    """(label, params, forward) for each single-op rule."""
    checks = []

    x = _rand(rng, 2, 3, 5, 5)
    w = _rand(rng, 4, 3, 3, 3)
    spec = ConvSpec(3, 4, (3, 3), (2, 2), (1, 1))
    r = _rand(rng, 2, 4, 3, 3)
    checks.append(("conv2d", {"x": x, "w": w},
                   lambda p, t: _weighted_sum(ad.conv2d(p["x"], p["w"], spec, t), r, t)))

    x = _rand(rng, 2, 3, 3, 3)
    w = _rand(rng, 3, 2, 4, 4)
    tspec = ConvSpec(3, 2, (4, 4), (2, 2), (1, 1), transposed=True)
    r2 = _rand(rng, 2, 2, 6, 6)
    checks.append(("conv_transpose2d", {"x": x, "w": w},
                   lambda p, t: _weighted_sum(ad.conv_transpose2d(p["x"], p["w"], tspec, t), r2, t)))

    x = _rand(rng, 3, 2, 3, 3)
    gamma = _rand(rng, 2, low=0.5, high=1.5)
    beta = _rand(rng, 2)
    r3 = _rand(rng, 3, 2, 3, 3)
    rm, rv = Tensor(np.zeros(2)), Tensor(np.ones(2))
    checks.append(("batchnorm2d", {"x": x, "gamma": gamma, "beta": beta},
                   lambda p, t: _weighted_sum(
                       ad.batchnorm2d(p["x"], p["gamma"], p["beta"], rm, rv, "train", tape=t), r3, t)))

    for kind, slope in (("relu", None), ("leaky_relu", 0.2), ("tanh", None), ("sigmoid", None)):
        # Keep samples away from the kinks so central differences are valid.
        v = rng.uniform(0.1, 2.0, size=(2, 3, 2, 2)) * rng.choice([-1.0, 1.0], size=(2, 3, 2, 2))
        rk = _rand(rng, 2, 3, 2, 2)
        checks.append((kind, {"x": Tensor(v)},
                       lambda p, t, kind=kind, slope=slope, rk=rk:
                       _weighted_sum(ad.activation(p["x"], kind, slope, t), rk, t)))

    xm = _rand(rng, 3, 4)
    checks.append(("mean", {"x": xm}, lambda p, t: ad.mean(p["x"], t)))
    xl = _rand(rng, 7, low=0.05, high=1.0)
    checks.append(("log", {"x": xl}, lambda p, t: ad.mean(ad.log(p["x"], t), t)))
    xa = _rand(rng, 5)
    checks.append(("affine", {"x": xa}, lambda p, t: ad.mean(ad.affine(p["x"], -1.5, 0.25, t), t)))
    a, b = _rand(rng, 4), _rand(rng, 4)
    checks.append(("add", {"a": a, "b": b},
                   lambda p, t: ad.mean(ad.log(ad.affine(ad.add(p["a"], p["b"], t), 0.1, 2.0, t), t), t)))
    return checks


def model_checks(scale: int, seed: int, batch: int = 4):
    """Loss-level checks through the shrunk generator and discriminator."""
    spec = ModelSpec.shrunk(factor=scale, image_size=16, latent_dim=max(1000 // scale, 1))
    G = init_weights(build_generator(spec), InitSpec(seed=seed))
    D = init_weights(build_discriminator(spec), InitSpec(seed=seed + 1))
    rng = np.random.default_rng(seed + 2)
    z = Tensor(rng.standard_normal((batch, spec.latent_dim, 1, 1)))
    real = Tensor(rng.uniform(-1, 1, size=(batch, 3, 16, 16)))

    def g_forward(params, tape):
        return generator_loss(D.forward(G.forward(z, "train", tape), "train", tape), "minimax", tape)

    fake = G.forward(z, "train")

    def d_forward(params, tape):
        return discriminator_loss(D.forward(real, "train", tape), D.forward(fake, "train", tape), tape)

    return [("generator", {f"G.{k}": v for k, v in G.named_parameters().items()}, g_forward),
            ("discriminator", {f"D.{k}": v for k, v in D.named_parameters().items()}, d_forward)]


def _kinds(params, forward):
    tape = ad.Tape()
    for k, v in params.items():
        tape.watch(v, k)
    forward(params, tape)
    return tape.kinds()


def run_all(scale: int = 16, h: float = 1e-5, seed: int = 0, max_coords: int = 64):
    with precision("float64"):
        rng = np.random.default_rng(seed)
        checks = op_checks(rng) + model_checks(scale, seed)
        outcomes = []
        for label, params, forward in checks:
            kinds = _kinds(params, forward)
            results = ad.grad_check(forward, params, h=h, max_coords=max_coords, seed=seed)
            outcomes.append(CheckOutcome(label, results, kinds))
    return outcomes


def covered_rules(outcomes) -> set:
    return set().union(*(o.kinds for o in outcomes)) & set(ad.BACKWARD_RULES)
