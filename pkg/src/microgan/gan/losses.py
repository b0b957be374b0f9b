"""The minimax objective, its per-player losses, and discriminator accuracy."""
from __future__ import annotations

import numpy as np

from .. import autograd as ad
from ..errors import DomainError, NonFiniteError
from ..tensor import Tensor


def _check_probs(*ts):
    for t in ts:
        d = t.data
        if not np.all(np.isfinite(d)):
            raise NonFiniteError("discriminator produced non-finite probabilities")
        if not (np.all(d >= 0) and np.all(d <= 1)):
            raise DomainError("probabilities must lie in [0, 1]")


def gan_value(d_real: Tensor, d_fake: Tensor, tape=None) -> Tensor:
    """Empirical ``E[log D(x)] + E[log(1 - D(G(z)))]`` with logs floored at 1e-12."""
    _check_probs(d_real, d_fake)
    real_term = ad.mean(ad.log(d_real, tape), tape)
    fake_term = ad.mean(ad.log(ad.affine(d_fake, -1.0, 1.0, tape), tape), tape)
    return ad.add(real_term, fake_term, tape)


def discriminator_loss(d_real: Tensor, d_fake: Tensor, tape=None) -> Tensor:
    return ad.affine(gan_value(d_real, d_fake, tape), -1.0, 0.0, tape)


def generator_loss(d_fake: Tensor, variant: str = "minimax", tape=None) -> Tensor:
    """``minimax``: mean log(1 - D(G(z))). ``non_saturating``: -mean log D(G(z))."""
    _check_probs(d_fake)
    if variant == "minimax":
        return ad.mean(ad.log(ad.affine(d_fake, -1.0, 1.0, tape), tape), tape)
    if variant == "non_saturating":
        return ad.affine(ad.mean(ad.log(d_fake, tape), tape), -1.0, 0.0, tape)
    raise ValueError(f"unknown generator loss variant {variant!r}")


def d_accuracy(d_real, d_fake, threshold: float = 0.5) -> tuple[float, float, float]:
    """Real counted correct above the threshold, fake at or below it."""
    r = np.asarray(getattr(d_real, "data", d_real)).reshape(-1)
    f = np.asarray(getattr(d_fake, "data", d_fake)).reshape(-1)
    hits_real = int(np.count_nonzero(r > threshold))
    hits_fake = int(np.count_nonzero(f <= threshold))
    combined = (hits_real + hits_fake) / (r.size + f.size)
    return hits_real / r.size, hits_fake / f.size, combined
