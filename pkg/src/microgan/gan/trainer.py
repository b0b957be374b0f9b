"""Alternating discriminator/generator training."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .. import autograd as ad
from ..data.dataset import Dataset, batches
from ..errors import ConfigError, NonFiniteError
from ..layers import Sequential
from ..tensor import Tensor, default_dtype
from .losses import d_accuracy, discriminator_loss, generator_loss
from .optim import AdamState, adam_step

log = logging.getLogger(__name__)

TRACE_HEADER = ("iteration", "d_loss", "g_loss", "d_acc_real", "d_acc_fake")


@dataclass
class TrainConfig:
    lr: float = 0.0005
    lr_d: float | None = None
    lr_g: float | None = None
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 64
    latent_dim: int = 1000
    d_steps_per_cycle: int = 1
    g_steps_per_cycle: int = 1
    alternation_granularity: str = "batch"
    total_iterations: int = 1000
    seed: int = 0
    loss_variant: str = "minimax"
    accuracy_window: int = 50
    early_stop: bool = False

    def __post_init__(self):
        bad = []
        for name in ("lr", "lr_d", "lr_g"):
            v = getattr(self, name)
            if v is not None and not 0 < v < 1:
                bad.append(name)
        if self.batch_size < 2:
            bad.append("batch_size")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            bad.append("beta1" if not 0 <= self.beta1 < 1 else "beta2")
        if self.alternation_granularity not in ("batch", "epoch"):
            bad.append("alternation_granularity")
        if self.loss_variant not in ("minimax", "non_saturating"):
            bad.append("loss_variant")
        for name in ("latent_dim", "d_steps_per_cycle", "g_steps_per_cycle", "accuracy_window"):
            if getattr(self, name) < 1:
                bad.append(name)
        if self.total_iterations < 0:
            bad.append("total_iterations")
        if bad:
            raise ConfigError(f"invalid training config values: {', '.join(bad)}", bad)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown train config keys: {', '.join(unknown)}", unknown)
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    d_loss: float
    g_loss: float
    d_acc_real: float
    d_acc_fake: float

    @property
    def d_acc_combined(self) -> float:
        return (self.d_acc_real + self.d_acc_fake) / 2


@dataclass
class LossTrace:
    records: list = field(default_factory=list)

    def append(self, rec: TraceRecord):
        if self.records and rec.iteration <= self.records[-1].iteration:
            raise ValueError("trace iterations must be strictly increasing")
        self.records.append(rec)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def rows(self) -> list[tuple]:
        return [tuple(asdict(r).values()) for r in self.records]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(TRACE_HEADER)
            for r in self.records:
                w.writerow([r.iteration, repr(r.d_loss), repr(r.g_loss),
                            repr(r.d_acc_real), repr(r.d_acc_fake)])

    @classmethod
    def read_csv(cls, path) -> "LossTrace":
        """Raises ``ValueError`` naming the 1-based line of the first bad row."""
        trace = cls()
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or tuple(h.strip() for h in header) != TRACE_HEADER:
                raise ValueError(f"line 1: expected header {','.join(TRACE_HEADER)}")
            for lineno, row in enumerate(reader, start=2):
                try:
                    if len(row) != len(TRACE_HEADER):
                        raise ValueError(f"expected {len(TRACE_HEADER)} fields, got {len(row)}")
                    vals = [float(x) for x in row[1:]]
                    if not all(math.isfinite(v) for v in vals):
                        raise ValueError("non-finite value")
                    trace.append(TraceRecord(int(row[0]), *vals))
                except ValueError as exc:
                    raise ValueError(f"line {lineno}: {exc}") from exc
        return trace


def sample_latent(batch: int, latent_dim: int, rng: np.random.Generator) -> Tensor:
    if batch < 1 or latent_dim < 1:
        raise ValueError("batch and latent_dim must be >= 1")
    z = rng.standard_normal((batch, latent_dim, 1, 1))
    return Tensor(z.astype(default_dtype()))


class Trainer:
    """Owns both models, both optimizer states, the RNG and the loss trace.

    Everything needed to continue a run bit-identically lives in
    :meth:`state` / :meth:`restore`, which is what checkpoints persist.
    """

    def __init__(self, config: TrainConfig, dataset: Dataset, generator: Sequential,
                 discriminator: Sequential):
        if len(dataset) == 0:
            raise ConfigError("dataset is empty", ["data_dir"])
        if len(dataset) < config.batch_size:
            raise ConfigError(f"dataset has {len(dataset)} items, fewer than batch_size "
                              f"{config.batch_size}", ["batch_size"])
        self.config = config
        self.dataset = dataset
        self.G = generator
        self.D = discriminator
        self.g_params = {f"G.{k}": v for k, v in generator.named_parameters().items()}
        self.d_params = {f"D.{k}": v for k, v in discriminator.named_parameters().items()}
        c = config
        self.adam_g = AdamState(lr=c.lr_g or c.lr, beta1=c.beta1, beta2=c.beta2, eps=c.eps)
        self.adam_d = AdamState(lr=c.lr_d or c.lr, beta1=c.beta1, beta2=c.beta2, eps=c.eps)
        self.rng = np.random.default_rng(c.seed)
        self.iteration = 0
        self.batch_cursor = 0  # real batches consumed so far
        self.trace = LossTrace()
        self._epoch_cache: tuple[int, list] | None = None
        self._last = {"d_loss": math.nan, "g_loss": math.nan, "acc": (math.nan, math.nan)}
        self.batches_per_epoch = len(dataset) // c.batch_size

    def _real_batch(self) -> Tensor:
        epoch, pos = divmod(self.batch_cursor, self.batches_per_epoch)
        if self._epoch_cache is None or self._epoch_cache[0] != epoch:
            rng = np.random.default_rng([self.config.seed, 1, epoch])
            self._epoch_cache = (epoch, list(batches(self.dataset, self.config.batch_size, rng,
                                                     drop_last=True)))
        self.batch_cursor += 1
        return self._epoch_cache[1][pos]

    def schedule(self, iteration: int) -> list[str]:
        """Which updates iteration ``iteration`` (0-based) performs."""
        c = self.config
        if c.alternation_granularity == "batch":
            return ["D"] * c.d_steps_per_cycle + ["G"] * c.g_steps_per_cycle
        span = self.batches_per_epoch
        pos = iteration % ((c.d_steps_per_cycle + c.g_steps_per_cycle) * span)
        return ["D"] if pos < c.d_steps_per_cycle * span else ["G"]

    def d_step(self):
        tape = ad.Tape()
        for name, p in self.d_params.items():
            tape.watch(p, name)
        real = self._real_batch()
        z = sample_latent(self.config.batch_size, self.config.latent_dim, self.rng)
        fake = ad.detach(self.G.forward(z, "train"))
        d_real = self.D.forward(real, "train", tape)
        d_fake = self.D.forward(fake, "train", tape)
        loss = discriminator_loss(d_real, d_fake, tape)
        self._check_finite(loss, "discriminator")
        grads = ad.backward(tape, loss, wrt=self.d_params)
        adam_step(self.d_params, grads, self.adam_d)
        self._last["d_loss"] = loss.item()
        self._last["acc"] = d_accuracy(d_real, d_fake)[:2]
        return d_fake

    def g_step(self):
        tape = ad.Tape()
        for name, p in self.g_params.items():
            tape.watch(p, name)
        z = sample_latent(self.config.batch_size, self.config.latent_dim, self.rng)
        d_fake = self.D.forward(self.G.forward(z, "train", tape), "train", tape)
        loss = generator_loss(d_fake, self.config.loss_variant, tape)
        self._check_finite(loss, "generator")
        grads = ad.backward(tape, loss, wrt=self.g_params)
        adam_step(self.g_params, grads, self.adam_g)
        self._last["g_loss"] = loss.item()

    def _check_finite(self, loss: Tensor, who: str):
        if not math.isfinite(loss.item()):
            raise NonFiniteError(f"{who} loss became non-finite at iteration {self.iteration + 1}")

    def step(self) -> TraceRecord:
        steps = self.schedule(self.iteration)
        last_fake = None
        for s in steps:
            if s == "D":
                last_fake = self.d_step()
            else:
                self.g_step()
        if "G" not in steps and last_fake is not None:
            self._last["g_loss"] = generator_loss(last_fake, self.config.loss_variant).item()
        self.iteration += 1
        acc_real, acc_fake = self._last["acc"]
        rec = TraceRecord(self.iteration, self._last["d_loss"], self._last["g_loss"],
                          acc_real, acc_fake)
        self.trace.append(rec)
        return rec

    def converged(self) -> bool:
        """Windowed combined accuracy within [0.45, 0.55]."""
        w = self.config.accuracy_window
        if len(self.trace) < w:
            return False
        acc = np.mean([r.d_acc_combined for r in self.trace.records[-w:]])
        return 0.45 <= acc <= 0.55

    def run(self, until: int | None = None, callback=None) -> LossTrace:
        until = self.config.total_iterations if until is None else until
        while self.iteration < until:
            rec = self.step()
            if callback is not None:
                callback(self, rec)
            if self.config.early_stop and self.converged():
                log.info("discriminator accuracy settled near 50%% at iteration %d", self.iteration)
                break
        return self.trace

    def state(self) -> dict:
        return {
            "iteration": self.iteration,
            "batch_cursor": self.batch_cursor,
            "rng": self.rng.bit_generator.state,
            "adam_g_t": self.adam_g.t,
            "adam_d_t": self.adam_d.t,
            "last": {"d_loss": self._last["d_loss"], "g_loss": self._last["g_loss"],
                     "acc": list(self._last["acc"])},
            "trace": self.trace.rows(),
        }

    def restore(self, state: dict, adam_g: AdamState, adam_d: AdamState):
        self.iteration = state["iteration"]
        self.batch_cursor = state["batch_cursor"]
        self.rng.bit_generator.state = state["rng"]
        self.adam_g, self.adam_d = adam_g, adam_d
        last = state["last"]
        self._last = {"d_loss": last["d_loss"], "g_loss": last["g_loss"], "acc": tuple(last["acc"])}
        self.trace = LossTrace([TraceRecord(*row) for row in state["trace"]])
        self._epoch_cache = None


def train(config: TrainConfig, dataset: Dataset, generator: Sequential,
          discriminator: Sequential, callback=None):
    """Run a full training job; returns ``(generator, discriminator, trace)``."""
    trainer = Trainer(config, dataset, generator, discriminator)
    trainer.run(callback=callback)
    return generator, discriminator, trainer.trace
