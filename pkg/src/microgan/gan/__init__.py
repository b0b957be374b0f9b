from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .losses import d_accuracy, discriminator_loss, gan_value, generator_loss
from .optim import AdamState, adam_step
from .trainer import LossTrace, TraceRecord, TrainConfig, Trainer, sample_latent, train

__all__ = [
    "AdamState", "Checkpoint", "LossTrace", "TraceRecord", "TrainConfig", "Trainer",
    "adam_step", "d_accuracy", "discriminator_loss", "gan_value", "generator_loss",
    "load_checkpoint", "sample_latent", "save_checkpoint", "train",
]
