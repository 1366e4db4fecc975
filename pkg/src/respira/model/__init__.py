"""Convolutional VAE: layers, losses, optimizers, training, checkpoints."""

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .layers import Activation, BatchNorm2d, Conv2d, ConvTranspose2d, Dropout, LayerSpec
from .optim import OPTIMIZER_KINDS, make_optimizer
from .train import EarlyStopper, History, TrainConfig, eval_loss, train
from .vae import (
    RECONSTRUCTION_KINDS,
    Architecture,
    LatentDistribution,
    LossParts,
    Vae,
    default_architecture,
    kl_unit_gaussian,
    mirror_decoder,
    reconstruction_loss,
    reparameterize,
)

__all__ = [
    "Activation",
    "Architecture",
    "BatchNorm2d",
    "Checkpoint",
    "Conv2d",
    "ConvTranspose2d",
    "Dropout",
    "EarlyStopper",
    "History",
    "LatentDistribution",
    "LayerSpec",
    "LossParts",
    "OPTIMIZER_KINDS",
    "RECONSTRUCTION_KINDS",
    "TrainConfig",
    "Vae",
    "default_architecture",
    "eval_loss",
    "kl_unit_gaussian",
    "load_checkpoint",
    "make_optimizer",
    "mirror_decoder",
    "reconstruction_loss",
    "reparameterize",
    "save_checkpoint",
    "train",
]
