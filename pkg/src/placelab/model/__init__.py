"""Trainable pose refiner: autodiff engine, network, training loop, checkpoints."""

from .autodiff import Tensor, no_grad
from .checkpoint import load_checkpoint, save_checkpoint
from .network import ModelConfig, PoseRefiner, gram_schmidt_6d, sinusoidal_embedding
from .training import (AdamW, TrainConfig, batch_loss, grad_check,
                       learning_rate_at, make_batch, prepare_scene, train,
                       write_loss_csv)

__all__ = [
    "Tensor", "no_grad", "load_checkpoint", "save_checkpoint", "ModelConfig",
    "PoseRefiner", "gram_schmidt_6d", "sinusoidal_embedding", "AdamW",
    "TrainConfig", "batch_loss", "grad_check", "learning_rate_at",
    "make_batch", "prepare_scene", "train", "write_loss_csv",
]
