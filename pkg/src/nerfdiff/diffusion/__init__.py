"""Conditional denoising diffusion that maps field renderings to target images."""

from nerfdiff.diffusion.checkpoint import DenoiserCheckpoint, load_denoiser, save_denoiser
from nerfdiff.diffusion.denoiser import ConditionalDenoiser, DenoiserArch, time_embedding
from nerfdiff.diffusion.sampling import enhance, enhance_many, sample
from nerfdiff.diffusion.schedule import DiffusionSchedule, forward_noise, make_schedule
from nerfdiff.diffusion.train import (DenoiserTrainResult, DiffusionConfig, ema_decay_at, stack_pairs, to_signed,
                                      to_unit, train_denoiser, training_loss)

__all__ = [
    "DenoiserCheckpoint", "ema_decay_at",
    "load_denoiser", "save_denoiser", "ConditionalDenoiser", "DenoiserArch", "time_embedding",
    "enhance", "enhance_many", "sample", "DiffusionSchedule", "forward_noise", "make_schedule",
    "DenoiserTrainResult", "DiffusionConfig", "stack_pairs", "to_signed", "to_unit",
    "train_denoiser", "training_loss",
]
