"""Desk-scale stand-in for a pretrained latent diffusion model."""

from .checkpoint import Checkpoint, CheckpointError, load_checkpoint, save_checkpoint
from .scenes import ObjectSpec, SceneSpec, render_scene, sample_dataset_item, vocabulary
from .unet import ModelConfig, ToyDenoiser, denoiser_forward

__all__ = [
    "Checkpoint", "CheckpointError", "load_checkpoint", "save_checkpoint",
    "ObjectSpec", "SceneSpec", "render_scene", "sample_dataset_item", "vocabulary",
    "ModelConfig", "ToyDenoiser", "denoiser_forward",
]
