"""Minimal deterministic network engine: kernels (compiled or numpy), model
assembly, training, and checkpointing."""

from . import backend, checkpoint, model, ops, training
from .model import ModelConfig
from .training import (AdamState, GridResult, GridSpace, TrainedModel, Trainer,
                       adam_step, extract_latent, grid_search, predict,
                       predict_proba, train)

__all__ = [
    "AdamState", "GridResult", "GridSpace", "ModelConfig", "TrainedModel",
    "Trainer", "adam_step", "backend", "checkpoint", "extract_latent",
    "grid_search", "model", "ops", "predict", "predict_proba", "train",
    "training",
]
