"""Compact-CNN: layers, model, optimiser, training loop and checkpoints."""
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .model import CompactCNN, ModelConfig, param_counts, shape_chain
from .optim import AdamState, adam_step
from .train import TrainConfig, TrainingDivergedError, TrainResult, train

__all__ = [
    "AdamState", "CheckpointError", "CompactCNN", "ModelConfig", "TrainConfig", "TrainResult",
    "TrainingDivergedError", "adam_step", "load_checkpoint", "param_counts", "save_checkpoint",
    "shape_chain", "train",
]
