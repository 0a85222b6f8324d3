"""From-scratch feed-forward networks: model, losses, optimizer, training."""

from .losses import bce_pos_weight, weighted_cross_entropy
from .model import (
    MlpModel,
    MlpSpec,
    backward,
    extract_embedding,
    forward,
    load_model,
    positive_probs,
    predict_probs,
    save_model,
)
from .optim import AdamConfig, AdamState, StepDecay, adam_step
from .train import (
    LOSS_BCE_POS,
    LOSS_WEIGHTED_CE,
    EpochStats,
    TrainConfig,
    TrainResult,
    train,
)

__all__ = [
    "AdamConfig",
    "AdamState",
    "EpochStats",
    "LOSS_BCE_POS",
    "LOSS_WEIGHTED_CE",
    "MlpModel",
    "MlpSpec",
    "StepDecay",
    "TrainConfig",
    "TrainResult",
    "adam_step",
    "backward",
    "bce_pos_weight",
    "extract_embedding",
    "forward",
    "load_model",
    "positive_probs",
    "predict_probs",
    "save_model",
    "train",
    "weighted_cross_entropy",
]
