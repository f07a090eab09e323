"""Per-window seizure classifier: weighting, network, training and inference."""
from .losses import (BCKG, SEIZ, ClassWeights, LabeledImages, TrainSetStats, class_weights,
                     subsample_background, weighted_loss, weighted_loss_batch)
from .model import MiniResNet, MiniResNetConfig, build_mini_resnet, predict_proba
from .train import TrainConfig, TrainResult, TrainingDiverged, train
from .infer import PosteriorSequence, infer_stream
from .exchange import load_model, save_model

__all__ = [
    "BCKG", "SEIZ", "ClassWeights", "LabeledImages", "TrainSetStats", "class_weights",
    "subsample_background", "weighted_loss", "weighted_loss_batch", "MiniResNet",
    "MiniResNetConfig", "build_mini_resnet", "predict_proba", "TrainConfig", "TrainResult",
    "TrainingDiverged", "train", "PosteriorSequence", "infer_stream", "load_model", "save_model",
]
