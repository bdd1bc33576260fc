from .checkpoint import load_model, save_model
from .layers import BatchNorm, Conv2d, Dense, Flatten, Rectifier, Softplus
from .losses import log_softmax, loss_and_grad, softmax
from .model import Model
from .train import TrainConfig, accuracy, train

__all__ = [
    "BatchNorm",
    "Conv2d",
    "Dense",
    "Flatten",
    "Model",
    "Rectifier",
    "Softplus",
    "TrainConfig",
    "accuracy",
    "load_model",
    "log_softmax",
    "loss_and_grad",
    "save_model",
    "softmax",
    "train",
]
