from .losses import cross_entropy_loss, mse_loss
from .model import (
    Conv2D,
    GlobalAvgPool,
    Linear,
    Model,
    ReLU,
    as_tensor,
    build_classifier,
    build_denoiser,
    model_from_descriptor,
    softmax,
)
from .model_io import load_model, save_model
from .optim import OptimizerSpec, OptimizerState, make_optimizer

__all__ = [
    "Conv2D",
    "GlobalAvgPool",
    "Linear",
    "Model",
    "ReLU",
    "OptimizerSpec",
    "OptimizerState",
    "as_tensor",
    "build_classifier",
    "build_denoiser",
    "cross_entropy_loss",
    "load_model",
    "make_optimizer",
    "model_from_descriptor",
    "mse_loss",
    "save_model",
    "softmax",
]
