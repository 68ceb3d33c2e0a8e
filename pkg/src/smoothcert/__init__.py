"""Certified L2 robustness for fixed classifiers.

Prepend a trained Gaussian denoiser to any classifier (local or behind
an HTTP endpoint), smooth it with Monte Carlo sampling, and measure
certified-accuracy curves.
"""

from . import classifiers, data, experiment, numerics, rng, smoothing, training
from .classifiers import Denoised, LabelMap, LocalModel, Remote
from .smoothing import Certificate, SmoothingParams, certify, predict

__version__ = "0.1.0"

__all__ = [
    "Certificate",
    "Denoised",
    "LabelMap",
    "LocalModel",
    "Remote",
    "SmoothingParams",
    "certify",
    "classifiers",
    "data",
    "experiment",
    "numerics",
    "predict",
    "rng",
    "smoothing",
    "training",
]
