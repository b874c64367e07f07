"""Directional privacy for gradient-descent training.

Core pieces: a von Mises-Fisher mechanism that privatizes gradient
directions on the unit sphere, a Gaussian baseline, per-example private
training loops, gradient-inversion attacks (squared-distance and
cosine+TV variants) for empirical leakage measurement, and a seeded
experiment harness with a CLI.
"""

__version__ = "0.1.0"

from .mechanisms import GaussParams, RngStream, VmfParams, gaussian_perturb, vmf_sample
from .nets import NetworkParams, init_lenet, init_mlp
from .training import TrainingConfig, train

__all__ = [
    "GaussParams", "RngStream", "VmfParams", "gaussian_perturb", "vmf_sample",
    "NetworkParams", "init_lenet", "init_mlp", "TrainingConfig", "train",
]
