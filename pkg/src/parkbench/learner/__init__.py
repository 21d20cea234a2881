"""From-scratch soft actor-critic over privileged observation vectors."""

from .nets import Adam, Mlp, layer_norm, log_cosh
from .sac import LearnerConfig, PolicyParameters, SoftActorCritic
from .store import load_params, save_params

__all__ = [
    "Adam",
    "Mlp",
    "layer_norm",
    "log_cosh",
    "LearnerConfig",
    "PolicyParameters",
    "SoftActorCritic",
    "load_params",
    "save_params",
]
