"""Neural sheaf diffusion: graded layers, learned restriction maps, training."""

from .energy import EnergyBoundReport, energy_bound_check, sheaf_energy
from .geometry import CoboundaryPattern
from .learner import SheafLearner, element_features, learn_restrictions
from .model import NsdLayer, NsdModel, gradient_check, is_odd, nsd_forward, nsd_grad
from .optim import Adam, TrainConfig, TrainLog, train

__all__ = [
    "Adam",
    "CoboundaryPattern",
    "EnergyBoundReport",
    "NsdLayer",
    "NsdModel",
    "SheafLearner",
    "TrainConfig",
    "TrainLog",
    "element_features",
    "energy_bound_check",
    "gradient_check",
    "is_odd",
    "learn_restrictions",
    "nsd_forward",
    "nsd_grad",
    "sheaf_energy",
    "train",
]
