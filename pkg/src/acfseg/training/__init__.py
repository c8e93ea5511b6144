from .augment import augment
from .losses import BootstrapConfig, LossWeights, balanced_ce, bootstrap_select, total_loss
from .optim import SGD, poly_lr
from .trainer import TrainResult, load_checkpoint, save_checkpoint, train

__all__ = [
    "SGD",
    "BootstrapConfig",
    "LossWeights",
    "TrainResult",
    "augment",
    "balanced_ce",
    "bootstrap_select",
    "load_checkpoint",
    "poly_lr",
    "save_checkpoint",
    "total_loss",
    "train",
]
