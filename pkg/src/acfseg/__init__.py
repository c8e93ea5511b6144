"""Attentional class feature segmentation on a small numpy autodiff engine."""

from .acf import ACFModule, class_attention_concat, class_attention_sum, class_centers
from .config import EvalConfig, TrainConfig, paper_profile
from .evaluation import evaluate, ms_flip_infer
from .network import ACFNet, NetworkConfig, build_network
from .training import load_checkpoint, save_checkpoint, train

__version__ = "0.1.0"

__all__ = [
    "ACFModule",
    "ACFNet",
    "EvalConfig",
    "NetworkConfig",
    "TrainConfig",
    "build_network",
    "class_attention_concat",
    "class_attention_sum",
    "class_centers",
    "evaluate",
    "load_checkpoint",
    "ms_flip_infer",
    "paper_profile",
    "save_checkpoint",
    "train",
]
