from .model import CoNHD, DiffusionInfoState, DiffusionLayer, ModelConfig, PairGraph, classify_head, conhd_admm_layer, conhd_forward, conhd_gd_layer
from .ops import ISAB, MLP, UNB, mean_ablate
from .training import Adam, backward, finite_difference_check, load_checkpoint, loss_cross_entropy, loss_mae, save_checkpoint

__all__ = [
    "Adam", "CoNHD", "DiffusionInfoState", "DiffusionLayer", "ISAB", "MLP", "ModelConfig", "PairGraph", "UNB",
    "backward", "classify_head", "conhd_admm_layer", "conhd_forward", "conhd_gd_layer", "finite_difference_check",
    "load_checkpoint", "loss_cross_entropy", "loss_mae", "mean_ablate", "save_checkpoint",
]
