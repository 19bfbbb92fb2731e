"""Reverse-mode differentiation core for the attack model."""

from . import checkpoint
from .gradcheck import check_gradients, numeric_gradient, relative_error
from .layers import Conv1d, Dense, Dropout, Module
from .ops import (conv1d, cross_entropy, dropout, grl, grl_schedule, l2_normalize, log_softmax,
                  mmd, softmax, supcon_loss, uncertainty_loss)
from .optim import AdamW
from .tensor import Tensor, concat, stack

__all__ = [
    "AdamW", "Conv1d", "Dense", "Dropout", "Module", "Tensor", "check_gradients", "checkpoint",
    "concat", "conv1d", "cross_entropy", "dropout", "grl", "grl_schedule", "l2_normalize",
    "log_softmax", "mmd", "numeric_gradient", "relative_error", "softmax", "stack",
    "supcon_loss", "uncertainty_loss",
]
