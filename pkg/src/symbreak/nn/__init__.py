from .tensor import Tensor, no_grad
from .model import (
    ATTENTION,
    HEAD_EQUIVARIANT,
    HEAD_INVARIANT,
    MEAN_MLP,
    TOKEN_EMBED,
    TOKEN_ONEHOT,
    Model,
    ModelConfig,
    TaskBinding,
)
from .losses import bce_with_logits, cross_entropy, l1, weighted_l1
from .optim import Adam, adam_step
from .checkpoint import load_checkpoint, save_checkpoint

__all__ = [
    "Tensor",
    "no_grad",
    "Model",
    "ModelConfig",
    "TaskBinding",
    "ATTENTION",
    "MEAN_MLP",
    "HEAD_EQUIVARIANT",
    "HEAD_INVARIANT",
    "TOKEN_EMBED",
    "TOKEN_ONEHOT",
    "cross_entropy",
    "l1",
    "weighted_l1",
    "bce_with_logits",
    "Adam",
    "adam_step",
    "load_checkpoint",
    "save_checkpoint",
]
