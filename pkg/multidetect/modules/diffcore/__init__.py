"""
Module diffcore - dense/convolutional tensor engine with reverse-mode differentiation.

Features:
- Tensor with optional gradient tape participation
- Graph: named layer stack + parameter registry, forward / backward
- Op library: dense, conv2d, relu, global_avg_pool, flatten, add, softmax_cross_entropy
- Adam step with bias correction
"""

from .graph import Graph, GradientMap, backward, forward, run
from .ops import no_grad
from .optim import AdamConfig, AdamState, adam_step
from .tensor import Tensor

__all__ = [
    "AdamConfig",
    "AdamState",
    "GradientMap",
    "Graph",
    "Tensor",
    "adam_step",
    "backward",
    "forward",
    "no_grad",
    "run",
]
