"""
Adam optimizer step with bias correction.
"""
from dataclasses import dataclass, field
from typing import Dict, Mapping

import numpy as np

from multidetect.modules.diffcore.tensor import Tensor


@dataclass(frozen=True)
class AdamConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class AdamState:
    """First/second moments and timestep per parameter name; created lazily."""

    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    t: Dict[str, int] = field(default_factory=dict)


def adam_step(
    params: Mapping[str, Tensor],
    grads: Mapping[str, np.ndarray],
    state: AdamState,
    hyper: AdamConfig = AdamConfig(),
) -> AdamState:
    """Update every parameter that has a gradient in place; returns the state."""
    for name, param in params.items():
        grad = grads.get(name)
        if grad is None:
            continue
        dtype = param.data.dtype
        grad = grad.astype(dtype, copy=False)
        if name not in state.m:
            state.m[name] = np.zeros_like(param.data)
            state.v[name] = np.zeros_like(param.data)
            state.t[name] = 0
        state.t[name] += 1
        t = state.t[name]
        m = state.m[name] = hyper.beta1 * state.m[name] + (1.0 - hyper.beta1) * grad
        v = state.v[name] = hyper.beta2 * state.v[name] + (1.0 - hyper.beta2) * grad * grad
        m_hat = m / (1.0 - hyper.beta1 ** t)
        v_hat = v / (1.0 - hyper.beta2 ** t)
        param.data = (param.data - hyper.lr * m_hat / (np.sqrt(v_hat) + hyper.eps)).astype(dtype, copy=False)
    return state
