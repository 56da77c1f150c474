"""
Carlini-Wagner L2 attack, untargeted, on logits.

Change of variables  x' = (tanh(w) + 1) / 2  keeps every iterate inside the
box. For each instance we minimise

    ||x' - x||^2 + c * max(Z_y - max_{i != y} Z_i, -kappa)

with Adam on w, and binary-search the constant c per instance. The best
successful iterate (smallest L2) wins; instances that never succeed return
the last iterate of the final search step with ``success`` false.
"""
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from multidetect.core.logging import get_logger
from multidetect.modules.attacks.schemas import CWParams
from multidetect.modules.diffcore import AdamConfig, AdamState, Tensor, adam_step
from multidetect.modules.diffcore import ops
from multidetect.modules.models.architecture import Classifier
from multidetect.modules.models.service import logit_vjp

logger = get_logger(__name__)

TANH_SHRINK = 0.999999
CONST_BOUNDS = (1e-3, 1e10)
# upper bound sentinel: no successful constant seen yet
UNBOUNDED = 1e10


@dataclass
class CWResult:
    adversarial: np.ndarray
    success: np.ndarray
    l2: np.ndarray  # Euclidean norm of the perturbation


def _margins(z: np.ndarray, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(Z_y, max_{i != y} Z_i, argmax_{i != y} Z_i) per row."""
    rows = np.arange(z.shape[0])
    real = z[rows, y]
    others = z.astype(np.float64, copy=True)
    others[rows, y] = -np.inf
    best_other = np.argmax(others, axis=1)
    return real.astype(np.float64), others[rows, best_other], best_other


def _to_tanh_space(x: np.ndarray) -> np.ndarray:
    return np.arctanh((2.0 * x.astype(np.float64) - 1.0) * TANH_SHRINK).astype(x.dtype)


def cw_l2(model: Classifier, x: np.ndarray, y: np.ndarray, params: CWParams) -> CWResult:
    x = np.clip(np.asarray(x, dtype=model.graph.dtype), 0.0, 1.0)
    n = x.shape[0]
    y = ops.check_labels(np.atleast_1d(np.asarray(y)), n, model.num_classes)
    rows = np.arange(n)
    kappa = float(params.confidence)
    reduce_axes = tuple(range(1, x.ndim))

    w0 = _to_tanh_space(x)
    lower = np.zeros(n)
    upper = np.full(n, UNBOUNDED)
    const = np.full(n, params.initial_const)

    best_l2 = np.full(n, np.inf)
    best_adv = x.copy()
    last_adv = x.copy()
    hyper = AdamConfig(lr=params.learning_rate)

    for step in range(params.binary_search_steps):
        modifier = Tensor(np.zeros_like(x), dtype=x.dtype, name="modifier")
        state = AdamState()
        step_success = np.zeros(n, dtype=bool)
        c = const.astype(x.dtype)

        def weights_fn(z: np.ndarray) -> np.ndarray:
            real, other, other_idx = _margins(z, y)
            active = (real - other > -kappa).astype(z.dtype)
            weights = np.zeros_like(z)
            weights[rows, y] = c * active
            weights[rows, other_idx] -= c * active
            return weights

        for _ in range(params.max_iterations):
            t = np.tanh(w0 + modifier.data)
            x_new = ((t + 1.0) / 2.0).astype(x.dtype)
            z, grad_f = logit_vjp(model, x_new, weights_fn)

            delta = x_new - x
            l2 = np.sum(delta.astype(np.float64) ** 2, axis=reduce_axes)
            real, other, _ = _margins(z, y)
            succeeded = other - real > kappa
            improved = succeeded & (l2 < best_l2)
            best_l2[improved] = l2[improved]
            best_adv[improved] = x_new[improved]
            step_success |= succeeded
            last_adv = x_new

            grad_x = 2.0 * delta + grad_f
            grad_w = (grad_x * (1.0 - t * t) / 2.0).astype(x.dtype)
            adam_step({"modifier": modifier}, {"modifier": grad_w}, state, hyper)

        # binary search on c
        upper = np.where(step_success, np.minimum(upper, const), upper)
        lower = np.where(step_success, lower, np.maximum(lower, const))
        bounded = upper < UNBOUNDED
        const = np.where(bounded, (lower + upper) / 2.0, const * 2.0)
        const = np.clip(const, *CONST_BOUNDS)
        logger.debug(
            "binary step %d/%d: %d/%d succeeded, mean c=%.4g",
            step + 1, params.binary_search_steps, int(step_success.sum()), n, float(const.mean()),
        )

    success = np.isfinite(best_l2)
    adversarial = np.where(success.reshape((n,) + (1,) * (x.ndim - 1)), best_adv, last_adv)
    l2 = np.sqrt(np.sum((adversarial.astype(np.float64) - x) ** 2, axis=reduce_axes))
    return CWResult(adversarial=adversarial.astype(x.dtype), success=success, l2=l2)
