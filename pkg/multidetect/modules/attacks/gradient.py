"""
Gradient-sign attacks (untargeted).

FGSM:  x_adv = x + eps * sign(grad_x J(x, y))
BIM:   t FGSM steps of size alpha, each followed by projection onto the
       eps-ball around x and onto [0, 1].

sign(0) = 0, so pixels with a zero gradient stay untouched.
"""
import numpy as np

from multidetect.core.errors import ShapeError
from multidetect.modules.attacks.postprocess import project_linf
from multidetect.modules.models.architecture import Classifier
from multidetect.modules.models.service import input_gradient


def fgsm(model: Classifier, x: np.ndarray, y: np.ndarray, epsilon: float) -> np.ndarray:
    """Single step; the result is not yet clipped or quantized."""
    x = np.asarray(x, dtype=np.float32)
    if epsilon == 0:
        return x.copy()
    grad = input_gradient(model, x, y)
    return (x + np.float32(epsilon) * np.sign(grad)).astype(np.float32)


def bim(
    model: Classifier,
    x: np.ndarray,
    y: np.ndarray,
    alpha: float,
    iterations: int,
    epsilon: float,
) -> np.ndarray:
    if iterations < 1:
        raise ShapeError(f"bim needs at least one iteration, got {iterations}")
    if alpha > epsilon:
        raise ShapeError(f"bim step alpha={alpha} exceeds epsilon={epsilon}")
    x = np.asarray(x, dtype=np.float32)
    x_adv = x.copy()
    for _ in range(iterations):
        grad = input_gradient(model, x_adv, y)
        x_adv = x_adv + np.float32(alpha) * np.sign(grad)
        x_adv = project_linf(x_adv, x, np.float32(epsilon))
    return x_adv
