"""
Post-processing applied to every perturbed image: clip to [0, 1], then
quantize to 256 levels (round half away from zero) so the result is
representable as 24-bit RGB.
"""
import numpy as np

from multidetect.modules.data.schemas import quantize


def postprocess(x_adv: np.ndarray) -> np.ndarray:
    return quantize(x_adv)


def project_linf(x_adv: np.ndarray, x: np.ndarray, epsilon: float) -> np.ndarray:
    """Clip into the L-infinity ball of radius ``epsilon`` around ``x``, then into [0, 1]."""
    x_adv = np.clip(x_adv, x - epsilon, x + epsilon)
    return np.clip(x_adv, 0.0, 1.0).astype(x.dtype, copy=False)
