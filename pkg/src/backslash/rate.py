"""Rate term of the rate-distortion cost and its gradient.

The rate of a parameter set under a GG prior with shape ``nu`` is, up to
constant factors, the mean of ``|theta|**nu``. Training uses the soft-clipped
form ``mean((|theta| + eps)**nu)`` whose gradient stays finite at zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DomainError
from .ggd import SHAPE_MAX, SHAPE_MIN

DEFAULT_EPSILON = 1e-3


@dataclass(frozen=True)
class RateConfig:
    """Lagrange multiplier, clipping constant and shape mode.

    ``fixed_shape=None`` re-estimates the shape from the parameters every
    batch; a number pins it (1.0 gives L1, 2.0 gives L2 regularization).
    """

    lam: float = 0.0
    epsilon: float = DEFAULT_EPSILON
    fixed_shape: Optional[float] = None

    def __post_init__(self):
        if not (math.isfinite(self.lam) and self.lam >= 0):
            raise DomainError(f"lambda must be nonnegative and finite, got {self.lam!r}")
        _check_epsilon(self.epsilon)
        if self.fixed_shape is not None and not (SHAPE_MIN <= self.fixed_shape <= SHAPE_MAX):
            raise DomainError(
                f"fixed shape {self.fixed_shape!r} outside [{SHAPE_MIN}, {SHAPE_MAX}]"
            )

    @property
    def adaptive(self):
        return self.fixed_shape is None


def _check_epsilon(epsilon):
    if not (math.isfinite(epsilon) and epsilon > 0):
        raise DomainError(f"epsilon must be positive and finite, got {epsilon!r}")


def _as_params(params):
    a = np.asarray(params, dtype=np.float64).ravel()
    if a.size == 0:
        raise DomainError("rate of an empty parameter set is undefined")
    return a


def _check_shape(shape):
    if not (math.isfinite(shape) and shape > 0):
        raise DomainError(f"shape must be positive, got {shape!r}")


def dggr(params, shape):
    """Discretized generalized Gaussian rate: mean of ``|theta|**shape``."""
    a = _as_params(params)
    _check_shape(shape)
    return float(np.mean(np.abs(a) ** shape))


def soft_rate(params, shape, epsilon=DEFAULT_EPSILON):
    """Soft-clipped rate: mean of ``(|theta| + epsilon)**shape``."""
    a = _as_params(params)
    _check_shape(shape)
    _check_epsilon(epsilon)
    return float(np.mean((np.abs(a) + epsilon) ** shape))


def soft_rate_grad(params, shape, epsilon=DEFAULT_EPSILON):
    """Gradient of :func:`soft_rate` with ``shape`` held constant.

    ``g_i = shape / N * sign(theta_i) * (|theta_i| + epsilon)**(shape - 1)``,
    with ``sign(0) = 0``. The output has the shape of ``params``.
    """
    arr = np.asarray(params, dtype=np.float64)
    a = _as_params(arr)
    _check_shape(shape)
    _check_epsilon(epsilon)
    g = (shape / a.size) * np.sign(a) * (np.abs(a) + epsilon) ** (shape - 1.0)
    return g.reshape(arr.shape)


def rd_cost(distortion, rate, lam):
    """Rate-distortion cost ``D + lam * R``."""
    for name, v in (("distortion", distortion), ("rate", rate), ("lambda", lam)):
        if not math.isfinite(v):
            raise DomainError(f"{name} must be finite, got {v!r}")
    return distortion + lam * rate
