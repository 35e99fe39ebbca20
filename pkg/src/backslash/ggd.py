"""Generalized Gaussian distribution: density, moment ratio and shape fitting.

The density used throughout is the zero-mean, standard-deviation parameterized
form

    f(x) = C1 * exp(-C2 * |x|**nu),
    gamma = sqrt(Gamma(3/nu) / Gamma(1/nu)) / sigma,
    C1 = nu * gamma / (2 * Gamma(1/nu)),  C2 = gamma**nu.

``nu = 1`` is the Laplacian and ``nu = 2`` the Gaussian. The shape is estimated
by matching the moment ratio E[x^2] / E[|x|]^2 against its closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSampleError, DomainError

SHAPE_MIN = 0.05
SHAPE_MAX = 5.0

_BISECT_TOL = 1e-6


@dataclass(frozen=True)
class GGFit:
    shape: float
    scale: float
    rho_hat: float
    sample_count: int

    def as_dict(self):
        return {
            "shape": self.shape,
            "scale": self.scale,
            "rho_hat": self.rho_hat,
            "sample_count": self.sample_count,
        }


def log_gamma(x):
    """Natural log of the Gamma function for positive finite ``x``."""
    x = float(x)
    if not math.isfinite(x) or x <= 0.0:
        raise DomainError(f"log_gamma requires a positive finite argument, got {x!r}")
    return math.lgamma(x)


def gg_pdf(x, shape, scale):
    """Generalized Gaussian density at ``x`` (scalar or array).

    ``scale`` is the standard deviation of the distribution, not the
    exponential scale used by e.g. ``scipy.stats.gennorm``.
    """
    shape = float(shape)
    scale = float(scale)
    if not (math.isfinite(shape) and shape > 0):
        raise DomainError(f"shape must be positive and finite, got {shape!r}")
    if not (math.isfinite(scale) and scale > 0):
        raise DomainError(f"scale must be positive and finite, got {scale!r}")
    xa = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(xa)):
        raise DomainError("gg_pdf requires finite x")

    lg1 = log_gamma(1.0 / shape)
    gamma = math.exp(0.5 * (log_gamma(3.0 / shape) - lg1)) / scale
    log_c1 = math.log(shape * gamma / 2.0) - lg1
    out = np.exp(log_c1 - np.power(gamma * np.abs(xa), shape))
    return float(out) if out.ndim == 0 else out


def _check_shape(shape):
    shape = float(shape)
    if not (SHAPE_MIN <= shape <= SHAPE_MAX):
        raise DomainError(f"shape {shape!r} outside [{SHAPE_MIN}, {SHAPE_MAX}]")
    return shape


def _rho_unchecked(shape):
    lg = math.lgamma
    return math.exp(lg(1.0 / shape) + lg(3.0 / shape) - 2.0 * lg(2.0 / shape))


def rho(shape):
    """Moment ratio Gamma(1/nu) Gamma(3/nu) / Gamma(2/nu)^2 of a GG with shape ``nu``.

    Strictly decreasing in ``nu``; equals 2 at the Laplacian and pi/2 at the
    Gaussian.
    """
    return _rho_unchecked(_check_shape(shape))


def _moments(params):
    """Return (n, mean of squares, mean of |x|) with exactly rounded sums."""
    a = np.asarray(params, dtype=np.float64).ravel()
    n = a.size
    if n < 2:
        raise DegenerateSampleError(f"need at least 2 samples, got {n}")
    if not np.all(np.isfinite(a)):
        raise DomainError("sample contains non-finite values")
    abs_a = np.abs(a)
    m1 = _accurate_sum(abs_a) / n
    if m1 == 0.0:
        raise DegenerateSampleError("sample is all zero")
    m2 = _accurate_sum(abs_a * abs_a) / n
    return n, m2, m1


_BLOCK = 4096


def _accurate_sum(x):
    """Pairwise sums over fixed blocks, combined by an exactly rounded fsum."""
    if x.size <= _BLOCK:
        return math.fsum(x.tolist())
    full = x.size - x.size % _BLOCK
    partials = x[:full].reshape(-1, _BLOCK).sum(axis=1).tolist()
    partials.extend(x[full:].tolist())
    return math.fsum(partials)


def estimate_rho(params):
    """Sample moment ratio mean(x^2) / mean(|x|)^2."""
    _, m2, m1 = _moments(params)
    return m2 / (m1 * m1)


def solve_shape(rho_hat):
    """Invert :func:`rho` by bisection, clamping to [SHAPE_MIN, SHAPE_MAX]."""
    rho_hat = float(rho_hat)
    if not math.isfinite(rho_hat) or rho_hat <= 0:
        raise DomainError(f"rho_hat must be positive and finite, got {rho_hat!r}")
    if rho_hat <= _rho_unchecked(SHAPE_MAX):
        return SHAPE_MAX
    if rho_hat >= _rho_unchecked(SHAPE_MIN):
        return SHAPE_MIN

    lo, hi = SHAPE_MIN, SHAPE_MAX
    # rho decreasing: rho(lo) > rho_hat > rho(hi)
    while hi - lo > _BISECT_TOL:
        mid = 0.5 * (lo + hi)
        if _rho_unchecked(mid) > rho_hat:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def fit_gg(params):
    """Fit shape and scale of a zero-mean GG to ``params`` by moment matching."""
    n, m2, m1 = _moments(params)
    rho_hat = m2 / (m1 * m1)
    return GGFit(
        shape=solve_shape(rho_hat),
        scale=math.sqrt(m2),
        rho_hat=rho_hat,
        sample_count=n,
    )
