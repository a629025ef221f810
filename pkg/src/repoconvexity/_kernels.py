"""Exponential kernel integrals that stay finite as mean reversion vanishes.

Every helper accepts Python floats (fast path on :mod:`math`) or numpy
arrays (broadcast), and treats zero rates as ordinary inputs.
"""

from __future__ import annotations

import math

import numpy as np

# (theta + kappa) * horizon below this switches the divided difference to its series
SERIES_THRESHOLD = 0.5
_SERIES_DEGREE = 18


def _series_coefficients(degree):
    coef = np.zeros((degree + 1, degree + 1))
    for m in range(degree + 1):
        for n in range(degree + 1 - m):
            coef[m, n] = 1.0 / (math.factorial(m) * math.factorial(n + 1) * (m + n + 2))
    return coef


_COEF = _series_coefficients(_SERIES_DEGREE)
# row m as a Horner list in the second variable, highest degree first
_COEF_ROWS = [list(reversed(_COEF[m, : _SERIES_DEGREE + 1 - m])) for m in range(_SERIES_DEGREE + 1)]


def _scalar(*args) -> bool:
    return all(np.ndim(x) == 0 for x in args)


def phi1(z):
    """(1 - exp(-z)) / z, equal to 1 at z = 0."""
    if _scalar(z):
        z = float(z)
        return 1.0 if z == 0.0 else -math.expm1(-z) / z
    z = np.asarray(z, dtype=float)
    safe = np.where(z == 0.0, 1.0, z)
    return np.where(z == 0.0, 1.0, -np.expm1(-safe) / safe)


def decay_integral(rate, horizon):
    """Integral of exp(-rate * v) over [0, horizon]; ``horizon`` may be inf."""
    if _scalar(rate, horizon):
        rate, horizon = float(rate), float(horizon)
        if math.isinf(horizon):
            return 1.0 / rate if rate > 0.0 else math.inf
        return horizon * phi1(rate * horizon)
    rate = np.asarray(rate, dtype=float)
    horizon = np.asarray(horizon, dtype=float)
    inf = np.isinf(horizon)
    finite = np.where(inf, 0.0, horizon)
    tail = np.where(rate > 0.0, 1.0 / np.where(rate > 0.0, rate, 1.0), np.inf)
    return np.where(inf, tail, finite * phi1(rate * finite))


def _scaled_series(a, b):
    # sum_{m,n} (-a)^m (-b)^n / (m! (n+1)! (m+n+2))
    if _scalar(a, b):
        a, b = float(a), float(b)
        total = 0.0
        for row in reversed(_COEF_ROWS):
            inner = 0.0
            for c in row:
                inner = inner * -b + c
            total = total * -a + inner
        return total
    return np.polynomial.polynomial.polyval2d(-a, -b, _COEF)


def basis_kernel_integral(theta, kappa, x):
    """Integral over v in [0, x] of exp(-theta v) (1 - exp(-kappa v)) / kappa.

    Closed form ``x (phi1(theta x) - exp(-theta x) phi1(kappa x)) / (theta + kappa)``;
    the only removable singularity is theta + kappa -> 0, where a double Taylor
    series in (theta x, kappa x) is summed instead.
    """
    if _scalar(theta, kappa, x):
        theta, kappa, x = float(theta), float(kappa), float(x)
        a, b = theta * x, kappa * x
        if a + b < SERIES_THRESHOLD:
            return x * x * _scaled_series(a, b)
        return x * x * (phi1(a) - math.exp(-a) * phi1(b)) / (a + b)
    theta = np.asarray(theta, dtype=float)
    kappa = np.asarray(kappa, dtype=float)
    x = np.asarray(x, dtype=float)
    a = theta * x
    b = kappa * x
    small = (a + b) < SERIES_THRESHOLD
    denom = np.where(small, 1.0, a + b)
    scaled = (phi1(a) - np.exp(-a) * phi1(b)) / denom
    if np.any(small):
        series = _scaled_series(np.where(small, a, 0.0), np.where(small, b, 0.0))
        scaled = np.where(small, series, scaled)
    return x * x * scaled


def shifted_basis_kernel_integral(theta, kappa, offset, x):
    """Integral over v in [0, x] of exp(-theta v) (1 - exp(-kappa (offset + v))) / kappa."""
    if _scalar(theta, kappa, offset, x):
        return decay_integral(kappa, offset) * decay_integral(theta, x) + math.exp(
            -float(kappa) * float(offset)
        ) * basis_kernel_integral(theta, kappa, x)
    offset = np.asarray(offset, dtype=float)
    return (
        decay_integral(kappa, offset) * decay_integral(theta, x)
        + np.exp(-np.asarray(kappa, dtype=float) * offset) * basis_kernel_integral(theta, kappa, x)
    )


def as_float(value):
    """Unwrap 0-d arrays to Python floats, leave real arrays alone."""
    arr = np.asarray(value)
    return float(arr) if arr.ndim == 0 else arr
