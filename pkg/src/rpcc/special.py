"""Digamma function for positive real arguments."""

from __future__ import annotations

import numpy as np

# Bernoulli-number coefficients B_2k / (2k) for the asymptotic series, k = 1..6
_ASYMPTOTIC = (
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
)
_SHIFT = 6.0


def digamma(x):
    """Digamma ``psi(x) = d/dx ln Gamma(x)`` for ``x > 0``.

    Shifts the argument above 6 with ``psi(x) = psi(x + 1) - 1/x`` and then
    applies the asymptotic expansion through ``x**-12``. Accepts scalars or
    arrays; returns the same kind.
    """
    arr = np.asarray(x, dtype=float)
    if np.any(~(arr > 0)):
        raise ValueError("digamma is only implemented for positive arguments")
    z = arr.copy()
    acc = np.zeros_like(z)
    small = z < _SHIFT
    while np.any(small):
        acc[small] -= 1.0 / z[small]
        z[small] += 1.0
        small = z < _SHIFT
    inv2 = 1.0 / (z * z)
    series = np.zeros_like(z)
    for c in reversed(_ASYMPTOTIC):
        series = (series + c) * inv2
    out = acc + np.log(z) - 0.5 / z - series
    if np.ndim(x) == 0:
        return float(out)
    return out
