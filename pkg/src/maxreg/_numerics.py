"""Small numerical kernels shared by the solvers."""

import math

import numpy as np

_SERIES_RADIUS = 1.0
_SERIES_TERMS = 30


def _series(z, k):
    out = np.zeros_like(z)
    term = np.full_like(z, 1.0 / math.factorial(k))
    for j in range(_SERIES_TERMS):
        out = out + term
        term = term * z / (j + k + 1)
    return out


def phi1(z):
    """``(e^z - 1) / z`` with the removable singularity at 0 filled in."""
    z = np.asarray(z, dtype=complex)
    small = np.abs(z) < _SERIES_RADIUS
    safe = np.where(small, 1.0, z)
    return np.where(small, _series(z, 1), np.expm1(safe) / safe)


def phi2(z):
    """``(e^z - 1 - z) / z^2``."""
    z = np.asarray(z, dtype=complex)
    small = np.abs(z) < _SERIES_RADIUS
    safe = np.where(small, 1.0, z)
    return np.where(small, _series(z, 2), (np.expm1(safe) - safe) / safe**2)


def fd_weights(z0, nodes, deriv):
    """Finite-difference weights for the ``deriv``-th derivative at ``z0``.

    Fornberg's recursion; ``nodes`` may be arbitrarily spaced.
    """
    x = np.asarray(nodes, dtype=float)
    n = len(x)
    c = np.zeros((n, deriv + 1))
    c1, c4 = 1.0, x[0] - z0
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, deriv)
        c2, c5, c4 = 1.0, c4, x[i] - z0
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, deriv]


def fd_derivative(values, h, deriv, width=None):
    """Derivative of uniformly sampled data along the last axis.

    Uses ``width``-point stencils (centred in the interior, shifted near the
    ends), default ``deriv + 5`` points.
    """
    values = np.asarray(values)
    n = values.shape[-1]
    width = deriv + 5 if width is None else width
    if n < width:
        raise ValueError("not enough samples for the requested stencil")
    out = np.empty(values.shape, dtype=np.result_type(values, float))
    half = width // 2
    cache = {}
    for i in range(n):
        start = min(max(i - half, 0), n - width)
        key = i - start
        if key not in cache:
            cache[key] = fd_weights(key, np.arange(width), deriv) / h**deriv
        out[..., i] = values[..., start:start + width] @ cache[key]
    return out
