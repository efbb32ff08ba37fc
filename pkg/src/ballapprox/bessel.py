"""Bessel functions of the first kind, J_nu(z), for real order nu >= 0 and z >= 0.

Two regimes:

* ``z < 12``: ascending power series.
* ``z >= 12``: Hankel asymptotic expansion.  For half-integer orders the
  expansion terminates and is the exact trigonometric closed form; for other
  orders it is truncated at its smallest term.
"""

import math

import numpy as np

from .errors import BesselEvaluationError

CROSSOVER = 12.0
_SERIES_MAX_TERMS = 200
_ASYMPTOTIC_MAX_TERMS = 60
_ASYMPTOTIC_TOL = 1e-10


def is_half_integer(nu):
    return abs(nu - 0.5 - round(nu - 0.5)) < 1e-14


def _series(nu, z):
    half = 0.5 * z
    term = np.power(half, nu) / math.gamma(nu + 1.0)
    total = term.copy()
    q = -half * half
    for k in range(1, _SERIES_MAX_TERMS):
        term = term * q / (k * (k + nu))
        total += term
        if np.all(np.abs(term) <= 1e-17 * np.maximum(np.abs(total), 1e-300)):
            break
    return total


def _asymptotic(nu, z):
    mu = 4.0 * nu * nu
    half_int = is_half_integer(nu)
    p = np.ones_like(z)
    q = np.zeros_like(z)
    a = 1.0
    zk = np.ones_like(z)
    last = np.full_like(z, np.inf)
    active = np.ones(z.shape, dtype=bool)
    smallest = np.zeros_like(z)
    for k in range(1, _ASYMPTOTIC_MAX_TERMS):
        a *= (mu - (2 * k - 1) ** 2) / (8.0 * k)
        if a == 0.0:
            smallest[:] = 0.0
            break
        zk = zk * z
        term = a / zk
        size = np.abs(term)
        if not half_int:
            # stop each element at its smallest term
            active &= size < last
            last = np.where(active, size, last)
            smallest = np.where(active, size, smallest)
            if not active.any():
                break
            term = np.where(active, term, 0.0)
        sign = -1.0 if (k // 2) % 2 else 1.0
        if k % 2:
            q += sign * term
        else:
            p += sign * term
    if not half_int and np.any(smallest > _ASYMPTOTIC_TOL):
        raise BesselEvaluationError(
            f"asymptotic expansion of J_{nu} not accurate for z >= {CROSSOVER}"
        )
    omega = z - (0.5 * nu + 0.25) * math.pi
    return np.sqrt(2.0 / (math.pi * z)) * (p * np.cos(omega) - q * np.sin(omega))


def jv(nu, z):
    """Bessel function of the first kind J_nu(z).

    Parameters
    ----------
    nu : float
        Order, ``nu >= 0``.
    z : float or array_like
        Non-negative arguments.

    Returns
    -------
    float or ndarray
        Same shape as ``z``.
    """
    if nu < 0:
        raise ValueError("order must be non-negative")
    zarr = np.asarray(z, dtype=np.float64)
    if np.any(zarr < 0) or not np.all(np.isfinite(zarr)):
        raise BesselEvaluationError("arguments must be finite and non-negative")
    flat = zarr.ravel()
    out = np.empty_like(flat)
    small = flat < CROSSOVER
    if small.any():
        out[small] = _series(nu, flat[small])
    if (~small).any():
        out[~small] = _asymptotic(nu, flat[~small])
    out = out.reshape(zarr.shape)
    return float(out) if out.ndim == 0 else out
