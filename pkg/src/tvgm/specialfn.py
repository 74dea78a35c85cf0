"""
Scalar special functions used by the covariance models and the scoring rules.

All functions accept scalars or numpy arrays and return the same shape. The
heavy lifting is delegated to :mod:`scipy.special` (Cephes/AMOS); this module
adds domain checking and log-space variants that keep the Matérn normalisation
finite for large smoothness and very small arguments.
"""

import math

import numpy as np
from scipy import special

from .errors import DomainError

LN2 = math.log(2.0)


def _as_float(x, name):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} must be finite, got {x!r}")
    return arr


def _ret(arr):
    return float(arr) if np.ndim(arr) == 0 else arr


def log_gamma(x):
    """Natural log of the gamma function for ``x > 0``."""
    arr = _as_float(x, "x")
    if np.any(arr <= 0):
        raise DomainError(f"log_gamma requires x > 0, got {x!r}")
    return _ret(special.gammaln(arr))


def bessel_k(nu, x):
    """Modified Bessel function of the second kind, :math:`K_\\nu(x)`.

    Negative orders are folded with :math:`K_{-\\nu} = K_\\nu`. Underflows to 0
    for very large ``x``.
    """
    nu_arr = np.abs(_as_float(nu, "nu"))
    x_arr = _as_float(x, "x")
    if np.any(x_arr <= 0):
        raise DomainError(f"bessel_k requires x > 0, got {x!r}")
    return _ret(special.kv(nu_arr, x_arr))


def log_bessel_k(nu, x):
    """:math:`\\log K_\\nu(x)`, finite where :math:`K_\\nu` itself over/underflows.

    Uses the exponentially scaled ``kve``; where that overflows (tiny ``x``,
    large order) the leading small-argument term
    :math:`\\Gamma(\\nu) 2^{\\nu-1} x^{-\\nu}` is used instead.
    """
    nu_arr = np.abs(_as_float(nu, "nu"))
    x_arr = _as_float(x, "x")
    if np.any(x_arr <= 0):
        raise DomainError(f"log_bessel_k requires x > 0, got {x!r}")
    nu_arr, x_arr = np.broadcast_arrays(nu_arr, x_arr)
    with np.errstate(divide="ignore", over="ignore"):
        out = np.log(special.kve(nu_arr, x_arr)) - x_arr
    bad = ~np.isfinite(out)
    if np.any(bad):
        nb, xb = nu_arr[bad], x_arr[bad]
        out = np.array(out, copy=True)
        out[bad] = special.gammaln(nb) + (nb - 1.0) * LN2 - nb * np.log(xb)
    return _ret(out)


def std_normal(z):
    """Standard normal density and distribution function at ``z``.

    Returns
    -------
    (pdf, cdf)
    """
    arr = np.asarray(z, dtype=float)
    if np.any(np.isnan(arr)):
        raise DomainError("std_normal is undefined for NaN")
    pdf = np.exp(-0.5 * arr * arr) / math.sqrt(2.0 * math.pi)
    cdf = special.ndtr(arr)
    return _ret(pdf), _ret(cdf)


def std_normal_quantile(p):
    """Inverse of the standard normal CDF for ``0 < p < 1``."""
    arr = np.asarray(p, dtype=float)
    if np.any(~(arr > 0) | ~(arr < 1)):
        raise DomainError(f"quantile requires 0 < p < 1, got {p!r}")
    return _ret(special.ndtri(arr))
