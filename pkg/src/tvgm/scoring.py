"""
Verification of Gaussian predictive distributions.

CRPS and the log score are negatively oriented (lower is better). The
goodness statistic ``G`` integrates the coverage error of central p-intervals
over p, weighting under-coverage twice as much as over-coverage::

    G = 1 - int_0^1 (3 a(p) - 2) (coverage(p) - p) dp,   a(p) = 1{coverage(p) >= p}
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .gp import PredictiveDistribution
from .specialfn import std_normal, std_normal_quantile

DEFAULT_P_GRID = np.round(np.arange(1, 100) / 100.0, 2)
_INV_SQRT_PI = 1.0 / math.sqrt(math.pi)


def _pair(a, b, what):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise DomainError(f"{what}: length mismatch {a.shape} vs {b.shape}")
    if a.size == 0:
        raise DomainError(f"{what}: empty input")
    return a, b


def rmse(pred_means, truths) -> float:
    m, y = _pair(pred_means, truths, "rmse")
    return float(np.sqrt(np.mean((m - y) ** 2)))


def crps_gaussian(y, mu, sigma):
    """CRPS of N(mu, sigma^2) at ``y``; ``sigma = 0`` gives ``|y - mu|``."""
    y, mu, sigma = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (y, mu, sigma)))
    sigma_in = sigma
    if np.any(sigma < 0):
        raise DomainError("sigma must be nonnegative")
    out = np.atleast_1d(np.abs(y - mu).astype(float))
    sigma, y, mu = np.atleast_1d(sigma), np.atleast_1d(y), np.atleast_1d(mu)
    pos = sigma > 0
    if np.any(pos):
        s = sigma[pos]
        z = (y[pos] - mu[pos]) / s
        pdf, cdf = std_normal(z)
        out[pos] = s * (z * (2.0 * cdf - 1.0) + 2.0 * pdf - _INV_SQRT_PI)
    return float(out[0]) if np.ndim(sigma_in) == 0 else out.reshape(np.shape(sigma_in))


def log_score(y, mu, sigma):
    """Negative log density of N(mu, sigma^2) at ``y``."""
    y, mu, sigma = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (y, mu, sigma)))
    if np.any(sigma <= 0):
        raise DomainError("log score needs sigma > 0")
    out = 0.5 * np.log(2.0 * math.pi * sigma ** 2) + (y - mu) ** 2 / (2.0 * sigma ** 2)
    return float(out) if out.ndim == 0 else out


def _check_grid(p_grid):
    p = np.asarray(p_grid, dtype=float)
    if p.size == 0 or np.any(p <= 0) or np.any(p >= 1):
        raise DomainError("p_grid must be non-empty and inside (0, 1)")
    if np.any(np.diff(p) <= 0):
        raise DomainError("p_grid must be strictly increasing")
    return p


def coverage_and_width(pd: PredictiveDistribution, truths, p_grid=DEFAULT_P_GRID):
    """Fraction of truths inside each central p-interval and the mean interval width."""
    p = _check_grid(p_grid)
    mu, y = _pair(pd.mean, truths, "coverage")
    sd = pd.sd
    q = std_normal_quantile(0.5 * (1.0 + p))
    dev = np.abs(y - mu)
    cover = np.mean(dev[None, :] <= q[:, None] * sd[None, :], axis=1)
    width = 2.0 * float(np.mean(sd)) * q
    return cover, width


def goodness_g(p_grid, empirical_coverage) -> float:
    """Trapezoid-rule goodness statistic on ``p_grid``."""
    p = _check_grid(p_grid)
    xi = np.asarray(empirical_coverage, dtype=float)
    if xi.shape != p.shape:
        raise DomainError("coverage and p_grid lengths differ")
    a = (xi >= p).astype(float)
    integrand = (3.0 * a - 2.0) * (xi - p)
    return float(1.0 - np.trapezoid(integrand, p))


@dataclass
class ScoreReport:
    rmse: float
    mcrps: float
    mlogs: float
    g: float
    p_grid: np.ndarray
    empirical_coverage: np.ndarray
    avg_width: np.ndarray
    n: int

    def to_dict(self):
        return {"rmse": self.rmse, "mcrps": self.mcrps, "mlogs": self.mlogs, "g": self.g,
                "n": self.n, "p_grid": self.p_grid.tolist(),
                "empirical_coverage": self.empirical_coverage.tolist(),
                "avg_width": self.avg_width.tolist()}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def curves_to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["p", "coverage", "width"])
            for row in zip(self.p_grid, self.empirical_coverage, self.avg_width):
                w.writerow([repr(float(v)) for v in row])


def score(pd: PredictiveDistribution, truths, p_grid=DEFAULT_P_GRID) -> ScoreReport:
    """All scores with equal weight per validation point.

    The log score is infinite when a predictive sd is 0 and the truth differs
    from the mean; zero-variance points matching exactly contribute ``-inf``.
    Both are reported as is.
    """
    mu, y = _pair(pd.mean, truths, "score")
    sd = pd.sd
    cover, width = coverage_and_width(pd, y, p_grid)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        ls = np.where(sd > 0, 0.5 * np.log(2.0 * math.pi * sd ** 2)
                      + (y - mu) ** 2 / (2.0 * np.where(sd > 0, sd, 1.0) ** 2),
                      np.where(y == mu, -np.inf, np.inf))
        mlogs = float(np.mean(ls))
    return ScoreReport(rmse=rmse(mu, y), mcrps=float(np.mean(crps_gaussian(y, mu, sd))),
                       mlogs=mlogs, g=goodness_g(p_grid, cover),
                       p_grid=np.asarray(p_grid, dtype=float), empirical_coverage=cover,
                       avg_width=width, n=int(len(y)))
