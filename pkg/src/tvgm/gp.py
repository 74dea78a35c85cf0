"""
Exact Gaussian-process machinery: simulation, log-likelihood and kriging.

Everything is dense. Random normals come from numpy's ``default_rng`` (PCG64)
via ``standard_normal``, drawn sequentially, so a seed fixes the output on
every platform numpy supports.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DataError, DomainError, NumericalError
from .kernels import as_points, build_cov_matrix, cholesky_jitter, cross_cov
from .specialfn import std_normal_quantile

LOG_2PI = math.log(2.0 * math.pi)
VARIANCE_CLAMP = 1e-10


@dataclass
class Dataset:
    """Observed values at space-time points (rows of ``points`` are ``(x, y, ..., t)``)."""

    points: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.points = as_points(self.points) if len(self.points) else np.zeros((0, 3))
        self.values = np.asarray(self.values, dtype=float).reshape(-1)
        if len(self.points) != len(self.values):
            raise DataError(f"{len(self.points)} points but {len(self.values)} values")
        if not np.all(np.isfinite(self.values)):
            raise DataError("values must be finite")

    def __len__(self):
        return len(self.values)

    @property
    def times(self):
        return self.points[:, -1]

    @property
    def locations(self):
        return self.points[:, :-1]

    def subset(self, idx):
        return Dataset(self.points[idx], self.values[idx])


def duplicate_rows(points) -> list:
    """Indices of rows whose coordinates repeat an earlier row."""
    pts = np.asarray(points, dtype=float)
    if len(pts) == 0:
        return []
    _, first, inv = np.unique(pts, axis=0, return_index=True, return_inverse=True)
    inv = np.asarray(inv).reshape(-1)
    return [i for i in range(len(pts)) if first[inv[i]] != i]


@dataclass
class PredictiveDistribution:
    targets: np.ndarray
    mean: np.ndarray
    variance: np.ndarray

    def __post_init__(self):
        self.targets = as_points(self.targets)
        self.mean = np.asarray(self.mean, dtype=float).reshape(-1)
        self.variance = np.asarray(self.variance, dtype=float).reshape(-1)
        if not len(self.targets) == len(self.mean) == len(self.variance):
            raise DomainError("targets, mean and variance lengths differ")

    @property
    def sd(self):
        return np.sqrt(self.variance)

    def to_csv(self, path, probs=()):
        """Write columns x, y, t, mean, variance and ``lo_p``/``hi_p`` per requested p."""
        bounds = [(p, *prediction_interval(self, p)) for p in probs]
        header = ["x", "y", "t", "mean", "variance"]
        for p, _, _ in bounds:
            header += [f"lo_{p:g}", f"hi_{p:g}"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for i, row in enumerate(self.targets):
                vals = [*row, self.mean[i], self.variance[i]]
                for _, lo, hi in bounds:
                    vals += [lo[i], hi[i]]
                w.writerow([repr(float(v)) for v in vals])


def _variance(model):
    return model.sigma ** 2 + model.nugget


def simulate_gp(model, points, seed) -> np.ndarray:
    """Draw one zero-mean realisation at ``points``.

    The noise-free process is drawn at the distinct points (so coincident
    points share a value) and independent nugget noise is added afterwards.
    """
    pts = as_points(points)
    uniq, inv = np.unique(pts, axis=0, return_inverse=True)
    inv = np.asarray(inv).reshape(-1)
    rng = np.random.default_rng(seed)
    K = cross_cov(model, uniq)
    L, _ = cholesky_jitter(K, model.sigma ** 2)
    x = (L @ rng.standard_normal(len(uniq)))[inv]
    if model.nugget > 0:
        x = x + math.sqrt(model.nugget) * rng.standard_normal(len(pts))
    return x


def loglik_from_chol(L, x) -> float:
    """Gaussian log-density of ``x`` given the lower Cholesky factor of its covariance."""
    z = solve_triangular(L, x, lower=True, check_finite=False)
    logdet = 2.0 * np.sum(np.log(np.diag(L)))
    return -0.5 * (logdet + float(z @ z) + len(x) * LOG_2PI)


def full_loglik(model, data: Dataset) -> float:
    """Exact log-likelihood ``-(log det S + x' S^-1 x + N log 2 pi) / 2``."""
    if len(data) == 0:
        raise DataError("empty dataset")
    K = build_cov_matrix(model, data.points)
    L, _ = cholesky_jitter(K, _variance(model))
    return loglik_from_chol(L, data.values)


def krige(model, observed: Dataset, targets, batch=2000) -> PredictiveDistribution:
    """Simple kriging (zero mean) of ``targets`` given all of ``observed``.

    Cross-covariances leave out the nugget, and the prior variance of a target
    is ``sigma^2 + nugget``, i.e. the law of a fresh noisy observation.
    """
    if len(observed) == 0:
        raise DataError("kriging needs at least one observation")
    tg = as_points(targets)
    c0 = _variance(model)
    L, _ = cholesky_jitter(build_cov_matrix(model, observed.points), c0)
    w = solve_triangular(L, observed.values, lower=True, check_finite=False)
    mean = np.empty(len(tg))
    var = np.empty(len(tg))
    for s in range(0, len(tg), batch):
        k = cross_cov(model, observed.points, tg[s:s + batch])
        v = solve_triangular(L, k, lower=True, check_finite=False)
        mean[s:s + batch] = v.T @ w
        var[s:s + batch] = c0 - np.einsum("ij,ij->j", v, v)
    low = var < 0
    if np.any(var < -VARIANCE_CLAMP * c0):
        raise NumericalError(
            f"kriging variance {var.min():.3e} is negative beyond round-off; "
            "the observation covariance is too ill-conditioned")
    var[low] = 0.0
    return PredictiveDistribution(tg, mean, var)


def prediction_interval(pd: PredictiveDistribution, p: float):
    """Central p-interval ``mean -/+ q_{(1+p)/2} sd`` per target."""
    if not 0 < p < 1:
        raise DomainError(f"p must lie in (0, 1), got {p}")
    half = std_normal_quantile(0.5 * (1.0 + p)) * pd.sd
    return pd.mean - half, pd.mean + half


def time_step(times) -> float:
    """Smallest positive spacing between distinct times (0 if only one time)."""
    u = np.unique(np.asarray(times, dtype=float))
    return float(np.min(np.diff(u))) if len(u) > 1 else 0.0


def neighborhood_select(observed: Dataset, target_time: float, mode="interpolate",
                        window=6, time_range=None) -> Dataset:
    """Observations used to krige at ``target_time``.

    Parameters
    ----------
    mode : {"interpolate", "forecast"}
        ``interpolate`` keeps ``|t - target_time| <= window * dt`` with ``dt``
        the data's time spacing. ``forecast`` keeps ``time_range = (lo, hi)``
        when given, else the last ``window`` distinct times not after
        ``target_time``.
    """
    if window is not None and not window > 0:
        raise DomainError(f"window must be positive, got {window}")
    t = observed.times
    dt = time_step(t)
    tol = 1e-9 * max(1.0, abs(target_time))
    if mode == "interpolate":
        keep = np.abs(t - target_time) <= window * dt + tol
    elif mode == "forecast":
        if time_range is not None:
            lo, hi = time_range
            keep = (t >= lo - tol) & (t <= hi + tol)
        else:
            past = np.unique(t[t <= target_time + tol])
            keep = np.isin(t, past[-int(window):]) if len(past) else np.zeros(len(t), bool)
    else:
        raise DomainError(f"unknown neighbourhood mode {mode!r}")
    if not np.any(keep):
        raise DataError(f"no observations in the {mode} neighbourhood of t={target_time}; "
                        "use a larger window")
    return observed.subset(np.flatnonzero(keep))
