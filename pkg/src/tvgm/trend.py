"""
Deterministic space-time mean: two harmonic pairs in time, a linear time
term, and location terms interacting with t, t^2, t^3 and t^4.

For 2-D locations the design row is::

    [1, sin(w1 t), cos(w1 t), sin(w2 t), cos(w2 t), t,
     s1, s2, s1 t, s2 t, s1 t^2, s2 t^2, s1 t^3, s2 t^3, s1 t^4, s2 t^4]

with default angular frequencies ``w1 = 4 pi`` and ``w2 = 16 pi``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import DataError
from .gp import Dataset, PredictiveDistribution
from .kernels import as_points

DEFAULT_FREQUENCIES = (4.0 * math.pi, 16.0 * math.pi)


def column_names(k=2):
    names = ["intercept", "sin_w1", "cos_w1", "sin_w2", "cos_w2", "t"]
    for p in range(5):
        suffix = "" if p == 0 else ("_t" if p == 1 else f"_t{p}")
        names += [f"s{j + 1}{suffix}" for j in range(k)]
    return names


def design_matrix(points, frequencies=DEFAULT_FREQUENCIES) -> np.ndarray:
    pts = as_points(points)
    s, t = pts[:, :-1], pts[:, -1]
    w1, w2 = frequencies
    cols = [np.ones_like(t), np.sin(w1 * t), np.cos(w1 * t), np.sin(w2 * t),
            np.cos(w2 * t), t]
    for p in range(5):
        cols += list((s * t[:, None] ** p).T)
    return np.column_stack(cols)


def build_design_row(point, frequencies=DEFAULT_FREQUENCIES) -> np.ndarray:
    return design_matrix(point, frequencies)[0]


@dataclass
class TrendModel:
    coefficients: np.ndarray
    frequencies: tuple = DEFAULT_FREQUENCIES

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=float)
        if not np.all(np.isfinite(self.coefficients)):
            raise DataError("trend coefficients must be finite")
        k = (len(self.coefficients) - 6) / 5
        if k < 1 or k != int(k):
            raise DataError(f"{len(self.coefficients)} coefficients do not match the design")
        self.frequencies = tuple(float(f) for f in self.frequencies)

    @property
    def names(self):
        return column_names((len(self.coefficients) - 6) // 5)

    def mean(self, points):
        return design_matrix(points, self.frequencies) @ self.coefficients

    def to_dict(self):
        return {"coefficients": dict(zip(self.names, map(float, self.coefficients))),
                "order": self.names, "frequencies": list(self.frequencies)}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, doc):
        coef = doc["coefficients"]
        vals = [coef[n] for n in doc["order"]]
        return cls(np.array(vals), tuple(doc.get("frequencies", DEFAULT_FREQUENCIES)))


def ols_fit(points, values, frequencies=DEFAULT_FREQUENCIES) -> TrendModel:
    """Least squares through a column-pivoted QR factorisation.

    Raises
    ------
    DataError
        Too few observations, or a design whose pivoted QR reveals columns
        that are linear combinations of the others (they are named).
    """
    X = design_matrix(points, frequencies)
    y = np.asarray(values, dtype=float)
    n, p = X.shape
    names = column_names((p - 6) // 5)
    if n < p:
        raise DataError(f"trend needs at least {p} observations, got {n}")
    Q, R, piv = linalg.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    tol = diag[0] * max(n, p) * np.finfo(float).eps
    rank = int(np.sum(diag > tol))
    if rank < p:
        bad = [names[j] for j in piv[rank:]]
        raise DataError(f"trend design is rank deficient ({rank} < {p}); "
                        f"collinear columns: {', '.join(bad)}")
    beta_piv = linalg.solve_triangular(R, Q.T @ y)
    beta = np.empty(p)
    beta[piv] = beta_piv
    return TrendModel(beta, frequencies)


def detrend(model: TrendModel, data: Dataset) -> Dataset:
    return Dataset(data.points, data.values - model.mean(data.points))


def retrend(model: TrendModel, pd: PredictiveDistribution) -> PredictiveDistribution:
    return PredictiveDistribution(pd.targets, pd.mean + model.mean(pd.targets), pd.variance)
