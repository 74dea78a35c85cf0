"""
Space-time covariance families.

Three nested models are provided:

* :class:`TvarModel` -- time-varying Gneiting-Matérn covariance whose spatial
  scale ``alpha_s(t)`` and smoothness ``nu_s(t)`` are functions of time,
* :class:`GneitModel` -- stationary nonseparable Gneiting-Matérn covariance,
* :class:`SepModel` -- separable Matérn x temporal covariance.

All three share the temporal generator ``a|dt|^(2 gamma) + 1``: raised to
``beta`` it is the Bernstein function ``psi(|dt|^2)`` and raised to ``-delta``
it is the extra purely temporal factor.

Points are passed as float arrays of shape ``(n, k + 1)``: ``k`` spatial
coordinates followed by time. Distances are plain Euclidean on the raw
coordinates (longitude/latitude included).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, ClassVar, NamedTuple, Sequence, Union

import numpy as np
from scipy import special
from scipy.spatial.distance import cdist

from .errors import DomainError, EvaluationError, FactorizationError
from .specialfn import LN2

# ---------------------------------------------------------------------------
# points


class SpaceTimePoint(NamedTuple):
    location: tuple
    time: float

    def as_array(self):
        return np.array([*self.location, self.time], dtype=float)


def as_points(points) -> np.ndarray:
    """Coerce a point, a sequence of points or an array to shape ``(n, k+1)``."""
    if isinstance(points, SpaceTimePoint):
        arr = points.as_array()[None, :]
    elif isinstance(points, np.ndarray):
        arr = np.asarray(points, dtype=float)
    else:
        seq = list(points)
        if seq and isinstance(seq[0], SpaceTimePoint):
            arr = np.array([p.as_array() for p in seq])
        else:
            arr = np.asarray(seq, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] < 2:
        raise DomainError(f"points must have shape (n, k+1), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError("point coordinates must be finite")
    return arr


# ---------------------------------------------------------------------------
# time functions


@dataclass(frozen=True)
class LogPolyFn:
    """``exp(c0 + c1 t + ... + cn t^n)``; strictly positive by construction."""

    coeffs: tuple

    def __post_init__(self):
        c = tuple(float(v) for v in np.atleast_1d(self.coeffs))
        if not c or not all(math.isfinite(v) for v in c):
            raise DomainError(f"log-polynomial coefficients must be finite, got {self.coeffs!r}")
        object.__setattr__(self, "coeffs", c)

    @property
    def order(self):
        return len(self.coeffs) - 1

    @classmethod
    def constant(cls, value):
        return cls((math.log(value),))

    def __call__(self, t):
        return np.exp(np.polynomial.polynomial.polyval(np.asarray(t, dtype=float), self.coeffs))

    def to_dict(self):
        return {"kind": "log_poly", "coeffs": list(self.coeffs)}


def _expit(x):
    return special.expit(x)


# Closed-form truths of the simulation cases, in scaled time t in [0, 1].
# The "_raw" entries read the printed arguments (pi t / 20) literally.
CLOSED_FORMS: dict[str, Callable] = {
    "case1_alpha": lambda t: 20.0 + 15.0 * np.sin(np.pi * t),
    "case1_nu": lambda t: 0.5 + np.sin(np.pi * t),
    "case1_alpha_raw": lambda t: 20.0 + 15.0 * np.sin(np.pi * t / 20.0),
    "case1_nu_raw": lambda t: 0.5 + np.sin(np.pi * t / 20.0),
    "case2_alpha": lambda t: 25.0 - 10.0 * t,
    "case2_nu": lambda t: 0.5 + t,
    "case3_alpha": lambda t: 20.0 - 10.0 * _expit(10.0 * t - 5.0),
    "case3_nu": lambda t: 0.5 + _expit(10.0 * t - 5.0),
    "case4_alpha": lambda t: np.full_like(t, 20.0),
    "case4_nu": lambda t: np.full_like(t, 1.0),
}


@dataclass(frozen=True)
class ClosedFormFn:
    """A named closed-form time function from :data:`CLOSED_FORMS`."""

    name: str

    def __post_init__(self):
        if self.name not in CLOSED_FORMS:
            raise DomainError(f"unknown closed-form time function {self.name!r}")

    def __call__(self, t):
        return np.asarray(CLOSED_FORMS[self.name](np.asarray(t, dtype=float)), dtype=float)

    def to_dict(self):
        return {"kind": "closed_form", "name": self.name}


@dataclass(frozen=True)
class StepFn:
    """Equals ``at_ref`` at time ``t_ref`` and ``elsewhere`` at every other time."""

    t_ref: float
    at_ref: float
    elsewhere: float

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return np.where(t == self.t_ref, self.at_ref, self.elsewhere).astype(float)

    def to_dict(self):
        return {"kind": "step", "t_ref": self.t_ref, "at_ref": self.at_ref,
                "elsewhere": self.elsewhere}


TimeFn = Union[LogPolyFn, ClosedFormFn, StepFn]


def timefn_from_dict(doc) -> TimeFn:
    kind = doc.get("kind", "log_poly")
    if kind == "log_poly":
        return LogPolyFn(tuple(doc["coeffs"]))
    if kind == "closed_form":
        return ClosedFormFn(doc["name"])
    if kind == "step":
        return StepFn(float(doc["t_ref"]), float(doc["at_ref"]), float(doc["elsewhere"]))
    raise DomainError(f"unknown time function kind {kind!r}")


def eval_timefn(f: TimeFn, t):
    """Evaluate a time function; the result must be strictly positive."""
    t_arr = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(t_arr)):
        raise DomainError("time must be finite")
    out = f(t_arr)
    if not np.all(out > 0) or not np.all(np.isfinite(out)):
        raise EvaluationError("time function is not finite and positive", {"fn": f})
    return float(out) if np.ndim(out) == 0 else out


def alpha_bar(alpha_fn: TimeFn, training_times) -> float:
    """Mean of ``alpha_fn`` over the distinct training time points."""
    times = np.unique(np.asarray(training_times, dtype=float))
    if times.size == 0:
        raise DomainError("alpha_bar needs at least one training time")
    return float(np.mean(eval_timefn(alpha_fn, times)))


# ---------------------------------------------------------------------------
# scalar building blocks


def matern(h, alpha, nu):
    """Matérn correlation ``2^(1-nu)/Gamma(nu) (alpha h)^nu K_nu(alpha h)``.

    Vectorised over broadcastable ``h``, ``alpha`` and ``nu``; equals 1 at
    ``h = 0``. Evaluated in log space so large ``nu`` neither overflows the
    gamma function nor the Bessel factor.
    """
    h, alpha, nu = np.broadcast_arrays(np.asarray(h, dtype=float),
                                       np.asarray(alpha, dtype=float),
                                       np.asarray(nu, dtype=float))
    if not (np.all(np.isfinite(h)) and np.all(np.isfinite(alpha)) and np.all(np.isfinite(nu))):
        raise DomainError("matern inputs must be finite")
    z = alpha * h
    out = np.ones(z.shape)
    pos = z > 0
    if np.any(pos):
        zp, nup = z[pos], nu[pos]
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            log_m = ((1.0 - nup) * LN2 - special.gammaln(nup) + nup * np.log(zp)
                     + np.log(special.kve(nup, zp)) - zp)
            vals = np.exp(log_m)
        # kve overflow only happens for z -> 0 where the correlation is 1
        vals = np.where(np.isnan(log_m) | (log_m > 0), 1.0, vals)
        out[pos] = vals
    return float(out) if out.ndim == 0 else out


def bernstein_psi(w, a, gamma, beta):
    """``psi(w) = (a w^gamma + 1)^beta`` for ``w >= 0``."""
    _check_bernstein(a, gamma, beta)
    w = np.asarray(w, dtype=float)
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise DomainError("bernstein_psi requires finite w >= 0")
    out = (a * w ** gamma + 1.0) ** beta
    return float(out) if out.ndim == 0 else out


def _check_bernstein(a, gamma, beta):
    if not (a > 0 and math.isfinite(a)):
        raise DomainError(f"a must be positive, got {a}")
    if not 0 < gamma <= 1:
        raise DomainError(f"gamma must lie in (0, 1], got {gamma}")
    if not 0 <= beta <= 1:
        raise DomainError(f"beta must lie in [0, 1], got {beta}")


def _log_base(a, gamma, dt):
    """``log(a |dt|^(2 gamma) + 1)``."""
    return np.log1p(a * np.abs(dt) ** (2.0 * gamma))


# ---------------------------------------------------------------------------
# models


def _check_common(m):
    for name in ("sigma", "a", "gamma", "delta", "nugget"):
        v = getattr(m, name)
        if not math.isfinite(v):
            raise DomainError(f"{name} must be finite, got {v}")
    if m.sigma <= 0:
        raise DomainError(f"sigma must be positive, got {m.sigma}")
    if m.delta < 0:
        raise DomainError(f"delta must be nonnegative, got {m.delta}")
    if m.nugget < 0:
        raise DomainError(f"nugget must be nonnegative, got {m.nugget}")
    if int(m.d) != m.d or m.d < 1:
        raise DomainError(f"d must be a positive integer, got {m.d}")
    _check_bernstein(m.a, m.gamma, getattr(m, "beta", 0.0))


@dataclass(frozen=True)
class TvarModel:
    """Time-varying model; ``alpha_bar`` is usually set via :meth:`with_training_times`."""

    sigma: float
    a: float
    gamma: float
    beta: float
    delta: float
    alpha_fn: TimeFn
    nu_fn: TimeFn
    alpha_bar: float
    d: int = 2
    nugget: float = 0.0
    variant: ClassVar[str] = "tvar"

    def __post_init__(self):
        _check_common(self)
        if not (self.alpha_bar > 0 and math.isfinite(self.alpha_bar)):
            raise DomainError(f"alpha_bar must be positive, got {self.alpha_bar}")

    def with_training_times(self, times):
        return replace(self, alpha_bar=alpha_bar(self.alpha_fn, times))

    def params(self):
        return {"sigma": self.sigma, "a": self.a, "gamma": self.gamma, "beta": self.beta,
                "delta": self.delta, "alpha_bar": self.alpha_bar, "d": self.d,
                "nugget": self.nugget}


@dataclass(frozen=True)
class GneitModel:
    sigma: float
    a: float
    gamma: float
    beta: float
    delta: float
    alpha: float
    nu: float
    d: int = 2
    nugget: float = 0.0
    variant: ClassVar[str] = "gneit"

    def __post_init__(self):
        _check_common(self)
        _check_scale_smooth(self.alpha, self.nu)

    def params(self):
        return {"sigma": self.sigma, "a": self.a, "gamma": self.gamma, "beta": self.beta,
                "delta": self.delta, "alpha": self.alpha, "nu": self.nu, "d": self.d,
                "nugget": self.nugget}


@dataclass(frozen=True)
class SepModel:
    sigma: float
    a: float
    gamma: float
    delta: float
    alpha: float
    nu: float
    d: int = 2
    nugget: float = 0.0
    beta: ClassVar[float] = 0.0
    variant: ClassVar[str] = "sep"

    def __post_init__(self):
        _check_common(self)
        _check_scale_smooth(self.alpha, self.nu)

    def params(self):
        return {"sigma": self.sigma, "a": self.a, "gamma": self.gamma, "delta": self.delta,
                "alpha": self.alpha, "nu": self.nu, "d": self.d, "nugget": self.nugget}


def _check_scale_smooth(alpha, nu):
    if not (alpha > 0 and math.isfinite(alpha)):
        raise DomainError(f"alpha must be positive, got {alpha}")
    if not (nu > 0 and math.isfinite(nu)):
        raise DomainError(f"nu must be positive, got {nu}")


CovarianceModel = Union[TvarModel, GneitModel, SepModel]
VARIANTS = {"tvar": TvarModel, "gneit": GneitModel, "sep": SepModel}


def model_to_dict(model: CovarianceModel) -> dict:
    doc = {"variant": model.variant, "sigma": model.sigma, "a": model.a,
           "gamma": model.gamma, "delta": model.delta, "d": int(model.d),
           "nugget": model.nugget}
    if model.variant != "sep":
        doc["beta"] = model.beta
    if model.variant == "tvar":
        doc["alpha_bar"] = model.alpha_bar
        for key, fn in (("alpha", model.alpha_fn), ("nu", model.nu_fn)):
            if isinstance(fn, LogPolyFn):
                doc[f"{key}_log_poly"] = list(fn.coeffs)
            else:
                doc[f"{key}_fn"] = fn.to_dict()
    else:
        doc["alpha"] = model.alpha
        doc["nu"] = model.nu
    return doc


def model_from_dict(doc: dict) -> CovarianceModel:
    variant = doc.get("variant")
    if variant not in VARIANTS:
        raise DomainError(f"unknown model variant {variant!r}")
    common = dict(sigma=float(doc["sigma"]), a=float(doc["a"]), gamma=float(doc["gamma"]),
                  delta=float(doc["delta"]), d=int(doc.get("d", 2)),
                  nugget=float(doc.get("nugget", 0.0)))
    if variant == "sep":
        return SepModel(alpha=float(doc["alpha"]), nu=float(doc["nu"]), **common)
    if variant == "gneit":
        return GneitModel(beta=float(doc["beta"]), alpha=float(doc["alpha"]),
                          nu=float(doc["nu"]), **common)
    fns = {}
    for key in ("alpha", "nu"):
        if f"{key}_log_poly" in doc:
            fns[key] = LogPolyFn(tuple(doc[f"{key}_log_poly"]))
        else:
            fns[key] = timefn_from_dict(doc[f"{key}_fn"])
    return TvarModel(beta=float(doc["beta"]), alpha_fn=fns["alpha"], nu_fn=fns["nu"],
                     alpha_bar=float(doc["alpha_bar"]), **common)


# ---------------------------------------------------------------------------
# covariance evaluation


def _tvar_terms(m: TvarModel, ti, tj):
    """Per time pair: log prefactor, Matérn scale and pooled smoothness."""
    ai, aj = m.alpha_fn(ti), m.alpha_fn(tj)
    ni, nj = m.nu_fn(ti), m.nu_fn(tj)
    lb = _log_base(m.a, m.gamma, ti - tj)
    # 1/zeta^2 with psi(0) = 1 cancelled analytically
    inv_z2 = np.expm1(m.beta * lb) / m.alpha_bar ** 2 + 0.5 * (1.0 / ai ** 2 + 1.0 / aj ** 2)
    nu_ij = 0.5 * (ni + nj)
    half_d = 0.5 * m.d
    log_pref = (special.gammaln(nu_ij) - 0.5 * (special.gammaln(ni) + special.gammaln(nj))
                - half_d * (np.log(ai) + np.log(aj)) - half_d * np.log(inv_z2)
                - m.delta * lb)
    return log_pref, 1.0 / np.sqrt(inv_z2), nu_ij


def _cov(model: CovarianceModel, ti, tj, h):
    """Process covariance (no nugget) for broadcastable times and distances."""
    s2 = model.sigma ** 2
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        if model.variant == "tvar":
            log_pref, scale, nu_ij = _tvar_terms(model, ti, tj)
            out = s2 * np.exp(log_pref) * matern(h, scale, nu_ij)
        elif model.variant == "gneit":
            lb = _log_base(model.a, model.gamma, ti - tj)
            out = (s2 * np.exp(-(0.5 * model.beta * model.d + model.delta) * lb)
                   * matern(h, model.alpha * np.exp(-0.5 * model.beta * lb), model.nu))
        else:
            lb = _log_base(model.a, model.gamma, ti - tj)
            out = s2 * np.exp(-model.delta * lb) * matern(h, model.alpha, model.nu)
    return out


def _model_params_for_error(model):
    doc = model_to_dict(model)
    return {k: v for k, v in doc.items() if k != "variant"}


def cov_eval(model: CovarianceModel, p1, p2) -> float:
    """Covariance between two space-time points (nugget added iff ``p1 == p2``)."""
    a, b = as_points(p1)[0], as_points(p2)[0]
    if a.shape != b.shape:
        raise DomainError("points have different dimensions")
    h = float(np.sqrt(np.sum((a[:-1] - b[:-1]) ** 2)))
    try:
        val = float(_cov(model, a[-1], b[-1], h))
    except DomainError as exc:
        raise EvaluationError(str(exc), _model_params_for_error(model)) from exc
    if not math.isfinite(val):
        raise EvaluationError("non-finite covariance", _model_params_for_error(model))
    if np.array_equal(a, b):
        val += model.nugget
    return val


def purely_temporal(model: CovarianceModel, t_i, t_j):
    """Process covariance at zero spatial lag between times ``t_i`` and ``t_j``."""
    ti = np.asarray(t_i, dtype=float)
    tj = np.asarray(t_j, dtype=float)
    out = _cov(model, ti, tj, 0.0)
    if not np.all(np.isfinite(out)):
        raise EvaluationError("non-finite covariance", _model_params_for_error(model))
    return float(out) if np.ndim(out) == 0 else out


def dedupe_distances(D):
    """Unique distances (rounded to 13 significant digits of the largest) and inverse map.

    Grid coordinates produce the same lag with last-bit differences; rounding
    collapses them so the covariance is evaluated once per distinct lag.
    """
    D = np.asarray(D, dtype=float)
    scale = float(D.max()) if D.size and D.max() > 0 else 1.0
    uq, inv = np.unique(np.round(D / scale, 13), return_inverse=True)
    return uq * scale, inv.reshape(D.shape)


def _unique_rows(x):
    u, inv = np.unique(x, axis=0, return_inverse=True)
    return u, np.asarray(inv).reshape(-1)


def cross_cov(model: CovarianceModel, points_a, points_b=None) -> np.ndarray:
    """Process cross-covariance matrix (no nugget) between two point sets.

    The covariance is evaluated once per distinct (time_a, time_b, distance)
    combination and gathered. Gridded inputs use a dense table over distinct
    times and distinct location distances; other inputs find the distinct
    combinations by sorting.
    """
    A = as_points(points_a)
    B = A if points_b is None else as_points(points_b)
    if A.shape[1] != B.shape[1]:
        raise DomainError("point sets have different dimensions")
    na, nb = len(A), len(B)
    ta_u, ta_i = np.unique(A[:, -1], return_inverse=True)
    tb_u, tb_i = np.unique(B[:, -1], return_inverse=True)
    la_u, la_i = _unique_rows(A[:, :-1])
    lb_u, lb_i = _unique_rows(B[:, :-1])
    try:
        if len(la_u) * len(lb_u) * 4 <= na * nb and len(ta_u) * len(tb_u) < na * nb:
            dvals, dinv = dedupe_distances(cdist(la_u, lb_u))
            if len(ta_u) * len(tb_u) * len(dvals) < na * nb:
                table = _cov(model, ta_u[:, None, None], tb_u[None, :, None],
                             dvals[None, None, :])
                out = table[ta_i[:, None], tb_i[None, :], dinv[la_i[:, None], lb_i[None, :]]]
                return _finite_or_raise(out, model)
        h = cdist(A[:, :-1], B[:, :-1])
        if na * nb <= 256:
            out = _cov(model, A[:, -1][:, None], B[:, -1][None, :], h)
        else:
            dvals, dinv = dedupe_distances(h)
            keys = (ta_i[:, None] * len(tb_u) + tb_i[None, :]) * len(dvals) + dinv
            ukeys, kinv = np.unique(keys, return_inverse=True)
            pair, dq = np.divmod(ukeys, len(dvals))
            vals = _cov(model, ta_u[pair // len(tb_u)], tb_u[pair % len(tb_u)], dvals[dq])
            out = vals[kinv.reshape(keys.shape)]
    except DomainError as exc:
        raise EvaluationError(str(exc), _model_params_for_error(model)) from exc
    return _finite_or_raise(out, model)


def _finite_or_raise(out, model):
    if not np.all(np.isfinite(out)):
        raise EvaluationError("non-finite covariance entries", _model_params_for_error(model))
    return out


def build_cov_matrix(model: CovarianceModel, points) -> np.ndarray:
    """Covariance matrix of the process observed at ``points`` (nugget on the diagonal)."""
    K = cross_cov(model, points)
    if model.nugget:
        K[np.diag_indices_from(K)] += model.nugget
    return K


# ---------------------------------------------------------------------------
# factorisation with the jitter policy

JITTER_START = 1e-10
JITTER_MAX = 1e-4


def cholesky_jitter(K, variance, block=None):
    """Lower Cholesky factor of ``K``, adding diagonal jitter on failure.

    Jitter starts at ``1e-10 * variance`` and grows tenfold up to
    ``1e-4 * variance``. Only the lower triangle of ``K`` is read.

    Returns
    -------
    (L, jitter) where ``jitter`` is the amount added (0 if none).
    """
    K = np.asarray(K, dtype=float)
    if not np.all(np.isfinite(K[np.tril_indices_from(K)])):
        raise FactorizationError("matrix has non-finite entries", block=block)
    try:
        return np.linalg.cholesky(K), 0.0
    except np.linalg.LinAlgError:
        pass
    jitter = JITTER_START * variance
    eye = np.eye(K.shape[0])
    while jitter <= JITTER_MAX * variance * (1 + 1e-12):
        try:
            return np.linalg.cholesky(K + jitter * eye), jitter
        except np.linalg.LinAlgError:
            jitter *= 10.0
    full = np.tril(K) + np.tril(K, -1).T
    ev = np.linalg.eigvalsh(full)
    diag = {"n": int(K.shape[0]), "min_eig": float(ev[0]), "max_eig": float(ev[-1]),
            "cond": float(ev[-1] / ev[0]) if ev[0] > 0 else float("inf"),
            "max_jitter": JITTER_MAX * variance}
    raise FactorizationError("Cholesky failed after maximal jitter", diag, block=block)


# ---------------------------------------------------------------------------
# validity diagnostics


def inverse_scale_matrix(model: TvarModel, times) -> np.ndarray:
    """Matrix ``Q_ij = 1 / zeta(t_i, t_j)^2`` of the time-varying construction."""
    t = np.asarray(times, dtype=float)
    ti, tj = t[:, None], t[None, :]
    ai, aj = model.alpha_fn(ti), model.alpha_fn(tj)
    lb = _log_base(model.a, model.gamma, ti - tj)
    return np.expm1(model.beta * lb) / model.alpha_bar ** 2 + 0.5 * (1.0 / ai ** 2 + 1.0 / aj ** 2)


def cnd_violation(Q, trials=1000, seed=0) -> float:
    """Largest ``x^T Q x`` over random unit-norm contrast vectors (``sum x = 0``)."""
    Q = np.asarray(Q, dtype=float)
    n = Q.shape[0]
    if n < 2:
        raise DomainError("need at least two rows for contrast vectors")
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((trials, n))
    X -= X.mean(axis=1, keepdims=True)
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    return float(np.max(np.einsum("ki,ij,kj->k", X, Q, X)))


def cnd_check(model: TvarModel, times, trials=1000, seed=0) -> float:
    """Numerical conditional-negative-definiteness check of ``1/zeta^2``."""
    times = np.asarray(times, dtype=float)
    if times.size < 2:
        raise DomainError("cnd_check needs at least two times")
    return cnd_violation(inverse_scale_matrix(model, times), trials, seed)
