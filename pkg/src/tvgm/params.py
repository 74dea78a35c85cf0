"""
Parameter vectors for the covariance models.

A :class:`ParamMap` fixes which parameters are free, orders them, converts a
natural-space vector to a model (recomputing ``alpha_bar`` from the training
times every time) and maps natural values to an unconstrained space for the
optimizer:

* log for sigma, a, alpha, nu
* logit for gamma and beta, clamped to ``[1e-9, 1 - 1e-9]``
* ``log(delta + offset)`` for delta, ``log(nugget + 1e-8)`` for the nugget
* identity for log-polynomial coefficients
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .errors import DomainError
from .kernels import GneitModel, LogPolyFn, SepModel, TvarModel, alpha_bar

BOUNDARY_CLAMP = 1e-9
DELTA_OFFSET = 1e-8
NUGGET_OFFSET = 1e-8

_BASE = {
    "tvar": ["sigma", "a", "gamma", "beta", "delta"],
    "gneit": ["sigma", "a", "gamma", "beta", "delta", "alpha", "nu"],
    "sep": ["sigma", "a", "gamma", "delta", "alpha", "nu"],
}
_LOG = {"sigma", "a", "alpha", "nu"}
_LOGIT = {"gamma", "beta"}


def param_names(variant, alpha_order=0, nu_order=0):
    """All parameter names of a variant in canonical order (nugget last)."""
    if variant not in _BASE:
        raise DomainError(f"unknown model variant {variant!r}")
    names = list(_BASE[variant])
    if variant == "tvar":
        names += [f"alpha_c{k}" for k in range(alpha_order + 1)]
        names += [f"nu_c{k}" for k in range(nu_order + 1)]
    return names + ["nugget"]


def _logit(p):
    p = min(max(p, BOUNDARY_CLAMP), 1.0 - BOUNDARY_CLAMP)
    return math.log(p) - math.log1p(-p)


@dataclass
class ParamMap:
    variant: str
    training_times: np.ndarray
    alpha_order: int = 0
    nu_order: int = 0
    fixed: dict = field(default_factory=dict)
    d: int = 2
    delta_offset: float = DELTA_OFFSET

    def __post_init__(self):
        if self.alpha_order < 0 or self.nu_order < 0:
            raise DomainError("polynomial orders must be >= 0")
        self.all_names = param_names(self.variant, self.alpha_order, self.nu_order)
        bad = sorted(set(self.fixed) - set(self.all_names))
        if bad:
            raise DomainError(f"fixed parameters {bad} are not parameters of {self.variant}")
        self.training_times = np.unique(np.asarray(self.training_times, dtype=float))
        if self.training_times.size == 0:
            raise DomainError("training times are empty")
        self.names = [n for n in self.all_names if n not in self.fixed]

    def __len__(self):
        return len(self.names)

    # natural <-> model -----------------------------------------------------

    def full_dict(self, theta):
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (len(self.names),):
            raise DomainError(f"expected {len(self.names)} free values, got shape {theta.shape}")
        vals = dict(self.fixed)
        vals.update(zip(self.names, (float(v) for v in theta)))
        vals.setdefault("nugget", 0.0)
        return vals

    def to_model(self, theta):
        v = self.full_dict(theta)
        common = dict(sigma=v["sigma"], a=v["a"], gamma=v["gamma"], delta=v["delta"],
                      d=self.d, nugget=v["nugget"])
        if self.variant == "sep":
            return SepModel(alpha=v["alpha"], nu=v["nu"], **common)
        if self.variant == "gneit":
            return GneitModel(beta=v["beta"], alpha=v["alpha"], nu=v["nu"], **common)
        afn = LogPolyFn(tuple(v[f"alpha_c{k}"] for k in range(self.alpha_order + 1)))
        nfn = LogPolyFn(tuple(v[f"nu_c{k}"] for k in range(self.nu_order + 1)))
        return TvarModel(beta=v["beta"], alpha_fn=afn, nu_fn=nfn,
                         alpha_bar=alpha_bar(afn, self.training_times), **common)

    def from_model(self, model):
        """Natural free vector of ``model`` (time functions must be log-polynomials)."""
        if model.variant != self.variant:
            raise DomainError(f"model is {model.variant}, map is {self.variant}")
        vals = {"sigma": model.sigma, "a": model.a, "gamma": model.gamma,
                "beta": getattr(model, "beta", 0.0), "delta": model.delta,
                "nugget": model.nugget}
        if self.variant == "tvar":
            for key, fn, order in (("alpha", model.alpha_fn, self.alpha_order),
                                   ("nu", model.nu_fn, self.nu_order)):
                if not isinstance(fn, LogPolyFn):
                    raise DomainError(f"{key} time function is not a log-polynomial")
                c = list(fn.coeffs) + [0.0] * (order + 1 - len(fn.coeffs))
                if len(c) > order + 1:
                    raise DomainError(f"{key} polynomial has order above {order}")
                vals.update({f"{key}_c{k}": c[k] for k in range(order + 1)})
        else:
            vals["alpha"], vals["nu"] = model.alpha, model.nu
        return np.array([vals[n] for n in self.names])

    # natural <-> unconstrained --------------------------------------------

    def transform_names(self):
        out = {}
        for n in self.names:
            if n in _LOG:
                out[n] = "log"
            elif n in _LOGIT:
                out[n] = "logit"
            elif n == "delta":
                out[n] = f"log(x+{self.delta_offset:g})"
            elif n == "nugget":
                out[n] = f"log(x+{NUGGET_OFFSET:g})"
            else:
                out[n] = "identity"
        return out

    def transform(self, theta):
        theta = np.asarray(theta, dtype=float)
        out = np.empty(len(self.names))
        for i, (n, v) in enumerate(zip(self.names, theta)):
            if not math.isfinite(v):
                raise DomainError(f"{n} must be finite")
            if n in _LOG:
                if v <= 0:
                    raise DomainError(f"{n} must be positive, got {v}")
                out[i] = math.log(v)
            elif n in _LOGIT:
                if not (0.0 <= v <= 1.0) or (n == "gamma" and v == 0):
                    raise DomainError(f"{n} out of bounds: {v}")
                out[i] = _logit(v)
            elif n == "delta":
                if v < 0:
                    raise DomainError(f"delta must be nonnegative, got {v}")
                out[i] = math.log(v + self.delta_offset)
            elif n == "nugget":
                if v < 0:
                    raise DomainError(f"nugget must be nonnegative, got {v}")
                out[i] = math.log(v + NUGGET_OFFSET)
            else:
                out[i] = v
        return out

    def untransform(self, u):
        u = np.asarray(u, dtype=float)
        out = np.empty(len(self.names))
        for i, (n, v) in enumerate(zip(self.names, u)):
            if n in _LOG:
                out[i] = math.exp(v)
            elif n in _LOGIT:
                out[i] = min(max(float(special.expit(v)), BOUNDARY_CLAMP), 1.0 - BOUNDARY_CLAMP)
            elif n == "delta":
                out[i] = max(math.exp(v) - self.delta_offset, 0.0)
            elif n == "nugget":
                out[i] = max(math.exp(v) - NUGGET_OFFSET, 0.0)
            else:
                out[i] = v
        return out

    def to_dict(self):
        return {"variant": self.variant, "alpha_order": self.alpha_order,
                "nu_order": self.nu_order, "fixed": dict(sorted(self.fixed.items())),
                "free": list(self.names), "transforms": self.transform_names(),
                "d": self.d}
