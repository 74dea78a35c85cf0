"""
Random composite likelihood (RCL) estimation.

The data are viewed as a location x time grid (entries may be missing). A
:class:`PartitionPlan` holds ``R_s`` random partitions of the locations into
``M_s`` blocks and ``R_t`` random partitions of the times into ``M_t`` blocks.
The objective is half the sum of Gaussian log-likelihoods over all
"location block x all times" sub-vectors plus half the sum over all
"all locations x time block" sub-vectors.

Evaluation cost is dominated by the block factorisations: the covariance is
computed only once per distinct (time pair, distance) combination across all
blocks and then scattered into each block's lower triangle.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .errors import (DataError, DomainError, EvaluationError, FactorizationError,
                     NumericalError, ScaleError)
from .gp import Dataset, full_loglik, loglik_from_chol
from .kernels import SepModel, _cov, cholesky_jitter, cross_cov, model_to_dict
from .optimize import OptimizerConfig, minimize
from .params import ParamMap, param_names

log = logging.getLogger(__name__)

HESSIAN_CAP = 2000
PAIR_CAP = 4000
FD_REL_STEP = 1e-5
FD_ABS_STEP = 1e-7


# ---------------------------------------------------------------------------
# grid view of a dataset


class GridData:
    """Index a dataset by distinct locations and distinct times.

    Attributes
    ----------
    locations : (n_s, k) array, sorted lexicographically
    times : (n_t,) sorted array
    lookup : (n_s, n_t) int array of observation indices, -1 where missing
    """

    def __init__(self, data: Dataset):
        if len(data) == 0:
            raise DataError("empty dataset")
        self.data = data
        self.locations, loc_idx = np.unique(data.locations, axis=0, return_inverse=True)
        self.times, time_idx = np.unique(data.times, return_inverse=True)
        self.loc_idx = np.asarray(loc_idx).reshape(-1)
        self.time_idx = np.asarray(time_idx).reshape(-1)
        self.lookup = np.full((len(self.locations), len(self.times)), -1, dtype=np.int64)
        flat = self.loc_idx * len(self.times) + self.time_idx
        if len(np.unique(flat)) != len(flat):
            raise DataError("duplicate (location, time) observations; RCL needs one per cell")
        self.lookup[self.loc_idx, self.time_idx] = np.arange(len(data))

    @property
    def n_locations(self):
        return len(self.locations)

    @property
    def n_times(self):
        return len(self.times)

    def spatial_block(self, loc_set):
        idx = self.lookup[np.asarray(loc_set)].T.ravel()
        return idx[idx >= 0]

    def temporal_block(self, time_set):
        idx = self.lookup[:, np.asarray(time_set)].T.ravel()
        return idx[idx >= 0]


# ---------------------------------------------------------------------------
# partitions


@dataclass
class PartitionPlan:
    spatial_blocks: list
    temporal_blocks: list
    seed: int
    n_locations: int
    n_times: int

    @property
    def shape(self):
        return {"M_s": len(self.spatial_blocks[0]), "R_s": len(self.spatial_blocks),
                "M_t": len(self.temporal_blocks[0]), "R_t": len(self.temporal_blocks)}

    def blocks(self, grid: GridData):
        """``(kind, replicate, block, obs_indices)`` for every non-empty block."""
        out = []
        for r, rep in enumerate(self.spatial_blocks):
            for b, s in enumerate(rep):
                out.append(("spatial", r, b, grid.spatial_block(s)))
        for r, rep in enumerate(self.temporal_blocks):
            for b, s in enumerate(rep):
                out.append(("temporal", r, b, grid.temporal_block(s)))
        return [blk for blk in out if len(blk[3])]

    def to_dict(self):
        return {"seed": self.seed, **self.shape, "n_locations": self.n_locations,
                "n_times": self.n_times,
                "spatial_blocks": [[b.tolist() for b in rep] for rep in self.spatial_blocks],
                "temporal_blocks": [[b.tolist() for b in rep] for rep in self.temporal_blocks]}


def make_partitions(n_locations, n_times, M_s, R_s, M_t, R_t, seed) -> PartitionPlan:
    """Random equisized partitions of locations and times.

    Each replicate is a fresh permutation cut into contiguous near-equal pieces
    (sizes differ by at most one); every block is stored sorted. Spatial
    replicates are drawn before temporal ones from one seeded generator.
    """
    errs = []
    if not 1 <= M_s <= n_locations:
        errs.append(f"M_s={M_s} must lie in [1, {n_locations}]")
    if not 1 <= M_t <= n_times:
        errs.append(f"M_t={M_t} must lie in [1, {n_times}]")
    if R_s < 1:
        errs.append(f"R_s={R_s} must be >= 1")
    if R_t < 1:
        errs.append(f"R_t={R_t} must be >= 1")
    if errs:
        raise DomainError("; ".join(errs))
    rng = np.random.default_rng(seed)

    def cut(n, m):
        return [np.sort(b) for b in np.array_split(rng.permutation(n), m)]

    spatial = [cut(n_locations, M_s) for _ in range(R_s)]
    temporal = [cut(n_times, M_t) for _ in range(R_t)]
    return PartitionPlan(spatial, temporal, seed, n_locations, n_times)


def degenerate_plan(n_locations, n_times, seed=0) -> PartitionPlan:
    """Single block in space and in time: the RCL equals the full likelihood."""
    return make_partitions(n_locations, n_times, 1, 1, 1, 1, seed)


# ---------------------------------------------------------------------------
# objective


class RCLObjective:
    """Precomputed block structure for repeated RCL evaluations on one dataset."""

    def __init__(self, data: Dataset, plan: PartitionPlan):
        self.grid = GridData(data)
        g = self.grid
        if (plan.n_locations, plan.n_times) != (g.n_locations, g.n_times):
            raise DataError(
                f"plan is for {plan.n_locations} locations x {plan.n_times} times but the "
                f"data have {g.n_locations} x {g.n_times}")
        self.plan = plan
        self.data = data
        self.blocks = plan.blocks(g)
        nt = g.n_times
        span = np.ptp(g.locations, axis=0)
        scale = float(np.sqrt(np.sum(span ** 2))) or 1.0
        pair_keys, dists = [], []
        self._tril = {}
        for _, _, _, idx in self.blocks:
            n = len(idx)
            if n not in self._tril:
                self._tril[n] = np.tril_indices(n)
            r, c = self._tril[n]
            li, ti = g.loc_idx[idx], g.time_idx[idx]
            a, b = ti[r], ti[c]
            pair_keys.append(np.minimum(a, b) * nt + np.maximum(a, b))
            dl = g.locations[li[r]] - g.locations[li[c]]
            dists.append(np.round(np.sqrt(np.sum(dl * dl, axis=1)) / scale, 13))
        qd, dinv = np.unique(np.concatenate(dists), return_inverse=True)
        keys = np.concatenate(pair_keys) * len(qd) + dinv.reshape(-1)
        ukeys, kinv = np.unique(keys, return_inverse=True)
        kinv = kinv.reshape(-1).astype(np.int32 if len(ukeys) < 2**31 else np.int64)
        pair, dq = np.divmod(ukeys, len(qd))
        self._ti = g.times[pair // nt]
        self._tj = g.times[pair % nt]
        self._h = qd[dq] * scale
        self._gather = []
        pos = 0
        for k in pair_keys:
            self._gather.append(kinv[pos:pos + len(k)])
            pos += len(k)
        self._x = [data.values[idx] for _, _, _, idx in self.blocks]
        self.n_evals = 0

    @property
    def max_block(self):
        return max(len(b[3]) for b in self.blocks)

    def _values(self, model):
        with np.errstate(all="ignore"):
            v = _cov(model, self._ti, self._tj, self._h)
        if not np.all(np.isfinite(v)):
            raise EvaluationError("non-finite covariance entries", model_to_dict(model))
        return v

    def block_cov(self, model, i, vals=None):
        """Full symmetric covariance matrix of block ``i``."""
        vals = self._values(model) if vals is None else vals
        n = len(self.blocks[i][3])
        r, c = self._tril[n]
        K = np.empty((n, n))
        K[r, c] = vals[self._gather[i]]
        K[c, r] = K[r, c]
        if model.nugget:
            K[np.diag_indices(n)] += model.nugget
        return K

    def _chol(self, model, i, vals):
        n = len(self.blocks[i][3])
        r, c = self._tril[n]
        K = np.zeros((n, n))
        K[r, c] = vals[self._gather[i]]
        if model.nugget:
            K[np.diag_indices(n)] += model.nugget
        try:
            return np.linalg.cholesky(K)
        except np.linalg.LinAlgError:
            kind, rep, b, _ = self.blocks[i]
            return cholesky_jitter(K, model.sigma ** 2 + model.nugget,
                                   block=f"{kind} replicate {rep} block {b}")[0]

    def block_logliks(self, model):
        vals = self._values(model)
        self.n_evals += 1
        return np.array([loglik_from_chol(self._chol(model, i, vals), x)
                         for i, x in enumerate(self._x)])

    def __call__(self, model) -> float:
        """RCL value; the sum runs in a fixed block order."""
        return 0.5 * float(np.sum(self.block_logliks(model)))


def rcl_loglik(model, data: Dataset, plan: PartitionPlan) -> float:
    return RCLObjective(data, plan)(model)


# ---------------------------------------------------------------------------
# score, expected Hessian, Godambe


def _fd_step(v):
    return max(FD_REL_STEP * abs(v), FD_ABS_STEP)


def _perturbed(pmap: ParamMap, theta, k):
    """Models at theta -/+ step on coordinate k and the divisor (central or forward)."""
    h = _fd_step(theta[k])
    up, dn = theta.copy(), theta.copy()
    up[k] += h
    dn[k] -= h
    try:
        m_dn = pmap.to_model(dn)
    except DomainError:
        return pmap.to_model(theta), pmap.to_model(up), h
    return m_dn, pmap.to_model(up), 2.0 * h


def default_param_map(model, data_times, fixed=None) -> ParamMap:
    """Map over every free parameter of ``model`` (nugget fixed when zero)."""
    fixed = dict(fixed or {})
    if model.nugget == 0:
        fixed.setdefault("nugget", 0.0)
    kw = {}
    if model.variant == "tvar":
        kw = dict(alpha_order=len(model.alpha_fn.coeffs) - 1,
                  nu_order=len(model.nu_fn.coeffs) - 1)
    return ParamMap(model.variant, data_times, fixed=fixed, d=model.d, **kw)


def _derivative_blocks(obj: RCLObjective, pmap: ParamMap, theta, blocks=None):
    """Per block list of dSigma/dtheta_k matrices by central differences."""
    blocks = range(len(obj.blocks)) if blocks is None else blocks
    out = {i: [] for i in blocks}
    for k in range(len(theta)):
        m_dn, m_up, div = _perturbed(pmap, theta, k)
        v_dn, v_up = obj._values(m_dn), obj._values(m_up)
        for i in blocks:
            out[i].append((obj.block_cov(m_up, i, v_up) - obj.block_cov(m_dn, i, v_dn)) / div)
    return out


def rcl_score(model, data: Dataset, plan: PartitionPlan, method="analytic", pmap=None,
              objective=None):
    """Gradient of the RCL in the natural parameters of ``pmap``.

    ``analytic`` combines trace and quadratic-form terms with finite-difference
    covariance derivatives; ``finite-difference`` differences the RCL itself.
    """
    obj = objective or RCLObjective(data, plan)
    pmap = pmap or default_param_map(model, obj.grid.times)
    theta = pmap.from_model(model)
    model = pmap.to_model(theta)
    if method == "finite-difference":
        g = np.empty(len(theta))
        for k in range(len(theta)):
            m_dn, m_up, div = _perturbed(pmap, theta, k)
            g[k] = (obj(m_up) - obj(m_dn)) / div
        return g
    if method != "analytic":
        raise DomainError(f"unknown score method {method!r}")
    vals = obj._values(model)
    dK = _derivative_blocks(obj, pmap, theta)
    g = np.zeros(len(theta))
    for i, x in enumerate(obj._x):
        L = obj._chol(model, i, vals)
        w = cho_solve((L, True), x)
        Kinv = cho_solve((L, True), np.eye(len(x)))
        for k, D in enumerate(dK[i]):
            g[k] += 0.5 * (-0.5 * np.sum(Kinv * D) + 0.5 * w @ D @ w)
    return g


def _block_ops(obj, model, pmap, theta, cap, what):
    if obj.max_block > cap:
        raise ScaleError(f"{what} refused: largest block has {obj.max_block} points "
                             f"(cap {cap})")
    vals = obj._values(model)
    dK = _derivative_blocks(obj, pmap, theta)
    out = []
    for i in range(len(obj.blocks)):
        L = obj._chol(model, i, vals)
        Kinv = cho_solve((L, True), np.eye(len(obj._x[i])))
        out.append((Kinv, [Kinv @ D for D in dK[i]]))
    return out


def expected_hessian(model, plan: PartitionPlan, points, pmap=None):
    """Negative expected Hessian ``1/4 sum_b tr(S_b^-1 dS_b/dr S_b^-1 dS_b/ds)``."""
    data = Dataset(points, np.zeros(len(points)))
    obj = RCLObjective(data, plan)
    pmap = pmap or default_param_map(model, obj.grid.times)
    theta = pmap.from_model(model)
    model = pmap.to_model(theta)
    ops = _block_ops(obj, model, pmap, theta, HESSIAN_CAP, "expected_hessian")
    p = len(theta)
    H = np.zeros((p, p))
    for _, A in ops:
        for r in range(p):
            for s in range(r, p):
                H[r, s] += 0.25 * np.sum(A[r] * A[s].T)
    return H + np.triu(H, 1).T


def score_covariance(model, plan: PartitionPlan, points, pmap=None):
    """Exact covariance ``J`` of the RCL score over all ordered block pairs."""
    data = Dataset(points, np.zeros(len(points)))
    obj = RCLObjective(data, plan)
    pmap = pmap or default_param_map(model, obj.grid.times)
    theta = pmap.from_model(model)
    model = pmap.to_model(theta)
    sizes = [len(b[3]) for b in obj.blocks]
    if 2 * max(sizes) > PAIR_CAP:
        raise ScaleError(f"score covariance refused: largest block pair has "
                             f"{2 * max(sizes)} points (cap {PAIR_CAP})")
    ops = _block_ops(obj, model, pmap, theta, PAIR_CAP, "score covariance")
    # P_b^r = S_b^-1 dS_b S_b^-1
    P = [[A @ Kinv for A in As] for Kinv, As in ops]
    idx = [b[3] for b in obj.blocks]
    pts = data.points
    p = len(theta)
    J = np.zeros((p, p))
    nb = len(idx)
    for b in range(nb):
        for c in range(b, nb):
            C = cross_cov(model, pts[idx[b]], pts[idx[c]])
            if model.nugget:
                C = C + model.nugget * (idx[b][:, None] == idx[c][None, :])
            left = [Pr @ C for Pr in P[b]]          # n_b x n_c
            right = [Ps @ C.T for Ps in P[c]]       # n_c x n_b
            T = np.array([[np.sum(lr * rs.T) for rs in right] for lr in left])
            J += T / 8.0 if b == c else (T + T.T) / 8.0
    return 0.5 * (J + J.T)


def _check_spd(M, name):
    ev = np.linalg.eigvalsh(0.5 * (M + M.T))
    if ev[0] <= 1e-12 * max(abs(ev[-1]), 1e-300):
        raise NumericalError(f"{name} is singular or indefinite "
                             f"(eigenvalues from {ev[0]:.3e} to {ev[-1]:.3e})")


def godambe_variance(model, plan: PartitionPlan, points, pmap=None):
    """Sandwich variance ``H^-1 J H^-1`` (the inverse Godambe information)."""
    H = expected_hessian(model, plan, points, pmap)
    J = score_covariance(model, plan, points, pmap)
    _check_spd(H, "expected Hessian")
    _check_spd(J, "score covariance")
    Hinv = np.linalg.inv(H)
    G = Hinv @ J @ Hinv
    return 0.5 * (G + G.T)


# ---------------------------------------------------------------------------
# fitting


@dataclass
class ModelSpec:
    """What to fit: variant, time-function orders, fixed values and starting values."""

    variant: str
    alpha_order: int = 2
    nu_order: int = 2
    fixed: dict = field(default_factory=dict)
    initial: dict = field(default_factory=dict)
    d: int = 2
    nugget: str = "fixed"

    def param_map(self, times, delta_offset=None):
        fixed = dict(self.fixed)
        if self.nugget == "fixed":
            fixed.setdefault("nugget", 0.0)
        elif self.nugget != "free":
            raise DomainError(f"nugget policy must be 'fixed' or 'free', got {self.nugget!r}")
        kw = {} if delta_offset is None else {"delta_offset": delta_offset}
        orders = (self.alpha_order, self.nu_order) if self.variant == "tvar" else (0, 0)
        return ParamMap(self.variant, times, orders[0], orders[1], fixed, self.d, **kw)

    def to_dict(self):
        return {"variant": self.variant, "alpha_order": self.alpha_order,
                "nu_order": self.nu_order, "fixed": dict(sorted(self.fixed.items())),
                "initial": dict(sorted(self.initial.items())), "d": self.d,
                "nugget": self.nugget}

    @classmethod
    def from_dict(cls, doc):
        return cls(variant=doc["variant"], alpha_order=int(doc.get("alpha_order", 2)),
                   nu_order=int(doc.get("nu_order", 2)), fixed=dict(doc.get("fixed", {})),
                   initial=dict(doc.get("initial", {})), d=int(doc.get("d", 2)),
                   nugget=doc.get("nugget", "fixed"))


@dataclass
class FitResult:
    model: object
    theta_unconstrained: np.ndarray
    objective_value: float
    iterations: int
    converged: bool
    trace: list
    alpha_bar_used: float | None
    warnings: list
    param_names: list
    transforms: dict
    plan_shape: dict
    plan_seed: int
    optimizer: dict
    time_range: tuple
    initial: dict
    evaluations: int = 0
    start_source: str = "default"

    def natural(self):
        doc = model_to_dict(self.model)
        return {k: v for k, v in doc.items() if k != "variant"}

    def to_dict(self):
        return {"variant": self.model.variant, "model": model_to_dict(self.model),
                "theta_unconstrained": [float(v) for v in self.theta_unconstrained],
                "param_names": list(self.param_names), "transforms": self.transforms,
                "objective_value": self.objective_value, "iterations": self.iterations,
                "evaluations": self.evaluations, "converged": self.converged,
                "trace": [float(v) for v in self.trace],
                "alpha_bar_used": self.alpha_bar_used, "warnings": list(self.warnings),
                "plan": {"seed": self.plan_seed, **self.plan_shape},
                "optimizer": self.optimizer, "training_time_range": list(self.time_range),
                "initial": self.initial, "start_source": self.start_source}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def extrapolation_warnings(fit: FitResult, times) -> list:
    """Warnings for time-varying fits used outside the training time range."""
    if fit.model.variant != "tvar":
        return []
    t = np.asarray(times, dtype=float)
    lo, hi = fit.time_range
    out = t[(t < lo - 1e-12) | (t > hi + 1e-12)]
    if out.size == 0:
        return []
    return [f"time functions extrapolated to {out.size} target(s) outside the training "
            f"range [{lo:g}, {hi:g}] (t from {out.min():g} to {out.max():g})"]


def slice_matern(data: Dataset, max_iters=400):
    """Per-time Matérn maximum-likelihood estimates ``(times, sigma, alpha, nu)``.

    Each distinct time is fitted separately with the purely spatial model.
    Estimates of ``nu`` are clamped to [0.1, 5].
    """
    times = np.unique(data.times)
    locs = data.locations
    sd0 = float(np.std(data.values)) or 1.0
    out = []
    for t in times:
        sub = data.subset(np.flatnonzero(data.times == t))
        if len(sub) < 3:
            continue
        span = np.sqrt(np.sum(np.ptp(locs, axis=0) ** 2)) or 1.0
        x0 = np.log([sd0, 10.0 / span, 1.0])

        def nll(u, sub=sub):
            s, al, nu = np.exp(u)
            if not (0.05 <= nu <= 20):
                return np.inf
            try:
                return -full_loglik(SepModel(s, 1.0, 0.5, 0.0, al, nu), sub)
            except (FactorizationError, EvaluationError, DomainError):
                return np.inf

        res = minimize(nll, x0, OptimizerConfig(max_iters=max_iters, tol=1e-7,
                                                initial_step=0.5))
        s, al, nu = np.exp(res.x)
        out.append((t, s, al, min(max(nu, 0.1), 5.0)))
    if not out:
        raise DataError("no time slice has enough observations for a warm start")
    return tuple(np.array(c) for c in zip(*out))


def initial_values(data: Dataset, spec: ModelSpec, slices=None) -> dict:
    """Starting values: empirical sd, mid-range temporal parameters, slice-MLE warm start.

    ``slices`` may carry a precomputed :func:`slice_matern` result.
    """
    vals = {"sigma": float(np.std(data.values)) or 1.0, "a": 1.0, "gamma": 0.5,
            "beta": 0.5, "delta": 0.5, "nugget": 0.0}
    names = param_names(spec.variant, spec.alpha_order, spec.nu_order)
    missing = [n for n in names if n.startswith(("alpha", "nu"))
               and n not in spec.initial and n not in spec.fixed]
    if missing:
        t, _, al, nu = slices if slices is not None else slice_matern(data)
        if spec.variant == "tvar":
            for key, y, order in (("alpha", al, spec.alpha_order), ("nu", nu, spec.nu_order)):
                deg = min(order, len(t) - 1)
                c = np.polynomial.polynomial.polyfit(t, np.log(y), deg)
                c = list(c) + [0.0] * (order - deg)
                vals.update({f"{key}_c{k}": float(c[k]) for k in range(order + 1)})
        else:
            vals["alpha"] = float(np.exp(np.mean(np.log(al))))
            vals["nu"] = float(np.exp(np.mean(np.log(nu))))
    vals.update(spec.fixed)
    vals.update(spec.initial)
    return vals


def fit(data: Dataset, spec: ModelSpec, plan: PartitionPlan, cfg: OptimizerConfig | None = None,
        objective: RCLObjective | None = None, delta_offset=None, slices=None,
        extra_starts=None) -> FitResult:
    """Maximise the RCL over the free parameters of ``spec``.

    ``alpha_bar`` is recomputed from the current alpha function at every
    evaluation. Failed evaluations count as ``-inf``; a failure at the starting
    point raises.

    ``extra_starts`` is an optional list of natural-parameter dicts (e.g. a
    fitted nested model); the simplex starts from whichever candidate, the
    default start included, has the highest objective.
    """
    cfg = cfg or OptimizerConfig()
    obj = objective or RCLObjective(data, plan)
    times = obj.grid.times
    pmap = spec.param_map(times, delta_offset)
    init = initial_values(data, spec, slices)
    theta0 = np.array([init[n] for n in pmap.names])
    u0 = pmap.transform(theta0)

    def neg(u):
        try:
            return -obj(pmap.to_model(pmap.untransform(u)))
        except (FactorizationError, EvaluationError, DomainError):
            return np.inf

    try:
        f0 = -obj(pmap.to_model(pmap.untransform(u0)))
    except (FactorizationError, EvaluationError, DomainError) as exc:
        raise NumericalError(f"objective fails at the initial point {dict(zip(pmap.names, theta0))}: "
                             f"{exc}") from exc
    if not math.isfinite(f0):
        raise NumericalError(f"objective is not finite at the initial point "
                             f"{dict(zip(pmap.names, theta0))}")
    start_source = "default"
    for k, cand in enumerate(extra_starts or []):
        th = np.array([cand.get(n, init[n]) for n in pmap.names], dtype=float)
        try:
            uc = pmap.transform(th)
        except DomainError:
            continue
        fc = neg(uc)
        if fc < f0:
            u0, f0, theta0, start_source = uc, fc, th, f"extra_start_{k}"
    init = {**init, **dict(zip(pmap.names, theta0))}
    res = minimize(neg, u0, cfg)
    model = pmap.to_model(pmap.untransform(res.x))
    value = obj(model)
    warns = []
    if not res.converged:
        warns.append(f"optimizer stopped after {res.iterations} iterations without converging")
    return FitResult(
        model=model, theta_unconstrained=res.x, objective_value=value,
        iterations=res.iterations, converged=res.converged, trace=[-v for v in res.trace],
        alpha_bar_used=getattr(model, "alpha_bar", None), warnings=warns,
        param_names=list(pmap.names), transforms=pmap.transform_names(),
        plan_shape=plan.shape, plan_seed=plan.seed, optimizer=cfg.to_dict(),
        time_range=(float(times[0]), float(times[-1])),
        initial={n: float(init[n]) for n in pmap.names}, evaluations=res.evaluations,
        start_source=start_source)


def nested_start(model, spec: ModelSpec) -> dict:
    """Natural start for ``spec`` reproducing a fitted simpler ``model``.

    A stationary fit becomes a time-varying start with constant log-polynomials;
    a separable fit gets ``beta = 0`` (moved inside the bounds by the transform).
    """
    vals = {"sigma": model.sigma, "a": model.a, "gamma": model.gamma,
            "beta": getattr(model, "beta", 0.0), "delta": model.delta, "nugget": model.nugget}
    if model.variant == "tvar":
        raise DomainError("nested_start expects a stationary model")
    if spec.variant == "tvar":
        for key, v, order in (("alpha", model.alpha, spec.alpha_order),
                              ("nu", model.nu, spec.nu_order)):
            vals.update({f"{key}_c{k}": (math.log(v) if k == 0 else 0.0)
                         for k in range(order + 1)})
    else:
        vals.update({"alpha": model.alpha, "nu": model.nu})
    return vals


def fit_from_model(data, spec, plan, start_model, cfg=None, objective=None):
    """Fit starting exactly at ``start_model`` (e.g. a previous optimum)."""
    obj = objective or RCLObjective(data, plan)
    pmap = spec.param_map(obj.grid.times)
    theta = pmap.from_model(start_model)
    spec2 = ModelSpec(**{**spec.__dict__, "initial": dict(zip(pmap.names, map(float, theta)))})
    return fit(data, spec2, plan, cfg, obj)
