"""
Simulation study and validation splits.

Each run simulates the true time-varying process on a regular grid, holds
out validation sets, fits the three candidate covariance models by RCL on the
training data and scores kriging predictions on

* interpolation targets: a random fraction of locations at all non-forecast times,
* forecast targets: every location at the trailing ``horizon`` times.

Per-run seeds come from ``SeedSequence([seed, case_id, run])`` so results do
not depend on which runs execute, or in what order.
"""

from __future__ import annotations

import csv
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DomainError, TvgmError
from .gp import Dataset, krige, simulate_gp
from .kernels import ClosedFormFn, TvarModel, model_to_dict
from .optimize import OptimizerConfig
from .rcl import ModelSpec, RCLObjective, fit, make_partitions, nested_start, slice_matern
from .scoring import DEFAULT_P_GRID, score

log = logging.getLogger(__name__)

TRUE_COMMON = dict(sigma=1.0, a=10.0, gamma=0.6, beta=0.8, delta=0.1)
CASE_IDS = (1, 2, 3, 4)
MODELS = ("tvar", "gneit", "sep")


def case_truth(case_id, training_times=None, raw_index=False) -> TvarModel:
    """True model of a simulation case.

    ``alpha_bar`` is the mean over ``training_times`` (default: the first 19 of
    21 equally spaced times in [0, 1]). ``raw_index`` evaluates the periodic
    case with the printed argument ``pi t / 20`` taken literally in scaled time.
    """
    if case_id not in CASE_IDS:
        raise DomainError(f"case_id must be one of {CASE_IDS}, got {case_id!r}")
    suffix = "_raw" if raw_index and case_id == 1 else ""
    afn = ClosedFormFn(f"case{case_id}_alpha{suffix}")
    nfn = ClosedFormFn(f"case{case_id}_nu{suffix}")
    if training_times is None:
        training_times = np.linspace(0.0, 1.0, 21)[:19]
    m = TvarModel(alpha_fn=afn, nu_fn=nfn, alpha_bar=1.0, **TRUE_COMMON)
    return m.with_training_times(training_times)


def grid_points(nx, ny, nt) -> np.ndarray:
    """Regular grid on [0,1]^2 x [0,1], time-major (all locations at t0 first)."""
    gx, gy = np.linspace(0, 1, nx), np.linspace(0, 1, ny)
    X, Y = np.meshgrid(gx, gy, indexing="xy")
    locs = np.column_stack([X.ravel(), Y.ravel()])
    times = np.linspace(0, 1, nt)
    return np.array([[*l, t] for t in times for l in locs])


@dataclass(frozen=True)
class SimCase:
    """One simulation case: its truth, grid and number of runs."""

    case_id: int
    nx: int = 15
    ny: int = 15
    nt: int = 11
    n_runs: int = 20
    seed: int = 0

    def __post_init__(self):
        if self.case_id not in CASE_IDS:
            raise DomainError(f"case_id must be one of {CASE_IDS}, got {self.case_id!r}")
        if min(self.nx, self.ny, self.nt, self.n_runs) < 1:
            raise DomainError("grid sizes and n_runs must be >= 1")

    def points(self):
        return grid_points(self.nx, self.ny, self.nt)

    def truth(self, training_times=None, raw_index=False):
        if training_times is None:
            training_times = np.linspace(0.0, 1.0, self.nt)
        return case_truth(self.case_id, training_times, raw_index)


@dataclass
class SplitSpec:
    interpolation_fraction: float = 0.2
    forecast_horizon: int = 2
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.interpolation_fraction < 1:
            raise DomainError("interpolation_fraction must lie in [0, 1)")
        if self.forecast_horizon < 0:
            raise DomainError("forecast_horizon must be >= 0")


def split_validation(points, spec: SplitSpec):
    """Index arrays ``(training, interpolation, forecast)`` partitioning ``points``."""
    pts = np.asarray(points, dtype=float)
    times = np.unique(pts[:, -1])
    if spec.forecast_horizon >= len(times):
        raise DomainError(f"forecast horizon {spec.forecast_horizon} leaves no training "
                          f"times out of {len(times)}")
    f_times = times[len(times) - spec.forecast_horizon:]
    locs, loc_idx = np.unique(pts[:, :-1], axis=0, return_inverse=True)
    loc_idx = np.asarray(loc_idx).reshape(-1)
    n_val = int(round(spec.interpolation_fraction * len(locs)))
    rng = np.random.default_rng(spec.seed)
    val_locs = np.sort(rng.choice(len(locs), size=n_val, replace=False))
    in_f = np.isin(pts[:, -1], f_times)
    in_i = ~in_f & np.isin(loc_idx, val_locs)
    train = ~in_f & ~in_i
    return np.flatnonzero(train), np.flatnonzero(in_i), np.flatnonzero(in_f)


@dataclass
class ScaleConfig:
    nx: int = 15
    ny: int = 15
    nt: int = 11
    M_s: int = 12
    R_s: int = 2
    M_t: int = 9
    R_t: int = 1
    fixed_a: float = 10.0
    tvar_orders: dict = field(default_factory=lambda: {1: 2, 2: 2, 3: 3, 4: 2})
    split: SplitSpec = field(default_factory=SplitSpec)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    models: tuple = MODELS
    raw_index: bool = False

    def to_dict(self):
        d = asdict(self)
        d["tvar_orders"] = {str(k): v for k, v in sorted(self.tvar_orders.items())}
        d["models"] = list(self.models)
        return d

    @classmethod
    def from_dict(cls, doc):
        doc = dict(doc)
        if "split" in doc:
            doc["split"] = SplitSpec(**doc["split"])
        if "optimizer" in doc:
            doc["optimizer"] = OptimizerConfig(**doc["optimizer"])
        if "tvar_orders" in doc:
            doc["tvar_orders"] = {int(k): int(v) for k, v in doc["tvar_orders"].items()}
        if "models" in doc:
            doc["models"] = tuple(doc["models"])
        return cls(**doc)


def _spec(variant, case_id, cfg: ScaleConfig):
    order = cfg.tvar_orders.get(case_id, 2)
    return ModelSpec(variant, alpha_order=order, nu_order=order, fixed={"a": cfg.fixed_a})


def run_one(case_id, run, cfg: ScaleConfig, seed) -> dict:
    """One simulation run: simulate, split, fit every candidate, score."""
    s_sim, s_split, s_plan = np.random.SeedSequence([seed, case_id, run]).generate_state(3)
    pts = grid_points(cfg.nx, cfg.ny, cfg.nt)
    split = SplitSpec(cfg.split.interpolation_fraction, cfg.split.forecast_horizon,
                      int(s_split))
    tr, vi, vf = split_validation(pts, split)
    train_times = np.unique(pts[tr, -1])
    truth = case_truth(case_id, train_times, cfg.raw_index)
    x = simulate_gp(truth, pts, int(s_sim))
    full = Dataset(pts, x)
    train = full.subset(tr)
    obj = None
    out = {"case": case_id, "run": run, "seeds": [int(s_sim), int(s_split), int(s_plan)],
           "fits": {}}
    slices = None
    fitted = {}
    # stationary candidates first so their optima can seed the time-varying fit
    order = sorted(cfg.models, key=lambda v: v == "tvar")
    for variant in order:
        rec = {}
        try:
            if obj is None:
                g_locs = len(np.unique(train.locations, axis=0))
                plan = make_partitions(g_locs, len(train_times), cfg.M_s, cfg.R_s, cfg.M_t,
                                       cfg.R_t, int(s_plan))
                obj = RCLObjective(train, plan)
                slices = slice_matern(train)
            spec = _spec(variant, case_id, cfg)
            extra = [nested_start(fitted[v], spec) for v in ("gneit", "sep")
                     if v in fitted and variant == "tvar"]
            res = fit(train, spec, obj.plan, cfg.optimizer, obj, slices=slices,
                      extra_starts=extra)
            fitted[variant] = res.model
            rec["start_source"] = res.start_source
            rec["model"] = model_to_dict(res.model)
            rec["objective"] = res.objective_value
            rec["converged"] = res.converged
            rec["iterations"] = res.iterations
            if variant == "tvar":
                t_all = np.unique(pts[:, -1])
                rec["alpha_t"] = res.model.alpha_fn(t_all).tolist()
                rec["nu_t"] = res.model.nu_fn(t_all).tolist()
            for name, idx in (("interpolation", vi), ("forecast", vf)):
                if len(idx) == 0:
                    continue
                pd = krige(res.model, train, pts[idx])
                rep = score(pd, x[idx])
                rec[name] = {"rmse": rep.rmse, "mcrps": rep.mcrps, "mlogs": rep.mlogs,
                             "g": rep.g, "coverage": rep.empirical_coverage.tolist(),
                             "width": rep.avg_width.tolist()}
        except TvgmError as exc:
            rec = {"failed": True, "error": f"{type(exc).__name__}: {exc}"}
            log.warning("case %s run %s %s failed: %s", case_id, run, variant, exc)
        out["fits"][variant] = rec
    out["fits"] = {v: out["fits"][v] for v in cfg.models}
    return out


def _run_args(args):
    return run_one(*args)


SCALAR_PARAMS = ("sigma", "gamma", "beta", "delta", "alpha", "nu")
METRICS = ("rmse", "mcrps", "mlogs", "g")


def _mean_sd(vals):
    v = np.asarray(vals, dtype=float)
    if v.size == 0:
        return None, None
    return float(np.mean(v)), float(np.std(v, ddof=1)) if v.size > 1 else 0.0


def aggregate(runs, cfg: ScaleConfig) -> dict:
    """Table, score and curve summaries over runs (failed fits excluded and counted)."""
    t_all = np.linspace(0, 1, cfg.nt)
    out = {}
    for case_id in sorted({r["case"] for r in runs}):
        rs = [r for r in runs if r["case"] == case_id]
        truth = case_truth(case_id, t_all[:cfg.nt - cfg.split.forecast_horizon], cfg.raw_index)
        case_rep = {"n_runs": len(rs), "models": {}}
        for variant in cfg.models:
            ok = [r["fits"][variant] for r in rs if not r["fits"][variant].get("failed")]
            m = {"failures": len(rs) - len(ok), "params": {}, "scores": {}, "curves": {}}
            for p in SCALAR_PARAMS:
                vals = [f["model"][p] for f in ok if p in f["model"]]
                if vals:
                    mean, sd = _mean_sd(vals)
                    m["params"][p] = {"mean": mean, "sd": sd}
            for split in ("interpolation", "forecast"):
                recs = [f[split] for f in ok if split in f]
                if not recs:
                    continue
                m["scores"][split] = {}
                for k in METRICS:
                    mean, sd = _mean_sd([r[k] for r in recs])
                    m["scores"][split][k] = {"mean": mean, "sd": sd}
                m["curves"][split] = {
                    "coverage": np.mean([r["coverage"] for r in recs], axis=0).tolist(),
                    "width": np.mean([r["width"] for r in recs], axis=0).tolist()}
            if variant == "tvar" and ok:
                bands = {}
                for key, fn in (("alpha", truth.alpha_fn), ("nu", truth.nu_fn)):
                    arr = np.array([f[f"{key}_t"] for f in ok])
                    mean = arr.mean(axis=0)
                    sd = arr.std(axis=0, ddof=1) if len(arr) > 1 else np.zeros_like(mean)
                    tv = fn(t_all)
                    covered = np.abs(tv - mean) <= 1.96 * sd
                    bands[key] = {"t": t_all.tolist(), "truth": tv.tolist(),
                                  "mean": mean.tolist(), "sd": sd.tolist(),
                                  "band_coverage": float(np.mean(covered))}
                m["time_functions"] = bands
            case_rep["models"][variant] = m
        case_rep["comparisons"] = _comparisons(rs, cfg.models)
        out[str(case_id)] = case_rep
    return out


def _comparisons(rs, models):
    """Per-run interpolation mLogS comparisons of tvar against the other candidates."""
    comp = {}
    if "tvar" not in models:
        return comp
    for other in models:
        if other == "tvar":
            continue
        diffs = []
        for r in rs:
            a, b = r["fits"]["tvar"], r["fits"][other]
            if a.get("failed") or b.get("failed") or "interpolation" not in a:
                continue
            diffs.append(a["interpolation"]["mlogs"] - b["interpolation"]["mlogs"])
        if not diffs:
            continue
        d = np.array(diffs)
        comp[f"tvar_vs_{other}"] = {
            "n": int(d.size), "frac_tvar_better": float(np.mean(d < 0)),
            "mean_diff": float(d.mean()),
            "se_diff": float(d.std(ddof=1) / np.sqrt(d.size)) if d.size > 1 else 0.0}
    return comp


def run_sim_study(cases=CASE_IDS, scale_cfg: ScaleConfig | None = None, n_runs=20, seed=0,
                  workers=1) -> dict:
    """Run every case x run and aggregate; failed fits are recorded, not fatal."""
    cfg = scale_cfg or ScaleConfig()
    for c in cases:
        if c not in CASE_IDS:
            raise DomainError(f"unknown case {c!r}")
    jobs = [(c, r, cfg, seed) for c in cases for r in range(n_runs)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            runs = list(ex.map(_run_args, jobs))
    else:
        runs = []
        for j in jobs:
            log.info("case %s run %s", j[0], j[1])
            runs.append(run_one(*j))
    return {"config": {**cfg.to_dict(), "n_runs": n_runs, "seed": seed,
                       "cases": list(cases)},
            "p_grid": DEFAULT_P_GRID.tolist(),
            "summary": aggregate(runs, cfg), "runs": runs}


def write_report(report, outdir):
    """``report.json`` plus CSVs of parameters, scores, coverage curves and time functions."""
    os.makedirs(outdir, exist_ok=True)
    with open(os.path.join(outdir, "report.json"), "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
    summ = report["summary"]
    p_grid = report["p_grid"]
    with open(os.path.join(outdir, "parameters.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["case", "model", "parameter", "mean", "sd"])
        for c, rep in summ.items():
            for mname, m in rep["models"].items():
                for p, v in m["params"].items():
                    w.writerow([c, mname, p, repr(v["mean"]), repr(v["sd"])])
    with open(os.path.join(outdir, "scores.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["case", "model", "split", "metric", "mean", "sd"])
        for c, rep in summ.items():
            for mname, m in rep["models"].items():
                for split, sc in m["scores"].items():
                    for k, v in sc.items():
                        w.writerow([c, mname, split, k, repr(v["mean"]), repr(v["sd"])])
    with open(os.path.join(outdir, "curves.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["case", "model", "split", "p", "coverage", "width"])
        for c, rep in summ.items():
            for mname, m in rep["models"].items():
                for split, cv in m["curves"].items():
                    for p, cov, wd in zip(p_grid, cv["coverage"], cv["width"]):
                        w.writerow([c, mname, split, repr(p), repr(cov), repr(wd)])
    with open(os.path.join(outdir, "time_functions.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["case", "function", "t", "truth", "mean", "sd"])
        for c, rep in summ.items():
            tf = rep["models"].get("tvar", {}).get("time_functions", {})
            for key, b in tf.items():
                for row in zip(b["t"], b["truth"], b["mean"], b["sd"]):
                    w.writerow([c, key, *map(repr, row)])
