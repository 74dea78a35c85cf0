"""
Command-line interface.

Every subcommand reads a JSON run configuration (``--config``); individual
fields can be overridden with ``--set section.key=<json value>`` and a few
common shortcuts (``--data``, ``--output``, ``--seed``). Results go to files;
errors are printed to stderr as one JSON object and mapped to exit codes
0 (ok), 1 (usage/config), 2 (data), 3 (numerical).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from .errors import ConfigError, DataError, DomainError, NumericalError, TvgmError
from .gp import Dataset, PredictiveDistribution, krige, neighborhood_select, simulate_gp
from .harness import (CASE_IDS, ScaleConfig, SplitSpec, case_truth, grid_points,
                      run_sim_study, split_validation, write_report)
from .io import (day_of_year_to_t, read_dataset, read_json, read_points, read_table,
                 write_dataset, write_json)
from .kernels import VARIANTS, model_from_dict
from .optimize import OptimizerConfig
from .params import param_names
from .rcl import (FitResult, GridData, ModelSpec, extrapolation_warnings, fit,
                  make_partitions)
from .scoring import score
from .trend import DEFAULT_FREQUENCIES, TrendModel, detrend, ols_fit, retrend

log = logging.getLogger("tvgm")

EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 1, 2, 3
SEED_MAX = 2 ** 64 - 1

TOP_KEYS = {"_config", "data", "output", "seed", "nugget", "scale_time", "model", "partition",
            "optimizer", "split", "kriging", "simulate", "trend", "fit", "targets",
            "predictions", "truths", "simstudy"}
OPT_KEYS = set(OptimizerConfig().to_dict())
KRIGE_DEFAULTS = {"mode": "interpolate", "window": 6, "time_range": None,
                  "probs": [0.5, 0.8, 0.9, 0.95]}


class UsageError(TvgmError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------------------
# configuration


def _set_path(cfg, dotted, value):
    keys = dotted.split(".")
    node = cfg
    for k in keys[:-1]:
        node = node.setdefault(k, {})
        if not isinstance(node, dict):
            raise ConfigError(f"--set {dotted}: {k} is not a section")
    node[keys[-1]] = value


def load_config(args) -> dict:
    cfg = read_json(args.config) if args.config else {}
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    if args.config:
        cfg["_config"] = args.config
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, raw = item.split("=", 1)
        try:
            val = json.loads(raw)
        except json.JSONDecodeError:
            val = raw
        _set_path(cfg, key.strip(), val)
    for name in ("data", "output", "seed", "targets"):
        v = getattr(args, name, None)
        if v is not None:
            cfg[name] = v
    if getattr(args, "scale_time", None):
        cfg["scale_time"] = args.scale_time
    return cfg


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _check_file(cfg, key, errs):
    v = cfg.get(key)
    if v is None:
        errs.append(f"{key}: required")
    elif not isinstance(v, str):
        errs.append(f"{key}: must be a path string")
    elif not os.path.isfile(v):
        errs.append(f"{key}: file not found: {v}")


def _check_model_spec(doc, errs, where="model"):
    if not isinstance(doc, dict):
        errs.append(f"{where}: must be an object")
        return
    variant = doc.get("variant")
    if variant not in VARIANTS:
        errs.append(f"{where}.variant: must be one of {sorted(VARIANTS)}, got {variant!r}")
        return
    for k in ("alpha_order", "nu_order"):
        if k in doc and not (_is_int(doc[k]) and doc[k] >= 0):
            errs.append(f"{where}.{k}: must be an integer >= 0")
    if doc.get("nugget", "fixed") not in ("fixed", "free"):
        errs.append(f"{where}.nugget: must be 'fixed' or 'free'")
    ao, no = doc.get("alpha_order", 2), doc.get("nu_order", 2)
    names = set(param_names(variant, ao if _is_int(ao) else 0, no if _is_int(no) else 0))
    for sect in ("fixed", "initial"):
        sub = doc.get(sect, {})
        if not isinstance(sub, dict):
            errs.append(f"{where}.{sect}: must be an object")
            continue
        for k, v in sub.items():
            if k not in names:
                errs.append(f"{where}.{sect}.{k}: not a parameter of {variant}")
            elif not _is_num(v):
                errs.append(f"{where}.{sect}.{k}: must be a number")
    unknown = set(doc) - {"variant", "alpha_order", "nu_order", "fixed", "initial", "d",
                          "nugget"}
    errs += [f"{where}.{k}: unknown field" for k in sorted(unknown)]


def _check_partition(doc, errs):
    if not isinstance(doc, dict):
        errs.append("partition: must be an object")
        return
    for k in ("M_s", "R_s", "M_t", "R_t"):
        if k not in doc:
            errs.append(f"partition.{k}: required")
        elif not (_is_int(doc[k]) and doc[k] >= 1):
            errs.append(f"partition.{k}: must be an integer >= 1")
    if "seed" in doc and not (_is_int(doc["seed"]) and 0 <= doc["seed"] <= SEED_MAX):
        errs.append("partition.seed: must be a 64-bit unsigned integer")
    errs += [f"partition.{k}: unknown field"
             for k in sorted(set(doc) - {"M_s", "R_s", "M_t", "R_t", "seed"})]


def _check_optimizer(doc, errs):
    if not isinstance(doc, dict):
        errs.append("optimizer: must be an object")
        return
    errs += [f"optimizer.{k}: unknown field" for k in sorted(set(doc) - OPT_KEYS)]
    for k in ("max_iters", "multistart"):
        if k in doc and not (_is_int(doc[k]) and doc[k] >= 1):
            errs.append(f"optimizer.{k}: must be an integer >= 1")
    for k in ("tol", "initial_step", "start_jitter"):
        if k in doc and not (_is_num(doc[k]) and doc[k] > 0):
            errs.append(f"optimizer.{k}: must be a positive number")
    if "seed" in doc and not (_is_int(doc["seed"]) and 0 <= doc["seed"] <= SEED_MAX):
        errs.append("optimizer.seed: must be a 64-bit unsigned integer")


def _check_kriging(doc, errs):
    if not isinstance(doc, dict):
        errs.append("kriging: must be an object")
        return
    errs += [f"kriging.{k}: unknown field" for k in sorted(set(doc) - set(KRIGE_DEFAULTS))]
    if doc.get("mode", "interpolate") not in ("interpolate", "forecast", "all"):
        errs.append("kriging.mode: must be 'interpolate', 'forecast' or 'all'")
    w = doc.get("window", 6)
    if not (_is_num(w) and w > 0):
        errs.append("kriging.window: must be positive")
    tr = doc.get("time_range")
    if tr is not None and not (isinstance(tr, list) and len(tr) == 2
                               and all(_is_num(v) for v in tr) and tr[0] <= tr[1]):
        errs.append("kriging.time_range: must be [lo, hi] with lo <= hi")
    probs = doc.get("probs", KRIGE_DEFAULTS["probs"])
    if not (isinstance(probs, list) and all(_is_num(p) and 0 < p < 1 for p in probs)):
        errs.append("kriging.probs: must be a list of probabilities in (0, 1)")


def _check_split(doc, errs):
    if not isinstance(doc, dict):
        errs.append("split: must be an object")
        return
    errs += [f"split.{k}: unknown field" for k in sorted(set(doc) - {
        "interpolation_fraction", "forecast_horizon", "seed"})]
    f = doc.get("interpolation_fraction", 0.2)
    if not (_is_num(f) and 0 <= f < 1):
        errs.append("split.interpolation_fraction: must lie in [0, 1)")
    h = doc.get("forecast_horizon", 2)
    if not (_is_int(h) and h >= 0):
        errs.append("split.forecast_horizon: must be an integer >= 0")


def validate_config(cmd, cfg) -> None:
    """Raise :class:`ConfigError` listing every violation found in ``cfg``."""
    errs = [f"{k}: unknown field" for k in sorted(set(cfg) - TOP_KEYS)]
    if not isinstance(cfg.get("output"), str):
        errs.append("output: required path")
    if "seed" in cfg and not (_is_int(cfg["seed"]) and 0 <= cfg["seed"] <= SEED_MAX):
        errs.append("seed: must be a 64-bit unsigned integer")
    if "nugget" in cfg and not (_is_num(cfg["nugget"]) and cfg["nugget"] >= 0):
        errs.append("nugget: must be a nonnegative number")
    if cfg.get("scale_time") not in (None, "day-of-year"):
        errs.append("scale_time: must be 'day-of-year' or null")
    if cmd in ("trend", "fit", "predict") or (cmd == "validate" and "predictions" not in cfg):
        _check_file(cfg, "data", errs)
    if cmd in ("fit",) or (cmd == "validate" and "predictions" not in cfg):
        _check_model_spec(cfg.get("model"), errs)
        _check_partition(cfg.get("partition"), errs)
        _check_optimizer(cfg.get("optimizer", {}), errs)
        _check_kriging(cfg.get("kriging", {}), errs)
        if cmd == "validate":
            _check_split(cfg.get("split", {}), errs)
    if cmd == "predict":
        _check_file(cfg, "fit", errs)
        _check_file(cfg, "targets", errs)
        _check_kriging(cfg.get("kriging", {}), errs)
        if cfg.get("trend") is not None:
            _check_file(cfg, "trend", errs)
    if cmd == "validate" and "predictions" in cfg:
        _check_file(cfg, "predictions", errs)
        _check_file(cfg, "truths", errs)
    if cmd == "simulate":
        sim = cfg.get("simulate")
        if not isinstance(sim, dict):
            errs.append("simulate: required object")
        else:
            has_case, has_model = "case" in sim, "model" in sim
            if has_case == has_model:
                errs.append("simulate: give exactly one of 'case' or 'model'")
            if has_case and sim["case"] not in CASE_IDS:
                errs.append(f"simulate.case: must be one of {list(CASE_IDS)}")
            if "points" in sim:
                _check_file(sim, "points", errs)
            grid = sim.get("grid", {})
            for k in ("nx", "ny", "nt"):
                if k in grid and not (_is_int(grid[k]) and grid[k] >= 1):
                    errs.append(f"simulate.grid.{k}: must be an integer >= 1")
    if cmd == "simstudy":
        st = cfg.get("simstudy", {})
        if not isinstance(st, dict):
            errs.append("simstudy: must be an object")
        else:
            cases = st.get("cases", list(CASE_IDS))
            if not (isinstance(cases, list) and cases and all(c in CASE_IDS for c in cases)):
                errs.append(f"simstudy.cases: must be a non-empty subset of {list(CASE_IDS)}")
            for k in ("n_runs", "workers"):
                if k in st and not (_is_int(st[k]) and st[k] >= 1):
                    errs.append(f"simstudy.{k}: must be an integer >= 1")
            if "scale" in st:
                try:
                    ScaleConfig.from_dict(st["scale"])
                except (TypeError, ValueError) as exc:
                    errs.append(f"simstudy.scale: {exc}")
    out = cfg.get("output")
    if isinstance(out, str):
        inputs = [cfg.get(k) for k in ("data", "fit", "targets", "predictions", "truths",
                                       "_config")]
        if isinstance(cfg.get("trend"), str):
            inputs.append(cfg["trend"])
        for src in inputs:
            if isinstance(src, str) and os.path.exists(src) and os.path.exists(out) \
                    and os.path.samefile(src, out):
                errs.append(f"output: {out} would overwrite the input {src}")
    if errs:
        raise ConfigError(errs)


def _check_plan_fits_data(cfg, grid: GridData):
    p = cfg["partition"]
    errs = []
    if p["M_s"] > grid.n_locations:
        errs.append(f"partition.M_s={p['M_s']} exceeds the {grid.n_locations} "
                    "distinct locations")
    if p["M_t"] > grid.n_times:
        errs.append(f"partition.M_t={p['M_t']} exceeds the {grid.n_times} distinct times")
    if errs:
        raise ConfigError(errs)


# ---------------------------------------------------------------------------
# helpers


def _scale_fn(cfg):
    return day_of_year_to_t if cfg.get("scale_time") == "day-of-year" else None


def _read_data(cfg):
    return read_dataset(cfg["data"], allow_duplicates=cfg.get("nugget", 0) > 0,
                        scale_time=_scale_fn(cfg))


def _spec_from_cfg(cfg):
    spec = ModelSpec.from_dict(cfg["model"])
    if cfg.get("nugget", 0) > 0 and spec.nugget == "fixed":
        spec.fixed.setdefault("nugget", float(cfg["nugget"]))
    return spec


def _fit(cfg, data):
    grid = GridData(data)
    _check_plan_fits_data(cfg, grid)
    p = cfg["partition"]
    seed = cfg.get("seed", 0)
    plan = make_partitions(grid.n_locations, grid.n_times, p["M_s"], p["R_s"], p["M_t"],
                           p["R_t"], p.get("seed", seed))
    ocfg = OptimizerConfig(**{"seed": seed, **cfg.get("optimizer", {})})
    return fit(data, _spec_from_cfg(cfg), plan, ocfg)


def _krige_targets(model, data: Dataset, targets, kcfg) -> PredictiveDistribution:
    """Kriging with the configured neighbourhood, grouped by target time."""
    k = {**KRIGE_DEFAULTS, **kcfg}
    targets = np.asarray(targets, dtype=float)
    if k["mode"] == "all":
        return krige(model, data, targets)
    if k["mode"] == "forecast" and k["time_range"] is not None:
        sub = neighborhood_select(data, float(targets[:, -1].max()), "forecast",
                                  k["window"], tuple(k["time_range"]))
        return krige(model, sub, targets)
    mean = np.empty(len(targets))
    var = np.empty(len(targets))
    for t in np.unique(targets[:, -1]):
        idx = np.flatnonzero(targets[:, -1] == t)
        sub = neighborhood_select(data, float(t), k["mode"], k["window"])
        pd = krige(model, sub, targets[idx])
        mean[idx], var[idx] = pd.mean, pd.variance
    return PredictiveDistribution(targets, mean, var)


def _ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(cfg):
    sim = cfg["simulate"]
    seed = sim.get("seed", cfg.get("seed", 0))
    if "points" in sim:
        pts, _ = read_points(sim["points"], _scale_fn(cfg))
    else:
        g = {"nx": 15, "ny": 15, "nt": 11, **sim.get("grid", {})}
        pts = grid_points(g["nx"], g["ny"], g["nt"])
    if "case" in sim:
        model = case_truth(sim["case"], np.unique(pts[:, -1]), sim.get("raw_index", False))
    else:
        model = model_from_dict(sim["model"])
    values = simulate_gp(model, pts, seed)
    write_dataset(Dataset(pts, values), cfg["output"])
    return {"output": cfg["output"], "n": int(len(values))}


def cmd_trend(cfg):
    data = _read_data(cfg)
    freqs = tuple(cfg.get("trend", {}).get("frequencies", DEFAULT_FREQUENCIES)) \
        if isinstance(cfg.get("trend"), dict) else DEFAULT_FREQUENCIES
    tm = ols_fit(data.points, data.values, freqs)
    out = _ensure_dir(cfg["output"])
    write_json(tm.to_dict(), os.path.join(out, "trend.json"))
    write_dataset(detrend(tm, data), os.path.join(out, "residuals.csv"))
    return {"output": out}


def cmd_fit(cfg):
    data = _read_data(cfg)
    res = _fit(cfg, data)
    write_json(res.to_dict(), cfg["output"])
    for w in res.warnings:
        log.warning(w)
    return {"output": cfg["output"], "converged": res.converged}


def cmd_predict(cfg):
    data = _read_data(cfg)
    model = model_from_dict(read_json(cfg["fit"])["model"])
    targets, _ = read_points(cfg["targets"], _scale_fn(cfg))
    tm = None
    if cfg.get("trend"):
        tm = TrendModel.from_dict(read_json(cfg["trend"]))
        data = detrend(tm, data)
    fit_doc = read_json(cfg["fit"])
    lo, hi = fit_doc.get("training_time_range", [-np.inf, np.inf])
    if model.variant == "tvar":
        t = targets[:, -1]
        n_out = int(np.sum((t < lo - 1e-12) | (t > hi + 1e-12)))
        if n_out:
            log.warning("time functions extrapolated to %d target(s) outside [%g, %g]",
                        n_out, lo, hi)
    kcfg = cfg.get("kriging", {})
    pd = _krige_targets(model, data, targets, kcfg)
    if tm is not None:
        pd = retrend(tm, pd)
    pd.to_csv(cfg["output"], kcfg.get("probs", KRIGE_DEFAULTS["probs"]))
    return {"output": cfg["output"], "n": int(len(targets))}


def _write_scores(rep, outdir, tag):
    name = "score.json" if not tag else f"score_{tag}.json"
    write_json(rep.to_dict(), os.path.join(outdir, name))
    rep.curves_to_csv(os.path.join(outdir, "curves.csv" if not tag else f"curves_{tag}.csv"))


def cmd_validate(cfg):
    out = _ensure_dir(cfg["output"])
    if "predictions" in cfg:
        tab = read_table(cfg["predictions"], ("x", "y", "t", "mean", "variance"))
        truth_pts, truth_vals = read_points(cfg["truths"])
        if truth_vals is None:
            raise DataError(f"{cfg['truths']}: missing column value")
        pts = np.column_stack([tab["x"], tab["y"], tab["t"]])
        if pts.shape != truth_pts.shape or not np.allclose(pts, truth_pts, rtol=0, atol=1e-9):
            raise DataError("predictions and truths must list the same (x, y, t) rows in order")
        if np.any(tab["variance"] < 0):
            raise DataError("predicted variances must be nonnegative")
        pd = PredictiveDistribution(pts, tab["mean"], tab["variance"])
        _write_scores(score(pd, truth_vals), out, "")
        return {"output": out}
    data = _read_data(cfg)
    seed = cfg.get("seed", 0)
    sp = {"seed": seed, **cfg.get("split", {})}
    tr, vi, vf = split_validation(data.points, SplitSpec(**sp))
    train = data.subset(tr)
    tm = None
    if cfg.get("trend"):
        tm = ols_fit(train.points, train.values)
        write_json(tm.to_dict(), os.path.join(out, "trend.json"))
        train = detrend(tm, train)
    res = _fit(cfg, train)
    write_json(res.to_dict(), os.path.join(out, "fit.json"))
    summary = {}
    for tag, idx in (("interpolation", vi), ("forecast", vf)):
        if len(idx) == 0:
            continue
        for w in extrapolation_warnings(res, data.points[idx, -1]):
            log.warning("%s: %s", tag, w)
        pd = _krige_targets(res.model, train, data.points[idx], cfg.get("kriging", {}))
        if tm is not None:
            pd = retrend(tm, pd)
        rep = score(pd, data.values[idx])
        _write_scores(rep, out, tag)
        summary[tag] = {"rmse": rep.rmse, "mcrps": rep.mcrps, "mlogs": rep.mlogs, "g": rep.g}
    return {"output": out, "scores": summary}


def cmd_simstudy(cfg):
    st = cfg.get("simstudy", {})
    scale = ScaleConfig.from_dict(st.get("scale", {}))
    rep = run_sim_study(tuple(st.get("cases", CASE_IDS)), scale, st.get("n_runs", 20),
                        st.get("seed", cfg.get("seed", 0)), st.get("workers", 1))
    write_report(rep, cfg["output"])
    return {"output": cfg["output"]}


COMMANDS = {"simulate": cmd_simulate, "trend": cmd_trend, "fit": cmd_fit,
            "predict": cmd_predict, "validate": cmd_validate, "simstudy": cmd_simstudy}


def build_parser():
    p = _Parser(prog="tvgm", description="Time-varying space-time Gaussian process toolkit")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="JSON run configuration")
        s.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config field (dotted key, JSON value)")
        s.add_argument("--output")
        s.add_argument("--data")
        s.add_argument("--seed", type=int)
        s.add_argument("--scale-time", choices=["day-of-year"], dest="scale_time")
        s.add_argument("--verbose", "-v", action="store_true")
        if name == "predict":
            s.add_argument("--targets")
    return p


def _emit_error(exc, code):
    doc = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    if isinstance(exc, ConfigError):
        doc["violations"] = exc.violations
    sys.stderr.write(json.dumps(doc, sort_keys=True) + "\n")
    return code


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        return _emit_error(exc, EXIT_USAGE)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
        validate_config(args.command, cfg)
        result = COMMANDS[args.command](cfg)
    except (ConfigError, UsageError, DomainError) as exc:
        return _emit_error(exc, EXIT_USAGE)
    except DataError as exc:
        return _emit_error(exc, EXIT_DATA)
    except NumericalError as exc:
        return _emit_error(exc, EXIT_NUMERICAL)
    sys.stdout.write(json.dumps(result, sort_keys=True) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
