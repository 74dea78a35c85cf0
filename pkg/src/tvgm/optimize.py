"""
Derivative-free minimisation by the Nelder-Mead simplex method.

Uses the dimension-adaptive coefficients of Gao and Han (2012), which behave
better than the classic (1, 2, 1/2, 1/2) set beyond a handful of dimensions.
Convergence is declared when the relative spread of objective values across
the simplex falls below ``tol``, i.e. no vertex improves on another by more
than a relative ``tol``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class OptimizerConfig:
    max_iters: int = 2000
    tol: float = 1e-6
    multistart: int = 1
    seed: int = 0
    initial_step: float = 0.25
    start_jitter: float = 0.3

    def to_dict(self):
        return {"max_iters": self.max_iters, "tol": self.tol, "multistart": self.multistart,
                "seed": self.seed, "initial_step": self.initial_step,
                "start_jitter": self.start_jitter}


@dataclass
class SimplexResult:
    x: np.ndarray
    fun: float
    iterations: int
    converged: bool
    trace: list = field(default_factory=list)
    evaluations: int = 0


def _spread(f_lo, f_hi):
    if not np.isfinite(f_hi):
        return np.inf
    return 2.0 * abs(f_hi - f_lo) / (abs(f_hi) + abs(f_lo) + 1e-300)


def nelder_mead(f, x0, step=0.25, max_iters=2000, tol=1e-6) -> SimplexResult:
    """Minimise ``f`` from ``x0``.

    ``f`` may return ``inf`` for infeasible points; the start must be finite.
    The initial simplex adds ``step`` to each coordinate in turn. ``trace``
    holds the best value after every iteration.
    """
    x0 = np.asarray(x0, dtype=float)
    n = len(x0)
    if n == 0:
        v = float(f(x0))
        return SimplexResult(x0, v, 0, True, [v], 1)
    refl, expand = 1.0, 1.0 + 2.0 / n
    contract, shrink = 0.75 - 1.0 / (2.0 * n), 1.0 - 1.0 / n
    sim = np.vstack([x0] + [x0 + step * e for e in np.eye(n)])
    fs = np.array([f(x) for x in sim], dtype=float)
    nev = n + 1
    trace = []
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        order = np.argsort(fs, kind="stable")
        sim, fs = sim[order], fs[order]
        trace.append(float(fs[0]))
        if _spread(fs[0], fs[-1]) < tol:
            converged = True
            break
        centroid = sim[:-1].mean(axis=0)
        xr = centroid + refl * (centroid - sim[-1])
        fr = f(xr)
        nev += 1
        if fr < fs[0]:
            xe = centroid + expand * (xr - centroid)
            fe = f(xe)
            nev += 1
            if fe < fr:
                sim[-1], fs[-1] = xe, fe
            else:
                sim[-1], fs[-1] = xr, fr
            continue
        if fr < fs[-2]:
            sim[-1], fs[-1] = xr, fr
            continue
        if fr < fs[-1]:
            xc = centroid + contract * (xr - centroid)
        else:
            xc = centroid - contract * (centroid - sim[-1])
        fc = f(xc)
        nev += 1
        if fc < min(fr, fs[-1]):
            sim[-1], fs[-1] = xc, fc
            continue
        sim[1:] = sim[0] + shrink * (sim[1:] - sim[0])
        fs[1:] = [f(x) for x in sim[1:]]
        nev += n
    best = int(np.argmin(fs))
    return SimplexResult(sim[best].copy(), float(fs[best]), it, converged, trace, nev)


def minimize(f, x0, cfg: OptimizerConfig) -> SimplexResult:
    """Nelder-Mead with optional multistart.

    Start 0 is ``x0``; the other ``multistart - 1`` starts add Gaussian jitter
    (sd ``start_jitter``) drawn from ``cfg.seed``. Starts whose objective is not
    finite are skipped. The best result is returned, with iterations and
    traces of all starts concatenated.
    """
    x0 = np.asarray(x0, dtype=float)
    rng = np.random.default_rng(cfg.seed)
    starts = [x0] + [x0 + cfg.start_jitter * rng.standard_normal(len(x0))
                     for _ in range(max(cfg.multistart, 1) - 1)]
    best = None
    total_it, trace = 0, []
    for k, s in enumerate(starts):
        if k > 0 and not np.isfinite(f(s)):
            continue
        res = nelder_mead(f, s, cfg.initial_step, cfg.max_iters, cfg.tol)
        total_it += res.iterations
        trace += res.trace
        if best is None or res.fun < best.fun:
            best = res
    best.iterations = total_it
    best.trace = trace
    return best
