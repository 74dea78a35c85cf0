import math

import numpy as np
import pytest

from conftest import tvar_poly
from tvgm.errors import DomainError
from tvgm.kernels import alpha_bar
from tvgm.optimize import OptimizerConfig, minimize, nelder_mead
from tvgm.params import ParamMap, param_names


def test_param_names_order():
    assert param_names("sep") == ["sigma", "a", "gamma", "delta", "alpha", "nu", "nugget"]
    assert param_names("tvar", 1, 0) == ["sigma", "a", "gamma", "beta", "delta", "alpha_c0",
                                         "alpha_c1", "nu_c0", "nugget"]
    with pytest.raises(DomainError):
        param_names("other")


def test_transform_round_trip_and_reference_values():
    t = np.linspace(0, 1, 6)
    pm = ParamMap("tvar", t, 2, 1, fixed={"nugget": 0.0})
    theta = np.array([1.3, 2.0, 0.8, 0.3, 0.0, 1.5, -0.4, 0.2, 0.1, -0.3])
    u = pm.transform(theta)
    assert u[2] == pytest.approx(math.log(4.0), abs=1e-12)     # logit(0.8)
    assert u[0] == pytest.approx(math.log(1.3))
    assert u[4] == pytest.approx(math.log(1e-8))               # delta = 0 with offset
    assert np.allclose(pm.untransform(u), theta, rtol=1e-12, atol=1e-15)
    assert pm.transform_names()["alpha_c1"] == "identity"


def test_logit_clamped_at_boundaries():
    pm = ParamMap("gneit", [0.0, 1.0], fixed={"nugget": 0.0})
    th = np.array([1.0, 1.0, 1.0, 0.0, 0.1, 2.0, 1.0])
    u = pm.transform(th)
    assert np.isfinite(u).all()
    back = pm.untransform(u)
    assert back[2] == pytest.approx(1 - 1e-9) and back[3] == pytest.approx(1e-9)
    with pytest.raises(DomainError):
        pm.transform(np.array([1.0, 1.0, 1.2, 0.5, 0.1, 2.0, 1.0]))


def test_to_model_recomputes_alpha_bar():
    t = np.linspace(0, 1, 5)
    pm = ParamMap("tvar", t, 1, 0, fixed={"nugget": 0.0})
    m = pm.to_model(np.array([1.0, 1.0, 0.5, 0.5, 0.1, 2.0, 0.7, 0.0]))
    assert m.alpha_bar == pytest.approx(np.mean(np.exp(2.0 + 0.7 * t)))
    assert m.alpha_bar == pytest.approx(alpha_bar(m.alpha_fn, t))
    back = pm.from_model(m)
    assert np.allclose(back, [1.0, 1.0, 0.5, 0.5, 0.1, 2.0, 0.7, 0.0])


def test_delta_offset_does_not_move_interior_values():
    t = np.linspace(0, 1, 3)
    theta = np.array([1.0, 1.0, 0.5, 0.5, 0.3, 2.0, 0.0])
    for off in (1e-8, 1e-4):
        pm = ParamMap("tvar", t, 0, 0, fixed={"nugget": 0.0}, delta_offset=off)
        assert np.allclose(pm.untransform(pm.transform(theta)), theta, rtol=1e-12)


def test_fixed_parameters_are_excluded_and_validated():
    pm = ParamMap("sep", [0.0], fixed={"a": 2.0, "nugget": 0.0})
    assert "a" not in pm.names and len(pm) == 5
    with pytest.raises(DomainError):
        ParamMap("sep", [0.0], fixed={"beta": 0.1})
    m = tvar_poly(np.linspace(0, 1, 3))
    with pytest.raises(DomainError):
        ParamMap("sep", [0.0]).from_model(m)


def _rosen(x):
    return float(np.sum(100 * (x[1:] - x[:-1] ** 2) ** 2 + (1 - x[:-1]) ** 2))


def test_nelder_mead_minimises_quadratic_and_rosenbrock():
    q = nelder_mead(lambda x: float(np.sum((x - 3.0) ** 2)) + 1.0, np.zeros(4), tol=1e-12,
                    max_iters=5000)
    assert q.converged and np.allclose(q.x, 3.0, atol=1e-4)
    r = nelder_mead(_rosen, np.array([-1.2, 1.0]), tol=1e-14, max_iters=5000)
    assert np.allclose(r.x, 1.0, atol=1e-3)
    assert all(a >= b for a, b in zip(r.trace, r.trace[1:]))


def test_nelder_mead_handles_infeasible_region():
    f = lambda x: np.inf if x[0] < 0 else (x[0] - 0.5) ** 2 + x[1] ** 2 + 1.0
    r = nelder_mead(f, np.array([2.0, 1.0]), step=1.0, tol=1e-12, max_iters=3000)
    assert r.x[0] == pytest.approx(0.5, abs=1e-3)


def test_restart_at_optimum_stays_within_tolerance():
    f = lambda x: float(np.sum((x - 1.5) ** 2)) + 2.0
    cfg = OptimizerConfig(tol=1e-10, max_iters=5000)
    first = minimize(f, np.zeros(3), cfg)
    again = minimize(f, first.x, cfg)
    assert abs(again.fun - first.fun) <= 1e-6 * abs(first.fun)


def test_multistart_is_seeded_and_not_worse():
    cfg1 = OptimizerConfig(multistart=1, max_iters=200)
    cfg4 = OptimizerConfig(multistart=4, max_iters=200, seed=3)
    a = minimize(_rosen, np.array([-1.2, 1.0, 0.5]), cfg4)
    b = minimize(_rosen, np.array([-1.2, 1.0, 0.5]), cfg4)
    c = minimize(_rosen, np.array([-1.2, 1.0, 0.5]), cfg1)
    assert np.array_equal(a.x, b.x)
    assert a.fun <= c.fun
