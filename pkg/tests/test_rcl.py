import numpy as np
import pytest
from scipy.stats import multivariate_normal

from conftest import gneit, grid, sep, tvar_poly
from tvgm.errors import DataError, DomainError, ScaleError
from tvgm.gp import Dataset, full_loglik, simulate_gp
from tvgm.kernels import cov_eval
from tvgm.optimize import OptimizerConfig
from tvgm.rcl import (GridData, ModelSpec, RCLObjective, default_param_map, degenerate_plan,
                      expected_hessian, fit, godambe_variance, make_partitions, nested_start,
                      rcl_loglik, rcl_score, score_covariance)


def _dataset(model, nx=3, nt=4, seed=0):
    pts = grid(nx, nx, nt)
    return Dataset(pts, simulate_gp(model, pts, seed))


def test_partition_sizes_are_near_equal():
    plan = make_partitions(500, 46, M_s=20, R_s=2, M_t=7, R_t=1, seed=3)
    for rep in plan.spatial_blocks:
        assert [len(b) for b in rep] == [25] * 20
        assert sorted(np.concatenate(rep).tolist()) == list(range(500))
    sizes = [len(b) for b in plan.temporal_blocks[0]]
    assert sorted(sizes) == [6, 6, 6, 7, 7, 7, 7]
    assert all(np.all(np.diff(b) > 0) for b in plan.temporal_blocks[0])
    assert plan.shape == {"M_s": 20, "R_s": 2, "M_t": 7, "R_t": 1}
    # 322 locations into 46 blocks gives exactly 7 each
    plan = make_partitions(322, 5, 46, 1, 1, 1, seed=0)
    assert {len(b) for b in plan.spatial_blocks[0]} == {7}


def test_partitions_reproducible_and_validated():
    a = make_partitions(30, 10, 4, 2, 3, 1, seed=9).to_dict()
    b = make_partitions(30, 10, 4, 2, 3, 1, seed=9).to_dict()
    assert a == b
    with pytest.raises(DomainError) as exc:
        make_partitions(10, 5, 11, 0, 6, 1, seed=0)
    msg = str(exc.value)
    assert "M_s" in msg and "R_s" in msg and "M_t" in msg


def test_degenerate_plan_equals_full_likelihood():
    m = tvar_poly(np.linspace(0, 1, 4), nugget=0.01)
    data = _dataset(m)
    plan = degenerate_plan(9, 4)
    assert rcl_loglik(m, data, plan) == pytest.approx(full_loglik(m, data), rel=1e-12)


def test_rcl_matches_block_sum_oracle():
    m = gneit()
    data = _dataset(m, nx=4, nt=5, seed=2)
    plan = make_partitions(16, 5, M_s=3, R_s=2, M_t=2, R_t=1, seed=4)
    grid_data = GridData(data)
    total = 0.0
    for _, _, _, idx in plan.blocks(grid_data):
        P = data.points[idx]
        K = np.array([[cov_eval(m, a, b) for b in P] for a in P])
        total += multivariate_normal(np.zeros(len(idx)), K).logpdf(data.values[idx])
    assert rcl_loglik(m, data, plan) == pytest.approx(0.5 * total, rel=1e-10)


def test_whole_data_replicates_scale_linearly():
    m = sep()
    data = _dataset(m)
    plan = make_partitions(9, 4, 1, 2, 1, 2, seed=0)
    assert rcl_loglik(m, data, plan) == pytest.approx(2 * full_loglik(m, data), rel=1e-12)


def test_objective_rejects_mismatched_plan_and_duplicates():
    m = sep()
    data = _dataset(m)
    with pytest.raises(DataError):
        RCLObjective(data, make_partitions(10, 4, 2, 1, 2, 1, 0))
    dup = Dataset(np.vstack([data.points, data.points[:1]]), np.append(data.values, 0.0))
    with pytest.raises(DataError):
        GridData(dup)


@pytest.mark.parametrize("model", [sep(), gneit(), tvar_poly(np.linspace(0, 1, 4))],
                         ids=["sep", "gneit", "tvar"])
def test_analytic_score_matches_difference_quotient(model):
    data = _dataset(model, seed=5)
    plan = make_partitions(9, 4, 3, 1, 2, 1, seed=1)
    ga = rcl_score(model, data, plan, "analytic")
    gf = rcl_score(model, data, plan, "finite-difference")
    assert np.allclose(ga, gf, rtol=1e-4, atol=1e-4 * np.max(np.abs(gf)))


def _fisher_oracle(model, points, pmap):
    theta = pmap.from_model(model)
    K = lambda th: np.array([[cov_eval(pmap.to_model(th), a, b) for b in points] for a in points])
    Kinv = np.linalg.inv(K(theta))
    dK = []
    for k in range(len(theta)):
        h = 1e-6 * max(abs(theta[k]), 1.0)
        up, dn = theta.copy(), theta.copy()
        up[k] += h
        dn[k] -= h
        dK.append((K(up) - K(dn)) / (2 * h))
    p = len(theta)
    return np.array([[0.5 * np.trace(Kinv @ dK[r] @ Kinv @ dK[s]) for s in range(p)]
                     for r in range(p)])


def test_degenerate_hessian_and_godambe_equal_fisher_information():
    m = gneit()
    pts = grid(3, 3, 3)
    # two distinct time lags cannot identify all four temporal parameters
    pmap = default_param_map(m, pts[:, -1], fixed={"a": m.a, "gamma": m.gamma})
    plan = degenerate_plan(9, 3)
    fisher = _fisher_oracle(m, pts, pmap)
    H = expected_hessian(m, plan, pts, pmap)
    J = score_covariance(m, plan, pts, pmap)
    assert np.allclose(H, fisher, rtol=1e-4, atol=1e-6 * np.max(np.abs(fisher)))
    assert np.allclose(J, fisher, rtol=1e-4, atol=1e-6 * np.max(np.abs(fisher)))
    G = godambe_variance(m, plan, pts, pmap)
    assert np.allclose(G, np.linalg.inv(fisher), rtol=1e-3)


def test_score_covariance_matches_monte_carlo():
    m = sep(delta=0.5)
    pts = grid(3, 3, 4)
    plan = make_partitions(9, 4, 3, 1, 2, 1, seed=2)
    pmap = default_param_map(m, pts[:, -1], fixed={"a": m.a, "gamma": m.gamma})
    J = score_covariance(m, plan, pts, pmap)
    scores = np.array([rcl_score(m, Dataset(pts, simulate_gp(m, pts, s)), plan, pmap=pmap)
                       for s in range(600)])
    emp = np.cov(scores.T)
    # mean score is zero and the covariance matches within Monte-Carlo error (~6%)
    se = np.sqrt(np.diag(J) / len(scores))
    assert np.all(np.abs(scores.mean(axis=0)) < 4 * se)
    assert np.allclose(np.diag(emp), np.diag(J), rtol=0.2)
    rel = np.linalg.norm(emp - J) / np.linalg.norm(J)
    assert rel < 0.2


def test_scale_caps_refuse_large_blocks():
    m = sep()
    pts = grid(21, 21, 5)  # 2205 points in one block
    plan = degenerate_plan(441, 5)
    with pytest.raises(ScaleError):
        expected_hessian(m, plan, pts)


def test_fit_recovers_separable_parameters_roughly():
    truth = sep(sigma=1.0, a=3.0, gamma=0.5, delta=1.0, alpha=4.0, nu=0.8)
    data = _dataset(truth, nx=6, nt=8, seed=11)
    plan = make_partitions(36, 8, 3, 1, 2, 1, seed=0)
    spec = ModelSpec("sep", fixed={"a": 3.0, "gamma": 0.5})
    res = fit(data, spec, plan, OptimizerConfig(max_iters=600))
    assert res.converged
    assert res.objective_value == pytest.approx(-min(-v for v in res.trace), rel=1e-12)
    assert res.objective_value >= rcl_loglik(spec.param_map(data.times).to_model(
        np.array([res.initial[n] for n in res.param_names])), data, plan)
    assert 0.5 < res.model.sigma < 2.0
    doc = res.to_dict()
    assert doc["plan"]["M_s"] == 3 and doc["variant"] == "sep"


def test_nested_start_reproduces_simpler_model():
    g = gneit()
    spec = ModelSpec("tvar", alpha_order=2, nu_order=1)
    start = nested_start(g, spec)
    t = np.linspace(0, 1, 4)
    pmap = spec.param_map(t)
    tv = pmap.to_model(np.array([start[n] for n in pmap.names]))
    pts = grid(3, 3, 4)
    from tvgm.kernels import cross_cov
    assert np.allclose(cross_cov(tv, pts), cross_cov(g, pts), rtol=1e-12)


def _small_sep_problem():
    truth = sep(sigma=1.0, a=3.0, gamma=0.5, delta=1.0, alpha=4.0, nu=0.8)
    data = _dataset(truth, nx=5, nt=6, seed=21)
    plan = make_partitions(25, 6, 2, 1, 2, 1, seed=0)
    spec = ModelSpec("sep", fixed={"a": 3.0, "gamma": 0.5})
    return data, plan, spec


def test_restart_from_optimum_is_a_fixed_point():
    from tvgm.rcl import fit_from_model
    data, plan, spec = _small_sep_problem()
    cfg = OptimizerConfig(max_iters=800, tol=1e-9)
    first = fit(data, spec, plan, cfg)
    again = fit_from_model(data, spec, plan, first.model, cfg)
    assert again.objective_value >= first.objective_value - 1e-6 * abs(first.objective_value)
    assert abs(again.objective_value - first.objective_value) <= 1e-6 * abs(first.objective_value)


def test_optimum_invariant_to_delta_offset():
    data, plan, spec = _small_sep_problem()
    cfg = OptimizerConfig(max_iters=800, tol=1e-10)
    a = fit(data, spec, plan, cfg, delta_offset=1e-8)
    b = fit(data, spec, plan, cfg, delta_offset=1e-5)
    assert abs(a.objective_value - b.objective_value) <= 1e-6 * abs(a.objective_value)
    assert a.model.sigma == pytest.approx(b.model.sigma, rel=1e-2)
    assert a.model.delta == pytest.approx(b.model.delta, rel=5e-2, abs=1e-3)


def test_score_sign_when_sigma_too_large():
    truth = sep(sigma=1.0)
    data = _dataset(truth, nx=4, nt=5, seed=8)
    plan = make_partitions(16, 5, 2, 1, 2, 1, seed=0)
    pmap = default_param_map(truth, data.times)
    g = rcl_score(sep(sigma=2.0), data, plan, pmap=pmap)
    assert g[pmap.names.index("sigma")] < 0


def test_godambe_variance_shrinks_with_more_times():
    m = gneit()
    fixed = {"a": m.a, "gamma": m.gamma}
    traces = []
    for nt in (4, 8):
        pts = grid(3, 3, nt, t_max=(nt - 1) / 3)
        pmap = default_param_map(m, pts[:, -1], fixed=fixed)
        plan = make_partitions(9, nt, 3, 1, 2, 1, seed=0)
        traces.append(np.trace(godambe_variance(m, plan, pts, pmap)))
    assert traces[1] < traces[0]
