from dataclasses import replace

import numpy as np
import pytest
from scipy.stats import multivariate_normal

from conftest import gneit, grid, tvar_case, tvar_poly
from tvgm.errors import DataError, DomainError
from tvgm.gp import (Dataset, PredictiveDistribution, duplicate_rows, full_loglik, krige,
                     neighborhood_select, prediction_interval, simulate_gp, time_step)
from tvgm.kernels import cov_eval


def _pointwise_cov(model, A, B, nugget_on_equal=True):
    out = np.empty((len(A), len(B)))
    for i, a in enumerate(A):
        for j, b in enumerate(B):
            out[i, j] = cov_eval(model, a, b)
            if not nugget_on_equal and np.array_equal(a, b):
                out[i, j] -= model.nugget
    return out


def test_full_loglik_matches_eigen_based_density():
    pts = grid(3, 3, 4)
    m = tvar_poly(pts[:, -1], nugget=0.05)
    x = simulate_gp(m, pts, seed=1)
    K = _pointwise_cov(m, pts, pts)
    expected = multivariate_normal(np.zeros(len(pts)), K).logpdf(x)
    assert full_loglik(m, Dataset(pts, x)) == pytest.approx(expected, rel=1e-10)


def test_krige_matches_brute_force_conditional_gaussian():
    pts = grid(3, 3, 4)
    m = tvar_case(2, pts[:, -1])
    m = replace(m, nugget=0.02)
    obs = Dataset(pts, simulate_gp(m, pts, seed=4))
    rng = np.random.default_rng(0)
    targets = np.column_stack([rng.uniform(size=(7, 2)), rng.uniform(0, 1.2, 7)])
    targets = np.vstack([targets, pts[3]])  # one target coincides with a datum
    K = _pointwise_cov(m, pts, pts)
    k = _pointwise_cov(m, pts, targets, nugget_on_equal=False)
    mean = k.T @ np.linalg.solve(K, obs.values)
    var = m.sigma ** 2 + m.nugget - np.einsum("ij,ij->j", k, np.linalg.solve(K, k))
    pd = krige(m, obs, targets, batch=3)
    assert np.allclose(pd.mean, mean, rtol=1e-8, atol=1e-10)
    assert np.allclose(pd.variance, var, rtol=1e-8, atol=1e-10)


def test_krige_interpolates_exactly_without_nugget():
    pts = grid(3, 3, 3)
    m = gneit()
    x = simulate_gp(m, pts, seed=2)
    pd = krige(m, Dataset(pts, x), pts[[0, 5, 20]])
    assert np.allclose(pd.mean, x[[0, 5, 20]], atol=1e-6)
    assert np.all(pd.variance >= 0) and np.all(pd.variance < 1e-6)


def test_simulate_gp_covariance_monte_carlo():
    pts = grid(2, 2, 2)
    m = gneit(nugget=0.1)
    draws = np.array([simulate_gp(m, pts, seed=s) for s in range(4000)])
    emp = np.cov(draws.T)
    K = _pointwise_cov(m, pts, pts)
    # sampling error of a covariance of unit-scale entries with 4000 draws is ~0.03
    assert np.max(np.abs(emp - K)) < 0.15
    assert np.allclose(simulate_gp(m, pts, 7), simulate_gp(m, pts, 7))


def test_simulate_gp_repeated_point_shares_process_value():
    m = gneit()
    pts = np.array([[0.1, 0.2, 0.0], [0.1, 0.2, 0.0], [0.5, 0.5, 0.5]])
    x = simulate_gp(m, pts, 3)
    assert x[0] == x[1]
    m2 = gneit(nugget=0.3)
    x2 = simulate_gp(m2, pts, 3)
    assert x2[0] != x2[1]


def test_dataset_validation_and_duplicates():
    with pytest.raises(DataError):
        Dataset(np.zeros((2, 3)), [1.0])
    with pytest.raises(DataError):
        Dataset(np.zeros((1, 3)), [np.nan])
    assert duplicate_rows([[0, 0, 0], [1, 0, 0], [0, 0, 0]]) == [2]


def test_prediction_interval_and_csv(tmp_path):
    pd = PredictiveDistribution(np.array([[0.0, 0.0, 0.0]]), [1.0], [4.0])
    lo, hi = prediction_interval(pd, 0.95)
    assert lo[0] == pytest.approx(1 - 2 * 1.959963984540054)
    assert hi[0] == pytest.approx(1 + 2 * 1.959963984540054)
    with pytest.raises(DomainError):
        prediction_interval(pd, 1.0)
    path = tmp_path / "p.csv"
    pd.to_csv(path, probs=[0.9])
    header = path.read_text().splitlines()[0]
    assert header == "x,y,t,mean,variance,lo_0.9,hi_0.9"


def test_neighborhood_selection():
    pts = grid(2, 2, 21)
    data = Dataset(pts, np.zeros(len(pts)))
    assert time_step(pts[:, -1]) == pytest.approx(0.05)
    sel = neighborhood_select(data, 0.5, "interpolate", window=2)
    assert np.allclose(np.unique(sel.times), [0.4, 0.45, 0.5, 0.55, 0.6])
    fc = neighborhood_select(data, 1.2, "forecast", window=3)
    assert np.allclose(np.unique(fc.times), [0.9, 0.95, 1.0])
    fr = neighborhood_select(data, 1.2, "forecast", time_range=(0.0, 0.1))
    assert len(fr) == 3 * 4
    with pytest.raises(DataError):
        neighborhood_select(data, 5.0, "interpolate", window=1)
    with pytest.raises(DomainError):
        neighborhood_select(data, 0.5, "sideways")
