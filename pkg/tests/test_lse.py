import numpy as np
import pytest

from cmar._design import Design, sse
from cmar.core import CmarModel, Dims, MatrixSeries
from cmar.cvar import cvar_fit
from cmar.fitting import FitConfig
from cmar.lse import lse_fit, lse_update_left, lse_update_right
from conftest import noiseless_design, random_instance


def test_scalar_ols_oracle():
    rng = np.random.default_rng(0)
    x = np.zeros(400)
    for t in range(1, 400):
        x[t] = 0.7 * x[t - 1] + rng.normal()
    res = lse_fit(MatrixSeries(x.reshape(-1, 1, 1)), FitConfig((1, 1)))
    dx, lag = np.diff(x), x[:-1]
    a = np.sum(dx * lag) / np.sum(lag * lag)
    assert res.model.Pi[0, 0] == pytest.approx(a, rel=1e-12)
    assert res.converged


@pytest.mark.parametrize("seed", range(5))
def test_column_view_matches_cvar(seed):
    model, series = random_instance(seed, Dims(4, 1, 1, 2, 1), T=500)
    res = lse_fit(series, FitConfig((2, 1), k=1))
    cv = cvar_fit(series.vectorized(), 2, 1, method="ls")
    assert np.linalg.norm(res.model.Pi - cv.Pi) < 1e-6
    assert np.linalg.norm(res.model.Gammas[0] - cv.Gamma[0]) < 1e-6


def test_row_view_matches_cvar():
    model, series = random_instance(3, Dims(1, 3, 0, 1, 2), T=400)
    res = lse_fit(series, FitConfig((1, 2)))
    cv = cvar_fit(series.vectorized(), 2, method="ls")
    assert np.linalg.norm(res.model.Pi - cv.Pi) < 1e-6


def test_full_rank_left_update_is_normal_equations():
    model, series = random_instance(4, Dims(3, 2, 0, 1, 1))
    A2 = np.random.default_rng(1).normal(size=(2, 2))
    A1, B1, D = lse_update_left(series, (A2, []), FitConfig((3, 1)))
    d = Design.from_series(series, 0, False)
    x = d.level @ A2.T
    Syx = np.einsum("nij,nkj->ik", d.resp, x)
    Sxx = np.einsum("nij,nkj->ik", x, x)
    assert np.allclose(A1, Syx @ np.linalg.inv(Sxx), atol=1e-10)
    assert D is None and B1 == []


@pytest.mark.parametrize("const", [False, True])
def test_updates_never_increase_objective(const):
    rng = np.random.default_rng(5)
    for seed in range(50):
        model, series = random_instance(seed, Dims(3, 2, 1, 1, 1), T=120, const=const)
        cfg = FitConfig((1, 1), 1, const)
        d = Design.from_series(series, 1, const)
        A1, A2 = rng.normal(size=(3, 3)), rng.normal(size=(2, 2))
        B = [(rng.normal(size=(3, 3)), rng.normal(size=(2, 2)))]
        D = rng.normal(size=(3, 2)) if const else None
        f0 = sse(d, A1, A2, B, D)
        nA1, nB1, nD = lse_update_left(series, (A2, [B[0][1]]), cfg)
        f1 = sse(d, nA1, A2, list(zip(nB1, [B[0][1]])), nD)
        nA2, nB2, nD = lse_update_right(series, (nA1, nB1), cfg)
        f2 = sse(d, nA1, nA2, list(zip(nB1, nB2)), nD)
        assert f1 <= f0 * (1 + 1e-12) and f2 <= f1 * (1 + 1e-12)
        assert np.linalg.matrix_rank(nA1) == 1


def test_right_update_mirrors_left_on_symmetric_data():
    rng = np.random.default_rng(6)
    X = rng.normal(size=(200, 3, 3)).cumsum(axis=0)
    X = X + X.transpose(0, 2, 1)
    s = MatrixSeries(X)
    F = rng.normal(size=(3, 3))
    F = F + F.T
    cfg = FitConfig((1, 1))
    A1, _, _ = lse_update_left(s, (F, []), cfg)
    A2, _, _ = lse_update_right(s, (F, []), cfg)
    assert np.allclose(A1, A2, atol=1e-10)


def test_trace_monotone_and_normalized():
    model, series = random_instance(7, Dims(3, 3, 1, 1, 1), T=400, const=True)
    res = lse_fit(series, FitConfig((1, 1), 1, True))
    assert np.all(np.diff(res.objective_trace) <= 1e-10 * np.abs(res.objective_trace[:-1]))
    m = res.model
    assert np.allclose(m.beta1.T @ m.beta1, 1, atol=1e-10)
    assert np.linalg.norm(m.A1) == pytest.approx(1.0)
    assert res.converged


@pytest.mark.parametrize("const", [False, True])
def test_exact_recovery_on_noiseless_design(const):
    model, series = random_instance(8, Dims(3, 3, 1, 1, 1), T=500, const=const)
    d = noiseless_design(model, series, const)
    warm = lse_fit(series, FitConfig((1, 1), 1, const)).model
    res = lse_fit(d, FitConfig((1, 1), 1, const, tol=1e-14, max_iter=2000, init=warm))
    m = res.model
    assert np.linalg.norm(m.beta1 @ m.beta1.T - model.beta1 @ model.beta1.T, 2) < 1e-8
    assert np.linalg.norm(m.beta2 @ m.beta2.T - model.beta2 @ model.beta2.T, 2) < 1e-8


def test_random_init_and_bad_inputs():
    model, series = random_instance(9, Dims(3, 2, 0, 1, 1))
    res = lse_fit(series, FitConfig((1, 1), init="random", seed=3))
    ref = lse_fit(series, FitConfig((1, 1)))
    assert res.objective == pytest.approx(ref.objective, rel=1e-6)
    with pytest.raises(ValueError):
        lse_fit(series, FitConfig((4, 1)))
    with pytest.raises(ValueError):
        lse_fit(Design.from_series(series, 0, False), FitConfig((1, 1)))
    bad = series.values.copy()
    bad[5, 0, 0] = np.nan
    with pytest.raises(ValueError):
        lse_fit(MatrixSeries(bad), FitConfig((1, 1)))
    with pytest.raises(ValueError):
        FitConfig(tol=0)


def test_collinear_regressors_ridge_flag():
    X = np.zeros((60, 2, 2))
    X[:, 0, 0] = np.cumsum(np.random.default_rng(0).normal(size=60))
    X[:, 1, 1] = X[:, 0, 0]
    res = lse_fit(MatrixSeries(X), FitConfig((1, 1)))
    assert res.ridged
    assert np.all(np.isfinite(res.model.Pi))
