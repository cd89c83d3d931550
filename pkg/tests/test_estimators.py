import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from drlqr import baselines
from drlqr.errors import DimensionError
from drlqr.estimators import DRQLearning, HInfController, LQRController, WassersteinLQR
from drlqr.model import CostSpec

from .conftest import rel_err


@pytest.fixture
def quad_kwargs(quad_sys):
    return dict(A=quad_sys.A, B=quad_sys.B, E=quad_sys.E, Q=np.eye(4), R=0.2 * np.eye(2))


def test_params_and_clone(quad_kwargs):
    est = WassersteinLQR(**quad_kwargs, lam=7.0)
    assert est.get_params()["lam"] == 7.0
    twin = clone(est).set_params(lam=8.0)
    assert twin.lam == 8.0 and est.lam == 7.0


def test_not_fitted(quad_kwargs):
    with pytest.raises(NotFittedError):
        WassersteinLQR(**quad_kwargs).predict(np.zeros((1, 4)))


def test_fit_matches_solver(quad_kwargs, quad_samples, quad_report):
    est = WassersteinLQR(**quad_kwargs).fit(quad_samples.atoms)
    assert np.array_equal(est.K_, quad_report.policy.K)
    X = np.random.default_rng(0).normal(size=(5, 4))
    np.testing.assert_allclose(est.predict(X), X @ quad_report.policy.K.T + quad_report.policy.r, rtol=1e-14)
    np.testing.assert_allclose(est.predict_adversary(X[0]), quad_report.policy.adversary(X[0])[None, :], rtol=1e-14)
    assert est.worst_case_atoms(X[0]).shape == (10, 2)
    with pytest.raises(DimensionError):
        est.predict(np.zeros((2, 3)))


def test_q_learning_scalar(scalar_samples, scalar_report):
    est = DRQLearning(A=[[0.9]], B=[[1.0]], E=[[1.0]], Q=[[1.0]], R=[[1.0]], alpha=0.95, lam=10.0,
                      M=200, epsilon=1e-8, max_iters=500, sigma=0.5)
    est.fit(scalar_samples.atoms.ravel())
    assert rel_err(est.K_, scalar_report.policy.K) <= 1e-6
    assert est.n_iter_ == len(est.history_)


def test_baseline_wrappers(quad_sys, quad_kwargs):
    lqr = LQRController(A=quad_sys.A, B=quad_sys.B, Q=np.eye(4), R=0.2 * np.eye(2)).fit()
    cost = CostSpec(np.eye(4), 0.2 * np.eye(2), 0.99, 6.0)
    assert np.array_equal(lqr.K_, baselines.lqr_gain(quad_sys, cost).K)
    hinf = HInfController(**quad_kwargs).fit()
    assert np.array_equal(hinf.K_, baselines.hinf_policy(quad_sys, cost.with_lambda(0.25)).K)
    assert not np.any(hinf.predict(np.zeros(4)))
