"""Estimator-style wrappers around the solvers.

``fit`` takes observed disturbance samples (one per row) and learns a
controller; ``predict`` maps states (one per row) to control inputs. The
wrappers follow the scikit-learn conventions: hyper-parameters are stored
verbatim in ``__init__``, fitted attributes end in an underscore, and
``get_params``/``set_params``/``clone`` work as usual.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from . import baselines, dr_riccati, qlearning
from .empirical import DisturbanceSamples, sample_stats
from .errors import DimensionError
from .model import CostSpec, ExplorationNoise, LtiSystem, PolicyPair


class _ControllerMixin:
    """Shared plant/cost handling and the affine ``predict``."""

    def _plant(self):
        sys = LtiSystem(self.A, self.B, self.E)
        return sys, CostSpec(self.Q, self.R, self.alpha, self.lam)

    def _set_policy(self, policy: PolicyPair):
        self.K_ = np.array(policy.K)
        self.r_ = np.array(policy.r)
        self.L_ = np.array(policy.L)
        self.l_ = np.array(policy.l)
        self.n_features_in_ = self.K_.shape[1]

    def _states(self, X):
        check_is_fitted(self, "K_")
        X = check_array(X, ensure_2d=False)
        X = np.atleast_2d(X)
        if X.shape[1] != self.n_features_in_:
            raise DimensionError(f"expected states with {self.n_features_in_} entries, got {X.shape[1]}")
        return X

    def predict(self, X):
        """Control inputs ``u = K x + r`` for each state row of ``X``."""
        return self._states(X) @ self.K_.T + self.r_

    def predict_adversary(self, X):
        """Worst-case disturbance mean ``L x + l`` for each state row."""
        return self._states(X) @ self.L_.T + self.l_

    def _samples(self, W):
        W = check_array(W, ensure_2d=False)
        if W.ndim == 1:
            W = W.reshape(-1, 1)
        return DisturbanceSamples(W)


class WassersteinLQR(_ControllerMixin, BaseEstimator):
    """Model-based Wasserstein distributionally robust LQ controller."""

    def __init__(self, A=None, B=None, E=None, Q=None, R=None, alpha=0.99, lam=6.0, tol=1e-10, max_iter=100_000):
        self.A = A
        self.B = B
        self.E = E
        self.Q = Q
        self.R = R
        self.alpha = alpha
        self.lam = lam
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, W, y=None):
        sys, cost = self._plant()
        report = dr_riccati.solve(sys, cost, self._samples(W), self.tol, self.max_iter)
        self.report_ = report
        self.P_ = report.value.P
        self.g_ = report.value.g
        self.z_ = report.value.z
        self._set_policy(report.policy)
        return self

    def worst_case_atoms(self, x):
        check_is_fitted(self, "report_")
        return self.report_.worst_case.atoms(x)


class DRQLearning(_ControllerMixin, BaseEstimator):
    """Model-free variant: the plant matrices are used only as a simulator."""

    def __init__(
        self, A=None, B=None, E=None, Q=None, R=None, alpha=0.99, lam=6.0,
        M=900, epsilon=1e-6, max_iters=3000, sigma=0.1, seed=0, reference_x0=None,
    ):
        self.A = A
        self.B = B
        self.E = E
        self.Q = Q
        self.R = R
        self.alpha = alpha
        self.lam = lam
        self.M = M
        self.epsilon = epsilon
        self.max_iters = max_iters
        self.sigma = sigma
        self.seed = seed
        self.reference_x0 = reference_x0

    def fit(self, W, y=None):
        sys, cost = self._plant()
        n, m, d = sys.dims
        cfg = qlearning.LearnConfig(
            M=self.M,
            epsilon=self.epsilon,
            max_iters=self.max_iters,
            exploration=ExplorationNoise.isotropic(m, d, self.sigma),
            seed=self.seed,
            reference_x0=None if self.reference_x0 is None else np.asarray(self.reference_x0, dtype=float),
        )
        qp, policy, logs = qlearning.learn(sys, cost, sample_stats(self._samples(W)), cfg)
        self.qparams_ = qp
        self.n_iter_ = len(logs)
        self.history_ = logs
        self._set_policy(policy)
        return self


class LQRController(_ControllerMixin, BaseEstimator):
    """Discounted LQR; ``fit`` ignores its data argument."""

    def __init__(self, A=None, B=None, Q=None, R=None, alpha=baselines.LQR_ALPHA):
        self.A = A
        self.B = B
        self.Q = Q
        self.R = R
        self.alpha = alpha

    def fit(self, X=None, y=None):
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        sys = LtiSystem(self.A, B, np.zeros((B.shape[0], 1)))
        cost = CostSpec(self.Q, self.R, 0.5, 1.0)  # alpha/lam unused by the gain
        self._set_policy(baselines.lqr_gain(sys, cost, self.alpha))
        return self


class HInfController(_ControllerMixin, BaseEstimator):
    """Zero-mean game controller at penalty ``lam``; ``fit`` ignores its data."""

    def __init__(self, A=None, B=None, E=None, Q=None, R=None, alpha=0.99, lam=0.25):
        self.A = A
        self.B = B
        self.E = E
        self.Q = Q
        self.R = R
        self.alpha = alpha
        self.lam = lam

    def fit(self, X=None, y=None):
        sys, cost = self._plant()
        self._set_policy(baselines.hinf_policy(sys, cost))
        return self
