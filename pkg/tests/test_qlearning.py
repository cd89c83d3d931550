import numpy as np
import pytest

from drlqr import baselines, qlearning
from drlqr.dr_riccati import assemble_blocks, extract_policy
from drlqr.empirical import SampleStats, sample_stats
from drlqr.errors import (
    ConfigError,
    ExcitationError,
    LearningError,
    PreconditionError,
    SaddleStructureError,
)
from drlqr.model import CostSpec, ExplorationNoise, LtiSystem, PolicyPair, Transition, rollout_arrays
from drlqr.qfunction import QParams, greedy_policies, pack_theta, q_from_value
from drlqr.qlearning import (
    LearnConfig,
    closed_form_iterate,
    cost_indicator,
    learn,
    lstsq_update,
    min_rollout_length,
    target_value,
)

from .conftest import rel_err


def scalar_config(**kw):
    base = dict(M=200, epsilon=1e-8, max_iters=500, exploration=ExplorationNoise.isotropic(1, 1, 0.5))
    base.update(kw)
    return LearnConfig(**base)


class TestTarget:
    def test_zero_everything(self, quad_cost):
        t = Transition(np.ones(4), np.zeros(2), np.zeros(2), np.zeros(4))
        qp = QParams.zero(4, 2, 2)
        assert target_value(quad_cost, SampleStats.zero(2), qp, PolicyPair.zeros(4, 2, 2), t) == 4.0

    def test_disturbance_penalty(self, quad_cost):
        t = Transition(np.zeros(4), np.array([1.0, 0.0]), np.array([1.0, 1.0]), np.zeros(4))
        stats = SampleStats(np.array([1.0, 0.0]), np.zeros((2, 2)))
        qp = QParams.zero(4, 2, 2)
        # 0.2 * 1 - 6 * |(0, 1)|^2
        assert target_value(quad_cost, stats, qp, PolicyPair.zeros(4, 2, 2), t) == pytest.approx(-5.8)

    def test_continuation_uses_policy(self):
        cost = CostSpec([[1.0]], [[1.0]], 0.5, 1.0)
        qp = QParams(np.eye(3), np.zeros(3), 2.0, (1, 1, 1))
        policy = PolicyPair([[1.0]], [0.0], [[0.0]], [1.0])
        t = Transition(np.zeros(1), np.zeros(1), np.zeros(1), np.array([2.0]))
        # e' = (2, 2, 1), Q_i(e') = 4 + 4 + 1 + 2 = 11
        assert target_value(cost, SampleStats.zero(1), qp, policy, t) == pytest.approx(5.5)


class TestRegression:
    def _batch(self, sys, policy, sigma, M, seed):
        noise = ExplorationNoise.isotropic(sys.m, sys.d, sigma)
        n = sys.n
        return rollout_arrays(
            sys, policy, noise, np.zeros(n), M, np.random.default_rng(seed),
            reset_bound=10.0, reset_box=np.tile([-1.0, 1.0], (n, 1)),
        )

    def test_scalar_matches_closed_form(self, scalar_sys, scalar_cost, scalar_samples, scalar_report):
        stats = sample_stats(scalar_samples)
        qp = q_from_value(scalar_sys, scalar_cost, scalar_report.value, stats)
        qp = QParams(qp.H * 0.7, qp.G, qp.s, qp.dims)  # off the fixed point
        policy = greedy_policies(qp)
        batch = self._batch(scalar_sys, policy, 0.5, 200, 0)
        theta = lstsq_update(batch, qp, policy, scalar_cost, stats)
        ref = pack_theta(closed_form_iterate(scalar_sys, scalar_cost, stats, qp, policy))
        assert rel_err(theta, ref) <= 1e-6

    def test_quadrotor_matches_closed_form(self, quad_sys, quad_cost, quad_stats, quad_report):
        qp = q_from_value(quad_sys, quad_cost, quad_report.value, quad_stats)
        policy = quad_report.policy
        batch = self._batch(quad_sys, policy, 0.1, 900, 1)
        theta = lstsq_update(batch, qp, policy, quad_cost, quad_stats)
        ref = pack_theta(closed_form_iterate(quad_sys, quad_cost, quad_stats, qp, policy))
        assert rel_err(theta, ref) <= 1e-6

    def test_transition_list_equivalent(self, scalar_sys, scalar_cost, scalar_samples):
        from drlqr.model import rollout

        stats = sample_stats(scalar_samples)
        noise = ExplorationNoise.isotropic(1, 1, 0.5)
        ts = rollout(scalar_sys, PolicyPair.zeros(1, 1, 1), noise, [0.5], 100, np.random.default_rng(2))
        arrays = rollout_arrays(scalar_sys, PolicyPair.zeros(1, 1, 1), noise, [0.5], 100, np.random.default_rng(2))
        qp, pol = QParams.zero(1, 1, 1), PolicyPair.zeros(1, 1, 1)
        a = lstsq_update(ts, qp, pol, scalar_cost, stats)
        b = lstsq_update(arrays, qp, pol, scalar_cost, stats)
        assert np.array_equal(a, b)

    def test_zero_noise_is_not_exciting(self, scalar_sys, scalar_cost, scalar_samples):
        stats = sample_stats(scalar_samples)
        batch = self._batch(scalar_sys, PolicyPair.zeros(1, 1, 1), 0.0, 200, 0)
        with pytest.raises(ExcitationError):
            lstsq_update(batch, QParams.zero(1, 1, 1), PolicyPair.zeros(1, 1, 1), scalar_cost, stats)

    def test_too_few_samples(self, scalar_cost):
        X = np.ones((3, 1))
        with pytest.raises(ExcitationError):
            lstsq_update((X, X, X, X), QParams.zero(1, 1, 1), PolicyPair.zeros(1, 1, 1), scalar_cost, SampleStats.zero(1))


class TestClosedForm:
    def test_first_iteration(self, quad_sys, quad_cost, quad_stats):
        qp = closed_form_iterate(quad_sys, quad_cost, quad_stats, QParams.zero(4, 2, 2), PolicyPair.zeros(4, 2, 2))
        assert np.array_equal(qp.H[:4, :4], np.eye(4))
        assert np.array_equal(qp.H[4:6, 4:6], 0.2 * np.eye(2))
        assert np.array_equal(qp.H[6:, 6:], -6.0 * np.eye(2))
        np.testing.assert_allclose(qp.G[6:], 12.0 * quad_stats.mean, rtol=1e-15)
        assert not np.any(qp.G[:6])

    def test_fixed_point(self, quad_sys, quad_cost, quad_stats, quad_report):
        qp = q_from_value(quad_sys, quad_cost, quad_report.value, quad_stats)
        nxt = closed_form_iterate(quad_sys, quad_cost, quad_stats, qp, quad_report.policy)
        assert rel_err(pack_theta(nxt), pack_theta(qp)) <= 1e-8

    def test_no_disturbance_channel_is_lqr(self):
        sys = LtiSystem([[0.9]], [[1.0]], [[0.0]])
        cost = CostSpec([[1.0]], [[1.0]], 0.95, 10.0)
        qp, policy = QParams.zero(1, 1, 1), PolicyPair.zeros(1, 1, 1)
        for _ in range(400):
            qp = closed_form_iterate(sys, cost, SampleStats.zero(1), qp, policy)
            policy = greedy_policies(qp)
        _, K, _ = baselines.lqr_riccati(sys, cost, 0.95)
        assert abs(policy.K[0, 0] - K[0, 0]) <= 1e-10
        assert policy.L[0, 0] == 0.0


class TestConfig:
    def test_rollout_bound(self):
        assert min_rollout_length(8) == 45.0
        with pytest.raises(ConfigError, match=r"\(q\+1\)\(q\+2\)/2 = 45"):
            LearnConfig(M=45).validate((4, 2, 2))
        LearnConfig(M=46).validate((4, 2, 2))

    def test_collects_all_problems(self):
        with pytest.raises(ConfigError) as info:
            LearnConfig(M=1, epsilon=0.0, max_iters=0).validate((1, 1, 1))
        assert len(info.value.violations) == 3

    def test_no_control_channel(self, scalar_cost, scalar_samples):
        sys = LtiSystem([[0.9]], [[0.0]], [[1.0]])
        with pytest.raises(PreconditionError, match="B = 0"):
            learn(sys, scalar_cost, sample_stats(scalar_samples), scalar_config())

    def test_simulator_without_dims(self, scalar_cost, scalar_samples):
        class Bare:
            def step(self, x, u, w):
                return x

        with pytest.raises(PreconditionError):
            learn(Bare(), scalar_cost, sample_stats(scalar_samples), scalar_config())


class TestLearn:
    def test_scalar_converges_to_solver(self, scalar_sys, scalar_cost, scalar_samples, scalar_report):
        qp, policy, logs = learn(scalar_sys, scalar_cost, sample_stats(scalar_samples), scalar_config())
        assert logs[-1].delta <= 1e-8
        assert len(logs) < 500
        ref = scalar_report.policy
        assert abs(policy.K[0, 0] - ref.K[0, 0]) <= 1e-6 * abs(ref.K[0, 0])
        assert abs(policy.L[0, 0] - ref.L[0, 0]) <= 1e-6 * abs(ref.L[0, 0])
        assert max(log.design_condition for log in logs) <= qlearning.MAX_CONDITION

    def test_logs_are_consistent(self, scalar_sys, scalar_cost, scalar_samples):
        _, _, logs = learn(scalar_sys, scalar_cost, sample_stats(scalar_samples), scalar_config())
        assert [log.index for log in logs] == list(range(len(logs)))
        for a, b in zip(logs, logs[1:]):
            assert b.delta == pytest.approx(float(np.linalg.norm(b.theta - a.theta)), rel=1e-12)
        assert logs[-1].delta < logs[0].delta

    def test_seed_independence(self, scalar_sys, scalar_cost, scalar_samples, scalar_report):
        stats = sample_stats(scalar_samples)
        ref = scalar_report.policy
        for seed in range(5):
            _, policy, _ = learn(scalar_sys, scalar_cost, stats, scalar_config(seed=seed))
            assert rel_err(policy.K, ref.K) <= 1e-2
            assert rel_err(policy.r, ref.r) <= 1e-2 or abs(policy.r[0] - ref.r[0]) <= 1e-6

    def test_exploration_scale_irrelevant(self, scalar_sys, scalar_cost, scalar_samples):
        stats = sample_stats(scalar_samples)
        _, p1, _ = learn(scalar_sys, scalar_cost, stats, scalar_config())
        _, p2, _ = learn(
            scalar_sys, scalar_cost, stats, scalar_config(exploration=ExplorationNoise.isotropic(1, 1, 1.0))
        )
        assert rel_err(p2.K, p1.K) <= 1e-2

    def test_reproducible(self, scalar_sys, scalar_cost, scalar_samples):
        stats = sample_stats(scalar_samples)
        a = learn(scalar_sys, scalar_cost, stats, scalar_config(seed=3))
        b = learn(scalar_sys, scalar_cost, stats, scalar_config(seed=3))
        assert np.array_equal(pack_theta(a[0]), pack_theta(b[0]))

    def test_infinite_epsilon_stops_after_one(self, scalar_sys, scalar_cost, scalar_samples):
        _, policy, logs = learn(scalar_sys, scalar_cost, sample_stats(scalar_samples), scalar_config(epsilon=np.inf))
        assert len(logs) == 1
        assert not np.any(policy.K)

    def test_zero_noise_fails(self, scalar_sys, scalar_cost, scalar_samples):
        cfg = scalar_config(exploration=ExplorationNoise.isotropic(1, 1, 0.0))
        with pytest.raises(LearningError) as info:
            learn(scalar_sys, scalar_cost, sample_stats(scalar_samples), cfg)
        assert isinstance(info.value.__cause__, ExcitationError)

    def test_no_disturbance_channel(self, scalar_cost):
        sys = LtiSystem([[0.9]], [[1.0]], [[0.0]])
        _, policy, _ = learn(sys, scalar_cost, SampleStats.zero(1), scalar_config())
        _, K, _ = baselines.lqr_riccati(sys, scalar_cost, scalar_cost.alpha)
        assert abs(policy.K[0, 0] - K[0, 0]) <= 1e-6

    def test_generic_simulator(self, scalar_sys, scalar_cost, scalar_samples):
        class Sim:
            dims = (1, 1, 1)

            def step(self, x, u, w):
                return scalar_sys.A @ x + scalar_sys.B @ u + scalar_sys.E @ w

        stats = sample_stats(scalar_samples)
        a = learn(Sim(), scalar_cost, stats, scalar_config(seed=1))
        b = learn(scalar_sys, scalar_cost, stats, scalar_config(seed=1))
        assert rel_err(pack_theta(a[0]), pack_theta(b[0])) <= 1e-10

    def test_saddle_failure_keeps_policy(self, monkeypatch, scalar_sys, scalar_cost, scalar_samples):
        real = qlearning.greedy_policies
        calls = {"n": 0}

        def flaky(qp):
            calls["n"] += 1
            if calls["n"] <= 2:
                raise SaddleStructureError("forced")
            return real(qp)

        monkeypatch.setattr(qlearning, "greedy_policies", flaky)
        _, _, logs = learn(scalar_sys, scalar_cost, sample_stats(scalar_samples), scalar_config())
        assert logs[1].policy is logs[0].policy
        assert logs[-1].delta <= 1e-8

    def test_saddle_failures_exhaust_retries(self, monkeypatch, scalar_sys, scalar_cost, scalar_samples):
        def broken(qp):
            raise SaddleStructureError("forced")

        monkeypatch.setattr(qlearning, "greedy_policies", broken)
        with pytest.raises(LearningError) as info:
            learn(scalar_sys, scalar_cost, sample_stats(scalar_samples), scalar_config(saddle_retries=2))
        assert info.value.iteration == 2


class TestCostIndicator:
    def test_zero_policy_at_origin(self, scalar_cost):
        sys = LtiSystem([[0.9]], [[1.0]], [[1.0]])
        J = cost_indicator(sys, scalar_cost, SampleStats.zero(1), PolicyPair.zeros(1, 1, 1), [0.0], 10)
        assert J == 0.0

    def test_geometric_sum(self):
        sys = LtiSystem([[0.5]], [[1.0]], [[1.0]])
        cost = CostSpec([[1.0]], [[1.0]], 0.8, 1.0)
        J = cost_indicator(sys, cost, SampleStats.zero(1), PolicyPair.zeros(1, 1, 1), [1.0], 200)
        assert J == pytest.approx(1.0 / (1.0 - 0.8 * 0.25), rel=1e-12)

    def test_generic_path_matches(self, quad_sys, quad_cost, quad_stats, quad_report):
        class Sim:
            dims = quad_sys.dims

            def step(self, x, u, w):
                return quad_sys.A @ x + quad_sys.B @ u + quad_sys.E @ w

        x0 = [1.2, 0.6, 0.5, -0.5]
        a = cost_indicator(quad_sys, quad_cost, quad_stats, quad_report.policy, x0, 300)
        b = cost_indicator(Sim(), quad_cost, quad_stats, quad_report.policy, x0, 300)
        assert a == pytest.approx(b, rel=1e-10)

    def test_divergent_is_infinite(self):
        sys = LtiSystem([[1e3]], [[1.0]], [[1.0]])
        cost = CostSpec([[1.0]], [[1.0]], 0.99, 1.0)
        J = cost_indicator(sys, cost, SampleStats.zero(1), PolicyPair.zeros(1, 1, 1), [1.0], 500)
        assert J == np.inf


def test_extract_policy_is_greedy_of_q(scalar_sys, scalar_cost, scalar_samples, scalar_report):
    stats = sample_stats(scalar_samples)
    p = greedy_policies(q_from_value(scalar_sys, scalar_cost, scalar_report.value, stats))
    ref = extract_policy(assemble_blocks(scalar_sys, scalar_cost, scalar_report.value, stats, scalar_samples))
    assert rel_err(p.K, ref.K) <= 1e-10
