"""Model-free Q-learning for the Wasserstein-penalised LQ game.

Each iteration rolls the plant out under the current saddle policies plus
Gaussian exploration noise, regresses the Bellman targets onto the quadratic
features of the recorded ``(x, u, w)``, and re-extracts the saddle policies
from the fitted Q-function. With exact quadratic features the regression
reproduces one step of value iteration on the Q-function parameters, which
:func:`closed_form_iterate` computes from the model for testing.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .empirical import SampleStats
from .errors import (
    ConfigError,
    ExcitationError,
    LearningError,
    PreconditionError,
    RolloutDivergenceError,
    SaddleStructureError,
)
from .model import (
    CostSpec,
    ExplorationNoise,
    LtiSystem,
    PolicyPair,
    Transition,
    rollout_arrays,
    stack_transitions,
    uniform_box,
)
from .qfunction import QParams, basis_matrix, greedy_policies, pack_theta, unpack_theta

logger = logging.getLogger(__name__)

MAX_CONDITION = 1e12


def min_rollout_length(q: int) -> float:
    """Uniqueness bound ``(q + 1)(q + 2) / 2``; ``M`` must exceed it."""
    return 0.5 * (q + 1) * (q + 2)


@dataclass
class LearnConfig:
    M: int = 900
    epsilon: float = 1e-6
    max_iters: int = 3000
    exploration: ExplorationNoise | None = None
    x0_box: np.ndarray | None = None
    seed: int = 0
    ridge: float = 0.0
    reference_x0: np.ndarray | None = None
    saddle_retries: int = 3
    max_restarts: int = 10
    divergence_bound: float = 1e6
    reset_bound: float | None = 10.0

    def validate(self, dims: tuple[int, int, int]) -> None:
        n, m, d = dims
        q = n + m + d
        problems = []
        bound = min_rollout_length(q)
        if not self.M > bound:
            problems.append(
                f"learning.M={self.M} must exceed (q+1)(q+2)/2 = {bound:g} for q={q}"
            )
        if not self.epsilon > 0:
            problems.append(f"learning.epsilon must be positive, got {self.epsilon}")
        if self.max_iters < 1:
            problems.append("learning.max_iters must be at least 1")
        if self.ridge < 0:
            problems.append("learning.ridge must be non-negative")
        if self.exploration is not None and (
            self.exploration.sigma_u.shape != (m, m) or self.exploration.sigma_w.shape != (d, d)
        ):
            problems.append(f"learning.exploration covariances must be {m}x{m} and {d}x{d}")
        if self.x0_box is not None and np.shape(self.x0_box) != (n, 2):
            problems.append(f"learning.x0_box must have shape ({n}, 2)")
        if problems:
            raise ConfigError(problems)

    def resolved(self, dims) -> "LearnConfig":
        n, m, d = dims
        cfg = LearnConfig(**{k: getattr(self, k) for k in self.__dataclass_fields__})
        if cfg.exploration is None:
            cfg.exploration = ExplorationNoise.isotropic(m, d, 0.1)
        if cfg.x0_box is None:
            cfg.x0_box = np.tile([-1.0, 1.0], (n, 1))
        if cfg.reference_x0 is None:
            cfg.reference_x0 = np.zeros(n)
        return cfg


@dataclass
class IterationLog:
    index: int
    theta: np.ndarray
    delta: float
    J: float
    design_condition: float
    policy: PolicyPair | None = field(default=None, repr=False)


# --------------------------------------------------------------------------
# regression pieces


def _targets(cost: CostSpec, stats: SampleStats, qp: QParams, policy: PolicyPair, X, U, W, Xn):
    stage = (
        np.einsum("ij,jk,ik->i", X, cost.Q, X)
        + np.einsum("ij,jk,ik->i", U, cost.R, U)
        - cost.lam * np.sum((W - stats.mean) ** 2, axis=1)
    )
    Un = Xn @ policy.K.T + policy.r
    Wn = Xn @ policy.L.T + policy.l
    En = np.hstack([Xn, Un, Wn])
    cont = np.einsum("ij,jk,ik->i", En, qp.H, En) + En @ qp.G + qp.s
    return stage + cost.alpha * cont


def target_value(
    cost: CostSpec, stats: SampleStats, qp_i: QParams, policy_i: PolicyPair, t: Transition
) -> float:
    """Bellman target for one transition.

    The stage term is evaluated at the recorded (exploration-perturbed)
    inputs of ``t``; the continuation uses the noise-free policies at
    ``t.x_next``.
    """
    X, U, W, Xn = (np.atleast_2d(v) for v in (t.x, t.u, t.w, t.x_next))
    return float(_targets(cost, stats, qp_i, policy_i, X, U, W, Xn)[0])


def lstsq_update(
    transitions,
    qp_i: QParams,
    policy_i: PolicyPair,
    cost: CostSpec,
    stats: SampleStats,
    ridge: float = 0.0,
    return_condition: bool = False,
):
    """Least-squares fit of ``theta' e~`` to the Bellman targets.

    ``transitions`` is a sequence of :class:`Transition` or the stacked
    arrays ``(X, U, W, Xn)``.

    Features are column-equilibrated before the normal equations are formed
    and solved by Cholesky with one step of iterative refinement. ``ridge``
    is added to the equilibrated normal matrix. The reported condition number
    is that of the equilibrated normal matrix.
    """
    if isinstance(transitions, tuple) and len(transitions) == 4 and isinstance(transitions[0], np.ndarray):
        X, U, W, Xn = transitions
    else:
        X, U, W, Xn = stack_transitions(transitions)
    Phi = basis_matrix(np.hstack([X, U, W]))
    y = _targets(cost, stats, qp_i, policy_i, X, U, W, Xn)
    n_samples, p = Phi.shape
    scale = np.sqrt(np.mean(Phi**2, axis=0))
    if np.any(scale == 0.0) or n_samples < p:
        raise ExcitationError(np.inf, n_samples, p)
    Z = Phi / scale
    normal = Z.T @ Z + ridge * np.eye(p)
    condition = float(np.linalg.cond(normal))
    if not condition <= MAX_CONDITION:
        raise ExcitationError(condition, n_samples, p)
    factor = cho_factor(normal)
    beta = cho_solve(factor, Z.T @ y)
    beta += cho_solve(factor, Z.T @ (y - Z @ beta) - ridge * beta)
    theta = beta / scale
    return (theta, condition) if return_condition else theta


def closed_form_iterate(
    sys: LtiSystem, cost: CostSpec, stats: SampleStats, qp_i: QParams, policy_i: PolicyPair
) -> QParams:
    """Model-based image of one regression step (test oracle)."""
    n, m, d = sys.dims
    lift = np.vstack([np.eye(n), policy_i.K, policy_i.L])
    M = lift @ np.hstack([sys.A, sys.B, sys.E])
    c = np.concatenate([np.zeros(n), policy_i.r, policy_i.l])
    W = np.zeros((n + m + d, n + m + d))
    W[:n, :n] = cost.Q
    W[n : n + m, n : n + m] = cost.R
    W[n + m :, n + m :] = -cost.lam * np.eye(d)
    offset = np.concatenate([np.zeros(n + m), 2.0 * cost.lam * stats.mean])
    H = W + cost.alpha * M.T @ qp_i.H @ M
    G = cost.alpha * (qp_i.G + 2.0 * qp_i.H @ c) @ M + offset
    s = cost.alpha * (qp_i.s + qp_i.G @ c + c @ qp_i.H @ c) - cost.lam * float(stats.mean @ stats.mean)
    return QParams(H, G, s, sys.dims)


# --------------------------------------------------------------------------
# the learning loop


def _dims_of(simulator) -> tuple[int, int, int]:
    dims = getattr(simulator, "dims", None)
    if dims is None:
        raise PreconditionError("simulator must expose dims = (n, m, d)")
    return tuple(int(v) for v in dims)


def _probe_inputs(simulator, dims) -> None:
    n, m, d = dims
    x0, w0 = np.zeros(n), np.zeros(d)
    base = np.asarray(simulator.step(x0, np.zeros(m), w0))
    moved = [np.asarray(simulator.step(x0, np.eye(m)[i], w0)) - base for i in range(m)]
    if not any(np.any(v != 0.0) for v in moved):
        raise PreconditionError(
            "control input has no effect on the plant (B = 0); the game is not learnable"
        )


def cost_indicator(
    simulator, cost: CostSpec, stats: SampleStats, policy: PolicyPair, x0, horizon: int
) -> float:
    """Discounted game cost of a noise-free closed-loop run of ``horizon`` steps."""
    x = np.asarray(x0, dtype=float)
    if isinstance(simulator, LtiSystem):
        A_cl = simulator.A + simulator.B @ policy.K + simulator.E @ policy.L
        b_cl = simulator.B @ policy.r + simulator.E @ policy.l
        X = np.empty((horizon + 1, x.shape[0]))
        with np.errstate(over="ignore", invalid="ignore"):
            for k in range(horizon + 1):
                X[k] = x
                x = A_cl @ x + b_cl
            U = X @ policy.K.T + policy.r
            dW = X @ policy.L.T + policy.l - stats.mean
            stage = (
                np.einsum("ij,jk,ik->i", X, cost.Q, X)
                + np.einsum("ij,jk,ik->i", U, cost.R, U)
                - cost.lam * np.sum(dW**2, axis=1)
            )
            total = float(cost.alpha ** np.arange(horizon + 1) @ stage)
        return total if np.isfinite(total) else float("inf")
    total, disc = 0.0, 1.0
    for _ in range(horizon + 1):
        u = policy.K @ x + policy.r
        w = policy.L @ x + policy.l
        dw = w - stats.mean
        total += disc * float(x @ cost.Q @ x + u @ cost.R @ u - cost.lam * dw @ dw)
        if not np.isfinite(total):
            return float("inf")
        disc *= cost.alpha
        x = np.asarray(simulator.step(x, u, w), dtype=float)
    return total


def _collect(simulator, policy, cfg: LearnConfig, rng, iteration: int):
    last = None
    for _ in range(cfg.max_restarts + 1):
        x0 = uniform_box(rng, cfg.x0_box)
        try:
            return rollout_arrays(
                simulator, policy, cfg.exploration, x0, cfg.M, rng,
                bound=cfg.divergence_bound, reset_bound=cfg.reset_bound, reset_box=cfg.x0_box,
            )
        except RolloutDivergenceError as exc:
            logger.warning("iteration %d: rollout diverged at step %d, restarting", iteration, exc.step)
            last = exc
    raise LearningError(iteration, last)


def learn(simulator, cost: CostSpec, stats: SampleStats, config: LearnConfig, callback=None):
    """Run the Q-learning loop against ``simulator``.

    ``simulator`` needs ``dims`` and ``step(x, u, w)``; an :class:`LtiSystem`
    qualifies. Returns ``(qparams, policy, logs)``. The loop stops once
    ``|theta_{i+1} - theta_i| <= epsilon`` (returning the policy that
    generated the last batch) or after ``max_iters`` iterations.
    """
    dims = _dims_of(simulator)
    n, m, d = dims
    config.validate(dims)
    cfg = config.resolved(dims)
    _probe_inputs(simulator, dims)
    if cost.Q.shape != (n, n) or cost.R.shape != (m, m) or stats.mean.shape != (d,):
        raise PreconditionError("cost weights or sample statistics do not match the simulator")

    rng = np.random.default_rng(cfg.seed)
    qp = QParams.zero(*dims)
    theta = pack_theta(qp)
    policy = PolicyPair.zeros(n, m, d)
    logs: list[IterationLog] = []
    failures = 0
    for i in range(cfg.max_iters):
        transitions = _collect(simulator, policy, cfg, rng, i)
        try:
            theta_new, condition = lstsq_update(
                transitions, qp, policy, cost, stats, cfg.ridge, return_condition=True
            )
        except ExcitationError as exc:
            raise LearningError(i, exc) from exc
        delta = float(np.linalg.norm(theta_new - theta))
        J = cost_indicator(simulator, cost, stats, policy, cfg.reference_x0, cfg.M)
        log = IterationLog(i, theta_new, delta, J, condition, policy)
        logs.append(log)
        if callback is not None:
            callback(log)
        logger.debug("iteration %d: delta=%.3e J=%.6g cond=%.3e", i, delta, J, condition)
        qp, theta = unpack_theta(theta_new, dims), theta_new
        if delta <= cfg.epsilon:
            break
        try:
            policy = greedy_policies(qp)
            failures = 0
        except SaddleStructureError as exc:
            failures += 1
            logger.warning("iteration %d: %s; keeping previous policy", i, exc)
            if failures > cfg.saddle_retries:
                raise LearningError(i, exc) from exc
    return qp, policy, logs
