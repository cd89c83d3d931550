"""Reference controllers: discounted LQR and the H-infinity game controller.

Both use the ``u = K x`` sign convention, so ``K`` already carries the minus.
The H-infinity controller is the zero-mean special case of the
Wasserstein-penalised game and is computed by the same solver.
"""

from __future__ import annotations

import numpy as np

from .dr_riccati import SolveReport, ValueFunction, WorstCaseDistribution, solve, stability_check
from .empirical import DisturbanceSamples
from .errors import NonConvergenceError
from .model import CostSpec, LtiSystem, PolicyPair, min_eig

LQR_ALPHA = 1.0 - 1e-9


def riccati_map(A, B, Q, R, alpha: float, P: np.ndarray) -> np.ndarray:
    """One application of the discounted Riccati map."""
    BtPA = alpha * B.T @ P @ A
    S = R + alpha * B.T @ P @ B
    P_next = Q + alpha * A.T @ P @ A - BtPA.T @ np.linalg.solve(S, BtPA)
    return 0.5 * (P_next + P_next.T)


def lqr_riccati(
    sys: LtiSystem,
    cost: CostSpec,
    alpha: float = LQR_ALPHA,
    tol: float = 1e-12,
    max_iter: int = 200_000,
):
    """Iterate the discounted Riccati map from ``P = 0``.

    Returns ``(P, K, iterations)``. Raises :class:`NonConvergenceError` when
    the iterates blow up or the budget runs out, which is what happens for an
    unstabilisable ``(A, B)``.
    """
    A, B, Q, R = sys.A, sys.B, cost.Q, cost.R
    P = np.zeros_like(Q)
    residual = np.inf
    for it in range(1, max_iter + 1):
        P_next = riccati_map(A, B, Q, R, alpha, P)
        residual = float(np.max(np.abs(P_next - P)))
        P = P_next
        if not np.isfinite(residual) or residual > 1e150:
            raise NonConvergenceError(it, residual)
        if residual <= tol * max(1.0, float(np.max(np.abs(P)))):
            break
    else:
        raise NonConvergenceError(max_iter, residual)
    K = -np.linalg.solve(R + alpha * B.T @ P @ B, alpha * B.T @ P @ A)
    return P, K, it


def lqr_gain(
    sys: LtiSystem,
    cost: CostSpec,
    alpha: float = LQR_ALPHA,
    tol: float = 1e-12,
    max_iter: int = 200_000,
) -> PolicyPair:
    """Discounted LQR gain as a policy pair with a silent adversary.

    ``alpha`` defaults to ``1 - 1e-9`` (effectively undiscounted); pass
    ``cost.alpha`` to compare against the game controllers at equal discount.
    """
    _, K, _ = lqr_riccati(sys, cost, alpha, tol, max_iter)
    n, m, d = sys.dims
    return PolicyPair(K, np.zeros(m), np.zeros((d, n)), np.zeros(d))


def lqr_report(
    sys: LtiSystem, cost: CostSpec, alpha: float = LQR_ALPHA, tol: float = 1e-12
) -> SolveReport:
    """LQR result in the solver's report shape.

    ``g`` and ``z`` are zero and the adversary is silent; ``feasible`` still
    reports whether ``lambda I - alpha E'PE`` is positive definite for the
    LQR kernel, with ``cost.alpha`` and ``cost.lam``.
    """
    P, K, iters = lqr_riccati(sys, cost, alpha, tol)
    n, m, d = sys.dims
    residual = float(np.max(np.abs(riccati_map(sys.A, sys.B, cost.Q, cost.R, alpha, P) - P)))
    policy = PolicyPair(K, np.zeros(m), np.zeros((d, n)), np.zeros(d))
    rho_closed, rho_game = stability_check(sys, policy)
    feasible = min_eig(cost.lam * np.eye(d) - cost.alpha * sys.E.T @ P @ sys.E) > 0
    return SolveReport(
        ValueFunction(P, np.zeros(n), 0.0, 0.0),
        policy,
        WorstCaseDistribution(np.zeros((d, n)), np.zeros((1, d))),
        iters,
        residual,
        rho_closed,
        rho_game,
        bool(feasible),
    )


def hinf_report(
    sys: LtiSystem, cost: CostSpec, tol: float = 1e-10, max_iter: int = 100_000
) -> SolveReport:
    """Solver report of the game with a single zero atom."""
    return solve(sys, cost, DisturbanceSamples(np.zeros((1, sys.d))), tol, max_iter)


def hinf_policy(
    sys: LtiSystem, cost: CostSpec, tol: float = 1e-10, max_iter: int = 100_000
) -> PolicyPair:
    """H-infinity saddle policies ``(K, 0, L, 0)`` at penalty ``cost.lam``.

    Infeasible penalties surface as
    :class:`~drlqr.errors.InfeasiblePenaltyError` from the solver.
    """
    p = hinf_report(sys, cost, tol, max_iter).policy
    return PolicyPair(p.K, np.zeros(sys.m), p.L, np.zeros(sys.d))
