"""Model-based solver for the Wasserstein-penalised LQ game.

The value function of the game is ``V(x) = x'Px + g'x + z``. It is computed
by a Riccati-type value iteration started from ``P = 0, g = 0, z = 0``; the
controller ``u = Kx + r`` and the worst-case adversary (one affine atom
``Lx + l_j`` per empirical sample) are read off the converged blocks.

Two constants are tracked. ``z`` belongs to the stochastic game and carries
the per-step term ``-lambda * (1/N) sum_j |w_j|^2``; ``z_det`` belongs to the
deterministic game that penalises ``|w - mean|^2`` and drops the covariance
terms. Gains depend only on ``(P, g)``, which the two games share.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .empirical import DisturbanceSamples, SampleStats, sample_stats
from .errors import (
    ConditioningError,
    DimensionError,
    GridBoundsError,
    InfeasiblePenaltyError,
    NonConvergenceError,
    PreconditionError,
    SaddleStructureError,
)
from .model import CostSpec, LtiSystem, PolicyPair, min_eig

__all__ = [
    "ValueFunction",
    "HBlocks",
    "PolicyPair",
    "WorstCaseDistribution",
    "SolveReport",
    "assemble_blocks",
    "riccati_step",
    "value_iterate",
    "finite_horizon_value",
    "extract_policy",
    "saddle_gains",
    "worst_case_distribution",
    "stability_check",
    "spectral_radius",
    "solve",
    "feasibility_threshold",
    "GridSpec",
    "dp_oracle",
]


@dataclass(frozen=True)
class ValueFunction:
    P: np.ndarray
    g: np.ndarray
    z: float
    z_det: float = 0.0

    @classmethod
    def zero(cls, n: int) -> "ValueFunction":
        return cls(np.zeros((n, n)), np.zeros(n), 0.0, 0.0)

    def __call__(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(x @ self.P @ x + self.g @ x + self.z)


@dataclass(frozen=True)
class HBlocks:
    H_xx: np.ndarray
    H_xu: np.ndarray
    H_xw: np.ndarray
    H_uu: np.ndarray
    H_uw: np.ndarray
    H_ww: np.ndarray
    G_x: np.ndarray
    G_u: np.ndarray
    G_w: np.ndarray
    G_wj: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))


@dataclass(frozen=True)
class WorstCaseDistribution:
    """Uniform distribution over the atoms ``L x + offsets[j]``."""

    L: np.ndarray
    offsets: np.ndarray

    @property
    def N(self) -> int:
        return self.offsets.shape[0]

    @property
    def weights(self) -> np.ndarray:
        return np.full(self.N, 1.0 / self.N)

    def atoms(self, x) -> np.ndarray:
        return np.asarray(x, dtype=float) @ self.L.T + self.offsets


@dataclass(frozen=True)
class SolveReport:
    value: ValueFunction
    policy: PolicyPair
    worst_case: WorstCaseDistribution
    iterations: int
    residual: float
    rho_closed: float
    rho_game: float
    feasible: bool

    def to_dict(self) -> dict:
        p = self.policy
        return {
            "P": self.value.P.tolist(),
            "g": self.value.g.tolist(),
            "z": float(self.value.z),
            "K": p.K.tolist(),
            "r": p.r.tolist(),
            "L": p.L.tolist(),
            "l": p.l.tolist(),
            "l_j": self.worst_case.offsets.tolist(),
            "iterations": int(self.iterations),
            "residual": float(self.residual),
            "rho_closed": float(self.rho_closed),
            "rho_game": float(self.rho_game),
            "feasible": bool(self.feasible),
            "z_det": float(self.value.z_det),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _check_dims(sys: LtiSystem, cost: CostSpec, stats: SampleStats | None = None):
    cost.check(sys)
    if stats is not None and stats.mean.shape != (sys.d,):
        raise DimensionError(
            f"disturbance statistics have dimension {stats.mean.shape[0]}, plant has d={sys.d}"
        )


def assemble_blocks(
    sys: LtiSystem,
    cost: CostSpec,
    vf: ValueFunction,
    stats: SampleStats,
    samples: DisturbanceSamples | None = None,
) -> HBlocks:
    """Blocks of the one-step Q-function built on the value function ``vf``."""
    _check_dims(sys, cost, stats)
    A, B, E = sys.A, sys.B, sys.E
    a, lam = cost.alpha, cost.lam
    P, g = vf.P, vf.g
    PA, PB, PE = P @ A, P @ B, P @ E
    Eg = a * E.T @ g
    G_wj = (
        Eg + 2.0 * lam * samples.atoms
        if samples is not None
        else np.zeros((0, sys.d))
    )
    return HBlocks(
        H_xx=cost.Q + a * A.T @ PA,
        H_xu=a * A.T @ PB,
        H_xw=a * A.T @ PE,
        H_uu=cost.R + a * B.T @ PB,
        H_uw=a * B.T @ PE,
        H_ww=a * E.T @ PE - lam * np.eye(sys.d),
        G_x=a * A.T @ g,
        G_u=a * B.T @ g,
        G_w=Eg + 2.0 * lam * stats.mean,
        G_wj=G_wj,
    )


def riccati_step(
    sys: LtiSystem,
    cost: CostSpec,
    stats: SampleStats,
    vf: ValueFunction,
    iteration: int = 0,
) -> ValueFunction:
    """One backward step of the value iteration.

    Raises :class:`InfeasiblePenaltyError` if ``lambda*I - alpha*E'PE`` is not
    positive definite at the incoming ``P``.
    """
    hb = assemble_blocks(sys, cost, vf, stats)
    margin = min_eig(-hb.H_ww)
    if not margin > 0.0:
        raise InfeasiblePenaltyError(iteration, margin, cost.lam)

    X = np.hstack([hb.H_xu, hb.H_xw])
    M = np.block([[hb.H_uu, hb.H_uw], [hb.H_uw.T, hb.H_ww]])
    sol = np.linalg.solve(M, np.column_stack([X.T, np.concatenate([hb.G_u, hb.G_w])]))
    P = hb.H_xx - X @ sol[:, :-1]
    P = 0.5 * (P + P.T)
    g = hb.G_x - X @ sol[:, -1]

    Hww_inv = np.linalg.inv(hb.H_ww)
    schur_u = hb.H_uu - hb.H_uw @ Hww_inv @ hb.H_uw.T
    v = hb.G_u - hb.H_uw @ Hww_inv @ hb.G_w
    u_term = 0.25 * float(v @ np.linalg.solve(schur_u, v))
    mean_term = 0.25 * float(hb.G_w @ Hww_inv @ hb.G_w)
    wbar2 = float(stats.mean @ stats.mean)
    lam, a = cost.lam, cost.alpha
    # stochastic game: the adversary pays for every atom, not just the mean
    z = (
        a * vf.z
        - lam * (np.trace(stats.covariance) + wbar2)
        - lam**2 * float(np.trace(Hww_inv @ stats.covariance))
        - mean_term
        - u_term
    )
    z_det = a * vf.z_det - lam * wbar2 - mean_term - u_term
    return ValueFunction(P, g, float(z), float(z_det))


def _delta(a: ValueFunction, b: ValueFunction) -> float:
    return float(
        np.max(np.abs(a.P - b.P), initial=0.0)
        + np.max(np.abs(a.g - b.g), initial=0.0)
        + abs(a.z - b.z)
    )


def value_iterate(
    sys: LtiSystem,
    cost: CostSpec,
    stats: SampleStats,
    tol: float = 1e-10,
    max_iter: int = 100_000,
    return_info: bool = False,
):
    """Iterate :func:`riccati_step` from zero until the update is below ``tol``.

    The residual is ``|dP|_max + |dg|_max + |dz|``. With ``return_info`` the
    result is ``(vf, iterations, residual)``.
    """
    _check_dims(sys, cost, stats)
    vf = ValueFunction.zero(sys.n)
    residual = np.inf
    for i in range(max_iter):
        new = riccati_step(sys, cost, stats, vf, iteration=i)
        if not (np.all(np.isfinite(new.P)) and np.isfinite(new.z)):
            raise NonConvergenceError(i + 1, residual)
        residual = _delta(new, vf)
        vf = new
        if residual <= tol:
            return (vf, i + 1, residual) if return_info else vf
    raise NonConvergenceError(max_iter, residual)


def finite_horizon_value(
    sys: LtiSystem, cost: CostSpec, stats: SampleStats, horizon: int
) -> ValueFunction:
    """Value of the ``horizon``-step game: exactly ``horizon`` backward steps."""
    _check_dims(sys, cost, stats)
    vf = ValueFunction.zero(sys.n)
    for i in range(horizon):
        vf = riccati_step(sys, cost, stats, vf, iteration=i)
    return vf


def saddle_gains(H_xu, H_xw, H_uu, H_uw, H_ww, G_u, G_w):
    """Affine saddle point ``u = Kx + r``, ``w = Lx + l`` of a quadratic in (x, u, w).

    Requires ``H_uu - H_uw H_ww^-1 H_uw' > 0`` and ``H_ww - H_uw' H_uu^-1 H_uw < 0``.
    """
    try:
        Hww_inv = np.linalg.inv(H_ww)
        Huu_inv = np.linalg.inv(H_uu)
    except np.linalg.LinAlgError as exc:
        raise ConditioningError(f"singular curvature block: {exc}") from exc
    schur_u = H_uu - H_uw @ Hww_inv @ H_uw.T
    schur_w = H_ww - H_uw.T @ Huu_inv @ H_uw
    if schur_u.size and not min_eig(schur_u) > 0.0:
        raise SaddleStructureError(
            f"controller curvature not positive definite (min eig {min_eig(schur_u):.3e})"
        )
    if schur_w.size and not min_eig(-schur_w) > 0.0:
        raise SaddleStructureError(
            f"adversary curvature not negative definite (max eig {-min_eig(-schur_w):.3e})"
        )
    try:
        K = np.linalg.solve(schur_u, H_uw @ Hww_inv @ H_xw.T - H_xu.T)
        r = -0.5 * np.linalg.solve(schur_u, G_u - H_uw @ Hww_inv @ G_w)
        L = np.linalg.solve(schur_w, H_uw.T @ Huu_inv @ H_xu.T - H_xw.T)
        l = -0.5 * np.linalg.solve(schur_w, G_w - H_uw.T @ Huu_inv @ G_u)
    except np.linalg.LinAlgError as exc:
        raise ConditioningError(f"singular Schur complement: {exc}") from exc
    return K, r, L, l


def extract_policy(blocks: HBlocks) -> PolicyPair:
    b = blocks
    return PolicyPair(*saddle_gains(b.H_xu, b.H_xw, b.H_uu, b.H_uw, b.H_ww, b.G_u, b.G_w))


def worst_case_distribution(blocks: HBlocks, samples: DisturbanceSamples) -> WorstCaseDistribution:
    """Per-sample worst-case atoms ``L x + l_j``; the offsets average to ``l``.

    Atom ``j`` maximises the adversary objective of sample ``j`` with the
    controller fixed at ``u* = Kx + r``. Its deviation from the mean atom is
    ``l_j - l = -0.5 H_ww^-1 (G_wj - G_w)``, i.e. ``lambda (lambda I -
    alpha E'PE)^-1 (w_j - mean)``.
    """
    b = blocks
    policy = extract_policy(b)
    if b.G_wj.shape[0] != samples.N:
        raise DimensionError("blocks were assembled without the per-sample gradients")
    spread = -0.5 * np.linalg.solve(b.H_ww, (b.G_wj - b.G_w[None, :]).T).T
    return WorstCaseDistribution(policy.L, policy.l[None, :] + spread)


def spectral_radius(M: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(M)))) if np.size(M) else 0.0


def stability_check(sys: LtiSystem, policy: PolicyPair) -> tuple[float, float]:
    """Spectral radii of ``A + BK`` and ``A + BK + EL``; stable iff below one."""
    closed = sys.A + sys.B @ policy.K
    return spectral_radius(closed), spectral_radius(closed + sys.E @ policy.L)


def solve(
    sys: LtiSystem,
    cost: CostSpec,
    samples: DisturbanceSamples,
    tol: float = 1e-10,
    max_iter: int = 100_000,
) -> SolveReport:
    """Value iteration, policy and worst-case distribution in one report."""
    stats = sample_stats(samples)
    vf, iters, residual = value_iterate(sys, cost, stats, tol, max_iter, return_info=True)
    blocks = assemble_blocks(sys, cost, vf, stats, samples)
    policy = extract_policy(blocks)
    worst = worst_case_distribution(blocks, samples)
    rho_closed, rho_game = stability_check(sys, policy)
    feasible = min_eig(cost.lam * np.eye(sys.d) - cost.alpha * sys.E.T @ vf.P @ sys.E) > 0
    return SolveReport(vf, policy, worst, iters, residual, rho_closed, rho_game, bool(feasible))


def feasibility_threshold(
    sys: LtiSystem,
    cost: CostSpec,
    stats: SampleStats,
    lo: float,
    hi: float,
    tol: float = 1e-3,
    max_iter: int = 100_000,
) -> float:
    """Bisect for the smallest penalty whose value iteration stays feasible.

    ``lo`` must be infeasible and ``hi`` feasible; returns the feasible end
    of the final bracket.
    """

    def feasible(lam: float) -> bool:
        try:
            value_iterate(sys, cost.with_lambda(lam), stats, tol=1e-9, max_iter=max_iter)
        except (InfeasiblePenaltyError, NonConvergenceError):
            return False
        return True

    if feasible(lo) or not feasible(hi):
        raise ValueError(f"bracket [{lo}, {hi}] does not straddle the threshold")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            hi = mid
        else:
            lo = mid
    return hi


# --------------------------------------------------------------------------
# brute-force dynamic programming oracle (scalar plants)


@dataclass(frozen=True)
class GridSpec:
    """Search boxes and resolution for :func:`dp_oracle`.

    The value function of each stage is tabulated on ``state_points`` states
    in ``[-state_lim, state_lim]`` and interpolated with a cubic spline.
    Controls are searched in ``[-u_lim, u_lim]`` and each adversary atom in
    ``[w_j - w_lim, w_j + w_lim]`` with ``points`` candidates per level, then
    zoomed ``refinements`` times to one grid step around the incumbent.
    """

    state_lim: float = 3.0
    state_points: int = 31
    u_lim: float = 6.0
    w_lim: float = 6.0
    points: int = 21
    refinements: int = 5


def _zoom_search(f, center, half_width, points, refinements, maximize):
    """Grid search with successive zooming, batched over ``center``'s shape."""
    offsets = np.linspace(-1.0, 1.0, points)
    c = np.asarray(center, dtype=float)
    hw = float(half_width)
    for level in range(refinements + 1):
        grid = c[..., None] + hw * offsets
        vals = f(grid)
        idx = np.argmax(vals, axis=-1) if maximize else np.argmin(vals, axis=-1)
        if level == 0 and np.any((idx == 0) | (idx == points - 1)):
            raise GridBoundsError("optimiser hit the search box edge; widen the grid limits")
        c = np.take_along_axis(grid, idx[..., None], axis=-1)[..., 0]
        best = np.take_along_axis(vals, idx[..., None], axis=-1)[..., 0]
        hw = 2.0 * hw / (points - 1)
    return best, c


def dp_oracle(
    sys: LtiSystem,
    cost: CostSpec,
    samples: DisturbanceSamples,
    horizon: int,
    x,
    grid: GridSpec = GridSpec(),
    terminal=None,
):
    """Finite-horizon game value by numerical dynamic programming.

    Each stage minimises over ``u`` the stage cost plus the sample average of
    ``max_w [alpha V_next(Ax + Bu + Ew) - lambda |w - w_j|^2]``, all by grid
    search; nothing about the quadratic structure of the value is assumed.
    ``terminal`` is an optional vectorised callable giving the value after the
    last stage (zero by default). Only scalar plants are supported.
    """
    if sys.dims != (1, 1, 1):
        raise PreconditionError("dp_oracle supports scalar plants (n = m = d = 1) only")
    if horizon < 0:
        raise ValueError("horizon must be non-negative")
    xq = np.asarray(x, dtype=float)
    if horizon == 0:
        if terminal is not None:
            out = np.asarray(terminal(np.atleast_1d(xq)), dtype=float)
            return out.reshape(xq.shape) if xq.ndim else float(out[0])
        return np.zeros_like(xq) if xq.ndim else 0.0

    a_, b_, e_ = float(sys.A[0, 0]), float(sys.B[0, 0]), float(sys.E[0, 0])
    q_, r_ = float(cost.Q[0, 0]), float(cost.R[0, 0])
    alpha, lam = cost.alpha, cost.lam
    atoms = samples.atoms[:, 0]
    states = np.linspace(-grid.state_lim, grid.state_lim, grid.state_points)

    def stage(xs: np.ndarray, v_next) -> np.ndarray:
        xs = xs.reshape(-1)

        def inner(u):  # u: (S, U) -> averaged adversary value, (S, U)
            total = np.zeros_like(u)
            for wj in atoms:
                def phi(w, u=u):
                    nxt = a_ * xs[:, None, None] + b_ * u[..., None] + e_ * w
                    cont = alpha * v_next(nxt) if v_next is not None else 0.0
                    return cont - lam * (w - wj) ** 2

                best, _ = _zoom_search(
                    phi, np.full(u.shape, wj), grid.w_lim, grid.points, grid.refinements, True
                )
                total += best
            return total / len(atoms)

        def outer(u):
            return q_ * xs[:, None] ** 2 + r_ * u**2 + inner(u)

        best, _ = _zoom_search(
            outer, np.zeros(xs.shape), grid.u_lim, grid.points, grid.refinements, False
        )
        return best

    v_next = terminal
    for _ in range(horizon - 1):
        values = stage(states, v_next)
        v_next = CubicSpline(states, values, bc_type="not-a-knot", extrapolate=True)
    out = stage(np.atleast_1d(xq), v_next)
    return out.reshape(xq.shape) if xq.ndim else float(out[0])
