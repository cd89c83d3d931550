"""Linear stochastic plant, quadratic stage cost, disturbance generators and
the rollout simulator that produces training transitions.

Plant:  x_{k+1} = A x_k + B u_k + E w_k
Cost:   c(x, u) = x'Qx + u'Ru, discounted by alpha, with a Wasserstein
        penalty weight lambda on the adversary.

Random draws go through :func:`standard_normal`, a Box-Muller transform of
the uniform stream of a seeded ``numpy.random.Generator`` (PCG64), so the
same seed gives the same numbers on every platform.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import AssumptionError, DimensionError, RolloutDivergenceError

PSD_TOL = -1e-10


def _as_matrix(a, name: str) -> np.ndarray:
    arr = np.atleast_2d(np.asarray(a, dtype=float))
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be a matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DimensionError(f"{name} has non-finite entries")
    return arr


def _as_vector(v, size: int, name: str) -> np.ndarray:
    arr = np.asarray(v, dtype=float).reshape(-1)
    if arr.shape != (size,):
        raise DimensionError(f"{name} must have length {size}, got shape {np.shape(v)}")
    return arr


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


def min_eig(M: np.ndarray) -> float:
    """Smallest eigenvalue of the symmetric part of ``M``."""
    M = np.asarray(M, dtype=float)
    return float(np.linalg.eigvalsh(0.5 * (M + M.T))[0])


@dataclass(frozen=True)
class LtiSystem:
    """Matrices (A, B, E) of the linear stochastic plant."""

    A: np.ndarray
    B: np.ndarray
    E: np.ndarray

    def __post_init__(self):
        A = _as_matrix(self.A, "A")
        B = _as_matrix(self.B, "B")
        E = _as_matrix(self.E, "E")
        n = A.shape[0]
        if A.shape != (n, n):
            raise DimensionError(f"A must be square, got {A.shape}")
        if B.shape[0] != n or E.shape[0] != n:
            raise DimensionError(
                f"B {B.shape} and E {E.shape} must have {n} rows to match A"
            )
        object.__setattr__(self, "A", _frozen(A))
        object.__setattr__(self, "B", _frozen(B))
        object.__setattr__(self, "E", _frozen(E))

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def d(self) -> int:
        return self.E.shape[1]

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.n, self.m, self.d

    def step(self, x, u, w) -> np.ndarray:
        return step(self, x, u, w)


@dataclass(frozen=True)
class CostSpec:
    """Stage-cost weights, discount factor and Wasserstein penalty."""

    Q: np.ndarray
    R: np.ndarray
    alpha: float
    lam: float

    def __post_init__(self):
        Q = _as_matrix(self.Q, "Q")
        R = _as_matrix(self.R, "R")
        if Q.shape[0] != Q.shape[1] or R.shape[0] != R.shape[1]:
            raise DimensionError(f"Q {Q.shape} and R {R.shape} must be square")
        if not np.allclose(Q, Q.T, atol=1e-12) or not np.allclose(R, R.T, atol=1e-12):
            raise AssumptionError("Q and R must be symmetric")
        if min_eig(Q) < PSD_TOL:
            raise AssumptionError(
                "Assumption 1 violated: Q must be positive semi-definite "
                f"(min eigenvalue {min_eig(Q):.3e})"
            )
        if min_eig(R) <= 0.0:
            raise AssumptionError(
                "Assumption 1 violated: R must be positive definite "
                f"(min eigenvalue {min_eig(R):.3e})"
            )
        if not 0.0 < float(self.alpha) < 1.0:
            raise AssumptionError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not float(self.lam) > 0.0:
            raise AssumptionError(f"lambda must be positive, got {self.lam}")
        object.__setattr__(self, "Q", _frozen(Q))
        object.__setattr__(self, "R", _frozen(R))
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "lam", float(self.lam))

    def with_lambda(self, lam: float) -> "CostSpec":
        return CostSpec(self.Q, self.R, self.alpha, lam)

    def check(self, sys: LtiSystem) -> None:
        if self.Q.shape != (sys.n, sys.n) or self.R.shape != (sys.m, sys.m):
            raise DimensionError(
                f"cost weights Q {self.Q.shape}, R {self.R.shape} do not match "
                f"n={sys.n}, m={sys.m}"
            )


@dataclass(frozen=True)
class PolicyPair:
    """Affine controller u = Kx + r and affine adversary w = Lx + l."""

    K: np.ndarray
    r: np.ndarray
    L: np.ndarray
    l: np.ndarray

    def __post_init__(self):
        for name in ("K", "r", "L", "l"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if not np.all(np.isfinite(arr)):
                raise DimensionError(f"policy {name} has non-finite entries")
            object.__setattr__(self, name, _frozen(arr))

    @classmethod
    def zeros(cls, n: int, m: int, d: int) -> "PolicyPair":
        return cls(np.zeros((m, n)), np.zeros(m), np.zeros((d, n)), np.zeros(d))

    def control(self, x) -> np.ndarray:
        return self.K @ np.asarray(x, dtype=float) + self.r

    def adversary(self, x) -> np.ndarray:
        return self.L @ np.asarray(x, dtype=float) + self.l


@dataclass(frozen=True)
class Transition:
    x: np.ndarray
    u: np.ndarray
    w: np.ndarray
    x_next: np.ndarray


def step(sys: LtiSystem, x, u, w) -> np.ndarray:
    """One step of the plant: ``A x + B u + E w``."""
    x = _as_vector(x, sys.n, "x")
    u = _as_vector(u, sys.m, "u")
    w = _as_vector(w, sys.d, "w")
    return sys.A @ x + sys.B @ u + sys.E @ w


def stage_cost(cost: CostSpec, x, u) -> float:
    x = _as_vector(x, cost.Q.shape[0], "x")
    u = _as_vector(u, cost.R.shape[0], "u")
    return float(x @ cost.Q @ x + u @ cost.R @ u)


# --------------------------------------------------------------------------
# random draws


def standard_normal(rng: np.random.Generator, size) -> np.ndarray:
    """Standard normal draws via Box-Muller on ``rng.random``.

    Each output consumes two uniforms ``(u1, u2)`` in order and returns
    ``sqrt(-2 log(1 - u1)) * cos(2 pi u2)``.
    """
    shape = (size,) if np.isscalar(size) else tuple(size)
    count = int(np.prod(shape, dtype=int))
    uni = rng.random(2 * count).reshape(count, 2)
    z = np.sqrt(-2.0 * np.log1p(-uni[:, 0])) * np.cos(2.0 * np.pi * uni[:, 1])
    return z.reshape(shape)


def _cov_factor(cov: np.ndarray) -> np.ndarray:
    """Square factor F with F F' = cov; tolerates singular PSD input."""
    vals, vecs = np.linalg.eigh(0.5 * (cov + cov.T))
    if vals[0] < PSD_TOL * max(1.0, abs(vals[-1])):
        raise AssumptionError("covariance must be positive semi-definite")
    return vecs * np.sqrt(np.clip(vals, 0.0, None))


class DisturbanceGenerator:
    """Base for the evaluation-time disturbance models."""

    dim: int

    def sample(self, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
        raise NotImplementedError

    @property
    def mean(self) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class GaussianDisturbance(DisturbanceGenerator):
    """Independent Gaussian coordinates with the given means and variances."""

    mu: Sequence[float]
    var: Sequence[float]

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float).reshape(-1)
        var = np.asarray(self.var, dtype=float).reshape(-1)
        if mu.shape != var.shape:
            raise DimensionError("mean and variance vectors differ in length")
        if np.any(var < 0) or not np.all(np.isfinite(var)):
            raise AssumptionError("variances must be finite and non-negative")
        object.__setattr__(self, "mu", _frozen(mu))
        object.__setattr__(self, "var", _frozen(var))

    @property
    def dim(self) -> int:
        return self.mu.shape[0]

    @property
    def mean(self) -> np.ndarray:
        return np.array(self.mu)

    def sample(self, rng, size=None):
        k = 1 if size is None else int(size)
        z = standard_normal(rng, (k, self.dim))
        out = self.mu + np.sqrt(self.var) * z
        return out[0] if size is None else out


@dataclass(frozen=True)
class MixtureDisturbance(DisturbanceGenerator):
    components: tuple[GaussianDisturbance, ...]
    weights: Sequence[float]

    def __post_init__(self):
        comps = tuple(self.components)
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if not comps or len(comps) != w.shape[0]:
            raise DimensionError("mixture needs one weight per component")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise AssumptionError("mixture weights must be non-negative and sum to 1")
        if len({c.dim for c in comps}) != 1:
            raise DimensionError("mixture components differ in dimension")
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "weights", _frozen(w))

    @property
    def dim(self) -> int:
        return self.components[0].dim

    @property
    def mean(self) -> np.ndarray:
        return sum(wk * c.mean for wk, c in zip(self.weights, self.components))

    def sample(self, rng, size=None):
        k = 1 if size is None else int(size)
        # component choice first, then the Gaussian draws, in that order
        picks = np.searchsorted(np.cumsum(self.weights), rng.random(k), side="right")
        picks = np.minimum(picks, len(self.components) - 1)
        z = standard_normal(rng, (k, self.dim))
        mu = np.stack([self.components[i].mu for i in picks])
        sd = np.stack([np.sqrt(self.components[i].var) for i in picks])
        out = mu + sd * z
        return out[0] if size is None else out


@dataclass(frozen=True)
class EmpiricalDisturbance(DisturbanceGenerator):
    """Uniform draw from a finite list of atoms."""

    atoms: np.ndarray

    def __post_init__(self):
        atoms = np.atleast_2d(np.asarray(self.atoms, dtype=float))
        if atoms.shape[0] < 1 or not np.all(np.isfinite(atoms)):
            raise DimensionError("empirical generator needs at least one finite atom")
        object.__setattr__(self, "atoms", _frozen(atoms))

    @property
    def dim(self) -> int:
        return self.atoms.shape[1]

    @property
    def mean(self) -> np.ndarray:
        return self.atoms.mean(axis=0)

    def sample(self, rng, size=None):
        k = 1 if size is None else int(size)
        idx = np.minimum((rng.random(k) * len(self.atoms)).astype(int), len(self.atoms) - 1)
        out = np.array(self.atoms[idx])
        return out[0] if size is None else out


def sample_disturbance(gen: DisturbanceGenerator, rng: np.random.Generator) -> np.ndarray:
    return gen.sample(rng)


# --------------------------------------------------------------------------
# rollouts


@dataclass(frozen=True)
class ExplorationNoise:
    """Covariances of the zero-mean exploration noise on u and on w."""

    sigma_u: np.ndarray
    sigma_w: np.ndarray
    _factors: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        su = _as_matrix(self.sigma_u, "sigma_u")
        sw = _as_matrix(self.sigma_w, "sigma_w")
        object.__setattr__(self, "sigma_u", _frozen(su))
        object.__setattr__(self, "sigma_w", _frozen(sw))
        object.__setattr__(self, "_factors", (_cov_factor(su), _cov_factor(sw)))

    @classmethod
    def isotropic(cls, m: int, d: int, sigma: float = 0.1) -> "ExplorationNoise":
        return cls(sigma**2 * np.eye(m), sigma**2 * np.eye(d))

    def draw(self, rng: np.random.Generator, count: int) -> tuple[np.ndarray, np.ndarray]:
        fu, fw = self._factors
        zu = standard_normal(rng, (count, fu.shape[1]))
        zw = standard_normal(rng, (count, fw.shape[1]))
        return zu @ fu.T, zw @ fw.T


def uniform_box(rng: np.random.Generator, box) -> np.ndarray:
    """Uniform draw from a box given as an (n, 2) array of [low, high] rows."""
    box = np.asarray(box, dtype=float)
    return box[:, 0] + (box[:, 1] - box[:, 0]) * rng.random(box.shape[0])


def rollout_arrays(
    sys,
    policy: PolicyPair,
    noise: ExplorationNoise | None,
    x0,
    M: int,
    rng: np.random.Generator,
    bound: float = 1e6,
    reset_bound: float | None = None,
    reset_box=None,
):
    """Simulate ``M`` consecutive transitions under a noisy affine policy pair.

    Returns arrays ``(X, U, W, Xn)`` with one transition per row. ``sys`` is
    an :class:`LtiSystem` or any simulator exposing ``dims`` and
    ``step(x, u, w)``. Inputs are ``u = Kx + r + o_u`` and ``w = Lx + l + o_w``
    with the exploration noise drawn up front for the whole trajectory.
    Raises :class:`RolloutDivergenceError` (carrying the transitions collected
    so far) as soon as ``|x|_inf`` exceeds ``bound``.

    With ``reset_bound`` set, a transition whose successor leaves the box
    ``|x|_inf <= reset_bound`` is kept and the trajectory continues from a
    fresh state drawn uniformly from ``reset_box``; the result is then a
    concatenation of segments, each chained internally.
    """
    if M < 1:
        raise ValueError("rollout length M must be at least 1")
    n, m, d = sys.dims
    x = _as_vector(x0, n, "x0").copy()
    if noise is None:
        ou, ow = np.zeros((M, m)), np.zeros((M, d))
    else:
        ou, ow = noise.draw(rng, M)
    X = np.empty((M, n))
    U = np.empty((M, m))
    W = np.empty((M, d))
    Xn = np.empty((M, n))
    # affine offsets folded into the noise once; u = Kx + (r + o_u)
    u_off = policy.r + ou
    w_off = policy.l + ow
    K, L = policy.K, policy.L
    if isinstance(sys, LtiSystem):
        A, B, E = sys.A, sys.B, sys.E

        def advance(x, u, w):
            return A @ x + B @ u + E @ w

    else:
        def advance(x, u, w):
            return np.asarray(sys.step(x, u, w), dtype=float)

    for k in range(M):
        u = K @ x + u_off[k]
        w = L @ x + w_off[k]
        x_next = advance(x, u, w)
        size = np.abs(x_next).max()
        if not size <= bound:
            done = [Transition(*row) for row in zip(X[:k], U[:k], W[:k], Xn[:k])]
            raise RolloutDivergenceError(k, bound, done)
        X[k], U[k], W[k], Xn[k] = x, u, w, x_next
        if reset_bound is not None and size > reset_bound:
            x = uniform_box(rng, reset_box)
        else:
            x = x_next
    return X, U, W, Xn


def rollout(sys, policy, noise, x0, M, rng, bound=1e6, reset_bound=None, reset_box=None):
    """Same as :func:`rollout_arrays` but returns a list of :class:`Transition`."""
    X, U, W, Xn = rollout_arrays(sys, policy, noise, x0, M, rng, bound, reset_bound, reset_box)
    return [Transition(*row) for row in zip(X, U, W, Xn)]


def stack_transitions(transitions: Sequence[Transition]):
    """Arrays ``(X, U, W, Xn)`` with one transition per row."""
    X = np.array([t.x for t in transitions])
    U = np.array([t.u for t in transitions])
    W = np.array([t.w for t in transitions])
    Xn = np.array([t.x_next for t in transitions])
    return X, U, W, Xn


def quadrotor(T: float = 0.1) -> LtiSystem:
    """Planar quadrotor as a double integrator; wind enters with the input."""
    A = np.array(
        [[1, 0, T, 0], [0, 1, 0, T], [0, 0, 1, 0], [0, 0, 0, 1]], dtype=float
    )
    B = np.array([[T**2 / 2, 0], [0, T**2 / 2], [T, 0], [0, T]], dtype=float)
    return LtiSystem(A, B, B.copy())
