"""Quadratic Q-functions of the deterministic-equivalent game.

``Q(x, u, w) = e'He + G'e + s`` with ``e = [x; u; w]``. For regression the
parameters are packed into ``theta = [h; G; s]`` against the features
``[e_bar; e; 1]``, where ``e_bar`` lists the monomials ``e_i e_j`` (i <= j)
of the upper triangle in row-major order. Diagonal slots of ``h`` hold
``H_ii`` and off-diagonal slots hold ``2 H_ij``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dr_riccati import ValueFunction, assemble_blocks, saddle_gains
from .empirical import DisturbanceSamples, SampleStats, sample_stats
from .errors import DimensionError
from .model import CostSpec, LtiSystem, PolicyPair


@dataclass(frozen=True)
class QParams:
    H: np.ndarray
    G: np.ndarray
    s: float
    dims: tuple[int, int, int]

    def __post_init__(self):
        q = sum(self.dims)
        H = np.asarray(self.H, dtype=float)
        G = np.asarray(self.G, dtype=float).reshape(-1)
        if H.shape != (q, q) or G.shape != (q,):
            raise DimensionError(f"H {H.shape} / G {G.shape} do not match dims {self.dims}")
        object.__setattr__(self, "H", 0.5 * (H + H.T))
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "s", float(self.s))
        object.__setattr__(self, "dims", tuple(int(v) for v in self.dims))

    @classmethod
    def zero(cls, n: int, m: int, d: int) -> "QParams":
        q = n + m + d
        return cls(np.zeros((q, q)), np.zeros(q), 0.0, (n, m, d))

    @property
    def q(self) -> int:
        return sum(self.dims)

    def _slices(self):
        n, m, d = self.dims
        return slice(0, n), slice(n, n + m), slice(n + m, n + m + d)

    def block(self, a: str, b: str) -> np.ndarray:
        idx = dict(zip("xuw", self._slices()))
        return self.H[idx[a], idx[b]]

    def grad(self, a: str) -> np.ndarray:
        idx = dict(zip("xuw", self._slices()))
        return self.G[idx[a]]

    def to_dict(self) -> dict:
        return {"H": self.H.tolist(), "G": self.G.tolist(), "s": self.s, "dims": list(self.dims)}

    @classmethod
    def from_dict(cls, data: dict) -> "QParams":
        return cls(np.array(data["H"]), np.array(data["G"]), data["s"], tuple(data["dims"]))


def theta_length(q: int) -> int:
    return q * (q + 1) // 2 + q + 1


def q_from_value(sys: LtiSystem, cost: CostSpec, vf: ValueFunction, stats: SampleStats) -> QParams:
    """Q-function of the deterministic game whose continuation value is ``vf``.

    The constant uses ``vf.z_det``, the deterministic-game constant.
    """
    b = assemble_blocks(sys, cost, vf, stats)
    H = np.block(
        [
            [b.H_xx, b.H_xu, b.H_xw],
            [b.H_xu.T, b.H_uu, b.H_uw],
            [b.H_xw.T, b.H_uw.T, b.H_ww],
        ]
    )
    G = np.concatenate([b.G_x, b.G_u, b.G_w])
    s = cost.alpha * vf.z_det - cost.lam * float(stats.mean @ stats.mean)
    return QParams(H, G, s, sys.dims)


def basis_vector(x, u, w) -> np.ndarray:
    """Features ``[e_bar; e; 1]`` of a single ``(x, u, w)``."""
    e = np.concatenate([np.atleast_1d(np.asarray(v, dtype=float)) for v in (x, u, w)])
    return basis_matrix(e[None, :])[0]


def basis_matrix(E: np.ndarray) -> np.ndarray:
    """Row-wise features for a stack of ``e`` vectors, shape ``(M, q)``."""
    E = np.atleast_2d(np.asarray(E, dtype=float))
    iu, ju = np.triu_indices(E.shape[1])
    return np.hstack([E[:, iu] * E[:, ju], E, np.ones((E.shape[0], 1))])


def pack_theta(qp: QParams) -> np.ndarray:
    iu, ju = np.triu_indices(qp.q)
    h = np.where(iu == ju, 1.0, 2.0) * qp.H[iu, ju]
    return np.concatenate([h, qp.G, [qp.s]])


def unpack_theta(theta, dims) -> QParams:
    theta = np.asarray(theta, dtype=float).reshape(-1)
    q = sum(dims)
    if theta.shape[0] != theta_length(q):
        raise DimensionError(
            f"theta has length {theta.shape[0]}, expected {theta_length(q)} for q={q}"
        )
    nh = q * (q + 1) // 2
    iu, ju = np.triu_indices(q)
    H = np.zeros((q, q))
    vals = theta[:nh] * np.where(iu == ju, 1.0, 0.5)
    H[iu, ju] = vals
    H[ju, iu] = vals
    return QParams(H, theta[nh : nh + q], theta[-1], tuple(dims))


def eval_q(qp: QParams, x, u, w) -> float:
    n, m, d = qp.dims
    parts = [np.atleast_1d(np.asarray(v, dtype=float)) for v in (x, u, w)]
    if tuple(p.shape[0] for p in parts) != (n, m, d):
        raise DimensionError(f"inputs of sizes {[p.shape[0] for p in parts]} do not match {qp.dims}")
    e = np.concatenate(parts)
    return float(e @ qp.H @ e + qp.G @ e + qp.s)


def greedy_policies(qp: QParams) -> PolicyPair:
    """Saddle-point policies of a quadratic Q-function.

    Raises :class:`~drlqr.errors.SaddleStructureError` when the curvature is
    not convex in ``u`` and concave in ``w``.
    """
    K, r, L, l = saddle_gains(
        qp.block("x", "u"),
        qp.block("x", "w"),
        qp.block("u", "u"),
        qp.block("u", "w"),
        qp.block("w", "w"),
        qp.grad("u"),
        qp.grad("w"),
    )
    return PolicyPair(K, r, L, l)


# --------------------------------------------------------------------------
# N-atom Q-function of the stochastic game


def tilde_q_params(
    sys: LtiSystem, cost: CostSpec, vf: ValueFunction, samples: DisturbanceSamples
):
    """Quadratic form ``(H, G, s)`` over ``[x; u; w_1; ...; w_N]``.

    Each atom enters the expectation with weight ``1/N``, so its blocks (the
    ``x-w_j``, ``u-w_j`` and ``w_j-w_j`` blocks and ``G_{w_j}``) are scaled
    by ``1/N``; cross blocks between different atoms are zero.
    """
    stats = sample_stats(samples)
    b = assemble_blocks(sys, cost, vf, stats, samples)
    n, m, d = sys.dims
    N = samples.N
    size = n + m + N * d
    H = np.zeros((size, size))
    H[:n, :n] = b.H_xx
    H[:n, n : n + m] = b.H_xu
    H[n : n + m, :n] = b.H_xu.T
    H[n : n + m, n : n + m] = b.H_uu
    for j in range(N):
        sl = slice(n + m + j * d, n + m + (j + 1) * d)
        H[:n, sl] = b.H_xw / N
        H[sl, :n] = b.H_xw.T / N
        H[n : n + m, sl] = b.H_uw / N
        H[sl, n : n + m] = b.H_uw.T / N
        H[sl, sl] = b.H_ww / N
    G = np.concatenate([b.G_x, b.G_u, (b.G_wj / N).reshape(-1)])
    s = cost.alpha * vf.z - cost.lam * float(np.mean(np.sum(samples.atoms**2, axis=1)))
    return H, G, s


def tilde_q_minmax(
    sys: LtiSystem, cost: CostSpec, vf: ValueFunction, samples: DisturbanceSamples, x
):
    """``min_u max_{w_1..w_N}`` of the N-atom Q-function at state ``x``.

    Returns ``(value, u_star, atoms)`` with ``atoms`` of shape ``(N, d)``.
    """
    H, G, s = tilde_q_params(sys, cost, vf, samples)
    n, m, d = sys.dims
    x = np.asarray(x, dtype=float).reshape(n)
    # reduced curvature of the N-atom game equals the single-atom one
    b = assemble_blocks(sys, cost, vf, sample_stats(samples))
    saddle_gains(b.H_xu, b.H_xw, b.H_uu, b.H_uw, b.H_ww, b.G_u, b.G_w)
    Hyy = H[n:, n:]
    rhs = -(H[n:, :n] @ x + 0.5 * G[n:])
    y = np.linalg.solve(Hyy, rhs)
    v = np.concatenate([x, y])
    value = float(v @ H @ v + G @ v + s)
    return value, y[:m], y[m:].reshape(samples.N, d)


def write_theta_csv(theta, path) -> None:
    """Single column, one entry per line, full round-trip precision."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for v in np.asarray(theta, dtype=float).reshape(-1):
            writer.writerow([repr(float(v))])


def read_theta_csv(path) -> np.ndarray:
    with open(path, newline="", encoding="utf-8") as fh:
        return np.array([float(row[0]) for row in csv.reader(fh) if row])
