"""Monte Carlo closed-loop evaluation of a fixed controller.

Every trial uses its own generator seeded with ``seed + trial_index``, so a
trial's disturbance sequence does not depend on which controller is being
evaluated or on how many trials run. Trials are simulated side by side as one
batch over time.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionError
from .model import CostSpec, DisturbanceGenerator, LtiSystem, PolicyPair


@dataclass(frozen=True)
class EvalSummary:
    controller: str
    steady: np.ndarray  # (trials, n) state at steady_time_index
    costs: np.ndarray  # (trials,) discounted realised cost
    steady_time_index: int
    seed: int

    @property
    def trials(self) -> int:
        return int(self.costs.shape[0])

    @property
    def mean_steady(self) -> np.ndarray:
        return self.steady.mean(axis=0)

    @property
    def var_steady(self) -> np.ndarray:
        # population variance, recomputable from trials.csv
        return self.steady.var(axis=0)

    @property
    def mean_cost(self) -> float:
        return float(self.costs.mean())

    def to_dict(self) -> dict:
        return {
            "controller": self.controller,
            "trials": self.trials,
            "seed": int(self.seed),
            "steady_time_index": int(self.steady_time_index),
            "mean_steady": [float(v) for v in self.mean_steady],
            "var_steady": [float(v) for v in self.var_steady],
            "mean_cost": self.mean_cost,
        }


def disturbance_paths(gen: DisturbanceGenerator, horizon: int, trials: int, seed: int) -> np.ndarray:
    """Array ``(trials, horizon, d)``; trial ``t`` draws from ``seed + t``."""
    return np.stack(
        [gen.sample(np.random.default_rng(seed + t), horizon) for t in range(trials)]
    )


def monte_carlo(
    sys: LtiSystem,
    cost: CostSpec,
    policy: PolicyPair,
    disturbance: DisturbanceGenerator,
    x0,
    horizon: int,
    trials: int,
    seed: int = 0,
    steady_time_index: int = 180,
    controller: str = "wdr",
) -> EvalSummary:
    """Run ``trials`` rollouts of ``u = K x + r`` with ``w`` from ``disturbance``.

    The recorded cost is ``sum_k alpha^k (x'Qx + u'Ru)`` over ``k < horizon``;
    the adversary penalty is not part of it.
    """
    n = sys.n
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.shape != (n,):
        raise DimensionError(f"x0 must have length {n}")
    if disturbance.dim != sys.d:
        raise DimensionError(f"disturbance has dimension {disturbance.dim}, plant expects {sys.d}")
    if not 0 <= steady_time_index <= horizon:
        raise ValueError("steady_time_index must lie in [0, horizon]")
    if trials < 1:
        raise ValueError("need at least one trial")
    W = disturbance_paths(disturbance, horizon, trials, seed)
    X = np.tile(x0, (trials, 1))
    costs = np.zeros(trials)
    steady = X.copy() if steady_time_index == 0 else None
    disc = 1.0
    for k in range(horizon):
        U = X @ policy.K.T + policy.r
        costs += disc * (
            np.einsum("ij,jk,ik->i", X, cost.Q, X) + np.einsum("ij,jk,ik->i", U, cost.R, U)
        )
        disc *= cost.alpha
        X = X @ sys.A.T + U @ sys.B.T + W[:, k] @ sys.E.T
        if k + 1 == steady_time_index:
            steady = X.copy()
    return EvalSummary(controller, steady, costs, steady_time_index, seed)


def write_trials_csv(summary: EvalSummary, path) -> None:
    n = summary.steady.shape[1]
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["trial"] + [f"x{i + 1}" for i in range(n)] + ["cost"])
        for t in range(summary.trials):
            writer.writerow(
                [t] + [repr(float(v)) for v in summary.steady[t]] + [repr(float(summary.costs[t]))]
            )


def read_trials_csv(path):
    """Inverse of :func:`write_trials_csv`: ``(steady, costs)`` arrays."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))[1:]
    data = np.array([[float(v) for v in row[1:]] for row in rows])
    return data[:, :-1], data[:, -1]


def write_summary_json(summary: EvalSummary, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(summary.to_dict(), indent=2) + "\n", encoding="utf-8")
