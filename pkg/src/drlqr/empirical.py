"""Empirical disturbance distribution: atoms, summary statistics, and an exact
squared 2-Wasserstein distance between equal-size uniform atom sets."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import DimensionError


@dataclass(frozen=True)
class DisturbanceSamples:
    """``N`` observed disturbance vectors, one per row of ``atoms``."""

    atoms: np.ndarray

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=float)
        if atoms.ndim == 1:
            atoms = atoms.reshape(-1, 1)
        if atoms.ndim != 2 or atoms.shape[0] < 1:
            raise DimensionError("need at least one disturbance sample")
        if not np.all(np.isfinite(atoms)):
            raise DimensionError("disturbance samples must be finite")
        atoms = np.array(atoms)
        atoms.setflags(write=False)
        object.__setattr__(self, "atoms", atoms)

    @property
    def N(self) -> int:
        return self.atoms.shape[0]

    @property
    def d(self) -> int:
        return self.atoms.shape[1]

    def __len__(self):
        return self.N


@dataclass(frozen=True)
class SampleStats:
    mean: np.ndarray
    covariance: np.ndarray

    @property
    def d(self) -> int:
        return self.mean.shape[0]

    @classmethod
    def zero(cls, d: int) -> "SampleStats":
        return cls(np.zeros(d), np.zeros((d, d)))


def sample_stats(samples: DisturbanceSamples) -> SampleStats:
    """Sample mean and the biased (divide-by-N) sample covariance."""
    atoms = samples.atoms
    mean = atoms.mean(axis=0)
    centred = atoms - mean
    cov = centred.T @ centred / samples.N
    return SampleStats(mean, 0.5 * (cov + cov.T))


def second_moment(samples: DisturbanceSamples) -> float:
    """``(1/N) sum_j |w_j|^2``, which equals ``tr(cov) + |mean|^2``."""
    return float(np.mean(np.sum(samples.atoms**2, axis=1)))


def wasserstein2_uniform(p_atoms, q_atoms) -> float:
    """Squared 2-Wasserstein distance between two uniform k-atom measures.

    With equal uniform weights an optimal coupling is a permutation
    (Birkhoff), so the distance is the optimal assignment cost under the
    squared Euclidean ground cost, divided by k.
    """
    p = np.atleast_2d(np.asarray(p_atoms, dtype=float))
    q = np.atleast_2d(np.asarray(q_atoms, dtype=float))
    if p.shape[0] != q.shape[0]:
        raise DimensionError(f"atom counts differ: {p.shape[0]} vs {q.shape[0]}")
    if p.shape[1] != q.shape[1]:
        raise DimensionError(f"atom dimensions differ: {p.shape[1]} vs {q.shape[1]}")
    cost = np.sum((p[:, None, :] - q[None, :, :]) ** 2, axis=-1)
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].sum() / p.shape[0])


def read_atoms_csv(path) -> DisturbanceSamples:
    """One atom per row, ``d`` comma-separated decimal columns, no header."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [[float(v) for v in row] for row in csv.reader(fh) if row]
    return DisturbanceSamples(np.array(rows))


def write_atoms_csv(samples: DisturbanceSamples, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for atom in samples.atoms:
            writer.writerow([repr(float(v)) for v in atom])
