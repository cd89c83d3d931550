"""Wasserstein distributionally robust linear-quadratic control.

Model-based solution of the Wasserstein-penalised LQ game by value iteration,
a model-free Q-learning counterpart, LQR and H-infinity baselines, and a
Monte Carlo evaluation harness with a command-line front end.
"""

from .baselines import hinf_policy, lqr_gain
from .dr_riccati import SolveReport, ValueFunction, feasibility_threshold, solve, value_iterate
from .empirical import DisturbanceSamples, SampleStats, sample_stats, wasserstein2_uniform
from .estimators import DRQLearning, HInfController, LQRController, WassersteinLQR
from .model import CostSpec, LtiSystem, PolicyPair, quadrotor
from .qlearning import LearnConfig, learn

__all__ = [
    "CostSpec",
    "DRQLearning",
    "DisturbanceSamples",
    "HInfController",
    "LQRController",
    "LearnConfig",
    "LtiSystem",
    "PolicyPair",
    "SampleStats",
    "SolveReport",
    "ValueFunction",
    "WassersteinLQR",
    "feasibility_threshold",
    "hinf_policy",
    "learn",
    "lqr_gain",
    "quadrotor",
    "sample_stats",
    "solve",
    "value_iterate",
    "wasserstein2_uniform",
]

__version__ = "0.1.0"
