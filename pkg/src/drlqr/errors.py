"""Exception types raised across the package."""

from __future__ import annotations


class DRLQRError(Exception):
    """Base class for all package errors."""


class DimensionError(DRLQRError, ValueError):
    """Array shapes do not agree with the system dimensions."""


class AssumptionError(DRLQRError, ValueError):
    """Cost weights violate Q >= 0, R > 0 or another modelling assumption."""


class InfeasiblePenaltyError(DRLQRError):
    """``lambda*I - alpha*E'PE`` lost positive definiteness during iteration."""

    def __init__(self, iteration: int, min_eig: float, lam: float):
        self.iteration = iteration
        self.min_eig = min_eig
        self.lam = lam
        super().__init__(
            f"penalty lambda={lam:g} is infeasible: min eigenvalue of "
            f"lambda*I - alpha*E'PE is {min_eig:.3e} at iteration {iteration}; "
            "increase lambda"
        )


class NonConvergenceError(DRLQRError):
    def __init__(self, iterations: int, residual: float):
        self.iterations = iterations
        self.residual = residual
        super().__init__(
            f"no convergence after {iterations} iterations "
            f"(last residual {residual:.3e})"
        )


class ConditioningError(DRLQRError):
    """A Schur complement needed for policy extraction is singular."""


class SaddleStructureError(DRLQRError):
    """Q-function curvature does not have the min-max saddle structure."""


class GridBoundsError(DRLQRError):
    """A grid-search optimiser landed on the boundary of its search box."""


class RolloutDivergenceError(DRLQRError):
    def __init__(self, step: int, bound: float, transitions=None):
        self.step = step
        self.bound = bound
        self.transitions = transitions or []
        super().__init__(f"state left the box |x|_inf <= {bound:g} at step {step}")


class ExcitationError(DRLQRError):
    def __init__(self, condition: float, n_samples: int, n_features: int):
        self.condition = condition
        super().__init__(
            f"regression design is rank deficient (condition {condition:.3e}, "
            f"{n_samples} samples, {n_features} features); increase the "
            "exploration noise or the rollout length M"
        )


class LearningError(DRLQRError):
    """Q-learning aborted; ``iteration`` says where."""

    def __init__(self, iteration: int, cause: Exception):
        self.iteration = iteration
        self.cause = cause
        super().__init__(f"learning failed at iteration {iteration}: {cause}")


class PreconditionError(DRLQRError, ValueError):
    pass


class ConfigError(DRLQRError, ValueError):
    """Configuration problems; ``violations`` lists every one found."""

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.violations))
