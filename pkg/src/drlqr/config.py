"""Experiment configuration files (JSON) and their validation.

A config has the sections ``system``, ``cost``, ``samples`` and optionally
``learning``, ``eval``, ``baselines`` and ``sweep``. :func:`parse_config`
reports every problem it finds, each prefixed with its field path, through a
single :class:`~drlqr.errors.ConfigError`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .empirical import DisturbanceSamples
from .errors import ConfigError, DRLQRError
from .model import (
    CostSpec,
    DisturbanceGenerator,
    EmpiricalDisturbance,
    ExplorationNoise,
    GaussianDisturbance,
    LtiSystem,
    MixtureDisturbance,
    min_eig,
)
from .qlearning import LearnConfig

LQR_ALPHA_DEFAULT = 1.0 - 1e-9
DEFAULT_LAMBDA_GRID = (0.22, 10.0, 20)


@dataclass(frozen=True)
class EvalConfig:
    horizon: int = 300
    trials: int = 500
    seed: int = 0
    disturbance: DisturbanceGenerator | None = None
    x0: np.ndarray | None = None
    steady_time_index: int = 180


@dataclass(frozen=True)
class BaselineConfig:
    hinf_lambda: float | None = None
    lqr_alpha: float = LQR_ALPHA_DEFAULT


@dataclass(frozen=True)
class ExperimentConfig:
    system: LtiSystem
    cost: CostSpec
    samples: DisturbanceSamples
    learning: LearnConfig = field(default_factory=LearnConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    baselines: BaselineConfig = field(default_factory=BaselineConfig)
    lambda_grid: tuple[float, ...] | None = None

    def with_seed(self, seed: int) -> "ExperimentConfig":
        """Copy with every configured seed replaced by ``seed``."""
        learning = LearnConfig(**{k: getattr(self.learning, k) for k in self.learning.__dataclass_fields__})
        learning.seed = int(seed)
        return replace(self, learning=learning, eval=replace(self.eval, seed=int(seed)))

    @property
    def hinf_lambda(self) -> float:
        lam = self.baselines.hinf_lambda
        return self.cost.lam if lam is None else lam


# --------------------------------------------------------------------------
# field readers; each appends to ``errs`` and returns None on failure


class _Reader:
    def __init__(self):
        self.errs: list[str] = []

    def fail(self, path: str, msg: str):
        self.errs.append(f"{path}: {msg}")
        return None

    def section(self, data, key: str, required: bool = True) -> dict | None:
        if key not in data:
            return self.fail(key, "missing required section") if required else {}
        if not isinstance(data[key], dict):
            return self.fail(key, "must be an object")
        return data[key]

    def unknown(self, sec: dict, path: str, allowed) -> None:
        for key in sorted(set(sec) - set(allowed)):
            self.fail(f"{path}.{key}", "unknown field")

    def matrix(self, sec, path, key, required=True, shape=None):
        full = f"{path}.{key}"
        if key not in sec:
            return self.fail(full, "missing required field") if required else None
        try:
            arr = np.array(sec[key], dtype=float)
        except (TypeError, ValueError):
            return self.fail(full, "must be a numeric array")
        if arr.ndim == 1 and shape is not None and len(shape) == 2:
            arr = arr.reshape(1, -1) if shape[0] == 1 else arr.reshape(-1, 1)
        if arr.ndim != 2:
            return self.fail(full, f"must be a 2-D array (list of rows), got {arr.ndim}-D")
        if not np.all(np.isfinite(arr)):
            return self.fail(full, "entries must be finite")
        if shape is not None and arr.shape != tuple(shape):
            return self.fail(full, f"expected shape {tuple(shape)}, got {arr.shape}")
        return arr

    def vector(self, sec, path, key, size=None, required=True):
        full = f"{path}.{key}"
        if key not in sec:
            return self.fail(full, "missing required field") if required else None
        try:
            arr = np.array(sec[key], dtype=float).reshape(-1)
        except (TypeError, ValueError):
            return self.fail(full, "must be a numeric list")
        if not np.all(np.isfinite(arr)):
            return self.fail(full, "entries must be finite")
        if size is not None and arr.shape != (size,):
            return self.fail(full, f"expected length {size}, got {arr.shape[0]}")
        return arr

    def number(self, sec, path, key, default=None, required=False, allow_inf=False):
        full = f"{path}.{key}"
        if key not in sec:
            return self.fail(full, "missing required field") if required else default
        v = sec[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            return self.fail(full, f"must be a number, got {v!r}")
        if np.isnan(v) or (np.isinf(v) and not allow_inf):
            return self.fail(full, "must be finite")
        return float(v)

    def integer(self, sec, path, key, default=None, required=False, minimum=None):
        full = f"{path}.{key}"
        if key not in sec:
            return self.fail(full, "missing required field") if required else default
        v = sec[key]
        if isinstance(v, bool) or not isinstance(v, int):
            return self.fail(full, f"must be an integer, got {v!r}")
        if minimum is not None and v < minimum:
            return self.fail(full, f"must be at least {minimum}, got {v}")
        return v


def _generator(rd: _Reader, spec, path: str, d: int | None) -> DisturbanceGenerator | None:
    if not isinstance(spec, dict):
        return rd.fail(path, "must be an object with a 'type'")
    kind = spec.get("type")
    try:
        if kind == "gaussian":
            rd.unknown(spec, path, ("type", "mean", "var"))
            mu = rd.vector(spec, path, "mean", d)
            var = rd.vector(spec, path, "var", d)
            return None if mu is None or var is None else GaussianDisturbance(mu, var)
        if kind == "mixture":
            rd.unknown(spec, path, ("type", "components", "weights"))
            comps = spec.get("components")
            if not isinstance(comps, list) or not comps:
                return rd.fail(f"{path}.components", "must be a non-empty list")
            parsed = [
                _generator(rd, {"type": "gaussian", **c} if isinstance(c, dict) else c,
                           f"{path}.components[{i}]", d)
                for i, c in enumerate(comps)
            ]
            weights = rd.vector(spec, path, "weights", len(comps))
            if weights is None or any(c is None for c in parsed):
                return None
            return MixtureDisturbance(tuple(parsed), weights)
        if kind == "empirical":
            rd.unknown(spec, path, ("type", "atoms"))
            atoms = rd.matrix(spec, path, "atoms")
            if atoms is None:
                return None
            if d is not None and atoms.shape[1] != d:
                return rd.fail(f"{path}.atoms", f"atoms must have {d} columns")
            return EmpiricalDisturbance(atoms)
        if kind == "zero":
            rd.unknown(spec, path, ("type",))
            if d is None:
                return None
            return GaussianDisturbance(np.zeros(d), np.zeros(d))
    except DRLQRError as exc:
        return rd.fail(path, str(exc))
    return rd.fail(f"{path}.type", f"unknown generator type {kind!r} (gaussian, mixture, empirical, zero)")


def _system(rd: _Reader, data) -> LtiSystem | None:
    sec = rd.section(data, "system")
    if sec is None:
        return None
    rd.unknown(sec, "system", ("A", "B", "E"))
    A = rd.matrix(sec, "system", "A")
    B = rd.matrix(sec, "system", "B")
    E = rd.matrix(sec, "system", "E")
    if A is None or B is None or E is None:
        return None
    n = A.shape[0]
    ok = True
    if A.shape != (n, n):
        ok = rd.fail("system.A", f"must be square, got {A.shape}")
    if B.shape[0] != n:
        ok = rd.fail("system.B", f"must have {n} rows, got {B.shape[0]}")
    if E.shape[0] != n:
        ok = rd.fail("system.E", f"must have {n} rows, got {E.shape[0]}")
    return LtiSystem(A, B, E) if ok is not None else None


def _cost(rd: _Reader, data, sys: LtiSystem | None) -> CostSpec | None:
    sec = rd.section(data, "cost")
    if sec is None:
        return None
    rd.unknown(sec, "cost", ("Q", "R", "alpha", "lambda"))
    n = sys.n if sys else None
    m = sys.m if sys else None
    Q = rd.matrix(sec, "cost", "Q", shape=(n, n) if n else None)
    R = rd.matrix(sec, "cost", "R", shape=(m, m) if m else None)
    alpha = rd.number(sec, "cost", "alpha", required=True)
    lam = rd.number(sec, "cost", "lambda", required=True)
    bad = False
    for name, M in (("Q", Q), ("R", R)):
        if M is None:
            bad = True
            continue
        if M.shape[0] != M.shape[1] or not np.allclose(M, M.T, atol=1e-12):
            rd.fail(f"cost.{name}", "must be a symmetric square matrix")
            bad = True
    if Q is not None and not bad and min_eig(Q) < -1e-10:
        rd.fail("cost.Q", f"Assumption 1 violated: Q must be positive semi-definite (min eigenvalue {min_eig(Q):.3e})")
        bad = True
    if R is not None and not bad and min_eig(R) <= 0.0:
        rd.fail("cost.R", f"Assumption 1 violated: R must be positive definite (min eigenvalue {min_eig(R):.3e})")
        bad = True
    if alpha is not None and not 0.0 < alpha < 1.0:
        rd.fail("cost.alpha", f"must lie in (0, 1), got {alpha}")
        bad = True
    if lam is not None and not lam > 0.0:
        rd.fail("cost.lambda", f"must be positive, got {lam}")
        bad = True
    if bad or alpha is None or lam is None:
        return None
    return CostSpec(Q, R, alpha, lam)


def _samples(rd: _Reader, data, d: int | None) -> DisturbanceSamples | None:
    sec = rd.section(data, "samples")
    if sec is None:
        return None
    if "atoms" in sec:
        rd.unknown(sec, "samples", ("atoms",))
        atoms = rd.matrix(sec, "samples", "atoms", shape=None)
        if atoms is None:
            return None
        if d is not None and atoms.shape[1] != d:
            return rd.fail("samples.atoms", f"atoms must have {d} columns (E has {d})")
        return DisturbanceSamples(atoms)
    if "generator" in sec:
        rd.unknown(sec, "samples", ("generator", "N", "seed", "decimals"))
        gen = _generator(rd, sec["generator"], "samples.generator", d)
        N = rd.integer(sec, "samples", "N", required=True, minimum=1)
        seed = rd.integer(sec, "samples", "seed", default=0, minimum=0)
        decimals = rd.integer(sec, "samples", "decimals", default=None, minimum=0)
        if gen is None or N is None or seed is None:
            return None
        atoms = gen.sample(np.random.default_rng(seed), N)
        if decimals is not None:
            atoms = np.round(atoms, decimals)
        return DisturbanceSamples(atoms)
    return rd.fail("samples", "needs either 'atoms' or 'generator' with 'N'")


def _learning(rd: _Reader, data, sys: LtiSystem | None) -> LearnConfig | None:
    sec = rd.section(data, "learning", required=False)
    if sec is None:
        return None
    p = "learning"
    rd.unknown(sec, p, (
        "M", "epsilon", "max_iters", "sigma", "sigma_u", "sigma_w", "x0_box", "seed", "ridge",
        "reference_x0", "saddle_retries", "max_restarts", "divergence_bound", "reset_bound",
    ))
    base = LearnConfig()
    kw = {
        "M": rd.integer(sec, p, "M", base.M, minimum=1),
        "epsilon": rd.number(sec, p, "epsilon", base.epsilon, allow_inf=True),
        "max_iters": rd.integer(sec, p, "max_iters", base.max_iters, minimum=1),
        "seed": rd.integer(sec, p, "seed", base.seed, minimum=0),
        "ridge": rd.number(sec, p, "ridge", base.ridge),
        "saddle_retries": rd.integer(sec, p, "saddle_retries", base.saddle_retries, minimum=0),
        "max_restarts": rd.integer(sec, p, "max_restarts", base.max_restarts, minimum=0),
        "divergence_bound": rd.number(sec, p, "divergence_bound", base.divergence_bound),
        "reset_bound": base.reset_bound,
    }
    if "reset_bound" in sec:
        kw["reset_bound"] = None if sec["reset_bound"] is None else rd.number(sec, p, "reset_bound")
    n, m, d = sys.dims if sys else (None, None, None)
    if "sigma" in sec and ("sigma_u" in sec or "sigma_w" in sec):
        rd.fail(p, "give either 'sigma' or 'sigma_u'/'sigma_w', not both")
    elif "sigma" in sec:
        sigma = rd.number(sec, p, "sigma")
        if sigma is not None and sigma < 0:
            rd.fail(f"{p}.sigma", "must be non-negative")
        elif sigma is not None and sys:
            kw["exploration"] = ExplorationNoise.isotropic(m, d, sigma)
    elif "sigma_u" in sec or "sigma_w" in sec:
        su = rd.matrix(sec, p, "sigma_u", shape=(m, m) if sys else None)
        sw = rd.matrix(sec, p, "sigma_w", shape=(d, d) if sys else None)
        if su is not None and sw is not None:
            try:
                kw["exploration"] = ExplorationNoise(su, sw)
            except DRLQRError as exc:
                rd.fail(p, str(exc))
    if "x0_box" in sec:
        kw["x0_box"] = rd.matrix(sec, p, "x0_box", shape=(n, 2) if sys else None)
    if "reference_x0" in sec:
        kw["reference_x0"] = rd.vector(sec, p, "reference_x0", n)
    if any(v is None for k, v in kw.items() if k not in ("reset_bound", "x0_box", "reference_x0")):
        return None
    cfg = LearnConfig(**kw)
    if sys:
        try:
            cfg.validate(sys.dims)
        except ConfigError as exc:
            rd.errs.extend(exc.violations)
            return None
    return cfg


def _eval(rd: _Reader, data, sys: LtiSystem | None) -> EvalConfig | None:
    sec = rd.section(data, "eval", required=False)
    if sec is None:
        return None
    p = "eval"
    rd.unknown(sec, p, ("horizon", "trials", "seed", "disturbance", "x0", "steady_time_index"))
    base = EvalConfig()
    horizon = rd.integer(sec, p, "horizon", base.horizon, minimum=1)
    trials = rd.integer(sec, p, "trials", base.trials, minimum=1)
    seed = rd.integer(sec, p, "seed", base.seed, minimum=0)
    steady = rd.integer(sec, p, "steady_time_index", base.steady_time_index, minimum=0)
    n, d = (sys.n, sys.d) if sys else (None, None)
    dist = None
    if "disturbance" in sec:
        dist = _generator(rd, sec["disturbance"], f"{p}.disturbance", d)
    elif sys:
        dist = GaussianDisturbance(np.zeros(d), np.zeros(d))
    x0 = rd.vector(sec, p, "x0", n) if "x0" in sec else (np.zeros(n) if sys else None)
    if horizon is not None and steady is not None and steady > horizon:
        rd.fail(f"{p}.steady_time_index", f"must not exceed eval.horizon={horizon}")
    if any(v is None for v in (horizon, trials, seed, steady, dist, x0)):
        return None
    return EvalConfig(horizon, trials, seed, dist, x0, steady)


def _baselines(rd: _Reader, data) -> BaselineConfig | None:
    sec = rd.section(data, "baselines", required=False)
    if sec is None:
        return None
    rd.unknown(sec, "baselines", ("hinf_lambda", "lqr_alpha"))
    lam = rd.number(sec, "baselines", "hinf_lambda")
    alpha = rd.number(sec, "baselines", "lqr_alpha", LQR_ALPHA_DEFAULT)
    if lam is not None and lam <= 0:
        return rd.fail("baselines.hinf_lambda", "must be positive")
    if alpha is not None and not 0.0 < alpha < 1.0:
        return rd.fail("baselines.lqr_alpha", "must lie in (0, 1)")
    return BaselineConfig(lam, LQR_ALPHA_DEFAULT if alpha is None else alpha)


def _sweep(rd: _Reader, data):
    sec = rd.section(data, "sweep", required=False)
    if sec is None or not sec:
        return None
    rd.unknown(sec, "sweep", ("lambda_grid",))
    grid = rd.vector(sec, "sweep", "lambda_grid", required=False)
    return None if grid is None else tuple(float(v) for v in grid)


def config_from_dict(data) -> ExperimentConfig:
    rd = _Reader()
    if not isinstance(data, dict):
        raise ConfigError(["<root>: config must be a JSON object"])
    rd.unknown(data, "<root>", ("system", "cost", "samples", "learning", "eval", "baselines", "sweep", "description"))
    sys = _system(rd, data)
    cost = _cost(rd, data, sys)
    samples = _samples(rd, data, sys.d if sys else None)
    learning = _learning(rd, data, sys)
    ev = _eval(rd, data, sys)
    base = _baselines(rd, data)
    grid = _sweep(rd, data)
    if rd.errs:
        raise ConfigError(rd.errs)
    return ExperimentConfig(sys, cost, samples, learning, ev, base, grid)


def parse_config(path) -> ExperimentConfig:
    """Read and validate a UTF-8 JSON experiment config."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError([f"<file>: config file {str(path)!r} does not exist"]) from None
    except (OSError, UnicodeDecodeError) as exc:
        raise ConfigError([f"<file>: cannot read {str(path)!r}: {exc}"]) from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"<file>: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}"]) from None
    return config_from_dict(data)


def preset_path(name: str) -> Path:
    """Location of a bundled preset such as ``"quadrotor"``."""
    return Path(str(resources.files("drlqr") / "presets" / f"{name}.json"))


def load_preset(name: str) -> ExperimentConfig:
    return parse_config(preset_path(name))


def parse_lambda_grid(text: str) -> tuple[float, ...]:
    """``"a:b:k"`` gives ``k`` evenly spaced values from a to b; ``"a"`` is a single value."""
    parts = text.split(":")
    try:
        if len(parts) == 1:
            return (float(parts[0]),)
        if len(parts) == 3:
            a, b, k = float(parts[0]), float(parts[1]), int(parts[2])
            if k < 1:
                raise ValueError
            return tuple(float(v) for v in np.linspace(a, b, k))
    except ValueError:
        pass
    raise ConfigError([f"--lambda-grid: expected 'a:b:k' or a single number, got {text!r}"])
