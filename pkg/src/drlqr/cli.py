"""Command-line front end.

    drlqr solve|learn|eval|sweep --config <path> --out <dir> [--seed N]
          [--controller wdr|lqr|hinf] [--lambda-grid a:b:k] [--dump-theta]

Exit codes: 0 success, 1 configuration error, 2 solver error, 3 learning error.
All numbers are written with ``repr`` so they round-trip exactly.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import baselines, dr_riccati, evaluation, qlearning
from .config import DEFAULT_LAMBDA_GRID, ExperimentConfig, parse_config, parse_lambda_grid
from .empirical import sample_stats
from .errors import ConfigError, DRLQRError, LearningError
from .model import PolicyPair
from .qfunction import pack_theta, write_theta_csv

logger = logging.getLogger("drlqr")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_LEARNING = 0, 1, 2, 3
CONTROLLERS = ("wdr", "lqr", "hinf")


def _fmt(v) -> str:
    return repr(float(v))


def _write_rows(path: Path, rows, header=None) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if header:
            writer.writerow(header)
        writer.writerows(rows)


def write_policy_csv(policy: PolicyPair, path) -> None:
    """Rows of K, then r, then rows of L, then l."""
    rows = [[_fmt(v) for v in row] for row in policy.K]
    rows.append([_fmt(v) for v in policy.r])
    rows += [[_fmt(v) for v in row] for row in policy.L]
    rows.append([_fmt(v) for v in policy.l])
    _write_rows(Path(path), rows)


def read_policy_csv(path, dims) -> PolicyPair:
    n, m, d = dims
    path = Path(path)
    if not path.is_file():
        raise ConfigError([f"--policy: file {str(path)!r} does not exist"])
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [[float(v) for v in row] for row in csv.reader(fh) if row]
    widths = [n] * m + [m] + [n] * d + [d]
    if [len(r) for r in rows] != widths:
        raise ConfigError(
            [f"--policy: expected {len(widths)} rows of widths {widths} for dims {dims}"]
        )
    K = np.array(rows[:m])
    r = np.array(rows[m])
    L = np.array(rows[m + 1 : m + 1 + d]).reshape(d, n)
    l = np.array(rows[m + 1 + d])
    return PolicyPair(K, r, L, l)


def _write_json(path: Path, data) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")


# --------------------------------------------------------------------------
# controllers


def controller_report(cfg: ExperimentConfig, controller: str, cost=None):
    """Model-based report for one of the three controllers."""
    cost = cfg.cost if cost is None else cost
    if controller == "wdr":
        return dr_riccati.solve(cfg.system, cost, cfg.samples)
    if controller == "hinf":
        return baselines.hinf_report(cfg.system, cost)
    if controller == "lqr":
        return baselines.lqr_report(cfg.system, cost, cfg.baselines.lqr_alpha)
    raise ConfigError([f"--controller: unknown controller {controller!r}"])


def _hinf_cost(cfg: ExperimentConfig, controller: str):
    return cfg.cost.with_lambda(cfg.hinf_lambda) if controller == "hinf" else cfg.cost


def run_learning(cfg: ExperimentConfig, cost=None, callback=None):
    cost = cfg.cost if cost is None else cost
    return qlearning.learn(cfg.system, cost, sample_stats(cfg.samples), cfg.learning, callback)


# --------------------------------------------------------------------------
# commands


def cmd_solve(cfg: ExperimentConfig, out: Path, controller: str = "wdr"):
    report = controller_report(cfg, controller, _hinf_cost(cfg, controller))
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(report.to_json() + "\n", encoding="utf-8")
    write_policy_csv(report.policy, out / "policy.csv")
    return report


def cmd_learn(cfg: ExperimentConfig, out: Path, dump_theta: bool = False):
    out.mkdir(parents=True, exist_ok=True)
    callback = None
    if dump_theta:
        def callback(log):
            write_theta_csv(log.theta, out / "theta" / f"theta_{log.index:05d}.csv")

    qp, policy, logs = run_learning(cfg, callback=callback)
    _write_rows(
        out / "iterations.csv",
        [[log.index, _fmt(log.delta), _fmt(log.J), _fmt(log.design_condition)] for log in logs],
        header=["iter", "delta", "J", "design_condition"],
    )
    write_policy_csv(policy, out / "policy.csv")
    write_theta_csv(pack_theta(qp), out / "theta.csv")
    return qp, policy, logs


def cmd_eval(cfg: ExperimentConfig, out: Path, controller: str = "wdr", policy_path=None):
    if policy_path is not None:
        policy = read_policy_csv(policy_path, cfg.system.dims)
    else:
        policy = controller_report(cfg, controller, _hinf_cost(cfg, controller)).policy
    ev = cfg.eval
    summary = evaluation.monte_carlo(
        cfg.system, cfg.cost, policy, ev.disturbance, ev.x0, ev.horizon, ev.trials,
        ev.seed, ev.steady_time_index, controller,
    )
    evaluation.write_trials_csv(summary, out / "trials.csv")
    evaluation.write_summary_json(summary, out / "summary.json")
    return summary


SWEEP_HEADER = ["lambda", "mean_x1", "var_x1", "mean_cost", "feasible"]


def sweep_row(cfg: ExperimentConfig, lam: float, controller: str = "wdr", use_learning: bool = False):
    """One ``sweep.csv`` row; solver or learning failures give a failed row."""
    nan = float("nan")
    try:
        cost = cfg.cost.with_lambda(lam)
        if controller == "lqr":
            policy, feasible = baselines.lqr_gain(cfg.system, cost, cfg.baselines.lqr_alpha), True
        elif use_learning and controller == "wdr":
            _, policy, _ = run_learning(cfg, cost)
            feasible = True
        else:
            report = controller_report(cfg, controller, cost)
            policy, feasible = report.policy, report.feasible
    except DRLQRError as exc:
        logger.warning("lambda=%r failed: %s", lam, exc)
        return [lam, nan, nan, nan, False]
    ev = cfg.eval
    s = evaluation.monte_carlo(
        cfg.system, cfg.cost, policy, ev.disturbance, ev.x0, ev.horizon, ev.trials,
        ev.seed, ev.steady_time_index, controller,
    )
    return [lam, float(s.mean_steady[0]), float(s.var_steady[0]), s.mean_cost, bool(feasible)]


def cmd_sweep(cfg: ExperimentConfig, out: Path, grid, controller: str = "wdr", use_learning: bool = False):
    rows = [sweep_row(cfg, float(lam), controller, use_learning) for lam in grid]
    _write_rows(
        out / "sweep.csv",
        [[_fmt(r[0]), _fmt(r[1]), _fmt(r[2]), _fmt(r[3]), "true" if r[4] else "false"] for r in rows],
        header=SWEEP_HEADER,
    )
    return rows


# --------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="drlqr",
        description="Wasserstein distributionally robust LQ control: solve, learn, evaluate, sweep.",
    )
    parser.add_argument("command", choices=("solve", "learn", "eval", "sweep"))
    parser.add_argument("--config", required=True, help="experiment config (JSON)")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="override every configured seed")
    parser.add_argument("--controller", choices=CONTROLLERS, default="wdr")
    parser.add_argument("--lambda-grid", default=None, help="a:b:k evenly spaced penalties, or one value")
    parser.add_argument("--dump-theta", action="store_true", help="write theta after every learning iteration")
    parser.add_argument("--policy", default=None, help="policy.csv to evaluate instead of solving")
    parser.add_argument("--use-learning", action="store_true", help="sweep: learn the WDR policy instead of solving")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def _grid(args, cfg: ExperimentConfig):
    if args.lambda_grid is not None:
        return parse_lambda_grid(args.lambda_grid)
    if cfg.lambda_grid is not None:
        return cfg.lambda_grid
    a, b, k = DEFAULT_LAMBDA_GRID
    return tuple(float(v) for v in np.linspace(a, b, k))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    out = Path(args.out)
    try:
        cfg = parse_config(args.config)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        if args.command == "solve":
            report = cmd_solve(cfg, out, args.controller)
            print(f"solved in {report.iterations} iterations; rho_closed={report.rho_closed:.6g}")
        elif args.command == "learn":
            _, _, logs = cmd_learn(cfg, out, args.dump_theta)
            print(f"learning stopped after {len(logs)} iterations; delta={logs[-1].delta:.3e}")
        elif args.command == "eval":
            summary = cmd_eval(cfg, out, args.controller, args.policy)
            print(f"{summary.trials} trials; mean steady x1={summary.mean_steady[0]:.6g}")
        else:
            rows = cmd_sweep(cfg, out, _grid(args, cfg), args.controller, args.use_learning)
            failed = sum(1 for r in rows if not r[4] or math.isnan(r[1]))
            print(f"{len(rows)} rows written, {failed} failed")
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except LearningError as exc:
        print(f"learning error: {exc}", file=sys.stderr)
        return EXIT_LEARNING
    except DRLQRError as exc:
        code = EXIT_LEARNING if args.command == "learn" else EXIT_SOLVER
        print(f"{'learning' if code == EXIT_LEARNING else 'solver'} error: {exc}", file=sys.stderr)
        return code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
