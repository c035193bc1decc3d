"""Command-line front end

Subcommands: ``solve``, ``vdp``, ``bicycle-nudge``, ``bench-lp`` and
``bench-reach``. Exit codes depend on solver status only:

    0 success, 1 parse/IO/usage error, 2 infeasible, 3 unbounded,
    4 not converged (nudge) or truncated tube, 5 iteration cap reached
"""
import argparse
import json
import logging
import math
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
from pydantic import ValidationError

from lpreach.core.config import SolverConfig, settings
from lpreach.core.errors import DimensionMismatch, LPReachError, ScenarioError, classify_error
from lpreach.core.logging import setup_logging
from lpreach.models.schemas import (
    LPFile,
    NudgeConfig,
    RunSummary,
    ScenarioFile,
    SolutionDocument,
    SolverStatus,
)
from lpreach.services.bench import run_lp_bench, run_reach_bench
from lpreach.services.reach import (
    box_corners,
    integrate_embedding,
    nudge,
    sample_box,
    simulate_points,
    tube_contains,
)
from lpreach.services.simplex import linprog
from lpreach.services.systems import (
    DemoScenario,
    bicycle_system,
    system_from_scenario,
    vanderpol_dt,
    vanderpol_system,
)
from lpreach.utils.io import ResultWriter, load_json_document
from lpreach.utils.plotting import plot_tube

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INFEASIBLE = 2
EXIT_UNBOUNDED = 3
EXIT_NOT_CONVERGED = 4
EXIT_ITERATION_CAP = 5

STATUS_EXIT_CODES: Dict[SolverStatus, int] = {
    SolverStatus.SUCCESS: EXIT_OK,
    SolverStatus.INFEASIBLE: EXIT_INFEASIBLE,
    SolverStatus.UNBOUNDED: EXIT_UNBOUNDED,
    SolverStatus.ITERATION_CAP: EXIT_ITERATION_CAP,
}


class UsageError(Exception):
    """Bad command line"""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


class InputError(Exception):
    """Input document could not be parsed; message carries file and line"""


# ===== 输入解析 =====

def _locate(text: str, loc: Sequence) -> Optional[int]:
    """Line of the last named key in a pydantic error location"""
    keys = [k for k in loc if isinstance(k, str)]
    if not keys:
        return None
    needle = f'"{keys[-1]}"'
    for lineno, line in enumerate(text.splitlines(), start=1):
        if needle in line:
            return lineno
    return None


def read_document(path: Path, model):
    """
    Load a JSON document, turning failures into one readable message

    Raises:
        InputError: syntax or validation error, with line numbers
        OSError: the file cannot be read
    """
    path = Path(path)
    try:
        return load_json_document(path, model)
    except json.JSONDecodeError as e:
        raise InputError(f"{path}:{e.lineno}:{e.colno}: {e.msg}") from e
    except ValidationError as e:
        text = path.read_text(encoding="utf-8")
        lines = []
        for err in e.errors():
            field = ".".join(str(part) for part in err["loc"]) or "<document>"
            lineno = _locate(text, err["loc"])
            where = f"{path}:{lineno}" if lineno else str(path)
            lines.append(f"{where}: {field}: {err['msg']}")
        raise InputError("\n".join(lines)) from e


# ===== 子命令 =====

def cmd_solve(args) -> int:
    doc = read_document(args.path, LPFile)
    try:
        problem = doc.to_problem()
    except (DimensionMismatch, LPReachError) as e:
        raise InputError(f"{args.path}: {e}") from e

    outcome = linprog(problem, SolverConfig.from_settings())
    status = outcome.status
    solution = SolutionDocument(
        status=status.label,
        feasible=status.feasible,
        bounded=status.bounded,
        success=status.success,
        iterations=status.iterations,
        hit_iteration_cap=status.hit_iteration_cap,
        x=[float(v) for v in outcome.x],
        fun=float(outcome.fun),
        basis=[int(b) for b in outcome.basis.indices],
    )
    if args.out:
        ResultWriter.write_json(solution, Path(args.out))
    else:
        print(solution.model_dump_json(indent=2))
    logger.info(f"solve {args.path}: {status.label.value} after {status.iterations} pivots")
    return STATUS_EXIT_CODES[status.label]


def _out_dir(args, default: str) -> Path:
    out = Path(args.out) if args.out else settings.output_dir / default
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_scenario(args, refine: bool) -> Optional[DemoScenario]:
    if not args.config:
        return None
    doc = read_document(args.config, ScenarioFile)
    try:
        return system_from_scenario(doc, refine=refine)
    except (ScenarioError, DimensionMismatch) as e:
        raise InputError(f"{args.config}: {e}") from e


def cmd_vdp(args) -> int:
    refine = not args.no_refine
    scenario = _load_scenario(args, refine)
    if scenario is None:
        t_f = args.tf if args.tf is not None else 2.0 * math.pi
        dt = args.dt if args.dt is not None else vanderpol_dt(t_f)
        scenario = vanderpol_system(args.mu, t_f, dt)
    sys_ = scenario.system
    out = _out_dir(args, "vdp")

    traj = integrate_embedding(
        sys_, sys_.initial_state, scenario.dt, scenario.T, refine, workers=args.workers,
        enclose=settings.enclose_steps,
    )
    summary = RunSummary(
        name=sys_.name,
        steps=traj.length - 1,
        dt=scenario.dt,
        t_final=float(traj.times[-1]),
        refine=refine,
        order_violation=traj.order_violation,
        violation_step=traj.violation_step,
        enclosure_failed=traj.enclosure_failed,
        flagged_refinements=traj.flagged_refinements,
        bound_width_sum=traj.bound_width_sum(sys_.n),
        bound_volume=traj.bound_volume(sys_.n),
        runtime_seconds=traj.runtime_seconds,
    )

    samples = None
    if args.samples:
        # box corners plus uniform samples
        rng = np.random.default_rng(args.seed)
        x0 = np.vstack([
            box_corners(scenario.state_lo, scenario.state_hi),
            sample_box(scenario.state_lo, scenario.state_hi, args.samples, rng),
        ])
        samples = simulate_points(sys_, x0, scenario.dt, scenario.T, substeps=settings.reference_substeps)
        inside = tube_contains(traj, sys_.H, samples, tol=settings.containment_tol)
        summary.samples = int(x0.shape[0])
        summary.samples_outside = int((~inside.all(axis=0)).sum())
        logger.info(f"[vdp] {summary.samples_outside} of {summary.samples} sampled trajectories leave the tube")

    ResultWriter.write_trajectory(traj, out / "trajectory.csv")
    ResultWriter.write_json(summary, out / "summary.json")
    coords = (0,) if sys_.n == 1 else (0, 1)
    plot_tube(traj, out / "tube.svg", coords=coords, samples=samples, title=f"{sys_.name}, refine={refine}")
    print(f"bound size {summary.bound_width_sum:.17g} (volume {summary.bound_volume:.17g}) -> {out}")
    return EXIT_NOT_CONVERGED if traj.truncated else EXIT_OK


def cmd_bicycle_nudge(args) -> int:
    refine = not args.no_refine
    scenario = _load_scenario(args, refine)
    if scenario is None:
        kwargs = {}
        if args.dt is not None:
            kwargs["dt"] = args.dt
        if args.tf is not None:
            kwargs["T"] = args.tf
        scenario = bicycle_system(**kwargs)
    if scenario.obstacle is None:
        raise InputError(f"{args.config}: scenario has no obstacle to avoid")

    base = scenario.nudge or NudgeConfig(dt=scenario.dt, horizon=scenario.T)
    updates = {"refine": refine}
    if args.eta is not None:
        updates["eta"] = args.eta
    if args.max_iters is not None:
        updates["max_outer_iters"] = args.max_iters
    if args.block_steps is not None:
        updates["block_steps"] = args.block_steps
    cfg = base.model_copy(update=updates)

    sys_ = scenario.system
    out = _out_dir(args, "bicycle")
    result = nudge(sys_.u_ff, sys_, scenario.obstacle, cfg, workers=args.workers)
    report = result.report
    traj = report.trajectory

    ResultWriter.write_table(result.u_ff, [f"u{i}" for i in range(sys_.p)], out / "u_ff.csv")
    ResultWriter.write_table(
        np.column_stack([np.arange(len(result.history)), result.history]),
        ["iteration", "safety_value"],
        out / "safety.csv",
    )
    ResultWriter.write_trajectory(traj, out / "trajectory.csv", report.bounds)
    summary = RunSummary(
        name=sys_.name,
        steps=traj.length - 1,
        dt=cfg.dt,
        t_final=float(traj.times[-1]),
        refine=refine,
        order_violation=traj.order_violation,
        violation_step=traj.violation_step,
        enclosure_failed=traj.enclosure_failed,
        initial_unsafe=report.initial_unsafe,
        flagged_refinements=traj.flagged_refinements,
        bound_width_sum=traj.bound_width_sum(sys_.n),
        bound_volume=traj.bound_volume(sys_.n),
        safety_value=report.value,
        iterations=result.iterations,
        converged=result.converged,
        runtime_seconds=traj.runtime_seconds,
    )
    ResultWriter.write_json(summary, out / "summary.json")
    coords = tuple(scenario.obstacle.state_coords)[:2]
    plot_tube(traj, out / "tube.svg", coords=coords, obstacle=scenario.obstacle, every=10 if traj.length > 100 else 1)

    print(f"{sys_.name}: converged={result.converged} iterations={result.iterations} safety={report.value:.17g} -> {out}")
    return EXIT_OK if result.converged else EXIT_NOT_CONVERGED


def _write_bench(args, report, default: str) -> int:
    out = _out_dir(args, default)
    ResultWriter.write_json(report, out / "bench.json")
    ResultWriter.write_text(report.table_row() + "\n", out / "table_row.md")
    print(report.table_row())
    return EXIT_OK


def cmd_bench_lp(args) -> int:
    report = run_lp_bench(
        n=args.n,
        m_ub=args.m_ub,
        samples=args.samples or 100,
        seed=args.seed,
        parallel=args.parallel,
        workers=args.workers,
    )
    return _write_bench(args, report, "bench_lp")


def cmd_bench_reach(args) -> int:
    report = run_reach_bench(
        mu=args.mu,
        t_f=args.tf if args.tf is not None else 0.628,
        samples=args.samples or 10,
        refine=not args.no_refine,
        workers=args.workers,
    )
    return _write_bench(args, report, "bench_reach")


# ===== 参数定义 =====

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", help="output file (solve) or directory")
    p.add_argument("--log-level", default=None, help="console log level")
    p.add_argument("--workers", type=int, default=None, help="threads for batched LP chunks")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lpreach", description="Differentiable simplex solver and LP-refined reachability")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", help="solve an LP file")
    p.add_argument("path", type=Path)
    _common(p)
    p.set_defaults(handler=cmd_solve)

    p = sub.add_parser("vdp", help="Van der Pol reachable tube")
    _common(p)
    p.add_argument("--config", type=Path)
    p.add_argument("--mu", type=float, default=1.0)
    p.add_argument("--dt", type=float)
    p.add_argument("--tf", type=float)
    p.add_argument("--samples", type=int, default=0, help="Monte Carlo containment samples")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-refine", action="store_true")
    p.set_defaults(handler=cmd_vdp)

    p = sub.add_parser("bicycle-nudge", help="nudge a feedforward input off an obstacle")
    _common(p)
    p.add_argument("--config", type=Path)
    p.add_argument("--dt", type=float)
    p.add_argument("--tf", type=float)
    p.add_argument("--eta", type=float)
    p.add_argument("--max-iters", type=int)
    p.add_argument("--block-steps", type=int)
    p.add_argument("--no-refine", action="store_true")
    p.set_defaults(handler=cmd_bicycle_nudge)

    p = sub.add_parser("bench-lp", help="random LP benchmark")
    _common(p)
    p.add_argument("--n", type=int, default=20)
    p.add_argument("--m-ub", type=int, default=15)
    p.add_argument("--samples", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--parallel", action="store_true", help="batch throughput mode")
    p.set_defaults(handler=cmd_bench_lp)

    p = sub.add_parser("bench-reach", help="Van der Pol refinement benchmark")
    _common(p)
    p.add_argument("--mu", type=float, default=1.0)
    p.add_argument("--tf", type=float)
    p.add_argument("--samples", type=int)
    p.add_argument("--no-refine", action="store_true")
    p.set_defaults(handler=cmd_bench_reach)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Run one subcommand and return its exit code"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"lpreach: {e}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_ERROR

    setup_logging(args.log_level)
    handler: Callable = args.handler
    try:
        return handler(args)
    except InputError as e:
        logger.error(f"{args.command}: parse error")
        print(str(e), file=sys.stderr)
        return EXIT_ERROR
    except (OSError, LPReachError, ValueError) as e:
        error_type, message = classify_error(e)
        logger.error(f"{args.command} failed [{error_type}]: {message}")
        print(f"lpreach {args.command}: {error_type}: {message}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
