"""Command-line front end.

Five verbs: ``solve`` (centralized, op_a or op_b), ``waterfill``
(analytical report), ``admm`` (distributed solve plus centralized gap),
``sweep-gamma`` and ``sweep-tau`` (parameter sweeps to CSV).

Exit codes: 0 success, 2 scenario/usage errors, 3 violated analytical
preconditions, 4 infeasible constraints, 5 non-convergence, 6 I/O.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from typing import List, Optional, Sequence

import numpy as np

from . import admm as admm_mod
from . import centralized, scenario_io, waterfill
from .errors import (
    ConvergenceError,
    InfeasibleError,
    PreconditionError,
    ScenarioError,
)
from .model import BehavioralModel, SolveReport, TransportNetwork

EXIT_OK = 0
EXIT_SCENARIO = 2
EXIT_PRECONDITION = 3
EXIT_INFEASIBLE = 4
EXIT_NO_CONVERGENCE = 5
EXIT_IO = 6

_ACTIVE_EPS = 1e-6


def _fmt(value: float) -> str:
    return format(value, ".9g")


def _load_scenario(path: str) -> scenario_io.ScenarioFile:
    with open(path) as handle:
        return scenario_io.parse_scenario(handle.read())


def _solver_config(scenario: scenario_io.ScenarioFile, args) -> centralized.SolverConfig:
    config = centralized.SolverConfig()
    merged = dict(scenario.solver)
    merged.pop("mode", None)
    for key in ("step_size", "max_iterations", "gradient_tolerance", "objective_tolerance"):
        flag = getattr(args, key, None)
        if flag is not None:
            merged[key] = flag
    return replace(config, **merged)


def _admm_config(scenario: scenario_io.ScenarioFile, args) -> admm_mod.AdmmConfig:
    config = admm_mod.AdmmConfig()
    merged = dict(scenario.admm)
    for key in ("eta", "max_iterations", "primal_tolerance", "dual_tolerance"):
        flag = getattr(args, key, None)
        if flag is not None:
            merged[key] = flag
    return replace(config, **merged)


def _plan_lines(network: TransportNetwork, report: SolveReport) -> List[str]:
    lines = ["plan:"]
    for edge in network.edges:
        lines.append(f"  {edge[0]} {edge[1]} {_fmt(report.plan.amounts[edge])}")
    lines.append("aggregates:")
    for t in network.targets:
        lines.append(f"  {t.id} {_fmt(report.plan.aggregate_at_target(t.id))}")
    return lines


def _write_report(path: str, header: List[str], body: List[str]) -> None:
    with open(path, "w", newline="\n") as handle:
        handle.write("\n".join(header + body) + "\n")


def _report_header(mode: str, report: SolveReport) -> List[str]:
    return [
        f"mode: {mode}",
        f"converged: {str(report.converged).lower()}",
        f"iterations: {report.iterations}",
        f"true_loss: {_fmt(report.true_loss)}",
        f"perceived_loss: {_fmt(report.perceived_loss)}",
        f"source_utility: {_fmt(report.source_utility)}",
        f"objective: {_fmt(report.perceived_loss - report.source_utility)}",
    ]


def _trace_path(args) -> str:
    return args.trace if args.trace is not None else args.output + ".trace.csv"


def _cmd_solve(args) -> int:
    scenario = _load_scenario(args.scenario)
    mode = args.mode or scenario.solver.get("mode", "op_a")
    config = _solver_config(scenario, args)
    solve = centralized.solve_op_a if mode == "op_a" else centralized.solve_op_b
    report = solve(scenario.network, scenario.behavior, config)
    _write_report(
        args.output,
        _report_header(mode, report),
        _plan_lines(scenario.network, report),
    )
    scenario_io.write_trace_csv(report, _trace_path(args))
    print(f"converged in {report.iterations} iterations; wrote {args.output}")
    return EXIT_OK


def _cmd_waterfill(args) -> int:
    scenario = _load_scenario(args.scenario)
    network, behavior = scenario.network, scenario.behavior
    table = waterfill.build_threshold_table(network, behavior)
    trace = waterfill.waterfill_allocate(network, behavior)
    lines = ["thresholds:"]
    for (i, j), value in table.entries.items():
        lines.append(f"  {i} {j} {_fmt(value)}")
    lines.append("breakpoints:")
    for tid, point in zip(trace.activation_order, trace.breakpoints):
        lines.append(f"  {tid} {_fmt(point)}")
    lines.append("aggregates:")
    for tid in trace.activation_order:
        lines.append(f"  {tid} {_fmt(trace.final_aggregates[tid])}")
    lines.append("plan:")
    for edge in network.edges:
        lines.append(f"  {edge[0]} {edge[1]} {_fmt(trace.per_source_plan.amounts[edge])}")
    _write_report(args.output, [], lines)
    print(f"wrote {args.output}")
    return EXIT_OK


def _cmd_admm(args) -> int:
    scenario = _load_scenario(args.scenario)
    config = _admm_config(scenario, args)
    report = admm_mod.run_admm(scenario.network, scenario.behavior, config)
    central = centralized.solve_op_b(
        scenario.network, scenario.behavior, _solver_config(scenario, args)
    )
    admm_objective = report.perceived_loss - report.source_utility
    central_objective = central.perceived_loss - central.source_utility
    gap = abs(admm_objective - central_objective) / max(abs(central_objective), 1e-300)
    lines = _report_header("admm", report) + [
        f"centralized_objective: {_fmt(central_objective)}",
        f"relative_gap: {_fmt(gap)}",
    ]
    _write_report(args.output, lines, _plan_lines(scenario.network, report))
    scenario_io.write_trace_csv(report, _trace_path(args))
    print(f"consensus in {report.iterations} iterations; wrote {args.output}")
    return EXIT_OK


def _grid(args, lo_ok, hi_ok, what: str) -> np.ndarray:
    if args.steps < 2:
        raise ScenarioError([f"{what} grid needs at least 2 points"])
    if not args.start < args.stop:
        raise ScenarioError([f"{what} grid start must be < stop"])
    if not (lo_ok(args.start) and hi_ok(args.stop)):
        raise ScenarioError([f"{what} grid outside the parameter domain"])
    return np.linspace(args.start, args.stop, args.steps)


def _sample(
    network: TransportNetwork, behavior: BehavioralModel, value: float, report: SolveReport
) -> scenario_io.SweepSample:
    aggregates = tuple(
        report.plan.aggregate_at_target(t.id) for t in network.targets
    )
    return scenario_io.SweepSample(
        param_value=float(value),
        aggregates=aggregates,
        true_loss=report.true_loss,
        perceived_loss=report.perceived_loss,
        active_targets=sum(1 for a in aggregates if a > _ACTIVE_EPS),
    )


def _finish_sweep(
    axis: str,
    network: TransportNetwork,
    samples: List[scenario_io.SweepSample],
    output: str,
    failure: Optional[str],
) -> int:
    result = scenario_io.SweepResult(
        axis=axis,
        target_ids=tuple(t.id for t in network.targets),
        samples=tuple(samples),
    )
    scenario_io.write_sweep_csv(result, output)
    if failure is not None:
        print(f"aborted: {failure}; partial output in {output}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    print(f"wrote {output}")
    return EXIT_OK


def _cmd_sweep_gamma(args) -> int:
    scenario = _load_scenario(args.scenario)
    grid = _grid(args, lambda v: v > 0, lambda v: v <= 1, "gamma")
    config = _solver_config(scenario, args)
    samples: List[scenario_io.SweepSample] = []
    for value in grid:
        behavior = BehavioralModel(float(value))
        try:
            report = centralized.solve_op_a(scenario.network, behavior, config)
        except ConvergenceError as exc:
            return _finish_sweep(
                "gamma", scenario.network, samples, args.output,
                f"gamma={value:g} did not converge ({exc})",
            )
        samples.append(_sample(scenario.network, behavior, value, report))
    return _finish_sweep("gamma", scenario.network, samples, args.output, None)


def _cmd_sweep_tau(args) -> int:
    scenario = _load_scenario(args.scenario)
    grid = _grid(args, lambda v: v >= 0, lambda v: v <= 1, "tau")
    config = _solver_config(scenario, args)
    samples: List[scenario_io.SweepSample] = []
    for value in grid:
        network = TransportNetwork(
            scenario.network.targets,
            tuple(replace(s, weight_tau=float(value)) for s in scenario.network.sources),
            scenario.network.edges,
        )
        try:
            report = centralized.solve_op_b(network, scenario.behavior, config)
        except ConvergenceError as exc:
            return _finish_sweep(
                "tau", scenario.network, samples, args.output,
                f"tau={value:g} did not converge ({exc})",
            )
        samples.append(_sample(network, scenario.behavior, value, report))
    return _finish_sweep("tau", scenario.network, samples, args.output, None)


def _add_solver_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--step-size", dest="step_size", type=float)
    parser.add_argument("--max-iterations", dest="max_iterations", type=int)
    parser.add_argument("--gradient-tolerance", dest="gradient_tolerance", type=float)
    parser.add_argument("--objective-tolerance", dest="objective_tolerance", type=float)


def _add_grid_flags(parser: argparse.ArgumentParser, start: float, stop: float) -> None:
    parser.add_argument("--start", type=float, default=start)
    parser.add_argument("--stop", type=float, default=stop)
    parser.add_argument("--steps", type=int, default=25)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="secalloc",
        description="Security resource allocation with behavioral planners",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="centralized solve of a scenario")
    p.add_argument("scenario")
    p.add_argument("--mode", choices=["op_a", "op_b"])
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--trace", help="trace CSV path (default: OUTPUT.trace.csv)")
    _add_solver_flags(p)
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("waterfill", help="analytical water-filling report")
    p.add_argument("scenario")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=_cmd_waterfill)

    p = sub.add_parser("admm", help="distributed consensus solve")
    p.add_argument("scenario")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--trace", help="trace CSV path (default: OUTPUT.trace.csv)")
    p.add_argument("--eta", type=float)
    p.add_argument("--max-iterations", dest="max_iterations", type=int)
    p.add_argument("--primal-tolerance", dest="primal_tolerance", type=float)
    p.add_argument("--dual-tolerance", dest="dual_tolerance", type=float)
    p.set_defaults(func=_cmd_admm)

    p = sub.add_parser("sweep-gamma", help="solve op_a across a gamma grid")
    p.add_argument("scenario")
    p.add_argument("-o", "--output", required=True)
    _add_grid_flags(p, 0.3, 1.0)
    _add_solver_flags(p)
    p.set_defaults(func=_cmd_sweep_gamma)

    p = sub.add_parser("sweep-tau", help="solve op_b across a tau grid")
    p.add_argument("scenario")
    p.add_argument("-o", "--output", required=True)
    _add_grid_flags(p, 0.0, 1.0)
    _add_solver_flags(p)
    p.set_defaults(func=_cmd_sweep_tau)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"scenario error:\n{exc}", file=sys.stderr)
        return EXIT_SCENARIO
    except PreconditionError as exc:
        print(f"precondition violated: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ConvergenceError as exc:
        print(f"did not converge: {exc}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    except OSError as exc:
        name = exc.filename if exc.filename else ""
        print(f"i/o error: {exc.strerror or exc} {name}".rstrip(), file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
