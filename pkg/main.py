"""
Main Entry Point for the threat-aware dodging stack
Batch commands for trials, sweeps, ablations, gradient checks, calibration and replay
"""
import argparse
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional

from config.config_manager import ConfigManager, ScenarioValidationError, config_manager
from ledger.ledger_manager import LedgerManager, summarize_metrics
from logs.logger import configure_logging, log_error, log_info
from planner.gradient_check import gradients_pass, run_gradient_check
from planner.replanner import Strategy
from simulation.calibration import calibrate_uncertainty
from simulation.montecarlo import (
    SpeedBand, TABLE_ANGLES, TABLE_DISTANCES, run_ablation, run_montecarlo, table_cells,
)
from simulation.recording import RecordingError, load_stream, record_stream, replay
from simulation.trial_runner import run_trial

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_FAULT = 2

STREAM_FILE = "stream.jsonl"


def _common_flags() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--scenario", help="TOML scenario file (bundled default when omitted)")
    parent.add_argument("--out", help="output directory (overrides THREAT_DODGE_OUTPUT_DIR)")
    parent.add_argument("--seed", type=int, help="master seed override")
    parent.add_argument("--jobs", type=int, default=1, help="parallel trial workers")
    parent.add_argument("--trials", type=int, help="trial count (per cell for montecarlo)")
    parent.add_argument("--strategy", choices=[s.value for s in Strategy], default=Strategy.FULL.value)
    parent.add_argument("-v", "--verbose", action="count", default=0)
    return parent


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="threat-dodge", description="Threat-aware projectile dodging")
    commands = parser.add_subparsers(dest="command", required=True)
    common = _common_flags()

    run = commands.add_parser("run", parents=[common], help="one closed-loop trial")
    run.add_argument("--record", action="store_true", help=f"write the keypoint stream to {STREAM_FILE}")

    sweep = commands.add_parser("montecarlo", parents=[common], help="distance x angle x speed-band sweep")
    sweep.add_argument("--distances", type=float, nargs="+", default=list(TABLE_DISTANCES))
    sweep.add_argument("--angles", type=float, nargs="+", default=list(TABLE_ANGLES))
    sweep.add_argument("--bands", choices=[b.value for b in SpeedBand], nargs="+",
                       default=[b.value for b in SpeedBand])

    commands.add_parser("ablate", parents=[common],
                        help="full vs no_spatial vs no_temporal on identical seeds")
    commands.add_parser("gradcheck", parents=[common], help="analytic vs finite-difference cost gradients")

    calibrate = commands.add_parser("calibrate", parents=[common], help="fit envelope parameters")
    calibrate.add_argument("--target", type=float, default=0.99)
    calibrate.add_argument("--oracle-release", action="store_true", help="use the true release state")

    replay_cmd = commands.add_parser("replay", parents=[common],
                                     help="perception only over a recorded stream")
    replay_cmd.add_argument("--stream", required=True, help="JSON-lines stream written by run --record")

    dump = commands.add_parser("dump-defaults", help="write every scenario default to a TOML file")
    dump.add_argument("path", nargs="?", default="scenario_defaults.toml")
    return parser


def _scenario(args):
    return config_manager.load_scenario(args.scenario, args.seed)


def cmd_run(args, ledger: LedgerManager) -> int:
    scenario = _scenario(args)
    result = run_trial(scenario, Strategy(args.strategy), capture_log=True, keep_stream=args.record)
    record = result.to_record()
    ledger.write_metrics([record])
    ledger.write_trajectory(result.trajectory_log)
    ledger.write_cost_reports(result.cost_reports)
    if args.record:
        record_stream(result.stream, ledger.out_dir / STREAM_FILE)

    lines = [
        f"strategy: {result.strategy}",
        f"seed: {result.seed}",
        f"success: {str(result.success).lower()}",
        f"d_min: {result.d_min:.3f} m",
        f"detection_time: {result.detection_time}",
        f"first_plan_time: {result.first_plan_time}",
        f"goal_reached: {str(result.goal_reached).lower()}",
    ]
    ledger.write_summary(record, lines)
    print("\n".join(lines))
    return EXIT_OK


def cmd_montecarlo(args, ledger: LedgerManager) -> int:
    scenario = _scenario(args)
    cells = table_cells(args.distances, args.angles, [SpeedBand(b) for b in args.bands])
    report = run_montecarlo(scenario, cells, args.trials or 21, Strategy(args.strategy), args.jobs)
    records = report.trials.to_dict(orient="records")
    ledger.write_metrics(records)
    per_cell = report.per_cell()
    ledger.write_table("per_cell.csv", per_cell)

    summary = {**report.summary(), **summarize_metrics(records).to_dict()}
    lines = [f"{key}: {value}" for key, value in summary.items()] + ["", per_cell.to_string(index=False)]
    ledger.write_summary(summary, lines)
    print("\n".join(lines))
    return EXIT_OK


def cmd_ablate(args, ledger: LedgerManager) -> int:
    scenario = _scenario(args)
    ablation = run_ablation(scenario, args.trials or 30, args.jobs)
    records: List[dict] = []
    for report in ablation.reports.values():
        records.extend(report.trials.to_dict(orient="records"))
    ledger.write_metrics(records)
    comparison = ablation.comparison()
    ledger.write_table("comparison.csv", comparison)

    table = comparison.to_string(index=False)
    ledger.write_summary({"strategies": comparison.to_dict(orient="records")}, [table])
    print(table)
    return EXIT_OK


def cmd_gradcheck(args, ledger: LedgerManager) -> int:
    seed = args.seed if args.seed is not None else 0
    table = run_gradient_check(args.trials or 100, seed)
    passed = gradients_pass(table)
    ledger.write_table("gradcheck.csv", table.reset_index())

    text = table.to_string(float_format=lambda x: f"{x:.3e}")
    ledger.write_summary({"passed": passed, "terms": table.reset_index().to_dict(orient="records")},
                         [text, "", f"passed: {str(passed).lower()}"])
    print(text)
    print(f"passed: {str(passed).lower()}")
    return EXIT_OK if passed else EXIT_FAULT


def cmd_calibrate(args, ledger: LedgerManager) -> int:
    scenario = _scenario(args)
    result = calibrate_uncertainty(scenario, args.trials or 200, args.target, args.oracle_release, args.jobs)
    summary = {
        "alpha": result.params.alpha, "beta": result.params.beta, "gamma": result.params.gamma,
        "target": result.target, "achieved": result.achieved, "reached": result.reached,
        "samples": result.samples,
    }
    lines = [f"{key}: {value}" for key, value in summary.items()]
    ledger.write_summary(summary, lines)
    print("\n".join(lines))
    return EXIT_OK


def cmd_replay(args, ledger: LedgerManager) -> int:
    scenario = _scenario(args)
    result = replay(scenario, load_stream(args.stream))
    ledger.write_jsonl("candidates.jsonl", [
        {"t_release": c.t_release, "position": c.position, "velocity": c.velocity, "joint": c.joint_id}
        for c in result.candidates
    ])
    summary = {"candidates": len(result.candidates), "surviving": len(result.surviving),
               "first_candidate_time": result.first_candidate_time}
    lines = [f"{key}: {value}" for key, value in summary.items()]
    ledger.write_summary(summary, lines)
    print("\n".join(lines))
    return EXIT_OK


COMMANDS: Dict[str, Callable] = {
    "run": cmd_run,
    "montecarlo": cmd_montecarlo,
    "ablate": cmd_ablate,
    "gradcheck": cmd_gradcheck,
    "calibrate": cmd_calibrate,
    "replay": cmd_replay,
}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "dump-defaults":
            path = config_manager.dump_defaults(args.path)
            print(f"defaults written to {path}")
            return EXIT_OK

        out_dir = ConfigManager.output_dir(args.out)
        configure_logging(str(Path(out_dir) / "logs"), args.verbose)
        log_info("Command started", {"command": args.command, "out": str(out_dir)})
        return COMMANDS[args.command](args, LedgerManager(out_dir))
    except (ScenarioValidationError, RecordingError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as e:
        log_error(f"Command {args.command} failed", e)
        print(f"internal error: {e}", file=sys.stderr)
        return EXIT_FAULT


if __name__ == "__main__":
    sys.exit(main())
