#!/usr/bin/env python3
"""
Command-line entry point for the RingWave ring-road simulator.

Commands:
    simulate <scenario.yaml>       run one scenario and write trajectory + report
    template {a|b|c}               write one of the shipped experiment templates
    analyze <trajectory.csv>       compute the interval report of recorded data
    sweep <scenario.yaml>          repeat a scenario over seeds
    step-response {h1|h2}          validate one PID mode against a 1 m/s step

Exit codes: 0 success, 2 invalid input, 3 collision abort, 4 I/O error.
"""

import argparse
import sys
from pathlib import Path
from typing import List, Optional

# Add src to path for imports
sys.path.insert(0, str(Path(__file__).parent))

from pydantic import ValidationError

from src.actuation import ActuationError, run_step_response
from src.config import ensure_directories, get_settings
from src.controllers import ControllerError
from src.driver_models import DriverModelError
from src.experiment import aggregate_sweep, build_intervals, infer_controller_events, run_scenario, seed_sweep
from src.fleet import FleetError
from src.logger import set_project_level, setup_logger
from src.metrics import MetricsError, compute_report
from src.report_generator import (
    ReportError,
    render_report,
    save_reports,
    save_run_outputs,
    save_step_trace,
    save_sweep_summary,
)
from src.ring import CollisionError, RingError
from src.scenario import TEMPLATES, ScenarioError, get_template, load_scenario, save_scenario
from src.trajectory_io import (
    ColumnMapping,
    TrajectoryFormatError,
    TrajectoryIOError,
    export_csv,
    import_displacement,
    load_events,
    load_intervals,
    save_events,
)
from src.utils import sanitize_filename


EXIT_OK = 0
EXIT_INVALID = 2
EXIT_COLLISION = 3
EXIT_IO = 4

INVALID_INPUT_ERRORS = (
    ScenarioError, FleetError, TrajectoryFormatError, ControllerError, MetricsError,
    DriverModelError, ActuationError, ReportError, RingError, ValidationError,
)


class Console:
    """Progress printing that --quiet switches off."""

    def __init__(self, quiet: bool = False):
        self.quiet = quiet

    def say(self, message: str = "") -> None:
        if not self.quiet:
            print(message)

    def header(self, title: str) -> None:
        self.say("\n" + "=" * 60)
        self.say(f"  {title}")
        self.say("=" * 60)


# ─────────────────────────────────────────────────────────────────────────────
# COMMANDS
# ─────────────────────────────────────────────────────────────────────────────

def cmd_simulate(args, settings, console: Console) -> int:
    scenario = load_scenario(args.scenario)
    if args.seed is not None:
        scenario = scenario.with_seed(args.seed)
    out_dir = Path(args.out) if args.out else (
        settings.ringsim_output_dir / f"{sanitize_filename(scenario.name)}_seed{scenario.seed}"
    )
    ensure_directories(out_dir)

    console.header(f"SIMULATING {scenario.name.upper()}")
    console.say(f"\n{scenario}")
    try:
        dataset = run_scenario(scenario)
    except CollisionError as e:
        if e.dataset is not None:
            export_csv(e.dataset, out_dir / "trajectory.csv")
            save_events(e.dataset.events, out_dir / "events.yaml")
        print(f"\n✗ Run aborted: {e}", file=sys.stderr)
        print(f"  Partial trajectory written to {out_dir}", file=sys.stderr)
        return EXIT_COLLISION

    report = compute_report(dataset)
    paths = save_run_outputs(dataset, report, out_dir)
    console.say("\n" + render_report(report, 'text'))
    console.say(f"✓ Outputs written to {out_dir}")
    for name, path in paths.items():
        console.say(f"  - {name}: {path.name}")
    return EXIT_OK


def cmd_template(args, settings, console: Console) -> int:
    scenario = get_template(args.key)
    out = Path(args.out) if args.out else settings.ringsim_output_dir / f"experiment_{args.key}.yaml"
    save_scenario(scenario, out)
    console.say(f"✓ Wrote template '{scenario.name}' to {out}")
    return EXIT_OK


def resolve_intervals(dataset, args, console: Console):
    """Interval table for analyze: explicit file, automatic, or the whole run."""
    if args.intervals:
        return load_intervals(args.intervals)
    if not args.auto_intervals:
        return None

    sibling = Path(args.trajectory).with_name("events.yaml")
    if sibling.exists():
        console.say(f"Segmenting by events in {sibling.name}")
        events = load_events(sibling)
    else:
        events = infer_controller_events(dataset)
        if events:
            console.say("Segmenting by controller activity in the v_cmd_mps column")
        else:
            console.say("No controller activity found; segmenting by the wave detector")
    return build_intervals(dataset, args.wave_threshold, events=events)


def cmd_analyze(args, settings, console: Console) -> int:
    mapping = ColumnMapping.from_yaml(args.columns) if args.columns else None
    ring_length = args.ring_length if args.ring_length is not None else settings.ring_length
    dataset = import_displacement(args.trajectory, dt=args.dt, mapping=mapping, ring_length=ring_length)
    if args.wave_threshold is None:
        args.wave_threshold = settings.wave_threshold

    intervals = resolve_intervals(dataset, args, console)
    report = compute_report(dataset, intervals)
    console.header("INTERVAL REPORT")
    console.say("\n" + render_report(report, 'text'))
    if args.out:
        paths = save_reports(report, Path(args.out))
        console.say(f"✓ Report written to {paths['csv'].parent}")
    return EXIT_OK


def cmd_sweep(args, settings, console: Console) -> int:
    scenario = load_scenario(args.scenario)
    if args.seeds < 1:
        raise ScenarioError(f"--seeds must be at least 1, got {args.seeds}")
    jobs = args.jobs or settings.default_jobs
    start = args.seed_start if args.seed_start is not None else settings.default_seed
    seeds = list(range(start, start + args.seeds))
    out_dir = Path(args.out) if args.out else (
        settings.ringsim_output_dir / f"{sanitize_filename(scenario.name)}_sweep"
    )
    ensure_directories(out_dir)

    console.header(f"SWEEPING {scenario.name.upper()} OVER {len(seeds)} SEEDS")
    outcomes = seed_sweep(scenario, seeds, jobs=jobs, out_dir=out_dir)
    table = aggregate_sweep(outcomes)
    save_sweep_summary(table, out_dir / "sweep_summary.csv")

    for outcome in outcomes:
        if outcome.ok:
            std_change = outcome.report.comparison.get('v_std')
            detail = f"v_std change {std_change:+.1f}%" if std_change is not None else "no comparison"
            console.say(f"  ✓ seed {outcome.seed}: {detail}")
        else:
            console.say(f"  ✗ seed {outcome.seed}: {outcome.error}")
    console.say(f"\n✓ Sweep summary written to {out_dir / 'sweep_summary.csv'}")
    return EXIT_OK


def cmd_step_response(args, settings, console: Console) -> int:
    run = run_step_response(args.mode, duration=args.duration)
    out = Path(args.out) if args.out else settings.ringsim_output_dir / f"step_response_{args.mode}.csv"
    save_step_trace(run, out)
    console.header(f"STEP RESPONSE {args.mode.upper()} ({run.mode.value})")
    console.say(f"\n  Rise time (10-90%): {run.metrics.rise_time:.2f} s")
    console.say(f"  Overshoot:          {run.metrics.overshoot_pct:.1f} %")
    console.say(f"  Settling time (2%): {run.metrics.settling_time:.2f} s")
    console.say(f"\n✓ Trace written to {out}")
    return EXIT_OK


# ─────────────────────────────────────────────────────────────────────────────
# PARSER
# ─────────────────────────────────────────────────────────────────────────────

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ringwave",
        description="Ring-road traffic simulator with wave-dampening vehicle control",
    )
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("--quiet", "-q", action="store_true", help="Only warnings and errors")
    verbosity.add_argument("--verbose", "-v", action="store_true", help="Debug logging")
    commands = parser.add_subparsers(dest="command", required=True)

    simulate = commands.add_parser("simulate", help="Run a scenario")
    simulate.add_argument("scenario", help="Scenario YAML file")
    simulate.add_argument("--seed", type=int, help="Override the scenario seed")
    simulate.add_argument("--out", help="Output directory")
    simulate.set_defaults(handler=cmd_simulate)

    template = commands.add_parser("template", help="Write an experiment template")
    template.add_argument("key", choices=sorted(TEMPLATES), help="Experiment a, b or c")
    template.add_argument("--out", help="Destination YAML file")
    template.set_defaults(handler=cmd_template)

    analyze = commands.add_parser("analyze", help="Report on a trajectory CSV")
    analyze.add_argument("trajectory", help="Trajectory CSV file")
    segmentation = analyze.add_mutually_exclusive_group()
    segmentation.add_argument("--intervals", help="Interval table YAML")
    segmentation.add_argument("--auto-intervals", action="store_true",
                              help="Segment by events.yaml, v_cmd activity or the wave detector")
    analyze.add_argument("--wave-threshold", type=float, help="Wave detector threshold (m/s)")
    analyze.add_argument("--ring-length", type=float, help="Ring circumference (m)")
    analyze.add_argument("--columns", help="Column mapping YAML for external data")
    analyze.add_argument("--dt", type=float, help="Expected sampling period (s)")
    analyze.add_argument("--out", help="Directory for report.csv/.txt/.json")
    analyze.set_defaults(handler=cmd_analyze)

    sweep = commands.add_parser("sweep", help="Repeat a scenario over seeds")
    sweep.add_argument("scenario", help="Scenario YAML file")
    sweep.add_argument("--seeds", type=int, required=True, help="Number of seeds")
    sweep.add_argument("--seed-start", type=int, help="First seed")
    sweep.add_argument("--jobs", type=int, help="Worker processes")
    sweep.add_argument("--out", help="Output directory")
    sweep.set_defaults(handler=cmd_sweep)

    step = commands.add_parser("step-response", help="PID step-response validation")
    step.add_argument("mode", choices=["h1", "h2"], help="h1 accelerate, h2 brake")
    step.add_argument("--duration", type=float, default=20.0, help="Simulated seconds")
    step.add_argument("--out", help="Trace CSV file")
    step.set_defaults(handler=cmd_step_response)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """
    Parse arguments, run the command and map failures to exit codes.
    """
    args = build_parser().parse_args(argv)
    logger = setup_logger(__name__)
    console = Console(quiet=args.quiet)

    try:
        settings = get_settings()
        if args.quiet:
            set_project_level("WARNING")
        elif args.verbose:
            set_project_level("DEBUG")
        else:
            set_project_level(settings.log_level)
        return args.handler(args, settings, console)

    except CollisionError as e:
        logger.error(f"✗ Collision: {e}")
        return EXIT_COLLISION
    except TrajectoryFormatError as e:
        logger.error(f"✗ Invalid trajectory data: {e}")
        return EXIT_INVALID
    except TrajectoryIOError as e:
        logger.error(f"✗ Trajectory I/O error: {e}")
        return EXIT_IO
    except INVALID_INPUT_ERRORS as e:
        logger.error(f"✗ Invalid input: {e}")
        return EXIT_INVALID
    except OSError as e:
        logger.error(f"✗ I/O error: {e}")
        return EXIT_IO
    except KeyboardInterrupt:
        print("\n\n⚠️  Interrupted by user")
        return 130


if __name__ == "__main__":
    sys.exit(main())
