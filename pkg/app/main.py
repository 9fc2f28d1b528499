"""
PSE Monitor CLI
Evaluate expressions, simulate chains, monitor streamed traces and run experiments.

Exit codes: 0 success, 2 parse/validation/config error, 3 zero denominator,
4 unknown state token in a trace.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional, TextIO

from dotenv import load_dotenv
from pydantic import ValidationError

from app import __version__
from app.monitoring.bayesian import PriorTheta
from app.monitoring.chain_loader import ChainLoader, format_trace, iter_trace, load_spec_text
from app.monitoring.errors import MonitorError, UnknownStateError, ZeroDenominatorError
from app.monitoring.harness import ExperimentHarness, describe, load_experiment_config
from app.monitoring.markov import simulate, stream_seeds
from app.monitoring.metrics_writer import MetricsWriter
from app.monitoring.monitor_selector import MODES, MonitorSelector
from app.monitoring.outputs import Estimate, MonitorOutput
from app.monitoring.pse import evaluate, parse_pse
from app.monitoring.schema import MonitorSnapshot
from app.monitoring.settings import Settings, get_settings

logger = logging.getLogger("app")

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_ZERO_DENOMINATOR = 3
EXIT_UNKNOWN_STATE = 4

MONITOR_HEADER = "step,state,lo,hi,mean,width"


def _add_version(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")


def build_parser(settings: Settings) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pse-monitor",
        description="Monitor probabilistic specification expressions over Markov chain runs.",
    )
    _add_version(parser)
    parser.add_argument("-v", "--verbose", action="count", default=0, help="More diagnostics on stderr")
    commands = parser.add_subparsers(dest="command", required=True)

    evaluate_cmd = commands.add_parser("eval", help="Evaluate a PSE on a known chain")
    _add_version(evaluate_cmd)
    evaluate_cmd.add_argument("--chain", required=True, help="Chain config (JSON)")
    evaluate_cmd.add_argument("--spec", required=True, help="Expression, or a file containing one")

    simulate_cmd = commands.add_parser("simulate", help="Print a simulated trace, one state per line")
    _add_version(simulate_cmd)
    simulate_cmd.add_argument("--chain", required=True, help="Chain config (JSON)")
    simulate_cmd.add_argument("--steps", type=int, required=True, help="Number of transitions")
    simulate_cmd.add_argument("--seed", type=int, default=0)

    monitor_cmd = commands.add_parser("monitor", help="Monitor a trace read from stdin")
    _add_version(monitor_cmd)
    monitor_cmd.add_argument("--spec", required=True, help="Expression, or a file containing one")
    monitor_cmd.add_argument("--states", required=True, help="State-space file ('index name' per line)")
    monitor_cmd.add_argument("--delta", type=float, default=settings.default_delta)
    monitor_cmd.add_argument("--mode", choices=MODES, default="freq")
    monitor_cmd.add_argument("--prior", help="Prior matrix file (bayes mode); uniform when omitted")
    monitor_cmd.add_argument("--seed", type=int, default=0)
    monitor_cmd.add_argument("--emit-every", type=int, default=1, dest="emit_every")
    monitor_cmd.add_argument("--snapshot-out", dest="snapshot_out", help="Write a monitor snapshot at end of input")
    monitor_cmd.add_argument("--resume", help="Continue from a snapshot written by --snapshot-out")

    experiment_cmd = commands.add_parser("experiment", help="Run an experiment config")
    _add_version(experiment_cmd)
    experiment_cmd.add_argument("--config", required=True, help="Experiment config (JSON)")
    experiment_cmd.add_argument("--output", help="Output table (.csv or .xlsx); stdout when omitted")
    return parser


def _format_row(step: int, token: str, output: MonitorOutput) -> str:
    if isinstance(output, Estimate):
        return f"{step},{token},{output.lo!r},{output.hi!r},{output.mean!r},{output.width!r}"
    return f"{step},{token},pending,pending,,"


def cmd_eval(args: argparse.Namespace, settings: Settings, out: TextIO) -> int:
    chain = ChainLoader(settings.configs_dir).load_from_path(args.chain)
    node = parse_pse(load_spec_text(args.spec, settings.configs_dir), chain.states)
    out.write(f"{format(evaluate(node, chain.matrix), '.12g')}\n")
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace, settings: Settings, out: TextIO) -> int:
    chain = ChainLoader(settings.configs_dir).load_from_path(args.chain)
    path = simulate(chain, args.steps, stream_seeds(args.seed)[0])
    for token in format_trace(path, chain.states):
        out.write(f"{token}\n")
    return EXIT_OK


def cmd_monitor(args: argparse.Namespace, settings: Settings, out: TextIO, source: TextIO) -> int:
    if args.emit_every < 1:
        raise MonitorError(f"--emit-every must be at least 1, got {args.emit_every}")
    loader = ChainLoader(settings.configs_dir)
    states = loader.load_states(args.states)
    node = parse_pse(load_spec_text(args.spec, settings.configs_dir), states)
    prior = PriorTheta.from_rows(loader.load_prior_rows(args.prior)) if args.prior else None
    selector = MonitorSelector(states, args.delta, prior, settings.resync_interval)

    if args.resume:
        try:
            snapshot = MonitorSnapshot.model_validate_json(Path(args.resume).read_text(encoding="utf-8"))
        except (OSError, ValidationError) as e:
            raise MonitorError(f"Cannot read snapshot {args.resume}: {str(e)}")
        monitor = selector.restore(snapshot, args.mode, node)
        step = snapshot.step
        logger.info("Resumed %s monitor at step %d", args.mode, step)
    else:
        monitor = selector.build(args.mode, node, stream_seeds(args.seed)[1])
        step = -1

    out.write(MONITOR_HEADER + "\n")
    out.flush()
    emitted = step
    last_row: Optional[str] = None
    for _, state in iter_trace(source, states):
        step += 1
        output = monitor.next(state)
        last_row = _format_row(step, states.name(state), output)
        if step >= 1 and step % args.emit_every == 0:
            out.write(last_row + "\n")
            out.flush()
            emitted = step
    if last_row is not None and emitted != step:
        out.write(last_row + "\n")
        out.flush()

    if args.snapshot_out:
        snapshot = selector.snapshot(monitor, args.mode, node, args.seed, max(step, 0))
        Path(args.snapshot_out).write_text(snapshot.model_dump_json(indent=2), encoding="utf-8")
        logger.info("Wrote snapshot at step %d to %s", step, args.snapshot_out)
    return EXIT_OK


def cmd_experiment(args: argparse.Namespace, settings: Settings, out: TextIO) -> int:
    config = load_experiment_config(args.config)
    logger.info("Running experiment %s", describe(config))
    frame = ExperimentHarness(config, settings).execute()
    output = args.output or config.output
    if output:
        path = MetricsWriter().write(frame, output)
        logger.info("Wrote %d rows to %s", len(frame), path)
    else:
        frame.to_csv(out, index=False)
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    """Entry point; returns the process exit code."""
    load_dotenv()
    settings = get_settings()
    parser = build_parser(settings)
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_INVALID

    level = logging.DEBUG if args.verbose > 1 else logging.INFO if args.verbose == 1 else settings.log_level.upper()
    logging.basicConfig(stream=sys.stderr, level=level, format="%(levelname)s %(name)s: %(message)s", force=True)

    try:
        if args.command == "eval":
            return cmd_eval(args, settings, sys.stdout)
        if args.command == "simulate":
            return cmd_simulate(args, settings, sys.stdout)
        if args.command == "monitor":
            return cmd_monitor(args, settings, sys.stdout, sys.stdin)
        return cmd_experiment(args, settings, sys.stdout)
    except ZeroDenominatorError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ZERO_DENOMINATOR
    except UnknownStateError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_UNKNOWN_STATE if e.line is not None else EXIT_INVALID
    except (MonitorError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
