# ABOUTME: Command-line front end: fibre, classify, process and verify subcommands
# ABOUTME: Wires config, logging, solver, foliation, flow, reports and metrics; maps failures to exit codes
import argparse
import sys
import time
from typing import Optional, Sequence

from evolve.config import AnalysisConfig, load_config, resolve_threads, with_overrides
from evolve.dual import EvaluationError
from evolve.evolution import evolution_fibre
from evolve.expr import ExpressionError
from evolve.flow import ArrowError, ProcessError, cocycle_check, integrate_process, isomorphism_residual
from evolve.foliation import classify_interval, detect_smooth_aging, extract_leaves, leaf_grid
from evolve.logger import get_logger
from evolve.metrics import record_run, update_classification_metrics, update_process_metrics, write_metrics
from evolve.model import ModelError, load_model
from evolve.report import (
    classification_report,
    config_echo,
    model_file_hash,
    render_json,
    write_grid_csv,
    write_json_report,
)
from evolve.verification import run_suite

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_MODEL = 2
EXIT_UNCONVERGED = 3
EXIT_FAILED = 4


class UsageError(Exception):
    """Command line does not match the flag grammar."""


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _gauge(value: str) -> list[float]:
    try:
        return [float(part) for part in value.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"gauge must be comma-separated numbers, got {value!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = _ArgumentParser(add_help=False)
    common.add_argument('--config', type=str, help='Path to analysis config YAML file')
    common.add_argument('--samples', type=int, help='Initial number of sampled frames')
    common.add_argument('--max-samples', type=int, help='Cap on sampled frames')
    common.add_argument('--rank-tol', type=float, help='Relative singular value threshold')
    common.add_argument('--seed', type=int, help='Frame sampling seed')
    common.add_argument('--threads', type=int, help='Worker threads (capped by EVOLVE_THREADS)')
    common.add_argument('--metrics-file', type=str, help='Write Prometheus textfile metrics here')

    model = _ArgumentParser(add_help=False)
    model.add_argument('--model', type=str, required=True, help='Path to model JSON file')

    interval = _ArgumentParser(add_help=False)
    interval.add_argument('--t0', type=float, required=True, help='Start of the time interval')
    interval.add_argument('--t1', type=float, required=True, help='End of the time interval')
    interval.add_argument('--grid', type=int, help='Number of grid instants')
    interval.add_argument('--out', type=str, help='JSON report path (stdout when omitted)')
    interval.add_argument('--timings', action='store_true', help='Include wall-clock timings in the report')

    parser = _ArgumentParser(
        prog='evolve',
        description='Time-material symmetry toolkit - remodeling and aging of a material particle'
    )
    subparsers = parser.add_subparsers(dest='command', required=True)

    fibre = subparsers.add_parser('fibre', parents=[common, model], help='Solve the evolution equation at one instant')
    fibre.add_argument('--t', type=float, required=True, help='Time instant')

    classify = subparsers.add_parser('classify', parents=[common, model, interval],
                                     help='Classify an interval and extract its leaves')
    classify.add_argument('--csv', type=str, help='Grid CSV path')

    process = subparsers.add_parser('process', parents=[common, model, interval],
                                    help='Integrate and verify a remodeling process on one leaf')
    process.add_argument('--leaf', type=int, help='Leaf index (default: first remodeling leaf)')
    process.add_argument('--t-ref', type=float, help='Reference instant (default: leaf midpoint)')
    process.add_argument('--gauge', type=_gauge, help='Symmetry freedom coefficients a1,a2,...')

    subparsers.add_parser('verify', parents=[common], help='Run the built-in property suite')
    return parser


def _resolve_config(args) -> AnalysisConfig:
    config = load_config(args.config) if args.config else AnalysisConfig()
    try:
        return with_overrides(
            config,
            n_samples_initial=args.samples,
            n_samples_max=args.max_samples,
            rank_tol_rel=args.rank_tol,
            seed=args.seed,
            threads=args.threads,
            n_grid=getattr(args, 'grid', None),
        )
    except ValueError as e:
        raise UsageError(str(e)) from e


def _run_fibre(args, config, threads, logger) -> int:
    model = load_model(args.model)
    result = evolution_fibre(model, args.t, config.solver)
    data = {"model": model.label, **result.to_dict()}
    sys.stdout.write(render_json(data))
    return EXIT_OK if result.converged else EXIT_UNCONVERGED


def _classify(args, config, threads, timings):
    model = load_model(args.model)
    started = time.perf_counter()
    classification = classify_interval(model, args.t0, args.t1, config.n_grid, config.solver, threads)
    leaves = extract_leaves(classification)
    timings["classify_seconds"] = time.perf_counter() - started
    update_classification_metrics(classification, leaves)
    return model, classification, leaves


def _run_classify(args, config, threads, logger) -> int:
    timings: dict = {}
    model, classification, leaves = _classify(args, config, threads, timings)
    verdict = detect_smooth_aging(classification)
    report = classification_report(
        model.label,
        model_file_hash(args.model),
        config_echo(config, t0=args.t0, t1=args.t1),
        classification,
        leaves,
        verdict,
    )
    if args.timings:
        report.timings = timings
    write_json_report(report, args.out)
    if args.csv:
        write_grid_csv(classification, args.csv)
    logger.info(f"Classified in {timings['classify_seconds']:.3f}s: {len(leaves)} leaves")
    return EXIT_UNCONVERGED if classification.unconverged else EXIT_OK


def _run_process(args, config, threads, logger) -> int:
    timings: dict = {}
    model, classification, leaves = _classify(args, config, threads, timings)
    if args.leaf is None:
        remodeling = [i for i, leaf in enumerate(leaves) if leaf.is_remodeling]
        if not remodeling:
            raise ProcessError("No remodeling leaf in the interval")
        index = remodeling[0]
    else:
        index = args.leaf
        if not 0 <= index < len(leaves):
            raise UsageError(f"--leaf {index} out of range, {len(leaves)} leaves")
        if not leaves[index].is_remodeling:
            raise UsageError(f"--leaf {index} is an aging instant, not a remodeling leaf")
    leaf = leaves[index]
    grid = leaf_grid(leaf)
    t_ref = args.t_ref if args.t_ref is not None else float(grid[len(grid) // 2])

    started = time.perf_counter()
    process = integrate_process(model, leaf, t_ref, config.solver, args.gauge, threads)
    residual = isomorphism_residual(model, process, seed=config.solver.seed)
    defect = cocycle_check(model, leaf, config.solver, threads) if len(grid) >= 3 else None
    timings["process_seconds"] = time.perf_counter() - started
    update_process_metrics(residual, defect or 0.0)

    report = classification_report(
        model.label,
        model_file_hash(args.model),
        config_echo(config, t0=args.t0, t1=args.t1, leaf=index, t_ref=t_ref, gauge=args.gauge or []),
        classification,
        leaves,
        detect_smooth_aging(classification),
    )
    report.processes.append({
        "leaf": leaf.to_dict(),
        "isomorphism_residual": residual,
        "cocycle_defect": defect,
        **process.to_dict(),
    })
    if args.timings:
        report.timings = timings
    write_json_report(report, args.out)

    failed = residual > config.process_tol or (defect is not None and defect > config.process_tol)
    if failed:
        logger.error(
            f"Process verification failed: isomorphism {residual:.3e}, cocycle {defect}, "
            f"tolerance {config.process_tol:.1e}"
        )
        return EXIT_FAILED
    return EXIT_UNCONVERGED if classification.unconverged else EXIT_OK


def _run_verify(args, config, threads, logger) -> int:
    results = run_suite(config.solver, threads)
    for result in results:
        print(result.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAILED


COMMANDS = {
    'fibre': _run_fibre,
    'classify': _run_classify,
    'process': _run_process,
    'verify': _run_verify,
}


def run(argv: Optional[Sequence[str]] = None) -> int:
    """
    Run the command line and return its exit code.

    0 success, 1 usage error, 2 model/file/config error, 3 unconverged
    analysis, 4 verification or process failure.
    """
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        print(f"evolve: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:
        # --help
        return int(e.code or 0)

    started = time.perf_counter()
    try:
        config = _resolve_config(args)
        logger = get_logger(config)
        threads = resolve_threads(config)
        logger.info(f"Running {args.command} with {threads} thread(s)")
        code = COMMANDS[args.command](args, config, threads, logger)
    except UsageError as e:
        print(f"evolve: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (ProcessError, ArrowError) as e:
        print(f"evolve: process failed: {e}", file=sys.stderr)
        code = EXIT_FAILED
    except (ModelError, ExpressionError, EvaluationError, ValueError, OSError) as e:
        print(f"evolve: error: {e}", file=sys.stderr)
        return EXIT_MODEL

    record_run(args.command, time.perf_counter() - started)
    if args.metrics_file:
        write_metrics(args.metrics_file)
    return code


def main():
    sys.exit(run())


if __name__ == '__main__':
    main()
