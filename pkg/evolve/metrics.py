# ABOUTME: Prometheus gauges describing the last analysis run
# ABOUTME: Batch-job style: gauges live on a private registry and are written to a node-exporter textfile
import time

from prometheus_client import CollectorRegistry, Gauge, write_to_textfile

REGISTRY = CollectorRegistry()

grid_instants_gauge = Gauge(
    'evolve_grid_instants',
    'Number of grid instants classified',
    registry=REGISTRY,
)

remodeling_leaves_gauge = Gauge(
    'evolve_remodeling_leaves',
    'Number of remodeling leaves found',
    registry=REGISTRY,
)

aging_instants_gauge = Gauge(
    'evolve_aging_instants',
    'Number of aging singleton leaves found',
    registry=REGISTRY,
)

unconverged_gauge = Gauge(
    'evolve_unconverged_instants',
    'Instants whose null-space dimension did not stabilize',
    registry=REGISTRY,
)

max_samples_gauge = Gauge(
    'evolve_max_samples_used',
    'Largest frame sample used by any instant',
    registry=REGISTRY,
)

run_duration_gauge = Gauge(
    'evolve_run_duration_seconds',
    'Wall-clock duration of the last run',
    ['subcommand'],
    registry=REGISTRY,
)

last_run_gauge = Gauge(
    'evolve_last_run_timestamp_seconds',
    'Unix timestamp of the last run',
    ['subcommand'],
    registry=REGISTRY,
)

process_residual_gauge = Gauge(
    'evolve_process_residual',
    'Verification residual of the last remodeling process',
    ['kind'],
    registry=REGISTRY,
)


def update_classification_metrics(classification, leaves) -> None:
    """
    Record the outcome of an interval classification.

    Args:
        classification: TimeClassification of the run
        leaves: Leaves extracted from it
    """
    grid_instants_gauge.set(len(classification.grid))
    remodeling_leaves_gauge.set(sum(1 for leaf in leaves if leaf.is_remodeling))
    aging_instants_gauge.set(sum(1 for leaf in leaves if not leaf.is_remodeling))
    unconverged_gauge.set(len(classification.unconverged))
    max_samples_gauge.set(max(f.samples_used for f in classification.fibres))


def update_process_metrics(isomorphism: float, cocycle: float) -> None:
    process_residual_gauge.labels(kind='isomorphism').set(isomorphism)
    process_residual_gauge.labels(kind='cocycle').set(cocycle)


def record_run(subcommand: str, duration: float) -> None:
    run_duration_gauge.labels(subcommand=subcommand).set(duration)
    last_run_gauge.labels(subcommand=subcommand).set(time.time())


def write_metrics(path: str) -> None:
    """Write all gauges to a Prometheus textfile (atomically, via a temp file)."""
    write_to_textfile(path, REGISTRY)


def clear_metrics() -> None:
    """Reset every gauge; labelled gauges lose all their children."""
    for gauge in [grid_instants_gauge, remodeling_leaves_gauge, aging_instants_gauge,
                  unconverged_gauge, max_samples_gauge]:
        gauge.set(0)
    for gauge in [run_duration_gauge, last_run_gauge, process_residual_gauge]:
        gauge.clear()
