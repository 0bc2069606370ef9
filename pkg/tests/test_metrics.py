# ABOUTME: Unit tests for Prometheus metrics module
# ABOUTME: Tests gauge updates from classifications and processes, run records and the textfile output
import time

from pytest import approx

from evolve.evolution import FibreResult
from evolve.foliation import Leaf, LeafKind, TimeClassification
from evolve.metrics import (
    REGISTRY,
    aging_instants_gauge,
    clear_metrics,
    grid_instants_gauge,
    last_run_gauge,
    max_samples_gauge,
    process_residual_gauge,
    record_run,
    remodeling_leaves_gauge,
    run_duration_gauge,
    unconverged_gauge,
    update_classification_metrics,
    update_process_metrics,
    write_metrics,
)


def fibre(t, samples_used=20, converged=True):
    return FibreResult(
        t=t, pointwise_dim=6, sharp_dim=1, remodeling_direction=None, symmetry_basis=(),
        singular_values=(0.0,) * 10, samples_used=samples_used, frame_seed=42, converged=converged,
    )


def sample_classification():
    fibres = (fibre(0.0), fibre(0.5, samples_used=80), fibre(1.0, samples_used=320, converged=False))
    return TimeClassification(0.0, 1.0, (0.0, 0.5, 1.0), fibres, (1, 1, 0))


def sample_leaves():
    return [
        Leaf(LeafKind.REMODELING, 0.0, 0.5, (True, True), 0.5),
        Leaf(LeafKind.AGING, 1.0, 1.0, (True, False), 0.5),
    ]


def test_update_classification_metrics():
    """Test that one classification sets every run gauge."""
    update_classification_metrics(sample_classification(), sample_leaves())

    assert grid_instants_gauge._value.get() == 3
    assert remodeling_leaves_gauge._value.get() == 1
    assert aging_instants_gauge._value.get() == 1
    assert unconverged_gauge._value.get() == 1
    assert max_samples_gauge._value.get() == 320


def test_update_process_metrics():
    update_process_metrics(2.5e-12, 1e-15)

    assert process_residual_gauge.labels(kind='isomorphism')._value.get() == approx(2.5e-12)
    assert process_residual_gauge.labels(kind='cocycle')._value.get() == approx(1e-15)


def test_record_run():
    """Test that a run records duration and a recent timestamp per subcommand."""
    record_run('classify', 1.25)

    assert run_duration_gauge.labels(subcommand='classify')._value.get() == approx(1.25)
    last_run = last_run_gauge.labels(subcommand='classify')._value.get()
    assert abs(last_run - time.time()) < 2.0


def test_gauges_live_on_private_registry():
    update_classification_metrics(sample_classification(), sample_leaves())

    assert REGISTRY.get_sample_value('evolve_grid_instants') == 3
    assert REGISTRY.get_sample_value('evolve_remodeling_leaves') == 1


def test_clear_metrics():
    """Test that clearing resets plain gauges and drops labelled children."""
    update_classification_metrics(sample_classification(), sample_leaves())
    record_run('verify', 3.0)

    clear_metrics()

    assert grid_instants_gauge._value.get() == 0
    assert REGISTRY.get_sample_value('evolve_run_duration_seconds', {'subcommand': 'verify'}) is None


def test_write_metrics_textfile(tmp_path):
    update_classification_metrics(sample_classification(), sample_leaves())
    record_run('classify', 0.5)
    path = tmp_path / "evolve.prom"

    write_metrics(str(path))

    content = path.read_text()
    assert "evolve_grid_instants 3.0" in content
    assert 'evolve_run_duration_seconds{subcommand="classify"} 0.5' in content
    assert "# HELP evolve_unconverged_instants" in content
