# ABOUTME: Machine-readable results of an analysis run: JSON report and plot-ready grid CSV
# ABOUTME: Fixed key order, shortest round-trip floats, atomic writes and a SHA-256 model fingerprint
import csv
import io
import json
import os
import sys
import tempfile
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

from cryptography.hazmat.primitives import hashes

from evolve import __version__
from evolve.config import AnalysisConfig
from evolve.foliation import AgingVerdict, Leaf, TimeClassification

CSV_HEADER = ["t", "pointwise_dim", "sharp_dim", "effective_sharp", "sigma_min"]


@dataclass
class AnalysisReport:
    """Everything needed to reproduce and audit one run."""
    model_label: str
    model_hash: Optional[str]
    config: dict
    instants: list[dict] = field(default_factory=list)
    leaves: list[dict] = field(default_factory=list)
    smooth_aging: Optional[dict] = None
    processes: list[dict] = field(default_factory=list)
    timings: Optional[dict] = None
    tool_version: str = __version__

    def to_dict(self) -> dict:
        data = {
            "tool_version": self.tool_version,
            "model": {"label": self.model_label, "sha256": self.model_hash},
            "config": self.config,
            "instants": self.instants,
            "leaves": self.leaves,
            "smooth_aging": self.smooth_aging,
            "processes": self.processes,
        }
        # Only present when requested, so plain reruns stay byte-identical
        if self.timings is not None:
            data["timings"] = self.timings
        return data


def model_file_hash(path: str) -> str:
    """SHA-256 hex digest of a model file."""
    digest = hashes.Hash(hashes.SHA256())
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(65536), b""):
            digest.update(chunk)
    return digest.finalize().hex()


def config_echo(config: AnalysisConfig, **run_parameters) -> dict:
    """Every solver and grid parameter of a run, plus run-specific values (t0, t1, ...)."""
    echo = {"solver": asdict(config.solver), "n_grid": config.n_grid, "process_tol": config.process_tol}
    echo.update(run_parameters)
    return echo


def instant_records(classification: TimeClassification) -> list[dict]:
    records = []
    for fibre, effective in zip(classification.fibres, classification.effective_sharp):
        records.append({
            "t": fibre.t,
            "pointwise_dim": fibre.pointwise_dim,
            "sharp_dim": fibre.sharp_dim,
            "effective_sharp": effective,
            "smallest_singular_values": sorted(fibre.singular_values)[:3],
            "samples_used": fibre.samples_used,
            "converged": fibre.converged,
        })
    return records


def classification_report(
    model_label: str,
    model_hash: Optional[str],
    config: dict,
    classification: TimeClassification,
    leaves: Sequence[Leaf],
    verdict: AgingVerdict,
) -> AnalysisReport:
    return AnalysisReport(
        model_label=model_label,
        model_hash=model_hash,
        config=config,
        instants=instant_records(classification),
        leaves=[leaf.to_dict() for leaf in leaves],
        smooth_aging=verdict.to_dict(),
    )


def _atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp_path = tempfile.mkstemp(dir=directory, prefix=".evolve-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as f:
            f.write(text)
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.unlink(tmp_path)
        raise


def render_json(data: dict) -> str:
    return json.dumps(data, indent=2) + "\n"


def write_json_report(report: AnalysisReport, path: Optional[str] = None) -> None:
    """Write the report to path (atomically) or to stdout when path is None."""
    text = render_json(report.to_dict())
    if path is None:
        sys.stdout.write(text)
    else:
        _atomic_write(path, text)


def write_grid_csv(classification: TimeClassification, path: str) -> None:
    """One row per grid instant, for plotting."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for fibre, effective in zip(classification.fibres, classification.effective_sharp):
        writer.writerow([repr(fibre.t), fibre.pointwise_dim, fibre.sharp_dim, effective, repr(fibre.sigma_min)])
    _atomic_write(path, buffer.getvalue())
