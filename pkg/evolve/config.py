# ABOUTME: Configuration for evolution-equation analyses
# ABOUTME: Loads and validates a YAML config into SolverConfig / AnalysisConfig dataclasses
import os
from dataclasses import dataclass, field, fields, replace
from typing import Any, Optional

import yaml

THREADS_ENV = "EVOLVE_THREADS"


@dataclass(frozen=True)
class SolverConfig:
    """Parameters of the per-instant null-space solver."""
    n_samples_initial: int = 20
    n_samples_max: int = 320
    rank_tol_rel: float = 1e-9
    residual_tol: float = 1e-8
    seed: int = 42
    frame_det_min: float = 0.1
    frame_cond_max: float = 100.0

    def __post_init__(self):
        if not 0 < self.rank_tol_rel < 1:
            raise ValueError(f"'rank_tol_rel' must be in (0, 1), got {self.rank_tol_rel}")
        if self.n_samples_initial < 1:
            raise ValueError(f"'n_samples_initial' must be positive, got {self.n_samples_initial}")
        if self.n_samples_max < self.n_samples_initial:
            raise ValueError(
                f"'n_samples_max' ({self.n_samples_max}) must be at least "
                f"'n_samples_initial' ({self.n_samples_initial})"
            )
        if self.residual_tol <= 0:
            raise ValueError(f"'residual_tol' must be positive, got {self.residual_tol}")
        if self.frame_det_min <= 0:
            raise ValueError(f"'frame_det_min' must be positive, got {self.frame_det_min}")
        if self.frame_cond_max < 1:
            raise ValueError(f"'frame_cond_max' must be at least 1, got {self.frame_cond_max}")

    def check_rows(self, m: int) -> None:
        """The initial system must have at least as many rows as unknowns."""
        if self.n_samples_initial * m < 10:
            raise ValueError(
                f"n_samples_initial * m = {self.n_samples_initial * m} is below the 10 unknowns"
            )


@dataclass(frozen=True)
class AnalysisConfig:
    """Application configuration: solver, grid, parallelism and logging."""
    solver: SolverConfig = field(default_factory=SolverConfig)
    n_grid: int = 201
    threads: Optional[int] = None
    process_tol: float = 1e-6
    log_file: Optional[str] = None
    log_level: str = "WARNING"

    def __post_init__(self):
        if self.n_grid < 2:
            raise ValueError(f"'n_grid' must be at least 2, got {self.n_grid}")
        if self.threads is not None and self.threads < 1:
            raise ValueError(f"'threads' must be positive, got {self.threads}")
        if self.process_tol <= 0:
            raise ValueError(f"'process_tol' must be positive, got {self.process_tol}")
        if self.log_level not in ("DEBUG", "INFO", "WARNING", "ERROR"):
            raise ValueError(f"'log_level' must be DEBUG, INFO, WARNING or ERROR, got {self.log_level}")


_INT_KEYS = {"n_samples_initial", "n_samples_max", "seed", "n_grid", "threads"}


def _coerce(key: str, value: Any, expected: type) -> Any:
    if expected is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ValueError(f"'{key}' must be an integer, got {type(value).__name__}")
        return value
    # YAML 1.1 reads 1e-9 (no dot) as a string
    if isinstance(value, bool):
        raise ValueError(f"'{key}' must be a number, got bool")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        try:
            return float(value)
        except ValueError:
            pass
    raise ValueError(f"'{key}' must be a number, got {value!r}")


def _section(data: dict, cls: type, skip: tuple[str, ...] = ()) -> dict:
    known = {f.name: f for f in fields(cls) if f.name not in skip}
    unknown = set(data) - set(known)
    if unknown:
        raise ValueError(f"Unknown config keys: {', '.join(sorted(unknown))}")
    values = {}
    for key, raw in data.items():
        if key in ("log_file", "log_level"):
            if raw is not None and not isinstance(raw, str):
                raise ValueError(f"'{key}' must be a string")
            values[key] = raw
        elif key == "threads" and raw is None:
            values[key] = None
        else:
            values[key] = _coerce(key, raw, int if key in _INT_KEYS else float)
    return values


def load_config(path: str) -> AnalysisConfig:
    """
    Load and validate analysis configuration from a YAML file.

    Args:
        path: Path to YAML config file

    Returns:
        AnalysisConfig with validated configuration; omitted keys take defaults

    Raises:
        ValueError: If config is invalid or contains unknown keys
    """
    try:
        with open(path, 'r') as f:
            data = yaml.safe_load(f)
    except FileNotFoundError as e:
        raise ValueError(f"Config file not found: {path}") from e
    except yaml.YAMLError as e:
        raise ValueError(f"Invalid YAML in config file: {e}") from e

    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ValueError("Config file must contain a YAML mapping")

    solver_data = data.pop("solver", {}) or {}
    if not isinstance(solver_data, dict):
        raise ValueError("'solver' must be a mapping of solver parameters")

    solver = SolverConfig(**_section(solver_data, SolverConfig))
    return AnalysisConfig(solver=solver, **_section(data, AnalysisConfig, skip=("solver",)))


def with_overrides(config: AnalysisConfig, **overrides: Any) -> AnalysisConfig:
    """Return a copy with non-None overrides applied; solver fields are routed to the solver."""
    solver_names = {f.name for f in fields(SolverConfig)}
    solver_updates = {k: v for k, v in overrides.items() if v is not None and k in solver_names}
    top_updates = {k: v for k, v in overrides.items() if v is not None and k not in solver_names}
    solver = replace(config.solver, **solver_updates)
    return replace(config, solver=solver, **top_updates)


def resolve_threads(config: AnalysisConfig) -> int:
    """Worker count: EVOLVE_THREADS caps the configured (or CPU) count."""
    wanted = config.threads or os.cpu_count() or 1
    cap = os.environ.get(THREADS_ENV)
    if cap is not None:
        try:
            cap_value = int(cap)
        except ValueError:
            raise ValueError(f"{THREADS_ENV} must be an integer, got {cap!r}") from None
        if cap_value < 1:
            raise ValueError(f"{THREADS_ENV} must be positive, got {cap_value}")
        wanted = min(wanted, cap_value)
    return max(1, wanted)
