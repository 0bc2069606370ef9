# ABOUTME: Unit tests for configuration loading and validation
# ABOUTME: Tests YAML parsing, defaults, type and range validation, overrides and the thread cap
import pytest

from evolve.config import (
    THREADS_ENV,
    AnalysisConfig,
    SolverConfig,
    load_config,
    resolve_threads,
    with_overrides,
)


def test_load_valid_config(tmp_path):
    """Test successful loading of a complete configuration file."""
    config_file = tmp_path / "config.yaml"
    config_file.write_text("""
solver:
  n_samples_initial: 10
  n_samples_max: 80
  rank_tol_rel: 1.0e-10
  residual_tol: 1.0e-7
  seed: 7
n_grid: 51
threads: 2
process_tol: 1.0e-5
log_file: "./logs/evolve.log"
log_level: INFO
""")

    config = load_config(str(config_file))

    assert config.solver == SolverConfig(
        n_samples_initial=10, n_samples_max=80, rank_tol_rel=1e-10, residual_tol=1e-7, seed=7,
    )
    assert config.n_grid == 51
    assert config.threads == 2
    assert config.process_tol == 1e-5
    assert config.log_file == "./logs/evolve.log"
    assert config.log_level == "INFO"


def test_empty_config_uses_defaults(tmp_path):
    """Test that an empty file yields the documented defaults."""
    config_file = tmp_path / "config.yaml"
    config_file.write_text("")

    config = load_config(str(config_file))

    assert config == AnalysisConfig()
    assert config.solver.n_samples_initial == 20
    assert config.solver.n_samples_max == 320
    assert config.solver.rank_tol_rel == 1e-9
    assert config.n_grid == 201
    assert config.log_file is None


def test_exponent_without_dot_is_a_number(tmp_path):
    """YAML reads 1e-9 as a string; it is still accepted as a float."""
    config_file = tmp_path / "config.yaml"
    config_file.write_text("solver:\n  rank_tol_rel: 1e-9\n")

    assert load_config(str(config_file)).solver.rank_tol_rel == 1e-9


def test_unknown_key_raises_error(tmp_path):
    config_file = tmp_path / "config.yaml"
    config_file.write_text("n_grid: 11\nscan_interval_seconds: 30\n")

    with pytest.raises(ValueError, match="Unknown config keys: scan_interval_seconds"):
        load_config(str(config_file))


def test_unknown_solver_key_raises_error(tmp_path):
    config_file = tmp_path / "config.yaml"
    config_file.write_text("solver:\n  tolerance: 1.0\n")

    with pytest.raises(ValueError, match="Unknown config keys: tolerance"):
        load_config(str(config_file))


@pytest.mark.parametrize("content, message", [
    ("n_grid: ten\n", "'n_grid' must be an integer"),
    ("n_grid: 1.5\n", "'n_grid' must be an integer"),
    ("solver:\n  seed: true\n", "'seed' must be an integer"),
    ("process_tol: fast\n", "'process_tol' must be a number"),
    ("log_level: 3\n", "'log_level' must be a string"),
    ("solver: [1, 2]\n", "'solver' must be a mapping"),
    ("- 1\n- 2\n", "YAML mapping"),
])
def test_invalid_types_raise_error(tmp_path, content, message):
    config_file = tmp_path / "config.yaml"
    config_file.write_text(content)

    with pytest.raises(ValueError, match=message):
        load_config(str(config_file))


@pytest.mark.parametrize("content, message", [
    ("n_grid: 1\n", "'n_grid' must be at least 2"),
    ("threads: 0\n", "'threads' must be positive"),
    ("log_level: LOUD\n", "'log_level' must be"),
    ("solver:\n  rank_tol_rel: 2.0\n", "'rank_tol_rel' must be in"),
    ("solver:\n  n_samples_initial: 40\n  n_samples_max: 20\n", "must be at least 'n_samples_initial'"),
    ("solver:\n  frame_cond_max: 0.5\n", "'frame_cond_max' must be at least 1"),
])
def test_out_of_range_values_raise_error(tmp_path, content, message):
    config_file = tmp_path / "config.yaml"
    config_file.write_text(content)

    with pytest.raises(ValueError, match=message):
        load_config(str(config_file))


def test_missing_config_file():
    with pytest.raises(ValueError, match="Config file not found"):
        load_config("/nonexistent/config.yaml")


def test_invalid_yaml(tmp_path):
    config_file = tmp_path / "config.yaml"
    config_file.write_text("solver: [unclosed\n")

    with pytest.raises(ValueError, match="Invalid YAML"):
        load_config(str(config_file))


def test_overrides_route_solver_fields():
    config = with_overrides(AnalysisConfig(), n_samples_initial=10, seed=3, n_grid=11, threads=None)

    assert config.solver.n_samples_initial == 10
    assert config.solver.seed == 3
    assert config.n_grid == 11
    assert config.threads is None


def test_overrides_are_validated():
    with pytest.raises(ValueError, match="'n_grid' must be at least 2"):
        with_overrides(AnalysisConfig(), n_grid=1)


def test_check_rows():
    SolverConfig(n_samples_initial=5).check_rows(2)

    with pytest.raises(ValueError, match="below the 10 unknowns"):
        SolverConfig(n_samples_initial=5).check_rows(1)


def test_threads_env_caps_configured_count(monkeypatch):
    monkeypatch.setenv(THREADS_ENV, "2")

    assert resolve_threads(AnalysisConfig(threads=8)) == 2
    assert resolve_threads(AnalysisConfig(threads=1)) == 1


def test_threads_default_without_env(monkeypatch):
    monkeypatch.delenv(THREADS_ENV, raising=False)

    assert resolve_threads(AnalysisConfig(threads=3)) == 3
    assert resolve_threads(AnalysisConfig()) >= 1


@pytest.mark.parametrize("value", ["many", "0"])
def test_invalid_threads_env(monkeypatch, value):
    monkeypatch.setenv(THREADS_ENV, value)

    with pytest.raises(ValueError, match=THREADS_ENV):
        resolve_threads(AnalysisConfig())
