from .config import DEFAULT_SEEDS, ConfigError, ExperimentConfig, load_config
from .experiments import (CellResult, CloakReport, ExperimentError, Runner, run_main_experiment,
                          run_poison_rate_sweep, run_transferability)
from .report import aggregate, emit_report, write_csv, write_json

__all__ = [
    "CellResult", "CloakReport", "ConfigError", "DEFAULT_SEEDS", "ExperimentConfig", "ExperimentError",
    "Runner", "aggregate", "emit_report", "load_config", "run_main_experiment", "run_poison_rate_sweep",
    "run_transferability", "write_csv", "write_json",
]
