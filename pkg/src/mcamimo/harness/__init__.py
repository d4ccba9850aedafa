"""Monte-Carlo experiment engine and command-line front end."""

from .config import ConfigError, ExperimentConfig, load_config
from .engine import (
    BerRecord,
    run_ber_sweep,
    run_beta_study,
    run_power_report,
    run_topology_compare,
    run_transient,
)

__all__ = [
    "BerRecord",
    "ConfigError",
    "ExperimentConfig",
    "load_config",
    "run_ber_sweep",
    "run_beta_study",
    "run_power_report",
    "run_topology_compare",
    "run_transient",
]
