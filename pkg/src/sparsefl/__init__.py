"""Differentially private sparsified federated learning over a modeled wireless network."""

from .config import ConfigError, ExperimentConfig, parse_config, parse_config_text
from .scheduler import BASELINE_POLICIES, OPTIMIZED_POLICY, POLICIES
from .simulator import MetricsRow, MetricsTrace, run_experiment

__version__ = "0.1.0"

__all__ = [
    "BASELINE_POLICIES",
    "ConfigError",
    "ExperimentConfig",
    "MetricsRow",
    "MetricsTrace",
    "OPTIMIZED_POLICY",
    "POLICIES",
    "parse_config",
    "parse_config_text",
    "run_experiment",
    "__version__",
]
