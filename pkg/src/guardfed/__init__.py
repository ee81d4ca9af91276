"""Federated learning simulator for fairness- and performance-poisoning attacks
and the GuardFed trust-gated aggregator."""
from __future__ import annotations

from .config import ConfigError, ExperimentConfig, load_config, validate_config
from .harness import ExperimentError, prepare, run_experiment, sweep

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "ExperimentError",
    "load_config",
    "prepare",
    "run_experiment",
    "sweep",
    "validate_config",
]
__version__ = "0.1.0"
