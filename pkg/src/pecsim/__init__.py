"""Occupancy-aware HVAC control simulator with personal comfort devices."""

from __future__ import annotations

from .core import Config, ConfigError, load_config, validate_config
from .engine import Scenario, ScenarioResult, SweepResult, run_day, run_sweep

__version__ = "0.1.0"

__all__ = [
    "Config", "ConfigError", "Scenario", "ScenarioResult", "SweepResult",
    "load_config", "run_day", "run_sweep", "validate_config",
]
