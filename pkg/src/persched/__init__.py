"""Periodic I/O scheduling of concurrent HPC applications sharing one storage link."""
from .engine import EngineConfig, PerschedResult, build_pattern, persched, sweep_report
from .model import (
    ApplicationSpec,
    Platform,
    Scenario,
    ScenarioNotFound,
    ScenarioParseError,
    catalog_scenario,
    load_scenario,
    upper_bound_syseff,
)
from .pattern import Pattern, dilation, metrics, syseff, validate

__all__ = [
    "ApplicationSpec", "EngineConfig", "Pattern", "PerschedResult", "Platform", "Scenario",
    "ScenarioNotFound", "ScenarioParseError", "build_pattern", "catalog_scenario", "dilation",
    "load_scenario", "metrics", "persched", "sweep_report", "syseff", "upper_bound_syseff", "validate",
]
