"""Configuration, orchestration and the command line."""

from .config import ConfigError, ExperimentConfig, dump, from_ini, load, reference
from .suite import ANCHORS, STAGES, Check, RunRecord, run_verification_suite

__all__ = [
    "ANCHORS",
    "STAGES",
    "Check",
    "ConfigError",
    "ExperimentConfig",
    "RunRecord",
    "dump",
    "from_ini",
    "load",
    "reference",
    "run_verification_suite",
]
