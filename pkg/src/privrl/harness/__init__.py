"""Experiment plumbing: configs, runs, audits and emission."""

from .audit import AuditReport, MechanismAudit, audit_privacy_arithmetic
from .config import AgentSpec, EnvSpec, ExperimentConfig, config_from_dict, derived_params, load_config
from .emit import emit, load_json
from .runner import RegretRecord, run_experiment, run_seed

__all__ = [
    "AgentSpec", "AuditReport", "EnvSpec", "ExperimentConfig", "MechanismAudit", "RegretRecord",
    "audit_privacy_arithmetic", "config_from_dict", "derived_params", "emit", "load_config",
    "load_json", "run_experiment", "run_seed",
]
