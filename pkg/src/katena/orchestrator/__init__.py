"""Plan execution and the persisted deployment record."""

from katena.orchestrator.executor import (
    ExecutionReport,
    Orchestrator,
    StepOutcome,
    execute_deploy,
    execute_destroy,
    execute_upgrade,
)
from katena.orchestrator.offchain import build_offchain_config, emit_offchain_config
from katena.orchestrator.record import DeploymentRecord, RecordEntry, record_path_for

__all__ = [
    "DeploymentRecord",
    "ExecutionReport",
    "Orchestrator",
    "RecordEntry",
    "StepOutcome",
    "build_offchain_config",
    "emit_offchain_config",
    "execute_deploy",
    "execute_destroy",
    "execute_upgrade",
    "record_path_for",
]
