"""Metamodel types, YAML model parsing, artifacts and validation."""

from katena.model.types import (
    DeploymentModel,
    Kind,
    NodeInstance,
    Relation,
    Requirement,
    SecretRef,
)
from katena.model.artifacts import ArtifactStore, ContractArtifact, load_artifact
from katena.model.parser import dump_model, load_inputs, parse_model, parse_model_data

__all__ = [
    "ArtifactStore",
    "ContractArtifact",
    "DeploymentModel",
    "Kind",
    "NodeInstance",
    "Relation",
    "Requirement",
    "SecretRef",
    "ValidationReport",
    "Violation",
    "dump_model",
    "load_artifact",
    "load_inputs",
    "parse_model",
    "parse_model_data",
    "validate_model",
]


def __getattr__(name):
    # validation depends on katena.graph and katena.patterns, which import this package
    if name in ("ValidationReport", "Violation", "validate_model"):
        from katena.model import validation

        return getattr(validation, name)
    raise AttributeError(name)
