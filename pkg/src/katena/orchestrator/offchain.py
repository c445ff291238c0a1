"""Configuration payloads handed to off-chain components."""

from __future__ import annotations

import json
import logging
from pathlib import Path

from katena.chain.base import EndpointInfo
from katena.errors import OrchestrationError
from katena.hashing import keccak256
from katena.model.types import DeploymentModel, Kind, NodeInstance, Relation
from katena.orchestrator.record import DeploymentRecord

log = logging.getLogger(__name__)

CONFIG_SUFFIX = ".config.json"


def _endpoint(model: DeploymentModel, node: NodeInstance, info: EndpointInfo | None) -> dict:
    net = model.network_of(node)
    out: dict = {}
    if net is not None:
        out["network"] = net.name
        if net.kind is Kind.NODE_SERVICE_PROVIDER:
            out["url"] = net.properties["url"]  # the secret never goes into the payload
        else:
            out["url"] = f"http://{net.properties['host']}:{net.properties['port']}"
    if info is not None:
        out["chainId"] = info.chain_id
    return out


def build_offchain_config(
    node: NodeInstance, model: DeploymentModel, record: DeploymentRecord, info: EndpointInfo | None = None
) -> dict:
    contracts = {}
    for target in sorted(node.targets(Relation.USE_CONTRACT)):
        target_node = model[target]
        if target_node.kind is Kind.SMART_CONTRACT_REFERENCE:
            contracts[target] = target_node.properties["address"]
            continue
        address = record.address_of(target)
        if address is None:
            raise OrchestrationError(f"{node.name}: contract {target!r} is not deployed")
        contracts[target] = address
    payload = {"node": node.name, "endpoint": _endpoint(model, node, info), "contracts": contracts}
    hosts = node.targets(Relation.HOSTED_ON)
    if hosts:
        payload["hostedOn"] = hosts[0]
    return payload


def emit_offchain_config(
    node: NodeInstance,
    model: DeploymentModel,
    record: DeploymentRecord,
    info: EndpointInfo | None = None,
    out_dir: str | Path | None = None,
) -> tuple[dict, str, Path | None]:
    """Build the payload, write ``<node>.config.json`` and return (payload, hash, path).

    Provisioning the host itself is out of scope; the hostedOn target is
    only logged.
    """
    payload = build_offchain_config(node, model, record, info)
    text = json.dumps(payload, sort_keys=True, indent=2) + "\n"
    digest = "0x" + keccak256(text.encode()).hex()
    path = None
    if out_dir is not None:
        path = Path(out_dir) / f"{node.name}{CONFIG_SUFFIX}"
        path.write_text(text, encoding="utf-8")
    if "hostedOn" in payload:
        log.info("%s: provisioning on %s is left to the host's own tooling", node.name, payload["hostedOn"])
    return payload, digest, path
