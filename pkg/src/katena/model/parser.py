"""Parse YAML application models into :class:`DeploymentModel`."""

from __future__ import annotations

import hashlib
import re
from typing import Any, Mapping
from urllib.parse import urlparse

import yaml

from katena.errors import ModelError
from katena.hashing import check_address
from katena.model.types import (
    KIND_TYPE_NAMES,
    ON_CHAIN,
    RELATION_ALIASES,
    TYPE_NAMES,
    DeploymentModel,
    Kind,
    NodeInstance,
    Relation,
    Requirement,
    SecretRef,
    relation_allowed,
    relation_allowed_from,
)

_IDENT_RE = re.compile(r"^[A-Za-z_$][A-Za-z0-9_$]*$")
_SECRET_PROPS = frozenset({"privateKey", "sshKey", "secret"})

DEFAULT_HOST = "127.0.0.1"
DEFAULT_PORT = 8545

_ON_CHAIN_PROPS = {"abi", "parameters", "destroyFunction", "refundAddress"}
# kind -> (required, optional); None for optional means free-form
_SCHEMA: dict[Kind, tuple[set[str], set[str] | None]] = {
    Kind.NETWORK: (set(), {"host", "port", "chainId"}),
    Kind.SELF_HOSTED_NODE: (set(), {"host", "port", "chainId"}),
    Kind.NODE_SERVICE_PROVIDER: ({"url", "secret"}, {"chainId", "auth"}),
    Kind.WALLET: ({"privateKey"}, {"publicKey"}),
    Kind.LIBRARY: ({"abi"}, {"parameters"}),
    Kind.SMART_CONTRACT: ({"abi"}, _ON_CHAIN_PROPS),
    Kind.PROXY: ({"abi"}, _ON_CHAIN_PROPS | {"upgradeFunction"}),
    Kind.DIAMOND: ({"abi"}, _ON_CHAIN_PROPS | {"functions"}),
    Kind.FACET: ({"abi"}, _ON_CHAIN_PROPS),
    Kind.DIAMOND_CUT: ({"abi"}, _ON_CHAIN_PROPS),
    Kind.DIAMOND_INIT: ({"abi"}, _ON_CHAIN_PROPS),
    Kind.SMART_CONTRACT_REFERENCE: ({"address"}, set()),
    Kind.OFF_CHAIN_COMPONENT: (set(), None),
    Kind.DECENTRALIZED_STORAGE: (set(), None),
    Kind.SERVER: (set(), None),
    Kind.CREDENTIAL: ({"sshKey"}, set()),
}


def _resolve_inputs(value: Any, inputs: Mapping[str, Any], where: str) -> Any:
    if isinstance(value, dict):
        if set(value) == {"get_input"}:
            key = value["get_input"]
            if key not in inputs:
                raise ModelError(f"{where}: unresolved input {key!r}")
            return inputs[key]
        return {k: _resolve_inputs(v, inputs, where) for k, v in value.items()}
    if isinstance(value, list):
        return [_resolve_inputs(v, inputs, where) for v in value]
    return value


def _secret(value: Any, where: str) -> SecretRef:
    if isinstance(value, dict) and len(value) == 1:
        (key, ref), = value.items()
        if key == "get_input":
            return SecretRef("input", str(ref))
        if key == "env":
            return SecretRef("env", str(ref))
    if isinstance(value, (str, int)) and not isinstance(value, bool):
        return SecretRef("inline", str(value))
    raise ModelError(f"{where}: secret must be {{get_input: KEY}}, {{env: VAR}} or a literal")


def _check_props(name: str, kind: Kind, props: dict[str, Any]) -> dict[str, Any]:
    required, optional = _SCHEMA[kind]
    missing = sorted(required - set(props))
    if missing:
        raise ModelError(f"node {name!r} ({kind}): missing required property {', '.join(missing)}")
    if optional is not None:
        unknown = sorted(set(props) - required - optional)
        if unknown:
            raise ModelError(f"node {name!r} ({kind}): unknown property {', '.join(unknown)}")
    out = dict(props)
    if kind in (Kind.NETWORK, Kind.SELF_HOSTED_NODE):
        out.setdefault("host", DEFAULT_HOST)
        out.setdefault("port", DEFAULT_PORT)
        port = out["port"]
        if isinstance(port, bool) or not isinstance(port, int) or not 1 <= port <= 65535:
            raise ModelError(f"node {name!r}: port must be an integer in [1, 65535], got {port!r}")
        if not isinstance(out["host"], str) or not out["host"]:
            raise ModelError(f"node {name!r}: host must be a non-empty string")
    if kind is Kind.NODE_SERVICE_PROVIDER:
        url = urlparse(str(out["url"]))
        if url.scheme not in ("http", "https") or not url.netloc:
            raise ModelError(f"node {name!r}: malformed url {out['url']!r}")
        if out.get("auth", "path") not in ("path", "bearer"):
            raise ModelError(f"node {name!r}: auth must be 'path' or 'bearer'")
    if "chainId" in out and (isinstance(out["chainId"], bool) or not isinstance(out["chainId"], int)):
        raise ModelError(f"node {name!r}: chainId must be an integer")
    for key in ("publicKey", "refundAddress", "address"):
        if key in out:
            try:
                out[key] = check_address(str(out[key]))
            except ValueError as exc:
                raise ModelError(f"node {name!r}: {key}: {exc}") from exc
    if kind in ON_CHAIN:
        if not isinstance(out["abi"], str) or not out["abi"]:
            raise ModelError(f"node {name!r}: abi must be an artifact name or path")
        params = out.get("parameters", [])
        if params is None:
            params = []
        if not isinstance(params, list):
            raise ModelError(f"node {name!r}: parameters must be a list")
        out["parameters"] = params
        for key in ("destroyFunction", "upgradeFunction"):
            if key in out and not (isinstance(out[key], str) and _IDENT_RE.match(out[key])):
                raise ModelError(f"node {name!r}: {key} must be a function name")
    for key in _SECRET_PROPS & set(out):
        out[key] = _secret(out[key], f"node {name!r}.{key}")
    return out


def _relation(raw: Any, where: str) -> Relation:
    if isinstance(raw, dict):
        raw = raw.get("type")
    if not isinstance(raw, str):
        raise ModelError(f"{where}: relationship must be a name")
    if raw.startswith("katena.relationships."):
        raw = raw[len("katena.relationships."):]
    elif "." in raw:
        raise ModelError(f"{where}: unknown relationship namespace in {raw!r}")
    if raw in RELATION_ALIASES:
        return RELATION_ALIASES[raw]
    try:
        return Relation(raw)
    except ValueError:
        raise ModelError(f"{where}: unknown relation {raw!r}") from None


def _requirement(name: str, item: Any, inputs: Mapping[str, Any]) -> Requirement:
    where = f"node {name!r} requirement"
    if not isinstance(item, dict) or len(item) != 1:
        raise ModelError(f"{where}: each requirement must be a single-key mapping, got {item!r}")
    (req_name, spec), = item.items()
    spec = _resolve_inputs(spec, inputs, where)
    if isinstance(spec, str):
        return Requirement(_relation(req_name, where), spec)
    if not isinstance(spec, dict) or "node" not in spec:
        raise ModelError(f"{where} {req_name!r}: needs a target node")
    relation = _relation(spec.get("relationship", req_name), where)
    props = dict(spec.get("properties") or {})
    for key in ("functionName", "exclude"):
        if key in spec:
            props[key] = spec[key]
    fn = props.get("functionName")
    if fn is not None and not (isinstance(fn, str) and _IDENT_RE.match(fn)):
        raise ModelError(f"{where}: functionName {fn!r} is not a valid function name")
    exclude = props.get("exclude") or []
    if not isinstance(exclude, list):
        raise ModelError(f"{where}: exclude must be a list of function names")
    for fname in exclude:
        if not (isinstance(fname, str) and _IDENT_RE.match(fname)):
            raise ModelError(f"{where}: exclude entry {fname!r} is not a valid function name")
    if exclude and relation is not Relation.USE_FACET:
        raise ModelError(f"{where}: exclude is only meaningful on useFacet")
    return Requirement(relation, str(spec["node"]), fn, tuple(exclude))


def _node_templates(doc: Any) -> tuple[dict, dict]:
    if doc is None:
        return {}, {}
    if not isinstance(doc, dict):
        raise ModelError("model document must be a mapping")
    declared: dict = {}
    if "topology_template" in doc:
        topo = doc["topology_template"] or {}
        declared = topo.get("inputs") or {}
        nodes = topo.get("node_templates") or {}
    elif "nodes" in doc:
        declared = doc.get("inputs") or {}
        nodes = doc["nodes"] or {}
    else:
        # bare listing: every top-level entry is a node template
        nodes = doc
    if not isinstance(nodes, dict):
        raise ModelError("node templates must be a mapping")
    return nodes, declared


def parse_model_data(doc: Any, inputs: Mapping[str, Any] | None = None, source_hash: str = "") -> DeploymentModel:
    nodes_raw, declared = _node_templates(doc)
    merged: dict[str, Any] = {}
    for key, decl in (declared or {}).items():
        if isinstance(decl, dict) and "default" in decl:
            merged[key] = decl["default"]
    merged.update(inputs or {})

    parsed: dict[str, NodeInstance] = {}
    for name, body in nodes_raw.items():
        name = str(name)
        if not _IDENT_RE.match(name.replace("-", "_")):
            raise ModelError(f"invalid node name {name!r}")
        if not isinstance(body, dict) or "type" not in body:
            raise ModelError(f"node {name!r} needs a 'type'")
        type_name = body["type"]
        if type_name not in TYPE_NAMES:
            raise ModelError(f"node {name!r}: unknown node type {type_name!r}")
        kind = TYPE_NAMES[type_name]
        raw_props = body.get("properties") or {}
        if not isinstance(raw_props, dict):
            raise ModelError(f"node {name!r}: properties must be a mapping")
        props = {}
        for key, value in raw_props.items():
            if key in _SECRET_PROPS:
                props[key] = value  # resolved lazily
            else:
                props[key] = _resolve_inputs(value, merged, f"node {name!r}.{key}")
        props = _check_props(name, kind, props)
        reqs_raw = body.get("requirements") or []
        if not isinstance(reqs_raw, list):
            raise ModelError(f"node {name!r}: requirements must be a list")
        reqs = tuple(_requirement(name, item, merged) for item in reqs_raw)
        parsed[name] = NodeInstance(name, kind, props, reqs, type_name)

    for node in parsed.values():
        for req in node.requirements:
            where = f"node {node.name!r} {req.relation}"
            if req.target not in parsed:
                raise ModelError(f"{where}: dangling requirement target {req.target!r}")
            if not relation_allowed_from(req.relation, node.kind):
                raise ModelError(f"{where}: relation not allowed on a {node.kind}")
            target_kind = parsed[req.target].kind
            if not relation_allowed(req.relation, node.kind, target_kind):
                raise ModelError(f"{where}: a {node.kind} cannot target {req.target!r} ({target_kind})")
            if req.relation is Relation.USE_CONTRACT and node.on_chain and not req.function_name:
                raise ModelError(f"{where}: useContract between contracts needs a functionName")
    return DeploymentModel(parsed, dict(merged), source_hash)


def parse_model(text: str, inputs: Mapping[str, Any] | None = None) -> DeploymentModel:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ModelError(f"YAML syntax error: {exc}") from exc
    digest = hashlib.sha256(text.encode("utf-8")).hexdigest()
    return parse_model_data(doc, inputs, digest)


def load_inputs(path) -> dict[str, Any]:
    with open(path, encoding="utf-8") as fh:
        try:
            data = yaml.safe_load(fh) or {}
        except yaml.YAMLError as exc:
            raise ModelError(f"inputs file: YAML syntax error: {exc}") from exc
    if not isinstance(data, dict):
        raise ModelError("inputs file must be a mapping")
    for key, value in data.items():
        if isinstance(value, (dict, list)):
            raise ModelError(f"inputs file: {key!r} is not a scalar")
    return data


def model_to_data(model: DeploymentModel) -> dict:
    nodes = {}
    for node in model.nodes.values():
        body: dict[str, Any] = {"type": node.type_name or KIND_TYPE_NAMES[node.kind]}
        if node.properties:
            body["properties"] = {
                k: (v.to_yaml() if isinstance(v, SecretRef) else v) for k, v in node.properties.items()
            }
        reqs = []
        for r in node.requirements:
            if r.function_name is None and not r.exclude:
                reqs.append({r.relation.value: r.target})
            else:
                spec: dict[str, Any] = {"node": r.target}
                if r.function_name is not None:
                    spec["functionName"] = r.function_name
                if r.exclude:
                    spec["exclude"] = list(r.exclude)
                reqs.append({r.relation.value: spec})
        if reqs:
            body["requirements"] = reqs
        nodes[node.name] = body
    out: dict[str, Any] = {}
    if model.inputs:
        out["inputs"] = {k: {"default": v} for k, v in model.inputs.items()}
    out["nodes"] = nodes
    return out


def dump_model(model: DeploymentModel) -> str:
    return yaml.safe_dump(model_to_data(model), sort_keys=False)
