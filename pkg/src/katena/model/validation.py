"""Structural constraint checks over a parsed model and its artifacts."""

from __future__ import annotations

from dataclasses import dataclass, field

from katena.errors import AbiError, ArtifactError, KatenaError, LinkError
from katena.graph import EdgeKind, build_dependency_graph, detect_hard_cycles
from katena.linker.binding import bind_constructor
from katena.linker.placeholders import matches_library
from katena.model.artifacts import ArtifactStore, ContractArtifact
from katena.model.types import DeploymentModel, Kind, NodeInstance, Relation, SecretRef
from katena.patterns import plan_diamond_wiring


@dataclass(frozen=True, order=True)
class Violation:
    code: str
    message: str
    nodes: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {"code": self.code, "message": self.message, "nodes": list(self.nodes)}


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)
    warnings: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "violations": [v.to_dict() for v in self.violations],
            "warnings": [w.to_dict() for w in self.warnings],
        }


class _Collector:
    def __init__(self):
        self.violations: set[Violation] = set()
        self.warnings: set[Violation] = set()

    def bad(self, code: str, message: str, *nodes: str):
        self.violations.add(Violation(code, message, tuple(sorted(nodes))))

    def warn(self, code: str, message: str, *nodes: str):
        self.warnings.add(Violation(code, message, tuple(sorted(nodes))))


def _artifact(node: NodeInstance, artifacts: ArtifactStore | None, out: _Collector) -> ContractArtifact | None:
    if artifacts is None:
        return None
    if not artifacts.exists(node.abi):
        out.bad("artifact-missing", f"{node.name}: artifact {node.abi!r} not found", node.name)
        return None
    try:
        return artifacts.get(node.abi)
    except ArtifactError as exc:
        out.bad("artifact-invalid", f"{node.name}: {exc}", node.name)
        return None


def _check_cycles(model: DeploymentModel, out: _Collector) -> None:
    graph = build_dependency_graph(model)
    cc_pairs = {(e.source, e.target) for e in graph.of_kind(EdgeKind.CC)}
    for cycle in detect_hard_cycles(graph):
        ring = list(zip(cycle, cycle[1:] + cycle[:1]))
        label = "{" + ",".join(cycle) + "}"
        if all(pair in cc_pairs for pair in ring):
            out.bad("constructor-cycle", f"constructor cycle {label}", *cycle)
        else:
            out.bad("dependency-cycle", f"hard dependency cycle {label}", *cycle)


def _check_on_chain(node: NodeInstance, model: DeploymentModel, artifacts, out: _Collector) -> None:
    name = node.name
    for rel in (Relation.USE_NETWORK, Relation.USE_WALLET):
        count = len(node.targets(rel))
        if count != 1:
            out.bad("context", f"{name}: needs exactly one {rel} requirement, has {count}", name)
    if node.destroy_function and not node.refund_address:
        out.bad("refund-missing", f"{name}: destroyFunction without refundAddress", name)
    if node.kind is Kind.LIBRARY and node.parameters:
        out.bad("library-constructor", f"{name}: libraries take no constructor parameters", name)

    art = _artifact(node, artifacts, out)
    if art is None:
        return
    if node.kind is not Kind.LIBRARY:
        refs = node.targets(Relation.USE_CONTRACT_IN_CONSTRUCTOR, Relation.USE_REFERENCE_IN_CONSTRUCTOR)
        if node.kind is Kind.DIAMOND:
            refs = node.targets(Relation.USE_CUT) + refs
        placeholder_address = "0x" + "11" * 20
        try:
            bind_constructor(art, [placeholder_address] * len(refs), node.parameters)
        except AbiError as exc:
            out.bad("constructor-binding", f"{name}: {exc}", name)
    if node.destroy_function:
        try:
            fn = art.find_function(node.destroy_function)
            if len(fn.inputs) > 1 or (fn.inputs and fn.inputs[0].kind != "address"):
                out.bad("destroy-signature", f"{name}: {fn.signature} must take no argument or one address", name)
        except AbiError as exc:
            out.bad("destroy-missing", f"{name}: {exc}", name)
    for req in node.requires(Relation.USE_CONTRACT, Relation.USE_REFERENCE):
        if req.function_name:
            try:
                art.find_function(req.function_name, ["address"])
            except AbiError as exc:
                out.bad("setter-missing", f"{name} -> {req.target}: {exc}", name, req.target)

    _check_links(node, art, model, artifacts, out)


def _check_links(node, art, model, artifacts, out: _Collector) -> None:
    try:
        placeholders = art.placeholders()
    except LinkError as exc:
        out.bad("bytecode", f"{node.name}: {exc}", node.name)
        return
    libs = {}
    for target in node.targets(Relation.USE_LIBRARY):
        lib = model[target]
        if artifacts.exists(lib.abi):
            try:
                libs[target] = artifacts.get(lib.abi).fully_qualified_name
            except ArtifactError:
                pass
    for ph in placeholders:
        if not any(matches_library(ph, fq) for fq in libs.values()):
            shown = ph.resolved_name or ph.id
            out.bad("unlinked-library", f"{node.name}: no useLibrary requirement satisfies placeholder {shown}", node.name)
    for target, fq in libs.items():
        if not any(matches_library(ph, fq) for ph in placeholders):
            out.warn("unused-library", f"{node.name}: bytecode has no placeholder for library {target!r}", node.name, target)


def _check_diamond(node: NodeInstance, model: DeploymentModel, artifacts, out: _Collector) -> None:
    cuts = node.targets(Relation.USE_CUT)
    if len(cuts) != 1:
        out.bad("diamond-cut", f"{node.name}: needs exactly one useCut requirement, has {len(cuts)}", node.name)
    if len(node.targets(Relation.USE_INIT)) > 1:
        out.bad("diamond-init", f"{node.name}: at most one useInit requirement", node.name)
    if node.targets(Relation.USE_INIT):
        out.warn("diamond-init", f"{node.name}: diamond init is modelled but no initialization call is made", node.name)
    for req in node.requires(Relation.USE_FACET):
        facet = model[req.target]
        if artifacts is not None and artifacts.exists(facet.abi) and req.exclude:
            try:
                names = {f.name for f in artifacts.get(facet.abi).functions}
            except ArtifactError:
                continue
            unknown = sorted(set(req.exclude) - names)
            if unknown:
                out.warn("exclude-unknown", f"{node.name} -> {req.target}: exclude names not in ABI: {', '.join(unknown)}", node.name)
    if artifacts is None or len(cuts) != 1:
        return
    if not all(artifacts.exists(model[t].abi) for t in node.targets(Relation.USE_FACET)):
        return
    try:
        plan_diamond_wiring(node, model, artifacts)
    except KatenaError as exc:
        out.bad("facet-collision" if "selector" in str(exc) else "diamond-wiring", str(exc), node.name)


def _check_off_chain(node: NodeInstance, model: DeploymentModel, out: _Collector) -> None:
    hosts = node.targets(Relation.HOSTED_ON)
    if len(hosts) > 1:
        out.bad("hosted-on", f"{node.name}: more than one hostedOn requirement", node.name)
    elif not hosts:
        out.warn("hosted-on", f"{node.name}: no hostedOn requirement; only a config payload is emitted", node.name)


def validate_model(model: DeploymentModel, artifacts: ArtifactStore | None = None) -> ValidationReport:
    """Collect every constraint violation; never raises for model content.

    Without an artifact store only artifact-independent checks run.
    """
    out = _Collector()
    _check_cycles(model, out)
    for node in model:
        for key, value in node.properties.items():
            if isinstance(value, SecretRef) and value.source == "inline":
                out.warn("inline-secret", f"{node.name}.{key}: secret written inline in the model file", node.name)
        if node.deployable:
            _check_on_chain(node, model, artifacts, out)
        if node.kind is Kind.DIAMOND:
            _check_diamond(node, model, artifacts, out)
        if node.kind is Kind.OFF_CHAIN_COMPONENT:
            _check_off_chain(node, model, out)
        if node.kind is Kind.SERVER and len(node.targets(Relation.USE_CREDENTIALS)) != 1:
            out.bad("credentials", f"{node.name}: a server needs exactly one useCredentials requirement", node.name)
        if node.kind is Kind.PROXY and len(node.targets(Relation.IMPLEMENTATION)) != 1:
            out.bad("proxy-implementation", f"{node.name}: a proxy needs exactly one implementation requirement", node.name)
    return ValidationReport(sorted(out.violations), sorted(out.warnings))
