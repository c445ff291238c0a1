"""Typed dependency graph over model nodes and the plans derived from it.

Edges point from the dependent node to its dependency.  Hard edges impose
deployment order (the dependency's address is baked into bytecode or passed
to the constructor); lazy edges are satisfied by calls after both ends exist.
"""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable

from katena.errors import CycleError, PlanError
from katena.model.types import DeploymentModel, Kind, NodeInstance, Relation


class EdgeKind(str, Enum):
    LL = "LL"
    LC = "LC"
    CC = "CC"
    LAZY_CC = "LazyCC"
    OO = "OO"
    FACET = "Facet"
    CUT = "Cut"
    INIT = "Init"
    PROXY_IMPL = "ProxyImpl"

    def __str__(self) -> str:
        return self.value


HARD_EDGES = frozenset({EdgeKind.LL, EdgeKind.LC, EdgeKind.CC, EdgeKind.CUT, EdgeKind.PROXY_IMPL})
# A proxy exists precisely so that its implementation can change underneath
# it; implementation upgrades rewire the proxy instead of redeploying it.
REDEPLOY_EDGES = HARD_EDGES - {EdgeKind.PROXY_IMPL}

DEFAULT_UPGRADE_FUNCTION = "upgradeTo"


@dataclass(frozen=True, order=True)
class Edge:
    source: str
    target: str
    kind: EdgeKind
    function: str | None = None


@dataclass(frozen=True)
class DependencyGraph:
    vertices: tuple[str, ...]
    edges: frozenset[Edge]

    def of_kind(self, *kinds: EdgeKind) -> list[Edge]:
        return sorted(e for e in self.edges if e.kind in kinds)

    def hard_edges(self) -> list[Edge]:
        return self.of_kind(*HARD_EDGES)

    def incoming(self, node: str, kinds: Iterable[EdgeKind]) -> list[Edge]:
        kinds = set(kinds)
        return sorted(e for e in self.edges if e.target == node and e.kind in kinds)

    def outgoing(self, node: str, kinds: Iterable[EdgeKind]) -> list[Edge]:
        kinds = set(kinds)
        return sorted(e for e in self.edges if e.source == node and e.kind in kinds)


def _edge_for(node: NodeInstance, relation: Relation) -> EdgeKind | None:
    if relation is Relation.USE_LIBRARY:
        return EdgeKind.LL if node.kind is Kind.LIBRARY else EdgeKind.LC
    if relation is Relation.USE_CONTRACT:
        return EdgeKind.LAZY_CC if node.on_chain else EdgeKind.OO
    return {
        Relation.USE_CONTRACT_IN_CONSTRUCTOR: EdgeKind.CC,
        Relation.USE_FACET: EdgeKind.FACET,
        Relation.USE_CUT: EdgeKind.CUT,
        Relation.USE_INIT: EdgeKind.INIT,
        Relation.IMPLEMENTATION: EdgeKind.PROXY_IMPL,
    }.get(relation)


def build_dependency_graph(model: DeploymentModel) -> DependencyGraph:
    edges = set()
    for node in model:
        for req in node.requirements:
            kind = _edge_for(node, req.relation)
            if kind is None:
                continue
            fn = req.function_name if kind is EdgeKind.LAZY_CC else None
            edges.add(Edge(node.name, req.target, kind, fn))
    return DependencyGraph(tuple(sorted(model.nodes)), frozenset(edges))


def _strongly_connected(vertices: Iterable[str], succ: dict[str, list[str]]) -> list[list[str]]:
    """Tarjan's algorithm, iterative so deep chains do not hit the recursion limit."""
    index: dict[str, int] = {}
    low: dict[str, int] = {}
    on_stack: set[str] = set()
    stack: list[str] = []
    out: list[list[str]] = []
    counter = 0
    for root in vertices:
        if root in index:
            continue
        work = [(root, iter(succ.get(root, ())))]
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack.add(root)
        while work:
            v, it = work[-1]
            advanced = False
            for w in it:
                if w not in index:
                    index[w] = low[w] = counter
                    counter += 1
                    stack.append(w)
                    on_stack.add(w)
                    work.append((w, iter(succ.get(w, ()))))
                    advanced = True
                    break
                if w in on_stack:
                    low[v] = min(low[v], index[w])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[v])
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    comp.append(w)
                    if w == v:
                        break
                out.append(comp)
    return out


def _cycle_through(start: str, members: set[str], succ: dict[str, list[str]]) -> list[str]:
    # DFS confined to one SCC, smallest neighbour first, back to ``start``
    path = [start]
    seen = {start}
    iters = [iter(sorted(w for w in succ.get(start, ()) if w in members))]
    while iters:
        for w in iters[-1]:
            if w == start:
                return list(path)
            if w not in seen:
                seen.add(w)
                path.append(w)
                iters.append(iter(sorted(x for x in succ.get(w, ()) if x in members)))
                break
        else:
            iters.pop()
            path.pop()
    raise AssertionError("strongly connected component without a cycle")


def detect_hard_cycles(graph: DependencyGraph) -> list[list[str]]:
    """One cycle (as a vertex sequence) per strongly connected hard component.

    Lazy edges never form cycles: mutual setter wiring is legal.
    """
    succ: dict[str, list[str]] = defaultdict(list)
    self_loops = set()
    for e in graph.hard_edges():
        succ[e.source].append(e.target)
        if e.source == e.target:
            self_loops.add(e.source)
    cycles = []
    for comp in _strongly_connected(graph.vertices, succ):
        if len(comp) > 1 or comp[0] in self_loops:
            start = min(comp)
            cycles.append(_cycle_through(start, set(comp), succ))
    return sorted(cycles)


# -- plans --------------------------------------------------------------------

DEPLOY_LIBRARY = "deploy_library"
LINK_AND_DEPLOY = "link_and_deploy"
DEPLOY_CONTRACT = "deploy_contract"
CALL_WIRE = "call_wire"
DIAMOND_CUT_ADD = "diamond_cut_add"
DIAMOND_CUT_REPLACE = "diamond_cut_replace"
DIAMOND_CUT_REMOVE = "diamond_cut_remove"
CONFIGURE_OFFCHAIN = "configure_offchain"
DESTROY = "destroy"

DEPLOY_ACTIONS = frozenset({DEPLOY_LIBRARY, LINK_AND_DEPLOY, DEPLOY_CONTRACT})


@dataclass(frozen=True)
class Step:
    action: str
    node: str
    target: str | None = None
    function: str | None = None

    @property
    def sort_key(self) -> tuple[str, str, str, str]:
        return (self.node, self.action, self.target or "", self.function or "")

    def to_dict(self) -> dict:
        out = {"action": self.action, "node": self.node}
        if self.target is not None:
            out["target"] = self.target
        if self.function is not None:
            out["function"] = self.function
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "Step":
        return cls(data["action"], data["node"], data.get("target"), data.get("function"))

    def __str__(self) -> str:
        extra = f" -> {self.target}" if self.target else ""
        fn = f" [{self.function}]" if self.function else ""
        return f"{self.action} {self.node}{extra}{fn}"


def _dumps(data) -> str:
    return json.dumps(data, sort_keys=True, indent=2)


@dataclass(frozen=True)
class DeploymentPlan:
    layers: tuple[tuple[Step, ...], ...]
    warnings: tuple[str, ...] = ()

    def steps(self) -> list[Step]:
        return [s for layer in self.layers for s in layer]

    def layer_index(self) -> dict[Step, int]:
        return {s: i for i, layer in enumerate(self.layers) for s in layer}

    def node_layers(self) -> list[list[str]]:
        return [[s.node for s in layer] for layer in self.layers]

    def prefix(self, count: int) -> "DeploymentPlan":
        """The plan truncated after its first ``count`` steps (in execution order)."""
        layers, left = [], count
        for layer in self.layers:
            if left <= 0:
                break
            layers.append(layer[:left])
            left -= len(layer)
        return DeploymentPlan(tuple(layers), self.warnings)

    def to_dict(self) -> dict:
        return {
            "layers": [[s.to_dict() for s in layer] for layer in self.layers],
            "warnings": list(self.warnings),
        }

    def to_json(self) -> str:
        return _dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "DeploymentPlan":
        layers = tuple(tuple(Step.from_dict(s) for s in layer) for layer in data["layers"])
        return cls(layers, tuple(data.get("warnings", ())))


@dataclass(frozen=True)
class UpgradePlan:
    target: str
    redeploy: tuple[Step, ...]
    wire_calls: tuple[Step, ...] = ()
    cuts: tuple[Step, ...] = ()
    offchain_updates: tuple[Step, ...] = ()
    warnings: tuple[str, ...] = field(default=())

    @property
    def redeploy_set(self) -> list[str]:
        return [s.node for s in self.redeploy]

    def steps(self) -> list[Step]:
        return [*self.redeploy, *self.wire_calls, *self.cuts, *self.offchain_updates]

    def to_dict(self) -> dict:
        return {
            "target": self.target,
            "redeploy": [s.to_dict() for s in self.redeploy],
            "wireCalls": [s.to_dict() for s in self.wire_calls],
            "cuts": [s.to_dict() for s in self.cuts],
            "offChainUpdates": [s.to_dict() for s in self.offchain_updates],
            "warnings": list(self.warnings),
        }

    def to_json(self) -> str:
        return _dumps(self.to_dict())


def _deploy_action(node: NodeInstance) -> str:
    if node.targets(Relation.USE_LIBRARY):
        return LINK_AND_DEPLOY
    if node.kind is Kind.LIBRARY:
        return DEPLOY_LIBRARY
    return DEPLOY_CONTRACT


def deploy_layers(graph: DependencyGraph, model: DeploymentModel) -> dict[str, int]:
    """Longest-path depth of every deployable node over hard edges."""
    cycles = detect_hard_cycles(graph)
    if cycles:
        raise CycleError(cycles)
    deployable = {n.name for n in model if n.deployable}
    deps: dict[str, set[str]] = {n: set() for n in deployable}
    for e in graph.hard_edges():
        if e.source in deployable and e.target in deployable:
            deps[e.source].add(e.target)
    # rounds of Kahn's algorithm; a node's round is its longest-path depth
    layer: dict[str, int] = {}
    remaining = dict(deps)
    depth = 0
    while remaining:
        ready = [n for n, ds in remaining.items() if all(d in layer for d in ds)]
        for n in ready:
            layer[n] = depth
            del remaining[n]
        depth += 1
    return layer


def _upgrade_function(node: NodeInstance) -> str:
    return node.properties.get("upgradeFunction") or DEFAULT_UPGRADE_FUNCTION


def _sorted(steps: Iterable[Step]) -> tuple[Step, ...]:
    return tuple(sorted(set(steps), key=lambda s: s.sort_key))


def _init_warnings(graph: DependencyGraph, diamonds: Iterable[str] | None = None) -> list[str]:
    out = []
    for e in graph.of_kind(EdgeKind.INIT):
        if diamonds is None or e.source in diamonds or e.target in diamonds:
            out.append(f"{e.source}: diamond init {e.target!r} is modelled only; no initialization call is made")
    return out


def deployment_plan(graph: DependencyGraph, model: DeploymentModel) -> DeploymentPlan:
    layer = deploy_layers(graph, model)
    by_depth: dict[int, list[Step]] = defaultdict(list)
    for name, depth in layer.items():
        by_depth[depth].append(Step(_deploy_action(model[name]), name))
    layers = [_sorted(by_depth[d]) for d in sorted(by_depth)]

    wiring = []
    for e in graph.of_kind(EdgeKind.LAZY_CC):
        wiring.append(Step(CALL_WIRE, e.source, e.target, e.function))
    for e in graph.of_kind(EdgeKind.PROXY_IMPL):
        wiring.append(Step(CALL_WIRE, e.source, e.target, _upgrade_function(model[e.source])))
    for e in graph.of_kind(EdgeKind.FACET):
        wiring.append(Step(DIAMOND_CUT_ADD, e.source, e.target))
    for node in model:
        if node.deployable:
            for req in node.requires(Relation.USE_REFERENCE):
                if req.function_name:
                    wiring.append(Step(CALL_WIRE, node.name, req.target, req.function_name))
    if wiring:
        layers.append(_sorted(wiring))

    offchain = [Step(CONFIGURE_OFFCHAIN, n.name) for n in model.of_kind(Kind.OFF_CHAIN_COMPONENT)]
    if offchain:
        layers.append(_sorted(offchain))
    return DeploymentPlan(tuple(layers), tuple(_init_warnings(graph)))


def reverse_closure(graph: DependencyGraph, target: str, kinds=REDEPLOY_EDGES) -> set[str]:
    preds: dict[str, set[str]] = defaultdict(set)
    for e in graph.of_kind(*kinds):
        preds[e.target].add(e.source)
    seen = {target}
    frontier = [target]
    while frontier:
        nxt = []
        for v in frontier:
            for p in preds[v]:
                if p not in seen:
                    seen.add(p)
                    nxt.append(p)
        frontier = nxt
    return seen


def upgrade_plan(graph: DependencyGraph, model: DeploymentModel, target: str) -> UpgradePlan:
    if target not in model:
        raise PlanError(f"unknown upgrade target {target!r}")
    node = model[target]
    if not node.deployable:
        raise PlanError(
            f"{target!r} is a {node.kind}; only on-chain components are upgraded "
            "(off-chain nodes are reconfigured instead)"
        )
    layer = deploy_layers(graph, model)
    closure = reverse_closure(graph, target)
    redeploy = tuple(
        Step(_deploy_action(model[n]), n) for n in sorted(closure, key=lambda n: (layer[n], n))
    )

    wires = []
    for e in graph.of_kind(EdgeKind.LAZY_CC):
        if e.target in closure or e.source in closure:
            wires.append(Step(CALL_WIRE, e.source, e.target, e.function))
    for e in graph.of_kind(EdgeKind.PROXY_IMPL):
        if e.target in closure or e.source in closure:
            wires.append(Step(CALL_WIRE, e.source, e.target, _upgrade_function(model[e.source])))
    for name in sorted(closure):
        for req in model[name].requires(Relation.USE_REFERENCE):
            if req.function_name:
                wires.append(Step(CALL_WIRE, name, req.target, req.function_name))

    cuts = []
    for e in graph.of_kind(EdgeKind.FACET):
        if e.source in closure:
            cuts.append(Step(DIAMOND_CUT_ADD, e.source, e.target))
        elif e.target in closure:
            cuts.append(Step(DIAMOND_CUT_REPLACE, e.source, e.target))

    offchain = [
        Step(CONFIGURE_OFFCHAIN, e.source) for e in graph.of_kind(EdgeKind.OO) if e.target in closure
    ]
    return UpgradePlan(
        target=target,
        redeploy=redeploy,
        wire_calls=_sorted(wires),
        cuts=_sorted(cuts),
        offchain_updates=_sorted(offchain),
        warnings=tuple(_init_warnings(graph, closure)),
    )


def destroy_plan(
    graph: DependencyGraph,
    model: DeploymentModel,
    target: str,
    destroyed: Iterable[str] = (),
) -> list[Step]:
    """Detach ``target`` from every diamond using it, then call its destroy function.

    ``destroyed`` names nodes already gone on chain; they no longer count as
    dependents.
    """
    if target not in model:
        raise PlanError(f"unknown destroy target {target!r}")
    node = model[target]
    fn = node.destroy_function
    if not fn:
        raise PlanError(f"{target!r} defines no destroyFunction")
    gone = set(destroyed)
    dependents = sorted(
        {e.source for e in graph.incoming(target, HARD_EDGES) if e.source not in gone}
    )
    if dependents:
        raise PlanError(f"cannot destroy {target!r}: live hard dependents {', '.join(dependents)}")
    steps = [
        Step(DIAMOND_CUT_REMOVE, e.source, target)
        for e in graph.incoming(target, [EdgeKind.FACET])
        if e.source not in gone
    ]
    steps.append(Step(DESTROY, target, function=fn))
    return steps
