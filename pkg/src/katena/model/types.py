"""Metamodel domain types: node kinds, relations and the legality table."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterator


class Kind(str, Enum):
    NETWORK = "Network"
    SELF_HOSTED_NODE = "SelfHostedNode"
    NODE_SERVICE_PROVIDER = "NodeServiceProvider"
    WALLET = "Wallet"
    LIBRARY = "Library"
    SMART_CONTRACT = "SmartContract"
    SMART_CONTRACT_REFERENCE = "SmartContractReference"
    PROXY = "Proxy"
    DIAMOND = "Diamond"
    FACET = "Facet"
    DIAMOND_CUT = "DiamondCut"
    DIAMOND_INIT = "DiamondInit"
    OFF_CHAIN_COMPONENT = "OffChainComponent"
    DECENTRALIZED_STORAGE = "DecentralizedStorage"
    SERVER = "Server"
    CREDENTIAL = "Credential"

    def __str__(self) -> str:
        return self.value


TYPE_NAMES: dict[str, Kind] = {
    "katena.nodes.network": Kind.NETWORK,
    "katena.nodes.network.ethereum": Kind.SELF_HOSTED_NODE,
    "katena.nodes.network.ganache": Kind.SELF_HOSTED_NODE,
    "katena.nodes.network.selfHostedNode": Kind.SELF_HOSTED_NODE,
    "katena.nodes.network.nodeServiceProvider": Kind.NODE_SERVICE_PROVIDER,
    "katena.nodes.wallet": Kind.WALLET,
    "katena.nodes.library": Kind.LIBRARY,
    "katena.nodes.smartcontract": Kind.SMART_CONTRACT,
    "katena.nodes.smartcontract.reference": Kind.SMART_CONTRACT_REFERENCE,
    "katena.nodes.proxy": Kind.PROXY,
    "katena.nodes.diamond": Kind.DIAMOND,
    "katena.nodes.diamond.facet": Kind.FACET,
    "katena.nodes.diamond.cut": Kind.DIAMOND_CUT,
    "katena.nodes.diamond.init": Kind.DIAMOND_INIT,
    "katena.nodes.offchain": Kind.OFF_CHAIN_COMPONENT,
    # stock TOSCA type used for off-chain containers in model files
    "tosca.nodes.Container.Application": Kind.OFF_CHAIN_COMPONENT,
    "katena.nodes.offchain.decentralizedStorage": Kind.DECENTRALIZED_STORAGE,
    "katena.nodes.offchain.server": Kind.SERVER,
    "katena.nodes.credential": Kind.CREDENTIAL,
}

# preferred type name when writing a model back out
KIND_TYPE_NAMES: dict[Kind, str] = {}
for _name, _kind in TYPE_NAMES.items():
    KIND_TYPE_NAMES.setdefault(_kind, _name)

NETWORKS = frozenset({Kind.NETWORK, Kind.SELF_HOSTED_NODE, Kind.NODE_SERVICE_PROVIDER})
CONTRACT_KINDS = frozenset(
    {Kind.SMART_CONTRACT, Kind.PROXY, Kind.DIAMOND, Kind.FACET, Kind.DIAMOND_CUT, Kind.DIAMOND_INIT}
)
ON_CHAIN = CONTRACT_KINDS | {Kind.LIBRARY}
OFF_CHAIN_NODES = frozenset({Kind.DECENTRALIZED_STORAGE, Kind.SERVER})


class Relation(str, Enum):
    USE_NETWORK = "useNetwork"
    USE_WALLET = "useWallet"
    USE_LIBRARY = "useLibrary"
    USE_CONTRACT_IN_CONSTRUCTOR = "useContractInConstructor"
    USE_REFERENCE_IN_CONSTRUCTOR = "useReferenceInConstructor"
    USE_CONTRACT = "useContract"
    USE_REFERENCE = "useReference"
    USE_FACET = "useFacet"
    USE_CUT = "useCut"
    USE_INIT = "useInit"
    IMPLEMENTATION = "implementation"
    HOSTED_ON = "hostedOn"
    USE_CREDENTIALS = "useCredentials"

    def __str__(self) -> str:
        return self.value


RELATION_ALIASES = {
    # spelling used in published model listings
    "usesContractInConstructor": Relation.USE_CONTRACT_IN_CONSTRUCTOR,
}

# source kinds -> allowed target kinds, per relation
LEGALITY: dict[Relation, list[tuple[frozenset[Kind], frozenset[Kind]]]] = {
    Relation.USE_NETWORK: [(ON_CHAIN | {Kind.OFF_CHAIN_COMPONENT}, NETWORKS)],
    Relation.USE_WALLET: [(ON_CHAIN, frozenset({Kind.WALLET}))],
    Relation.USE_LIBRARY: [(ON_CHAIN, frozenset({Kind.LIBRARY}))],
    Relation.USE_CONTRACT_IN_CONSTRUCTOR: [(CONTRACT_KINDS, CONTRACT_KINDS)],
    Relation.USE_REFERENCE_IN_CONSTRUCTOR: [(CONTRACT_KINDS, frozenset({Kind.SMART_CONTRACT_REFERENCE}))],
    Relation.USE_CONTRACT: [
        (CONTRACT_KINDS, CONTRACT_KINDS),
        (frozenset({Kind.OFF_CHAIN_COMPONENT}), CONTRACT_KINDS),
    ],
    Relation.USE_REFERENCE: [(CONTRACT_KINDS, frozenset({Kind.SMART_CONTRACT_REFERENCE}))],
    Relation.USE_FACET: [(frozenset({Kind.DIAMOND}), frozenset({Kind.FACET}))],
    Relation.USE_CUT: [(frozenset({Kind.DIAMOND}), frozenset({Kind.DIAMOND_CUT, Kind.SMART_CONTRACT}))],
    Relation.USE_INIT: [(frozenset({Kind.DIAMOND}), frozenset({Kind.DIAMOND_INIT}))],
    Relation.IMPLEMENTATION: [(frozenset({Kind.PROXY}), frozenset({Kind.SMART_CONTRACT, Kind.FACET}))],
    Relation.HOSTED_ON: [(frozenset({Kind.OFF_CHAIN_COMPONENT}), OFF_CHAIN_NODES)],
    Relation.USE_CREDENTIALS: [(frozenset({Kind.SERVER}), frozenset({Kind.CREDENTIAL}))],
}


def relation_allowed(relation: Relation, source: Kind, target: Kind) -> bool:
    return any(source in srcs and target in tgts for srcs, tgts in LEGALITY[relation])


def relation_allowed_from(relation: Relation, source: Kind) -> bool:
    return any(source in srcs for srcs, _ in LEGALITY[relation])


@dataclass(frozen=True)
class SecretRef:
    """Indirection to a secret value, resolved only at execution time.

    ``source`` is ``input`` (secrets file, then inputs), ``env`` or ``inline``.
    Inline secrets parse but draw a validation warning.
    """

    source: str
    key: str

    def to_yaml(self) -> Any:
        if self.source == "input":
            return {"get_input": self.key}
        if self.source == "env":
            return {"env": self.key}
        return self.key


@dataclass(frozen=True)
class Requirement:
    relation: Relation
    target: str
    function_name: str | None = None
    exclude: tuple[str, ...] = ()

    @property
    def label(self) -> str:
        return f"{self.relation}:{self.target}"


@dataclass(frozen=True)
class NodeInstance:
    name: str
    kind: Kind
    properties: dict[str, Any] = field(default_factory=dict)
    requirements: tuple[Requirement, ...] = ()
    type_name: str = field(default="", compare=False)

    @property
    def on_chain(self) -> bool:
        return self.kind in ON_CHAIN

    @property
    def deployable(self) -> bool:
        return self.kind in ON_CHAIN

    def requires(self, *relations: Relation) -> Iterator[Requirement]:
        return (r for r in self.requirements if r.relation in relations)

    def targets(self, *relations: Relation) -> list[str]:
        return [r.target for r in self.requires(*relations)]

    # common property accessors
    @property
    def abi(self) -> str | None:
        return self.properties.get("abi")

    @property
    def parameters(self) -> list[Any]:
        return list(self.properties.get("parameters") or [])

    @property
    def destroy_function(self) -> str | None:
        return self.properties.get("destroyFunction")

    @property
    def refund_address(self) -> str | None:
        return self.properties.get("refundAddress")


@dataclass(frozen=True)
class DeploymentModel:
    nodes: dict[str, NodeInstance]
    inputs: dict[str, Any] = field(default_factory=dict)
    source_hash: str = field(default="", compare=False)

    def __getitem__(self, name: str) -> NodeInstance:
        return self.nodes[name]

    def __contains__(self, name: object) -> bool:
        return name in self.nodes

    def __iter__(self) -> Iterator[NodeInstance]:
        return iter(self.nodes.values())

    def of_kind(self, *kinds: Kind) -> list[NodeInstance]:
        return sorted((n for n in self.nodes.values() if n.kind in kinds), key=lambda n: n.name)

    def network_of(self, node: NodeInstance) -> NodeInstance | None:
        """The network a node runs against; off-chain nodes inherit it from the contracts they use."""
        nets = node.targets(Relation.USE_NETWORK)
        if nets:
            return self.nodes[nets[0]]
        for target in sorted(node.targets(Relation.USE_CONTRACT)):
            nets = self.nodes[target].targets(Relation.USE_NETWORK)
            if nets:
                return self.nodes[nets[0]]
        return None
