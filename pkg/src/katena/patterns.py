"""Upgradeable-contract patterns: EIP-2535 diamonds and ERC-1967 style proxies."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from enum import IntEnum
from typing import Iterable, Mapping, Sequence

from katena.errors import AbiError, PatternError
from katena.hashing import check_address
from katena.linker.abi import encode_with_selector, parse_signature
from katena.model.artifacts import ArtifactStore, ContractArtifact
from katena.model.types import DeploymentModel, NodeInstance, Relation

log = logging.getLogger(__name__)

ZERO_ADDRESS = "0x0000000000000000000000000000000000000000"
DEFAULT_CUT_SIGNATURE = "diamondCut((address,uint8,bytes4[])[],address,bytes)"
DEFAULT_UPGRADE_SIGNATURE = "upgradeTo(address)"


class CutAction(IntEnum):
    ADD = 0
    REPLACE = 1
    REMOVE = 2


@dataclass(frozen=True)
class FacetCut:
    facet: str
    action: CutAction
    selectors: tuple[str, ...]
    facet_address: str | None = None

    def __post_init__(self):
        if not self.selectors:
            raise PatternError(f"cut for {self.facet!r} carries no selectors")
        if len(set(self.selectors)) != len(self.selectors):
            raise PatternError(f"cut for {self.facet!r} repeats a selector")

    def resolved(self, address: str) -> "FacetCut":
        return replace(self, facet_address=check_address(address))

    def abi_value(self) -> tuple:
        # EIP-2535 requires the zero address for Remove
        if self.action is CutAction.REMOVE:
            addr = ZERO_ADDRESS
        elif self.facet_address is None:
            raise PatternError(f"facet {self.facet!r} has no address yet")
        else:
            addr = self.facet_address
        return (addr, int(self.action), list(self.selectors))

    def to_dict(self) -> dict:
        return {
            "facet": self.facet,
            "action": self.action.name,
            "selectors": list(self.selectors),
            "facetAddress": self.facet_address,
        }


def facet_selectors(artifact: ContractArtifact, exclude: Iterable[str] = ()) -> list[str]:
    """Selectors a diamond should route to this facet, ascending."""
    if not artifact.functions:
        raise PatternError(f"facet artifact {artifact.name!r} declares no functions")
    exclude = set(exclude)
    unknown = exclude - {f.name for f in artifact.functions}
    if unknown:
        log.warning("%s: exclude names not in ABI: %s", artifact.name, ", ".join(sorted(unknown)))
    return sorted({f.selector for f in artifact.functions if f.name not in exclude})


def cut_signature(cut_artifact: ContractArtifact | None) -> str:
    """Canonical diamondCut signature, taken from the cut facet's own ABI when it has one."""
    if cut_artifact is not None:
        try:
            return cut_artifact.find_function("diamondCut").signature
        except AbiError:
            log.warning("%s has no unique diamondCut function; using %s", cut_artifact.name, DEFAULT_CUT_SIGNATURE)
    return DEFAULT_CUT_SIGNATURE


def encode_cut(
    cuts: Sequence[FacetCut],
    signature: str = DEFAULT_CUT_SIGNATURE,
    init_address: str = ZERO_ADDRESS,
    init_calldata: bytes = b"",
) -> bytes:
    _, types = parse_signature(signature)
    values = [[c.abi_value() for c in cuts], init_address, init_calldata]
    if len(types) != 3:
        raise PatternError(f"unsupported diamondCut signature {signature}")
    return encode_with_selector(signature, values)


@dataclass(frozen=True)
class InitDescriptor:
    diamond: str
    init: str
    warning: str


@dataclass(frozen=True)
class DiamondWiring:
    diamond: str
    cut: str
    cuts: tuple[FacetCut, ...]
    init: InitDescriptor | None = None


def plan_diamond_wiring(diamond: NodeInstance, model: DeploymentModel, artifacts: ArtifactStore) -> DiamondWiring:
    cut_targets = diamond.targets(Relation.USE_CUT)
    if len(cut_targets) != 1:
        raise PatternError(f"diamond {diamond.name!r} needs exactly one useCut requirement, has {len(cut_targets)}")
    owner: dict[str, str] = {}
    cuts = []
    for req in sorted(diamond.requires(Relation.USE_FACET), key=lambda r: r.target):
        artifact = artifacts.get(model[req.target].abi)
        sels = facet_selectors(artifact, req.exclude)
        for sel in sels:
            if sel in owner and owner[sel] != req.target:
                fn = next(f.signature for f in artifact.functions if f.selector == sel)
                raise PatternError(
                    f"diamond {diamond.name!r}: selector {sel} ({fn}) exported by both "
                    f"{owner[sel]!r} and {req.target!r}"
                )
            owner[sel] = req.target
        cuts.append(FacetCut(req.target, CutAction.ADD, tuple(sels)))
    init = None
    inits = diamond.targets(Relation.USE_INIT)
    if inits:
        msg = f"diamond {diamond.name!r}: init facet {inits[0]!r} is modelled but its initialization call is not made"
        log.warning(msg)
        init = InitDescriptor(diamond.name, inits[0], msg)
    return DiamondWiring(diamond.name, cut_targets[0], tuple(cuts), init)


def plan_facet_removal(diamond: str, facet: str, attached: Mapping[str, Sequence[str]]) -> FacetCut:
    """Remove cut for exactly the selectors previously added for ``facet``.

    ``attached`` maps facet name -> selectors currently routed (from the record).
    """
    if facet not in attached or not attached[facet]:
        raise PatternError(f"facet {facet!r} is not attached to diamond {diamond!r}")
    return FacetCut(facet, CutAction.REMOVE, tuple(sorted(attached[facet])))


def plan_facet_replacement(facet: str, old: Iterable[str], new: Iterable[str]) -> list[FacetCut]:
    """Cuts moving a diamond from an old facet deployment to a new one."""
    old, new = set(old), set(new)
    cuts = []
    if new & old:
        cuts.append(FacetCut(facet, CutAction.REPLACE, tuple(sorted(new & old))))
    if new - old:
        cuts.append(FacetCut(facet, CutAction.ADD, tuple(sorted(new - old))))
    if old - new:
        cuts.append(FacetCut(facet, CutAction.REMOVE, tuple(sorted(old - new))))
    return cuts


@dataclass
class DiamondState:
    """Selector routing table of one diamond, as tracked by the mock chain."""

    routes: dict[str, str] = field(default_factory=dict)

    def apply(self, cut_value: tuple) -> None:
        address, action, selectors = cut_value
        action = CutAction(action)
        sels = ["0x" + s.hex() if isinstance(s, bytes) else s for s in selectors]
        if action is CutAction.ADD:
            clash = [s for s in sels if s in self.routes]
            if clash:
                raise PatternError(f"selectors already routed: {', '.join(clash)}")
            for s in sels:
                self.routes[s] = address
        elif action is CutAction.REPLACE:
            missing = [s for s in sels if s not in self.routes]
            if missing:
                raise PatternError(f"cannot replace unrouted selectors: {', '.join(missing)}")
            for s in sels:
                self.routes[s] = address
        else:
            if address != ZERO_ADDRESS:
                raise PatternError("remove cut must use the zero address")
            missing = [s for s in sels if s not in self.routes]
            if missing:
                raise PatternError(f"cannot remove unrouted selectors: {', '.join(missing)}")
            for s in sels:
                del self.routes[s]


@dataclass(frozen=True)
class CallDescriptor:
    node: str
    signature: str
    args: tuple
    calldata: bytes


def wire_proxy(proxy: NodeInstance, implementation_address: str | None, artifact: ContractArtifact | None = None) -> CallDescriptor:
    """Calldata pointing ``proxy`` at a (new) implementation.

    The setter is ``upgradeTo(address)`` unless the node overrides
    ``upgradeFunction``; the proxy's ABI is consulted when it declares it.
    """
    if not implementation_address:
        raise PatternError(f"proxy {proxy.name!r} has no implementation address")
    name = proxy.properties.get("upgradeFunction") or "upgradeTo"
    signature = f"{name}(address)"
    if artifact is not None:
        try:
            signature = artifact.find_function(name, arity=1).signature
        except AbiError:
            pass
    args = (check_address(implementation_address),)
    return CallDescriptor(proxy.name, signature, args, encode_with_selector(signature, args))
