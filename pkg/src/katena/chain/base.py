"""Backend interface shared by the in-memory chain and the JSON-RPC client."""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from katena.chain.wallet import SigningWallet


@dataclass(frozen=True)
class EndpointInfo:
    reachable: bool
    chain_id: int
    client: str = ""
    url: str = ""

    def to_dict(self) -> dict:
        return {"reachable": self.reachable, "chainId": self.chain_id, "client": self.client, "url": self.url}


@dataclass(frozen=True)
class TxResult:
    tx_id: str
    address: str | None = None


@dataclass(frozen=True)
class Receipt:
    tx_id: str
    status: int
    block: int
    contract_address: str | None = None


class ChainBackend(ABC):
    """What the orchestrator needs from a blockchain endpoint.

    ``deploy`` takes the full creation payload (linked bytecode followed by
    encoded constructor arguments); ``call`` and ``destroy`` take complete
    calldata including the selector.
    """

    name = "backend"

    @abstractmethod
    def check_endpoint(self) -> EndpointInfo: ...

    @abstractmethod
    def deploy(self, wallet: SigningWallet, payload: bytes) -> TxResult: ...

    @abstractmethod
    def call(self, wallet: SigningWallet, target: str, calldata: bytes) -> TxResult: ...

    @abstractmethod
    def destroy(self, wallet: SigningWallet, target: str, calldata: bytes, refund_address: str) -> TxResult: ...

    @abstractmethod
    def get_receipt(self, tx_id: str) -> Receipt: ...

    @abstractmethod
    def balance_of(self, address: str) -> int: ...

    @abstractmethod
    def now(self) -> int:
        """Timestamp of the latest block, in seconds."""
