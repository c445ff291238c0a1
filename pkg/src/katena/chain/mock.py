"""Deterministic in-memory chain for tests and dry runs.

Contract addresses are the low 20 bytes of keccak256(sender ‖ nonce as 8
big-endian bytes).  This is simpler than real CREATE derivation (which
RLP-encodes the pair) and deliberately not identical to it.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Iterable

from katena.chain.base import ChainBackend, EndpointInfo, Receipt, TxResult
from katena.errors import PatternError, TargetNotAlive, TransactionError
from katena.hashing import address_bytes, check_address, keccak256, selector
from katena.linker.abi import decode, parse_signature
from katena.patterns import DEFAULT_CUT_SIGNATURE, DiamondState

MOCK_CHAIN_ID = 1337
GENESIS_TIME = 1_700_000_000
BLOCK_TIME = 12


def mock_address(sender: str, nonce: int) -> str:
    return check_address("0x" + keccak256(address_bytes(sender) + nonce.to_bytes(8, "big"))[12:].hex())


@dataclass
class Account:
    payload_hash: str
    deployer: str
    alive: bool = True
    routes: DiamondState = field(default_factory=DiamondState)

    def to_dict(self) -> dict:
        return {
            "payloadHash": self.payload_hash,
            "deployer": self.deployer,
            "alive": self.alive,
            "routes": dict(sorted(self.routes.routes.items())),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Account":
        return cls(data["payloadHash"], data["deployer"], data["alive"], DiamondState(dict(data.get("routes", {}))))


class MockChain(ChainBackend):
    """Registry plus an append-only log of every transaction.

    ``fail_at_tx`` makes the transaction with that sequence number revert,
    which is how tests exercise halt-and-persist.  Calls whose selector
    matches a known diamondCut signature update the target's routing table.
    """

    name = "mock"

    def __init__(self, fail_at_tx: int | None = None, cut_signatures: Iterable[str] = (DEFAULT_CUT_SIGNATURE,)):
        self.fail_at_tx = fail_at_tx
        self._cut_types = {"0x" + selector(sig).hex(): parse_signature(sig)[1] for sig in cut_signatures}
        self._lock = threading.RLock()
        self.registry: dict[str, Account] = {}
        self.nonces: dict[str, int] = {}
        self.balances: dict[str, int] = {}
        self.call_log: list[dict] = []
        self.receipts: dict[str, Receipt] = {}

    # -- ChainBackend --------------------------------------------------------

    def check_endpoint(self) -> EndpointInfo:
        return EndpointInfo(True, MOCK_CHAIN_ID, "katena-mock", "mock://")

    def deploy(self, wallet, payload: bytes) -> TxResult:
        if not payload:
            raise TransactionError("empty deployment payload")
        sender = wallet.address
        with self._lock:
            seq = self._begin()
            nonce = self.nonces.get(sender, 0)
            address = mock_address(sender, nonce)
            if address in self.registry:
                raise TransactionError(f"address collision at {address}")
            self.nonces[sender] = nonce + 1
            self.registry[address] = Account("0x" + keccak256(payload).hex(), sender)
            return self._commit(seq, "deploy", sender, address, None, payload.hex(), contract=address)

    def call(self, wallet, target: str, calldata: bytes) -> TxResult:
        sender = wallet.address
        with self._lock:
            account = self._alive(target)
            seq = self._begin()
            sel = "0x" + calldata[:4].hex()
            if sel in self._cut_types:
                self._apply_cut(account, sel, calldata)
            self._bump(sender)
            return self._commit(seq, "call", sender, check_address(target), sel, calldata[4:].hex())

    def destroy(self, wallet, target: str, calldata: bytes, refund_address: str) -> TxResult:
        sender = wallet.address
        refund = check_address(refund_address)
        with self._lock:
            account = self._alive(target)
            target = check_address(target)
            seq = self._begin()
            account.alive = False
            self.balances[refund] = self.balances.get(refund, 0) + self.balances.pop(target, 0)
            self._bump(sender)
            sel = "0x" + calldata[:4].hex() if calldata else None
            return self._commit(seq, "destroy", sender, target, sel, calldata[4:].hex(), refund=refund)

    def get_receipt(self, tx_id: str) -> Receipt:
        with self._lock:
            if tx_id not in self.receipts:
                raise TransactionError(f"unknown transaction {tx_id}")
            return self.receipts[tx_id]

    def balance_of(self, address: str) -> int:
        with self._lock:
            return self.balances.get(check_address(address), 0)

    def now(self) -> int:
        with self._lock:
            return GENESIS_TIME + BLOCK_TIME * len(self.call_log)

    # -- inspection helpers --------------------------------------------------

    def fund(self, address: str, amount: int) -> None:
        with self._lock:
            address = check_address(address)
            self.balances[address] = self.balances.get(address, 0) + amount

    def is_alive(self, address: str) -> bool:
        account = self.registry.get(check_address(address))
        return bool(account and account.alive)

    def routes(self, diamond: str) -> dict[str, str]:
        """Selector -> facet address table of a diamond."""
        return dict(self.registry[check_address(diamond)].routes.routes)

    def deploy_sequence(self) -> list[str]:
        return [e["target"] for e in self.call_log if e["kind"] == "deploy"]

    # -- internals -----------------------------------------------------------

    def _alive(self, target: str) -> Account:
        account = self.registry.get(check_address(target))
        if account is None or not account.alive:
            raise TargetNotAlive(f"target not alive: {target}")
        return account

    def _begin(self) -> int:
        seq = len(self.call_log)
        if self.fail_at_tx is not None and seq == self.fail_at_tx:
            raise TransactionError(f"transaction {seq} reverted (injected fault)")
        return seq

    def _bump(self, sender: str) -> None:
        self.nonces[sender] = self.nonces.get(sender, 0) + 1

    def _apply_cut(self, account: Account, sel: str, calldata: bytes) -> None:
        cuts, _init, _data = decode(self._cut_types[sel], calldata[4:])
        trial = DiamondState(dict(account.routes.routes))
        try:
            for cut in cuts:
                trial.apply(tuple(cut))
        except PatternError as exc:
            raise TransactionError(f"diamondCut reverted: {exc}") from None
        account.routes = trial

    def _commit(self, seq, kind, caller, target, sel, args, contract=None, refund=None) -> TxResult:
        tx_id = "0x" + keccak256(b"katena-mock-tx" + seq.to_bytes(8, "big")).hex()
        entry = {"seq": seq, "kind": kind, "caller": caller, "target": target, "selector": sel, "args": args}
        if refund is not None:
            entry["refund"] = refund
        self.call_log.append(entry)
        self.receipts[tx_id] = Receipt(tx_id, 1, seq + 1, contract)
        return TxResult(tx_id, contract)

    # -- persistence ---------------------------------------------------------

    def to_dict(self) -> dict:
        with self._lock:
            return {
                "chainId": MOCK_CHAIN_ID,
                "registry": {a: acc.to_dict() for a, acc in sorted(self.registry.items())},
                "nonces": dict(sorted(self.nonces.items())),
                "balances": dict(sorted(self.balances.items())),
                "callLog": list(self.call_log),
                "receipts": {
                    t: {"status": r.status, "block": r.block, "contractAddress": r.contract_address}
                    for t, r in sorted(self.receipts.items())
                },
            }

    @classmethod
    def from_dict(cls, data: dict, **kwargs) -> "MockChain":
        chain = cls(**kwargs)
        chain.registry = {a: Account.from_dict(acc) for a, acc in data.get("registry", {}).items()}
        chain.nonces = dict(data.get("nonces", {}))
        chain.balances = {a: int(v) for a, v in data.get("balances", {}).items()}
        chain.call_log = list(data.get("callLog", []))
        chain.receipts = {
            t: Receipt(t, r["status"], r["block"], r.get("contractAddress"))
            for t, r in data.get("receipts", {}).items()
        }
        return chain
