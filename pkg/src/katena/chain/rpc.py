"""JSON-RPC 2.0 backend sending signed legacy transactions."""

from __future__ import annotations

import itertools
import logging
import threading
import time
from typing import Any

import requests

from katena.chain.base import ChainBackend, EndpointInfo, Receipt, TxResult
from katena.errors import AuthError, ChainError, EndpointError, TargetNotAlive, TransactionError
from katena.hashing import check_address
from katena.model.types import Kind, NodeInstance

log = logging.getLogger(__name__)

DEFAULT_GAS_PRICE = 1_000_000_000
DEFAULT_GAS_LIMIT = 6_000_000


class RpcBackend(ChainBackend):
    """Talks to a self-hosted node or a node service provider.

    ``auth`` is ``path`` (secret appended to the URL path, the common
    provider convention) or ``bearer`` (sent as an Authorization header).
    """

    name = "rpc"

    def __init__(
        self,
        url: str,
        *,
        secret: str | None = None,
        auth: str = "path",
        chain_id: int | None = None,
        gas_price: int = DEFAULT_GAS_PRICE,
        gas_limit: int = DEFAULT_GAS_LIMIT,
        poll_interval: float = 0.5,
        max_attempts: int = 120,
        connect_timeout: float = 3.0,
        read_timeout: float = 30.0,
        session: requests.Session | None = None,
    ):
        if auth not in ("path", "bearer"):
            raise ValueError("auth must be 'path' or 'bearer'")
        self.url = url.rstrip("/") + "/" + secret if secret and auth == "path" else url
        self.display_url = url
        self.headers = {"Content-Type": "application/json"}
        if secret and auth == "bearer":
            self.headers["Authorization"] = f"Bearer {secret}"
        self.expected_chain_id = chain_id
        self.gas_price = gas_price
        self.gas_limit = gas_limit
        self.poll_interval = poll_interval
        self.max_attempts = max_attempts
        self.timeout = (connect_timeout, read_timeout)
        self.session = session or requests.Session()
        self._ids = itertools.count(1)
        self._nonce_lock = threading.Lock()
        self._nonces: dict[str, int] = {}
        self._chain_id: int | None = None

    @classmethod
    def from_network(cls, node: NodeInstance, secret: str | None = None, **kwargs) -> "RpcBackend":
        props = node.properties
        if node.kind is Kind.NODE_SERVICE_PROVIDER:
            return cls(props["url"], secret=secret, auth=props.get("auth", "path"), chain_id=props.get("chainId"), **kwargs)
        return cls(f"http://{props['host']}:{props['port']}", chain_id=props.get("chainId"), **kwargs)

    # -- transport -----------------------------------------------------------

    def rpc(self, method: str, params: list | None = None) -> Any:
        body = {"jsonrpc": "2.0", "id": next(self._ids), "method": method, "params": params or []}
        try:
            resp = self.session.post(self.url, json=body, headers=self.headers, timeout=self.timeout)
        except requests.Timeout:
            raise EndpointError(f"{self.display_url}: timed out after {self.timeout}s") from None
        except requests.ConnectionError as exc:
            raise EndpointError(f"{self.display_url}: connection failed ({type(exc).__name__})") from None
        if resp.status_code in (401, 403):
            raise AuthError(f"{self.display_url}: endpoint rejected the credentials (HTTP {resp.status_code})")
        if resp.status_code >= 400:
            raise EndpointError(f"{self.display_url}: HTTP {resp.status_code}")
        try:
            data = resp.json()
        except ValueError:
            raise EndpointError(f"{self.display_url}: response is not JSON") from None
        if data.get("error"):
            err = data["error"]
            raise ChainError(f"{method}: {err.get('message', err)}")
        return data.get("result")

    # -- ChainBackend --------------------------------------------------------

    def check_endpoint(self) -> EndpointInfo:
        try:
            client = self.rpc("web3_clientVersion") or ""
        except EndpointError:
            raise
        except ChainError:
            client = ""  # some providers disable web3_* methods
        chain_id = int(self.rpc("eth_chainId"), 16)
        if self.expected_chain_id is not None and chain_id != self.expected_chain_id:
            raise EndpointError(f"{self.display_url}: chain id {chain_id}, expected {self.expected_chain_id}")
        self._chain_id = chain_id
        return EndpointInfo(True, chain_id, client, self.display_url)

    def _next_nonce(self, sender: str) -> int:
        with self._nonce_lock:
            if sender not in self._nonces:
                self._nonces[sender] = int(self.rpc("eth_getTransactionCount", [sender, "pending"]), 16)
            nonce = self._nonces[sender]
            self._nonces[sender] += 1
            return nonce

    def _send(self, wallet, to: str | None, data: bytes) -> tuple[str, dict]:
        if self._chain_id is None:
            self.check_endpoint()
        sender = wallet.address
        preflight = {"from": sender, "data": "0x" + data.hex()}
        if to is not None:
            preflight["to"] = to
        try:
            self.rpc("eth_call", [preflight, "latest"])
        except EndpointError:
            raise
        except ChainError as exc:
            raise TransactionError(f"preflight rejected: {exc}") from None
        tx = {
            "nonce": self._next_nonce(sender),
            "gasPrice": self.gas_price,
            "gas": self.gas_limit,
            "value": 0,
            "data": data,
            "chainId": self._chain_id,
        }
        if to is not None:
            tx["to"] = to
        raw = wallet.sign_transaction(tx)
        try:
            tx_hash = self.rpc("eth_sendRawTransaction", ["0x" + raw.hex()])
        except EndpointError:
            raise
        except ChainError as exc:
            with self._nonce_lock:
                self._nonces.pop(sender, None)  # re-sync after nonce conflicts
            raise TransactionError(str(exc)) from None
        receipt = self._wait(tx_hash)
        if int(receipt.get("status", "0x0"), 16) != 1:
            raise TransactionError(f"transaction {tx_hash} failed on chain")
        return tx_hash, receipt

    def _wait(self, tx_hash: str) -> dict:
        for attempt in range(self.max_attempts):
            receipt = self.rpc("eth_getTransactionReceipt", [tx_hash])
            if receipt:
                return receipt
            if attempt + 1 < self.max_attempts:
                time.sleep(self.poll_interval)
        raise TransactionError(f"no receipt for {tx_hash} after {self.max_attempts} attempts")

    def _require_code(self, target: str) -> str:
        target = check_address(target)
        code = self.rpc("eth_getCode", [target, "latest"])
        if not code or code in ("0x", "0x0"):
            raise TargetNotAlive(f"target not alive: {target}")
        return target

    def deploy(self, wallet, payload: bytes) -> TxResult:
        if not payload:
            raise TransactionError("empty deployment payload")
        tx_hash, receipt = self._send(wallet, None, payload)
        address = receipt.get("contractAddress")
        if not address:
            raise TransactionError(f"deployment {tx_hash} produced no contract address")
        return TxResult(tx_hash, check_address(address))

    def call(self, wallet, target: str, calldata: bytes) -> TxResult:
        tx_hash, _ = self._send(wallet, self._require_code(target), calldata)
        return TxResult(tx_hash)

    def destroy(self, wallet, target: str, calldata: bytes, refund_address: str) -> TxResult:
        log.info("destroying %s, refund to %s", target, refund_address)
        tx_hash, _ = self._send(wallet, self._require_code(target), calldata)
        return TxResult(tx_hash)

    def get_receipt(self, tx_id: str) -> Receipt:
        r = self.rpc("eth_getTransactionReceipt", [tx_id])
        if not r:
            raise TransactionError(f"unknown transaction {tx_id}")
        addr = r.get("contractAddress")
        return Receipt(tx_id, int(r.get("status", "0x0"), 16), int(r["blockNumber"], 16), check_address(addr) if addr else None)

    def balance_of(self, address: str) -> int:
        return int(self.rpc("eth_getBalance", [check_address(address), "latest"]), 16)

    def now(self) -> int:
        block = self.rpc("eth_getBlockByNumber", ["latest", False])
        return int(block["timestamp"], 16) if block else int(time.time())
