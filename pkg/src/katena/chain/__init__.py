"""Blockchain backends: a deterministic in-memory chain and a JSON-RPC client."""

from katena.chain.base import ChainBackend, EndpointInfo, Receipt, TxResult
from katena.chain.mock import MOCK_CHAIN_ID, MockChain, mock_address
from katena.chain.rpc import RpcBackend
from katena.chain.wallet import SigningWallet, load_secrets, resolve_secret, wallet_from_node

__all__ = [
    "MOCK_CHAIN_ID",
    "ChainBackend",
    "EndpointInfo",
    "MockChain",
    "Receipt",
    "RpcBackend",
    "SigningWallet",
    "TxResult",
    "load_secrets",
    "mock_address",
    "resolve_secret",
    "wallet_from_node",
]
