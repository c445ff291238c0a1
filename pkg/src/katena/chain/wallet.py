"""Signing wallets and secret resolution."""

from __future__ import annotations

import os
import stat
from pathlib import Path
from typing import Any, Mapping

import yaml
from eth_account import Account

from katena.errors import SecretsError
from katena.hashing import check_address
from katena.model.types import SecretRef

SECRETS_ENV = "KATENA_SECRETS"


class SigningWallet:
    """A secp256k1 key and the address derived from it."""

    def __init__(self, private_key: str | bytes):
        try:
            self._account = Account.from_key(private_key)
        except Exception as exc:  # eth-account raises several types for malformed keys
            raise SecretsError(f"invalid private key: {type(exc).__name__}") from None

    @property
    def address(self) -> str:
        return check_address(self._account.address)

    def sign_transaction(self, tx: dict) -> bytes:
        signed = self._account.sign_transaction(tx)
        raw = getattr(signed, "raw_transaction", None) or getattr(signed, "rawTransaction")
        return bytes(raw)

    def __repr__(self) -> str:
        return f"SigningWallet({self.address})"


def load_secrets(path: str | Path | None = None) -> dict[str, Any]:
    """Read a YAML secrets mapping; ``KATENA_SECRETS`` overrides ``path``.

    Files readable by other users are refused.
    """
    path = os.environ.get(SECRETS_ENV) or path
    if not path:
        return {}
    path = Path(path)
    try:
        mode = path.stat().st_mode
    except OSError as exc:
        raise SecretsError(f"cannot read secrets file {path}: {exc.strerror}") from None
    if mode & stat.S_IROTH:
        raise SecretsError(f"secrets file {path} is world-readable; chmod o-r it first")
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except yaml.YAMLError as exc:
        raise SecretsError(f"secrets file {path}: YAML syntax error: {exc}") from None
    if not isinstance(data, dict):
        raise SecretsError(f"secrets file {path} must be a mapping")
    return data


def resolve_secret(value: Any, secrets: Mapping[str, Any], inputs: Mapping[str, Any], where: str = "secret") -> str:
    """Secrets file first, then model inputs, then the environment."""
    if not isinstance(value, SecretRef):
        if value is None:
            raise SecretsError(f"{where}: missing")
        return str(value)
    if value.source == "inline":
        return value.key
    if value.source == "env":
        if value.key not in os.environ:
            raise SecretsError(f"{where}: environment variable {value.key} is not set")
        return os.environ[value.key]
    for source in (secrets, inputs):
        if value.key in source and source[value.key] is not None:
            return str(source[value.key])
    if value.key in os.environ:
        return os.environ[value.key]
    raise SecretsError(f"{where}: secret {value.key!r} not found in secrets file, inputs or environment")


def wallet_from_node(node, secrets: Mapping[str, Any], inputs: Mapping[str, Any]) -> SigningWallet:
    key = resolve_secret(node.properties.get("privateKey"), secrets, inputs, f"{node.name}.privateKey")
    wallet = SigningWallet(key)
    declared = node.properties.get("publicKey")
    if declared and check_address(declared) != wallet.address:
        raise SecretsError(f"{node.name}: publicKey {declared} does not match the private key's address {wallet.address}")
    return wallet
