"""Keccak-256 and address helpers."""

from __future__ import annotations

import re

from Crypto.Hash import keccak

_ADDRESS_RE = re.compile(r"^0x[0-9a-fA-F]{40}$")


def keccak256(data: bytes | str) -> bytes:
    if isinstance(data, str):
        data = data.encode("utf-8")
    return keccak.new(digest_bits=256, data=data).digest()


def selector(signature: str) -> bytes:
    """First four bytes of keccak-256 over a canonical signature like ``transfer(address,uint256)``."""
    return keccak256(signature)[:4]


def is_address(value: object) -> bool:
    return isinstance(value, str) and bool(_ADDRESS_RE.match(value))


def to_checksum_address(value: str | bytes) -> str:
    """EIP-55 mixed-case encoding."""
    if isinstance(value, bytes):
        if len(value) != 20:
            raise ValueError("address must be 20 bytes")
        lower = value.hex()
    else:
        if not is_address(value):
            raise ValueError(f"not a 20-byte hex address: {value!r}")
        lower = value[2:].lower()
    digest = keccak256(lower.encode("ascii")).hex()
    return "0x" + "".join(
        c.upper() if c.isalpha() and int(digest[i], 16) >= 8 else c
        for i, c in enumerate(lower)
    )


def check_address(value: str) -> str:
    """Validate an address literal and return its checksummed form.

    All-lowercase and all-uppercase hex are accepted as-is; mixed case must
    carry a valid EIP-55 checksum.
    """
    if not is_address(value):
        raise ValueError(f"not a 20-byte hex address: {value!r}")
    body = value[2:]
    checksummed = to_checksum_address(value)
    if body != body.lower() and body != body.upper() and value != checksummed:
        raise ValueError(f"bad EIP-55 checksum: {value}")
    return checksummed


def address_bytes(value: str) -> bytes:
    return bytes.fromhex(check_address(value)[2:])
