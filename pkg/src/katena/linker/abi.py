"""Solidity ABI types, literal coercion and head/tail encoding.

Supported: ``uint<N>``, ``int<N>``, ``address``, ``bool``, ``bytes<N>``,
``bytes``, ``string``, fixed and dynamic arrays of those, and tuples.
Tuples are only needed for the EIP-2535 ``diamondCut`` argument but are
handled generically.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation
from typing import Any, Sequence

from katena.errors import AbiError
from katena.hashing import check_address, selector, to_checksum_address

_ELEMENTARY_RE = re.compile(r"^(uint|int|bytes)(\d*)$")
_ARRAY_SUFFIX_RE = re.compile(r"\[(\d*)\]$")


@dataclass(frozen=True)
class AbiType:
    kind: str  # uint int address bool fixedbytes bytes string array tuple
    size: int = 0  # bit width for ints, byte width for fixedbytes
    item: "AbiType | None" = None
    length: int | None = None  # None means dynamic array
    components: tuple["AbiType", ...] = ()

    @property
    def dynamic(self) -> bool:
        if self.kind in ("bytes", "string"):
            return True
        if self.kind == "array":
            return self.length is None or self.item.dynamic
        if self.kind == "tuple":
            return any(c.dynamic for c in self.components)
        return False

    @property
    def head_size(self) -> int:
        """Bytes this type occupies in the head of an enclosing tuple."""
        if self.dynamic:
            return 32
        if self.kind == "array":
            return self.length * self.item.head_size
        if self.kind == "tuple":
            return sum(c.head_size for c in self.components)
        return 32

    def __str__(self) -> str:
        if self.kind in ("uint", "int"):
            return f"{self.kind}{self.size}"
        if self.kind == "fixedbytes":
            return f"bytes{self.size}"
        if self.kind == "array":
            return f"{self.item}[{'' if self.length is None else self.length}]"
        if self.kind == "tuple":
            return "(" + ",".join(str(c) for c in self.components) + ")"
        return self.kind


def _split_top_level(body: str) -> list[str]:
    parts, depth, start = [], 0, 0
    for i, ch in enumerate(body):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
            if depth < 0:
                raise AbiError(f"unbalanced parentheses in {body!r}")
        elif ch == "," and depth == 0:
            parts.append(body[start:i])
            start = i + 1
    if depth:
        raise AbiError(f"unbalanced parentheses in {body!r}")
    parts.append(body[start:])
    return parts


def parse_type(text: str) -> AbiType:
    text = text.strip()
    if not text:
        raise AbiError("empty ABI type")
    m = _ARRAY_SUFFIX_RE.search(text)
    if m:
        item = parse_type(text[: m.start()])
        length = int(m.group(1)) if m.group(1) else None
        if length == 0:
            raise AbiError(f"zero-length fixed array: {text}")
        return AbiType("array", item=item, length=length)
    if text.startswith("("):
        if not text.endswith(")"):
            raise AbiError(f"malformed tuple type: {text}")
        body = text[1:-1]
        comps = tuple(parse_type(p) for p in _split_top_level(body)) if body else ()
        return AbiType("tuple", components=comps)
    if text in ("address", "bool", "string"):
        return AbiType(text)
    m = _ELEMENTARY_RE.match(text)
    if not m:
        raise AbiError(f"unsupported ABI type: {text}")
    base, digits = m.groups()
    if base == "bytes":
        if not digits:
            return AbiType("bytes")
        n = int(digits)
        if not 1 <= n <= 32:
            raise AbiError(f"invalid fixed bytes width: {text}")
        return AbiType("fixedbytes", size=n)
    n = int(digits) if digits else 256
    if n % 8 or not 8 <= n <= 256:
        raise AbiError(f"invalid integer width: {text}")
    return AbiType(base, size=n)


def type_from_abi_param(param: dict) -> AbiType:
    """Build a type from a JSON ABI parameter entry, expanding ``tuple`` components."""
    raw = param.get("type")
    if not isinstance(raw, str):
        raise AbiError(f"ABI parameter without type: {param!r}")
    if raw.startswith("tuple"):
        comps = ",".join(str(type_from_abi_param(c)) for c in param.get("components", []))
        raw = f"({comps})" + raw[len("tuple"):]
    return parse_type(raw)


def canonical_signature(name: str, types: Sequence[AbiType | str]) -> str:
    parts = (str(parse_type(t) if isinstance(t, str) else t) for t in types)
    return f"{name}(" + ",".join(parts) + ")"


def parse_signature(signature: str) -> tuple[str, list[AbiType]]:
    """Split ``name(t1,t2)`` into the name and parsed argument types."""
    signature = signature.replace(" ", "")
    open_idx = signature.find("(")
    if open_idx <= 0 or not signature.endswith(")"):
        raise AbiError(f"malformed signature: {signature!r}")
    name = signature[:open_idx]
    body = signature[open_idx + 1 : -1]
    types = [parse_type(p) for p in _split_top_level(body)] if body else []
    return name, types


# -- coercion -----------------------------------------------------------------


def _coerce_int(t: AbiType, value: Any) -> int:
    if isinstance(value, bool):
        raise AbiError(f"boolean is not a valid {t}")
    if isinstance(value, int):
        out = value
    elif isinstance(value, float):
        if not value.is_integer():
            raise AbiError(f"non-integral value {value!r} for {t}; pre-scale decimals")
        out = int(value)
    elif isinstance(value, str):
        s = value.strip().replace("_", "")
        try:
            if s.lower().startswith(("0x", "-0x")):
                out = int(s, 16)
            else:
                d = Decimal(s)
                if d != d.to_integral_value():
                    raise AbiError(f"non-integral value {value!r} for {t}; pre-scale decimals")
                out = int(d)
        except (ValueError, InvalidOperation) as exc:
            raise AbiError(f"cannot read {value!r} as {t}") from exc
    else:
        raise AbiError(f"cannot read {value!r} as {t}")
    if t.kind == "uint":
        lo, hi = 0, 2**t.size - 1
    else:
        lo, hi = -(2 ** (t.size - 1)), 2 ** (t.size - 1) - 1
    if not lo <= out <= hi:
        raise AbiError(f"value {out} out of range for {t}")
    return out


def _coerce_bytes(t: AbiType, value: Any) -> bytes:
    if isinstance(value, (bytes, bytearray)):
        out = bytes(value)
    elif isinstance(value, str):
        s = value[2:] if value.startswith(("0x", "0X")) else value
        try:
            out = bytes.fromhex(s)
        except ValueError as exc:
            raise AbiError(f"invalid hex for {t}: {value!r}") from exc
    else:
        raise AbiError(f"cannot read {value!r} as {t}")
    if t.kind == "fixedbytes" and len(out) != t.size:
        raise AbiError(f"{t} needs exactly {t.size} bytes, got {len(out)}")
    return out


def coerce(t: AbiType | str, value: Any) -> Any:
    """Convert a model literal to the canonical Python value for ``t``.

    Range and shape are checked; anything that would need silent rounding or
    truncation is rejected.
    """
    if isinstance(t, str):
        t = parse_type(t)
    k = t.kind
    if k in ("uint", "int"):
        return _coerce_int(t, value)
    if k == "address":
        if isinstance(value, (bytes, bytearray)) and len(value) == 20:
            value = "0x" + bytes(value).hex()
        if not isinstance(value, str):
            raise AbiError(f"cannot read {value!r} as address")
        try:
            return check_address(value)
        except ValueError as exc:
            raise AbiError(str(exc)) from exc
    if k == "bool":
        if isinstance(value, bool):
            return value
        if isinstance(value, str) and value.lower() in ("true", "false"):
            return value.lower() == "true"
        if isinstance(value, int) and value in (0, 1):
            return bool(value)
        raise AbiError(f"cannot read {value!r} as bool")
    if k in ("bytes", "fixedbytes"):
        return _coerce_bytes(t, value)
    if k == "string":
        if not isinstance(value, str):
            raise AbiError(f"cannot read {value!r} as string")
        return value
    if k == "array":
        if not isinstance(value, (list, tuple)):
            raise AbiError(f"{t} needs a list, got {value!r}")
        if t.length is not None and len(value) != t.length:
            raise AbiError(f"{t} needs {t.length} items, got {len(value)}")
        return [coerce(t.item, v) for v in value]
    if k == "tuple":
        if not isinstance(value, (list, tuple)) or len(value) != len(t.components):
            raise AbiError(f"{t} needs {len(t.components)} fields, got {value!r}")
        return tuple(coerce(c, v) for c, v in zip(t.components, value))
    raise AbiError(f"unsupported ABI type: {t}")


# -- encoding -----------------------------------------------------------------


def _pad_right(data: bytes) -> bytes:
    return data + b"\x00" * (-len(data) % 32)


def _encode_one(t: AbiType, value: Any) -> bytes:
    k = t.kind
    if k == "uint":
        return value.to_bytes(32, "big")
    if k == "int":
        return value.to_bytes(32, "big", signed=True)
    if k == "address":
        return b"\x00" * 12 + bytes.fromhex(value[2:])
    if k == "bool":
        return (1 if value else 0).to_bytes(32, "big")
    if k == "fixedbytes":
        return _pad_right(value)
    if k in ("bytes", "string"):
        raw = value.encode("utf-8") if k == "string" else value
        return len(raw).to_bytes(32, "big") + _pad_right(raw)
    if k == "array":
        body = _encode_sequence([t.item] * len(value), value)
        if t.length is None:
            return len(value).to_bytes(32, "big") + body
        return body
    if k == "tuple":
        return _encode_sequence(t.components, value)
    raise AbiError(f"unsupported ABI type: {t}")


def _encode_sequence(types: Sequence[AbiType], values: Sequence[Any]) -> bytes:
    head_len = sum(t.head_size for t in types)
    heads, tails = [], []
    offset = head_len
    for t, v in zip(types, values):
        enc = _encode_one(t, v)
        if t.dynamic:
            heads.append(offset.to_bytes(32, "big"))
            tails.append(enc)
            offset += len(enc)
        else:
            heads.append(enc)
    return b"".join(heads) + b"".join(tails)


def encode(types: Sequence[AbiType | str], values: Sequence[Any]) -> bytes:
    """ABI-encode ``values`` as the argument tuple ``types``."""
    parsed = [parse_type(t) if isinstance(t, str) else t for t in types]
    if len(parsed) != len(values):
        raise AbiError(f"expected {len(parsed)} values, got {len(values)}")
    coerced = [coerce(t, v) for t, v in zip(parsed, values)]
    return _encode_sequence(parsed, coerced)


def encode_with_selector(signature: str, values: Sequence[Any]) -> bytes:
    name, types = parse_signature(signature)
    return selector(canonical_signature(name, types)) + encode(types, values)


# -- decoding -----------------------------------------------------------------


def _word(data: bytes, pos: int) -> bytes:
    if pos + 32 > len(data):
        raise AbiError("data too short")
    return data[pos : pos + 32]


def _decode_one(t: AbiType, data: bytes, pos: int) -> Any:
    k = t.kind
    if k == "uint":
        return int.from_bytes(_word(data, pos), "big")
    if k == "int":
        return int.from_bytes(_word(data, pos), "big", signed=True)
    if k == "address":
        return to_checksum_address(_word(data, pos)[12:])
    if k == "bool":
        return int.from_bytes(_word(data, pos), "big") != 0
    if k == "fixedbytes":
        return _word(data, pos)[: t.size]
    if k in ("bytes", "string"):
        n = int.from_bytes(_word(data, pos), "big")
        raw = data[pos + 32 : pos + 32 + n]
        if len(raw) != n:
            raise AbiError("data too short")
        return raw.decode("utf-8") if k == "string" else raw
    if k == "array":
        if t.length is None:
            n = int.from_bytes(_word(data, pos), "big")
            return list(_decode_sequence([t.item] * n, data, pos + 32))
        return list(_decode_sequence([t.item] * t.length, data, pos))
    if k == "tuple":
        return tuple(_decode_sequence(t.components, data, pos))
    raise AbiError(f"unsupported ABI type: {t}")


def _decode_sequence(types: Sequence[AbiType], data: bytes, base: int) -> list[Any]:
    out, pos = [], base
    for t in types:
        if t.dynamic:
            offset = int.from_bytes(_word(data, pos), "big")
            out.append(_decode_one(t, data, base + offset))
        else:
            out.append(_decode_one(t, data, pos))
        pos += t.head_size
    return out


def decode(types: Sequence[AbiType | str], data: bytes) -> list[Any]:
    parsed = [parse_type(t) if isinstance(t, str) else t for t in types]
    return _decode_sequence(parsed, data, 0)
