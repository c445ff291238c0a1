"""Bytecode linking, constructor binding and ABI call encoding."""

from katena.linker.abi import decode, encode, parse_signature, parse_type
from katena.linker.binding import (
    ConstructorBinding,
    bind_constructor,
    constructor_binding,
    encode_constructor_call,
    encode_function_call,
)
from katena.linker.placeholders import (
    LinkPlaceholder,
    extract_placeholders,
    link_all,
    link_library,
    placeholder_digest,
)

__all__ = [
    "ConstructorBinding",
    "LinkPlaceholder",
    "bind_constructor",
    "constructor_binding",
    "decode",
    "encode",
    "encode_constructor_call",
    "encode_function_call",
    "extract_placeholders",
    "link_all",
    "link_library",
    "parse_signature",
    "parse_type",
    "placeholder_digest",
]
