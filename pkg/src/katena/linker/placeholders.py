"""Library link placeholders in unlinked EVM bytecode.

Two formats are recognised, both exactly 40 hex characters wide so that the
20-byte address can be written in place:

* solc >= 0.5: ``__$`` + first 34 hex chars of keccak256("<source>:<Lib>") + ``$__``
* legacy solc: ``__`` + library name right-padded with ``_`` to 36 chars + ``__``
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from katena.errors import LinkError
from katena.hashing import check_address, keccak256

PLACEHOLDER_WIDTH = 40
_HEX = frozenset("0123456789abcdefABCDEF")
_DIGEST_RE = re.compile(r"^[0-9a-fA-F]{34}$")


@dataclass(frozen=True)
class LinkPlaceholder:
    start: int  # offset into the hex string, without any 0x prefix
    id: str  # 34-char digest (modern) or unpadded library name (legacy)
    modern: bool
    resolved_name: str | None = None

    @property
    def end(self) -> int:
        return self.start + PLACEHOLDER_WIDTH

    @property
    def text(self) -> str:
        if self.modern:
            return f"__${self.id}$__"
        return "__" + self.id.ljust(36, "_") + "__"


def _strip_prefix(bytecode: str) -> tuple[str, str]:
    if bytecode.startswith(("0x", "0X")):
        return bytecode[:2], bytecode[2:]
    return "", bytecode


def placeholder_digest(fully_qualified_name: str) -> str:
    """Digest used by solc >= 0.5, e.g. for ``contracts/Math.sol:Math``."""
    return keccak256(fully_qualified_name).hex()[:34]


def legacy_placeholder_name(fully_qualified_name: str) -> str:
    """40-char legacy placeholder text for a library name."""
    return "__" + fully_qualified_name[:36].ljust(36, "_") + "__"


def extract_placeholders(bytecode: str, names: dict[str, str] | None = None) -> list[LinkPlaceholder]:
    """Find every link placeholder; verify the rest of the string is hex.

    ``names`` optionally maps modern digests to fully qualified library names
    (taken from an artifact's ``linkReferences``) and fills ``resolved_name``.
    """
    names = names or {}
    _, body = _strip_prefix(bytecode)
    found: list[LinkPlaceholder] = []
    i, n = 0, len(body)
    while i < n:
        if body.startswith("__$", i):
            chunk = body[i : i + PLACEHOLDER_WIDTH]
            if len(chunk) < PLACEHOLDER_WIDTH or chunk[-3:] != "$__":
                raise LinkError(f"truncated placeholder at offset {i}: {chunk!r}")
            digest = chunk[3:37]
            if not _DIGEST_RE.match(digest):
                raise LinkError(f"malformed placeholder digest at offset {i}: {digest!r}")
            found.append(LinkPlaceholder(i, digest.lower(), True, names.get(digest.lower())))
            i += PLACEHOLDER_WIDTH
        elif body.startswith("__", i):
            chunk = body[i : i + PLACEHOLDER_WIDTH]
            if len(chunk) < PLACEHOLDER_WIDTH or chunk[-2:] != "__":
                raise LinkError(f"truncated placeholder at offset {i}: {chunk!r}")
            name = chunk[2:38].rstrip("_")
            if not name or "$" in name:
                raise LinkError(f"malformed legacy placeholder at offset {i}: {chunk!r}")
            found.append(LinkPlaceholder(i, name, False, name))
            i += PLACEHOLDER_WIDTH
        else:
            if body[i] not in _HEX:
                raise LinkError(f"non-hex character {body[i]!r} at offset {i}")
            i += 1
    if any(p.start % 2 for p in found):
        raise LinkError("placeholder not aligned to a byte boundary")
    if (n - PLACEHOLDER_WIDTH * len(found)) % 2:
        raise LinkError("odd number of hex digits in bytecode")
    return found


def link_library(bytecode: str, placeholder: LinkPlaceholder | str, address: str) -> str:
    """Replace every occurrence of ``placeholder`` with the lowercase address.

    ``placeholder`` may be a :class:`LinkPlaceholder` or its 40-char text.
    """
    try:
        addr = check_address(address)[2:].lower()
    except ValueError as exc:
        raise LinkError(str(exc)) from exc
    text = placeholder.text if isinstance(placeholder, LinkPlaceholder) else placeholder
    if len(text) != PLACEHOLDER_WIDTH:
        raise LinkError(f"placeholder must be {PLACEHOLDER_WIDTH} chars: {text!r}")
    prefix, body = _strip_prefix(bytecode)
    if text not in body:
        raise LinkError(f"placeholder {text} not found in bytecode")
    return prefix + body.replace(text, addr)


def matches_library(placeholder: LinkPlaceholder, fully_qualified_name: str) -> bool:
    """Whether ``placeholder`` stands for the library ``source.sol:Name``.

    Legacy placeholders also match on the bare contract name, since old
    compilers were inconsistent about qualifying it.
    """
    if placeholder.modern:
        return placeholder.id == placeholder_digest(fully_qualified_name)
    bare = fully_qualified_name.rsplit(":", 1)[-1]
    return placeholder.id in (fully_qualified_name[:36].rstrip("_"), bare[:36].rstrip("_"))


def link_all(bytecode: str, libraries: dict[str, str]) -> str:
    """Link every placeholder whose library appears in ``libraries`` (fq name -> address).

    Placeholders with no matching library are left alone; callers check
    :func:`extract_placeholders` afterwards when everything must be linked.
    """
    out = bytecode
    for ph in extract_placeholders(bytecode):
        for fq, addr in libraries.items():
            if matches_library(ph, fq):
                if ph.text in out:
                    out = link_library(out, ph, addr)
                break
    return out
