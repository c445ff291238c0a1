"""Constructor argument merging and deploy/call payload encoding."""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Any, Sequence

from katena.errors import AbiError, LinkError
from katena.linker.abi import AbiType, coerce, encode
from katena.linker.placeholders import extract_placeholders

if TYPE_CHECKING:
    from katena.model.artifacts import ContractArtifact


@dataclass(frozen=True)
class ConstructorBinding:
    signature: tuple[AbiType, ...]
    ref_slots: tuple[int, ...]
    user_slots: tuple[int, ...]


def constructor_binding(signature: Sequence[AbiType], n_refs: int, n_params: int) -> ConstructorBinding:
    """Decide which constructor positions take references and which take user parameters.

    References (addresses of other contracts) take the earliest ``address``
    slots, in requirement declaration order; user parameters fill whatever
    is left, left to right.
    """
    signature = tuple(signature)
    if n_refs + n_params != len(signature):
        raise AbiError(
            f"constructor takes {len(signature)} argument(s) but {n_refs} reference(s) "
            f"and {n_params} parameter(s) were given"
        )
    address_slots = [i for i, t in enumerate(signature) if t.kind == "address"]
    if n_refs > len(address_slots):
        bad = [i for i in range(len(signature)) if i not in address_slots][0]
        raise AbiError(
            f"{n_refs} reference(s) need address slots but the constructor has "
            f"{len(address_slots)}; slot {bad} is {signature[bad]}"
        )
    ref_slots = tuple(address_slots[:n_refs])
    user_slots = tuple(i for i in range(len(signature)) if i not in ref_slots)
    return ConstructorBinding(signature, ref_slots, user_slots)


def bind_constructor(artifact: ContractArtifact, refs: Sequence[str], params: Sequence[Any]) -> list[Any]:
    binding = constructor_binding(artifact.constructor, len(refs), len(params))
    values: list[Any] = [None] * len(binding.signature)
    for slot, ref in zip(binding.ref_slots, refs):
        values[slot] = ref
    for slot, param in zip(binding.user_slots, params):
        values[slot] = param
    out = []
    for i, (t, v) in enumerate(zip(binding.signature, values)):
        try:
            out.append(coerce(t, v))
        except AbiError as exc:
            raise AbiError(f"{artifact.name} constructor argument {i} ({t}): {exc}") from exc
    return out


def encode_constructor_call(bytecode: str, types: Sequence[AbiType | str], args: Sequence[Any]) -> bytes:
    """Creation payload: linked bytecode followed by the ABI-encoded arguments."""
    remaining = extract_placeholders(bytecode)
    if remaining:
        names = ", ".join(p.resolved_name or p.id for p in remaining)
        raise LinkError(f"bytecode still has unlinked placeholders: {names}")
    body = bytecode[2:] if bytecode.startswith(("0x", "0X")) else bytecode
    return bytes.fromhex(body) + encode(types, args)


def encode_function_call(
    artifact: ContractArtifact,
    function_name: str,
    args: Sequence[Any],
    arg_types: Sequence[AbiType | str] | None = None,
) -> bytes:
    fn = artifact.find_function(function_name, list(arg_types) if arg_types is not None else None, len(args))
    return bytes.fromhex(fn.selector[2:]) + encode(fn.inputs, args)
