"""Compiled contract artifacts: parsed ABI plus (possibly unlinked) bytecode."""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from katena.errors import AbiError, ArtifactError, LinkError
from katena.hashing import selector
from katena.linker.abi import AbiType, canonical_signature, type_from_abi_param
from katena.linker.placeholders import extract_placeholders, placeholder_digest


@dataclass(frozen=True)
class AbiFunction:
    name: str
    inputs: tuple[AbiType, ...]
    state_mutability: str = "nonpayable"

    @property
    def signature(self) -> str:
        return canonical_signature(self.name, self.inputs)

    @property
    def selector(self) -> str:
        return "0x" + selector(self.signature).hex()


@dataclass(frozen=True)
class ContractArtifact:
    name: str
    abi: tuple[dict, ...]
    constructor: tuple[AbiType, ...]
    functions: tuple[AbiFunction, ...]
    bytecode: str  # hex, no 0x prefix; may contain link placeholders
    source_name: str = ""
    contract_name: str = ""
    link_names: dict[str, str] = field(default_factory=dict, compare=False)

    @property
    def fully_qualified_name(self) -> str:
        cname = self.contract_name or self.name
        return f"{self.source_name}:{cname}" if self.source_name else cname

    @property
    def constructor_signature(self) -> list[str]:
        return [str(t) for t in self.constructor]

    def placeholders(self):
        return extract_placeholders(self.bytecode, self.link_names)

    def find_function(self, name: str, arg_types: list[AbiType | str] | None = None, arity: int | None = None) -> AbiFunction:
        """Resolve an overload: by name, then arity, then exact canonical types."""
        candidates = [f for f in self.functions if f.name == name]
        if not candidates:
            raise AbiError(f"{self.name}: no function named {name!r}")
        if arg_types is not None:
            arity = len(arg_types)
        if arity is not None:
            candidates = [f for f in candidates if len(f.inputs) == arity]
            if not candidates:
                raise AbiError(f"{self.name}: no overload of {name} takes {arity} argument(s)")
        if arg_types is not None:
            wanted = [str(t) for t in arg_types]
            candidates = [f for f in candidates if [str(t) for t in f.inputs] == wanted]
            if not candidates:
                raise AbiError(f"{self.name}: no overload {name}({','.join(wanted)})")
        if len(candidates) > 1:
            sigs = ", ".join(f.signature for f in candidates)
            raise AbiError(f"{self.name}: ambiguous overload for {name}: {sigs}")
        return candidates[0]


def parse_abi(abi: Any, name: str = "<abi>") -> tuple[tuple[AbiType, ...], tuple[AbiFunction, ...]]:
    if isinstance(abi, str):
        try:
            abi = json.loads(abi)
        except json.JSONDecodeError as exc:
            raise ArtifactError(f"{name}: ABI is not valid JSON: {exc}") from exc
    if not isinstance(abi, list):
        raise ArtifactError(f"{name}: ABI must be a JSON list")
    constructor: tuple[AbiType, ...] = ()
    functions = []
    try:
        for entry in abi:
            if not isinstance(entry, dict):
                raise ArtifactError(f"{name}: ABI entries must be objects")
            kind = entry.get("type", "function")
            inputs = tuple(type_from_abi_param(p) for p in entry.get("inputs", []))
            if kind == "constructor":
                constructor = inputs
            elif kind == "function":
                fname = entry.get("name")
                if not isinstance(fname, str) or not fname:
                    raise ArtifactError(f"{name}: function entry without a name")
                mut = entry.get("stateMutability") or ("view" if entry.get("constant") else "nonpayable")
                functions.append(AbiFunction(fname, inputs, mut))
    except AbiError as exc:
        raise ArtifactError(f"{name}: {exc}") from exc
    return constructor, tuple(functions)


def _link_names(refs: Any) -> dict[str, str]:
    out = {}
    if isinstance(refs, dict):
        for source, libs in refs.items():
            if isinstance(libs, dict):
                for lib in libs:
                    fq = f"{source}:{lib}"
                    out[placeholder_digest(fq)] = fq
    return out


def artifact_from_json(data: dict, name: str) -> ContractArtifact:
    if not isinstance(data, dict) or "abi" not in data:
        raise ArtifactError(f"{name}: artifact needs an 'abi' field")
    refs = data.get("linkReferences")
    bytecode = data.get("bytecode")
    if bytecode is None:
        evm_bc = data.get("evm", {}).get("bytecode", {})
        bytecode = evm_bc.get("object")
        refs = refs or evm_bc.get("linkReferences")
    if isinstance(bytecode, dict):
        refs = refs or bytecode.get("linkReferences")
        bytecode = bytecode.get("object")
    if not isinstance(bytecode, str):
        raise ArtifactError(f"{name}: artifact needs a 'bytecode' string (flat or evm.bytecode.object)")
    if bytecode.startswith(("0x", "0X")):
        bytecode = bytecode[2:]
    constructor, functions = parse_abi(data["abi"], name)
    link_names = _link_names(refs)
    try:
        extract_placeholders(bytecode, link_names)
    except LinkError as exc:
        raise ArtifactError(f"{name}: invalid bytecode: {exc}") from exc
    return ContractArtifact(
        name=name,
        abi=tuple(data["abi"]),
        constructor=constructor,
        functions=functions,
        bytecode=bytecode,
        source_name=data.get("sourceName", "") or "",
        contract_name=data.get("contractName", "") or name,
        link_names=link_names,
    )


def load_artifact(path: str | Path) -> ContractArtifact:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ArtifactError(f"cannot read artifact {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ArtifactError(f"{path}: not valid JSON: {exc}") from exc
    return artifact_from_json(data, path.stem)


class ArtifactStore:
    """Directory of ``<Name>.json`` artifacts; ``abi: "Voting"`` resolves to ``Voting.json``."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self._cache: dict[str, ContractArtifact] = {}
        self._lock = threading.Lock()

    def path_for(self, ref: str) -> Path:
        if ref.endswith(".json") or "/" in ref:
            p = Path(ref)
            return p if p.is_absolute() else self.directory / p
        return self.directory / f"{ref}.json"

    def exists(self, ref: str) -> bool:
        return self.path_for(ref).is_file()

    def get(self, ref: str) -> ContractArtifact:
        with self._lock:
            if ref not in self._cache:
                self._cache[ref] = load_artifact(self.path_for(ref))
            return self._cache[ref]
