"""Persisted map from model nodes to on-chain state."""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

from filelock import FileLock

from katena.errors import OrchestrationError

RECORD_SUFFIX = ".katena-state.json"
STATUSES = ("deployed", "wired", "destroyed", "configured")


def record_path_for(model_path: str | Path) -> Path:
    model_path = Path(model_path)
    return model_path.with_name(model_path.stem + RECORD_SUFFIX)


@dataclass
class RecordEntry:
    status: str
    address: str | None = None
    bytecode_hash: str | None = None
    tx_ids: list[str] = field(default_factory=list)
    # "<function>-><target>" -> address the setter was last called with
    wired: dict[str, str] = field(default_factory=dict)
    # diamonds only: facet name -> {"address": ..., "selectors": [...]}
    facets: dict[str, dict] = field(default_factory=dict)
    superseded: list[str] = field(default_factory=list)
    config_hash: str | None = None

    @property
    def live(self) -> bool:
        return self.status in ("deployed", "wired") and self.address is not None

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "address": self.address,
            "bytecodeHash": self.bytecode_hash,
            "txIds": list(self.tx_ids),
            "wired": dict(self.wired),
            "facets": {k: dict(v) for k, v in self.facets.items()},
            "superseded": list(self.superseded),
            "configHash": self.config_hash,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RecordEntry":
        if data.get("status") not in STATUSES:
            raise OrchestrationError(f"record entry has unknown status {data.get('status')!r}")
        return cls(
            status=data["status"],
            address=data.get("address"),
            bytecode_hash=data.get("bytecodeHash"),
            tx_ids=list(data.get("txIds", [])),
            wired=dict(data.get("wired", {})),
            facets={k: dict(v) for k, v in data.get("facets", {}).items()},
            superseded=list(data.get("superseded", [])),
            config_hash=data.get("configHash"),
        )


class DeploymentRecord:
    """Entries plus an append-only history; written atomically when ``path`` is set."""

    def __init__(self, path: str | Path | None = None, model_hash: str = ""):
        self.path = Path(path) if path else None
        self.model_hash = model_hash
        self.entries: dict[str, RecordEntry] = {}
        self.history: list[dict] = []

    # -- queries -------------------------------------------------------------

    def get(self, node: str) -> RecordEntry | None:
        return self.entries.get(node)

    def address_of(self, node: str) -> str | None:
        entry = self.entries.get(node)
        return entry.address if entry and entry.live else None

    def destroyed(self) -> set[str]:
        return {n for n, e in self.entries.items() if e.status == "destroyed"}

    # -- mutation ------------------------------------------------------------

    def event(self, event: str, node: str, time: int, **extra) -> None:
        item = {"seq": len(self.history), "time": time, "event": event, "node": node}
        item.update({k: v for k, v in extra.items() if v is not None})
        self.history.append(item)

    # -- persistence ---------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "modelHash": self.model_hash,
            "entries": {n: e.to_dict() for n, e in sorted(self.entries.items())},
            "history": list(self.history),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_dict(cls, data: dict, path: str | Path | None = None) -> "DeploymentRecord":
        rec = cls(path, data.get("modelHash", ""))
        rec.entries = {n: RecordEntry.from_dict(e) for n, e in data.get("entries", {}).items()}
        rec.history = list(data.get("history", []))
        return rec

    @classmethod
    def load(cls, path: str | Path) -> "DeploymentRecord":
        path = Path(path)
        if not path.exists():
            return cls(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except ValueError as exc:
            raise OrchestrationError(f"record {path} is corrupt: {exc}") from None
        return cls.from_dict(data, path)

    def save(self) -> None:
        if self.path is None:
            return
        self.path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=self.path.parent, prefix=self.path.name, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                fh.write(self.to_json())
                fh.flush()
                os.fsync(fh.fileno())
            os.replace(tmp, self.path)
        except BaseException:
            Path(tmp).unlink(missing_ok=True)
            raise

    def lock(self, timeout: float = 10.0) -> FileLock | _NullLock:
        """Exclusive lock held for a whole orchestrator run."""
        if self.path is None:
            return _NullLock()
        return FileLock(str(self.path) + ".lock", timeout=timeout)


class _NullLock:
    def __enter__(self):
        return self

    def __exit__(self, *exc):
        return False
