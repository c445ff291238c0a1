"""Run deployment, upgrade and destroy plans against a backend."""

from __future__ import annotations

import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from filelock import Timeout

from katena.chain.base import ChainBackend, EndpointInfo
from katena.chain.wallet import SigningWallet, wallet_from_node
from katena.errors import KatenaError, OrchestrationError
from katena.graph import (
    CALL_WIRE,
    CONFIGURE_OFFCHAIN,
    DEPLOY_ACTIONS,
    DESTROY,
    DIAMOND_CUT_ADD,
    DIAMOND_CUT_REMOVE,
    DIAMOND_CUT_REPLACE,
    DeploymentPlan,
    Step,
    UpgradePlan,
)
from katena.hashing import keccak256
from katena.linker.binding import bind_constructor, encode_constructor_call, encode_function_call
from katena.linker.placeholders import link_all
from katena.model.artifacts import ArtifactStore
from katena.model.types import DeploymentModel, Kind, NodeInstance, Relation
from katena.orchestrator.offchain import emit_offchain_config
from katena.orchestrator.record import DeploymentRecord, RecordEntry
from katena.patterns import (
    CutAction,
    FacetCut,
    cut_signature,
    encode_cut,
    facet_selectors,
    plan_diamond_wiring,
    plan_facet_removal,
    plan_facet_replacement,
    wire_proxy,
)

log = logging.getLogger(__name__)

EXECUTED, SKIPPED, FAILED = "executed", "skipped", "failed"


@dataclass
class StepOutcome:
    index: int
    step: Step
    status: str
    duration: float
    tx: str | None = None
    address: str | None = None
    error: str | None = None
    exception: KatenaError | None = field(default=None, repr=False, compare=False)

    def to_dict(self) -> dict:
        out = {"index": self.index, "step": self.step.to_dict(), "status": self.status}
        for key, value in (("tx", self.tx), ("address", self.address), ("error", self.error)):
            if value is not None:
                out[key] = value
        return out


@dataclass
class ExecutionReport:
    operation: str
    outcomes: list[StepOutcome]
    record: DeploymentRecord
    error: str | None = None
    exception: KatenaError | None = field(default=None, repr=False)
    endpoint: EndpointInfo | None = None
    warnings: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return self.error is None

    def count(self, status: str) -> int:
        return sum(1 for o in self.outcomes if o.status == status)

    @property
    def attempted(self) -> int:
        return self.count(EXECUTED) + self.count(FAILED)

    @property
    def succeeded(self) -> int:
        return self.count(EXECUTED)

    @property
    def failed(self) -> int:
        return self.count(FAILED)

    @property
    def failed_index(self) -> int | None:
        return next((o.index for o in self.outcomes if o.status == FAILED), None)

    def executed_steps(self) -> list[Step]:
        return [o.step for o in self.outcomes if o.status == EXECUTED]

    def to_dict(self, include_record: bool = True) -> dict:
        out: dict[str, Any] = {
            "operation": self.operation,
            "ok": self.ok,
            "attempted": self.attempted,
            "succeeded": self.succeeded,
            "failed": self.failed,
            "skipped": self.count(SKIPPED),
            "failedIndex": self.failed_index,
            "error": self.error,
            "steps": [o.to_dict() for o in self.outcomes],
            "warnings": list(self.warnings),
        }
        if self.endpoint is not None:
            out["endpoint"] = self.endpoint.to_dict()
        if include_record:
            out["record"] = self.record.to_dict()
        return out


class _Skip(Exception):
    """Raised by a step handler when the record shows the step is already done."""


class Orchestrator:
    """Executes plans for one model against one backend, keeping ``record`` current.

    Steps run in plan order.  With ``parallel=True`` the steps of one
    deployment layer run concurrently; the mock's addresses then depend on
    thread scheduling.
    """

    def __init__(
        self,
        model: DeploymentModel,
        backend: ChainBackend,
        artifacts: ArtifactStore,
        record: DeploymentRecord | None = None,
        *,
        secrets: Mapping[str, Any] | None = None,
        config_dir: str | Path | None = None,
        parallel: bool = False,
        max_workers: int = 8,
        lock_timeout: float = 10.0,
    ):
        self.model = model
        self.backend = backend
        self.artifacts = artifacts
        self.record = record if record is not None else DeploymentRecord(None, model.source_hash)
        self.secrets = dict(secrets or {})
        if config_dir is None and self.record.path is not None:
            config_dir = self.record.path.parent
        self.config_dir = Path(config_dir) if config_dir is not None else None
        self.parallel = parallel
        self.max_workers = max_workers
        self.lock_timeout = lock_timeout
        self._wallets: dict[str, SigningWallet] = {}
        self._checked_diamonds: set[str] = set()
        self._lock = threading.RLock()
        self._info: EndpointInfo | None = None

    # -- public entry points --------------------------------------------------

    def deploy(self, plan: DeploymentPlan) -> ExecutionReport:
        return self._run("deploy", plan.layers, force=(), parallel=self.parallel, warnings=plan.warnings)

    def upgrade(self, plan: UpgradePlan) -> ExecutionReport:
        missing = [n for n in plan.redeploy_set if self.record.address_of(n) is None]
        if missing:
            raise OrchestrationError(f"upgrade needs a deployed record entry for {', '.join(missing)}")
        layers = [(s,) for s in plan.steps()]
        return self._run("upgrade", layers, force=set(plan.redeploy_set), parallel=False, warnings=plan.warnings)

    def destroy(self, steps: Sequence[Step]) -> ExecutionReport:
        for s in steps:
            if s.action == DESTROY and self.record.address_of(s.node) is None:
                raise OrchestrationError(f"cannot destroy {s.node!r}: it is not deployed")
        return self._run("destroy", [(s,) for s in steps], force=(), parallel=False)

    # -- run loop -----------------------------------------------------------

    def _run(self, operation, layers, force, parallel, warnings=()) -> ExecutionReport:
        outcomes: list[StepOutcome] = []
        report = ExecutionReport(operation, outcomes, self.record, warnings=tuple(warnings))
        try:
            with self.record.lock(self.lock_timeout):
                if self.model.source_hash:
                    self.record.model_hash = self.model.source_hash
                self._info = report.endpoint = self.backend.check_endpoint()
                index = 0
                for layer in layers:
                    numbered = list(enumerate(layer, start=index))
                    index += len(layer)
                    if parallel and len(numbered) > 1:
                        with ThreadPoolExecutor(max_workers=min(self.max_workers, len(numbered))) as pool:
                            results = list(pool.map(lambda item: self._execute(item[0], item[1], force), numbered))
                    else:
                        results = []
                        for i, step in numbered:
                            results.append(self._execute(i, step, force))
                            if results[-1].status == FAILED:
                                break
                    outcomes.extend(results)
                    failure = next((o for o in results if o.status == FAILED), None)
                    if failure is not None:
                        report.error = f"step {failure.index} ({failure.step}) failed: {failure.error}"
                        report.exception = failure.exception
                        break
        except Timeout:
            report.error = "record is locked by another run"
            report.exception = OrchestrationError(report.error)
        except KatenaError as exc:
            report.error = str(exc)
            report.exception = exc
        return report

    def _execute(self, index: int, step: Step, force) -> StepOutcome:
        started = time.perf_counter()
        try:
            tx, address = self._dispatch(step, force)
            status = EXECUTED
            error = None
        except _Skip:
            tx = address = error = None
            status = SKIPPED
        except KatenaError as exc:
            log.error("%s failed: %s", step, exc)
            return StepOutcome(index, step, FAILED, time.perf_counter() - started, error=str(exc), exception=exc)
        return StepOutcome(index, step, status, time.perf_counter() - started, tx, address, error)

    def _dispatch(self, step: Step, force) -> tuple[str | None, str | None]:
        if step.action in DEPLOY_ACTIONS:
            return self._deploy(step, step.node in force)
        if step.action == CALL_WIRE:
            return self._wire(step)
        if step.action in (DIAMOND_CUT_ADD, DIAMOND_CUT_REPLACE):
            return self._attach_facet(step)
        if step.action == DIAMOND_CUT_REMOVE:
            return self._detach_facet(step)
        if step.action == CONFIGURE_OFFCHAIN:
            return self._configure(step)
        if step.action == DESTROY:
            return self._destroy(step)
        raise OrchestrationError(f"unknown step action {step.action!r}")

    # -- helpers ------------------------------------------------------------

    def _now(self) -> int:
        return self.backend.now()

    def _wallet(self, node: NodeInstance) -> SigningWallet:
        names = node.targets(Relation.USE_WALLET)
        if len(names) != 1:
            raise OrchestrationError(f"{node.name}: needs exactly one useWallet requirement")
        with self._lock:
            if names[0] not in self._wallets:
                self._wallets[names[0]] = wallet_from_node(self.model[names[0]], self.secrets, self.model.inputs)
            return self._wallets[names[0]]

    def _address(self, name: str) -> str:
        node = self.model[name]
        if node.kind is Kind.SMART_CONTRACT_REFERENCE:
            return node.properties["address"]
        address = self.record.address_of(name)
        if address is None:
            raise OrchestrationError(f"{name!r} has no deployed address in the record")
        return address

    def _live_entry(self, name: str) -> RecordEntry:
        entry = self.record.get(name)
        if entry is None or not entry.live:
            raise OrchestrationError(f"{name!r} is not deployed")
        return entry

    def _commit(self, event: str, node: str, **extra) -> None:
        self.record.event(event, node, self._now(), **extra)
        self.record.save()

    def creation_payload(self, node: NodeInstance) -> bytes:
        """Create phase: resolve the artifact, link libraries, bind the constructor."""
        art = self.artifacts.get(node.abi)
        libraries = {}
        for lib in node.targets(Relation.USE_LIBRARY):
            libraries[self.artifacts.get(self.model[lib].abi).fully_qualified_name] = self._address(lib)
        linked = link_all(art.bytecode, libraries)
        if node.kind is Kind.LIBRARY:
            args: list = []
        else:
            refs = node.targets(Relation.USE_CONTRACT_IN_CONSTRUCTOR, Relation.USE_REFERENCE_IN_CONSTRUCTOR)
            if node.kind is Kind.DIAMOND:
                refs = node.targets(Relation.USE_CUT) + refs
            args = bind_constructor(art, [self._address(r) for r in refs], node.parameters)
        return encode_constructor_call(linked, art.constructor, args)

    # -- step handlers ------------------------------------------------------

    def _deploy(self, step: Step, forced: bool):
        name = step.node
        node = self.model[name]
        with self._lock:
            entry = self.record.get(name)
            if entry is not None and entry.status == "destroyed":
                raise OrchestrationError(f"{name!r} was destroyed; destroyed nodes are not redeployed")
            payload = self.creation_payload(node)
        digest = "0x" + keccak256(payload).hex()
        if entry is not None and entry.live and entry.bytecode_hash == digest and not forced:
            raise _Skip
        result = self.backend.deploy(self._wallet(node), payload)
        with self._lock:
            fresh = RecordEntry("deployed", result.address, digest, [result.tx_id])
            if entry is not None:
                fresh.superseded = list(entry.superseded)
                if entry.live:
                    fresh.superseded.append(entry.address)
            self.record.entries[name] = fresh
            self._commit("deployed", name, address=result.address, tx=result.tx_id,
                         supersedes=entry.address if entry is not None and entry.live else None)
        return result.tx_id, result.address

    def _wire(self, step: Step):
        node = self.model[step.node]
        with self._lock:
            entry = self._live_entry(step.node)
            target_address = self._address(step.target)
            key = f"{step.function}->{step.target}"
            if entry.wired.get(key) == target_address:
                raise _Skip
            art = self.artifacts.get(node.abi)
        if node.kind is Kind.PROXY and step.target in node.targets(Relation.IMPLEMENTATION):
            calldata = wire_proxy(node, target_address, art).calldata
        else:
            calldata = encode_function_call(art, step.function, [target_address], ["address"])
        result = self.backend.call(self._wallet(node), entry.address, calldata)
        with self._lock:
            entry.wired[key] = target_address
            entry.status = "wired"
            entry.tx_ids.append(result.tx_id)
            self._commit("wired", step.node, target=step.target, function=step.function, tx=result.tx_id)
        return result.tx_id, None

    def _diamond_call(self, diamond: NodeInstance, entry: RecordEntry, cuts: list[FacetCut]):
        cut_node = self.model[diamond.targets(Relation.USE_CUT)[0]]
        signature = cut_signature(self.artifacts.get(cut_node.abi))
        return self.backend.call(self._wallet(diamond), entry.address, encode_cut(cuts, signature))

    def _attach_facet(self, step: Step):
        diamond = self.model[step.node]
        facet = step.target
        with self._lock:
            if diamond.name not in self._checked_diamonds:
                plan_diamond_wiring(diamond, self.model, self.artifacts)  # rejects selector collisions
                self._checked_diamonds.add(diamond.name)
            entry = self._live_entry(diamond.name)
            address = self._address(facet)
            exclude = next(r.exclude for r in diamond.requires(Relation.USE_FACET) if r.target == facet)
            selectors = facet_selectors(self.artifacts.get(self.model[facet].abi), exclude)
            current = entry.facets.get(facet)
            if current and current["address"] == address and sorted(current["selectors"]) == selectors:
                raise _Skip
            if current:
                cuts = plan_facet_replacement(facet, current["selectors"], selectors)
            else:
                cuts = [FacetCut(facet, CutAction.ADD, tuple(selectors))]
            cuts = [c if c.action is CutAction.REMOVE else c.resolved(address) for c in cuts]
        result = self._diamond_call(diamond, entry, cuts)
        with self._lock:
            entry.facets[facet] = {"address": address, "selectors": selectors}
            entry.status = "wired"
            entry.tx_ids.append(result.tx_id)
            actions = ",".join(c.action.name for c in cuts)
            self._commit("diamond_cut", diamond.name, target=facet, cut=actions, tx=result.tx_id)
        return result.tx_id, None

    def _detach_facet(self, step: Step):
        diamond = self.model[step.node]
        with self._lock:
            entry = self._live_entry(diamond.name)
            attached = {k: v["selectors"] for k, v in entry.facets.items()}
            cut = plan_facet_removal(diamond.name, step.target, attached)
        result = self._diamond_call(diamond, entry, [cut])
        with self._lock:
            del entry.facets[step.target]
            entry.tx_ids.append(result.tx_id)
            self._commit("diamond_cut", diamond.name, target=step.target, cut=CutAction.REMOVE.name, tx=result.tx_id)
        return result.tx_id, None

    def _configure(self, step: Step):
        node = self.model[step.node]
        with self._lock:
            _, digest, path = emit_offchain_config(node, self.model, self.record, self._info, self.config_dir)
            entry = self.record.get(node.name)
            if entry is not None and entry.status == "configured" and entry.config_hash == digest:
                raise _Skip
            self.record.entries[node.name] = RecordEntry("configured", config_hash=digest)
            self._commit("configured", node.name, config=path.name if path else None)
        return None, None

    def _destroy(self, step: Step):
        node = self.model[step.node]
        with self._lock:
            entry = self._live_entry(node.name)
            art = self.artifacts.get(node.abi)
        refund = node.refund_address
        if not refund:
            raise OrchestrationError(f"{node.name}: destroyFunction without refundAddress")
        fn = art.find_function(step.function)
        args = [refund] if fn.inputs else []
        calldata = encode_function_call(art, step.function, args, [str(t) for t in fn.inputs])
        result = self.backend.destroy(self._wallet(node), entry.address, calldata, refund)
        with self._lock:
            entry.status = "destroyed"
            entry.tx_ids.append(result.tx_id)
            self._commit("destroyed", node.name, address=entry.address, refund=refund, tx=result.tx_id)
        return result.tx_id, None


def execute_deploy(plan: DeploymentPlan, model, backend, artifacts, record=None, **kwargs) -> ExecutionReport:
    return Orchestrator(model, backend, artifacts, record, **kwargs).deploy(plan)


def execute_upgrade(plan: UpgradePlan, model, backend, artifacts, record, **kwargs) -> ExecutionReport:
    return Orchestrator(model, backend, artifacts, record, **kwargs).upgrade(plan)


def execute_destroy(steps: Iterable[Step], model, backend, artifacts, record, **kwargs) -> ExecutionReport:
    return Orchestrator(model, backend, artifacts, record, **kwargs).destroy(list(steps))
