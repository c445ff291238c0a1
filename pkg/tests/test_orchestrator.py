import json
import threading

import pytest
from filelock import FileLock

import oracles
from conftest import FIXTURES, REFUND
from katena.chain import MockChain
from katena.errors import OrchestrationError
from katena.graph import DEPLOY_ACTIONS, build_dependency_graph, deployment_plan, destroy_plan, upgrade_plan
from katena.model import parse_model, parse_model_data
from katena.orchestrator import DeploymentRecord, build_offchain_config, execute_deploy
from parity import mock_sequence

FIXTURES_DEPLOYABLE = ["voting_deployable.yaml", "ticketing.yaml", "diamond.yaml", "proxy.yaml", "registry_pair.yaml", "cycle_lazy.yaml"]


def _sel(sig):
    return oracles.selector(sig)


def _upgrade(dep, target):
    plan = upgrade_plan(dep.graph, dep.model, target)
    return plan, dep.orchestrator().upgrade(plan)


# -- deploy --------------------------------------------------------------------


def test_voting_deploys_in_plan_order_and_writes_backend_config(deployment):
    dep = deployment("voting_deployable.yaml")
    report = dep.deploy()
    assert report.ok, report.error
    assert [dep.node_of(a) for a in dep.chain.deploy_sequence()] == ["mathLib", "randomGeneratorContract", "votingContract"]
    assert sorted(n for n, e in dep.record.entries.items() if e.address) == ["mathLib", "randomGeneratorContract", "votingContract"]
    assert dep.record.get("backend").status == "configured"
    payload = json.loads((dep.dir / "backend.config.json").read_text())
    assert payload["contracts"] == {"votingContract": dep.address("votingContract")}
    assert payload["endpoint"]["chainId"] == 1337
    assert report.failed_index is None
    json.dumps(report.to_dict())


def test_libraries_are_linked_and_constructor_refs_bound(deployment):
    dep = deployment("voting_deployable.yaml")
    dep.deploy()
    voting_payload = bytes.fromhex(dep.chain.call_log[2]["args"])
    lib = dep.address("mathLib")[2:].lower()
    assert lib in voting_payload.hex()
    tail = voting_payload[-96:]
    assert tail[12:32].hex() == dep.address("randomGeneratorContract")[2:].lower()
    assert int.from_bytes(tail[32:64], "big") == 100
    assert int.from_bytes(tail[64:96], "big") == 10**17


def test_ticketing_wire_follows_both_deployments(deployment):
    dep = deployment("ticketing.yaml")
    assert dep.deploy().ok
    seq = mock_sequence(dep.chain, dep.record)
    wire = seq.index(("tickets", _sel("setAdmin(address)")))
    assert wire > seq.index(("tickets", "deploy")) and wire > seq.index(("admin", "deploy"))
    assert seq.count(("tickets", _sel("setAdmin(address)"))) == 1
    assert dep.record.get("tickets").wired == {"setAdmin->admin": dep.address("admin")}
    config = json.loads((dep.dir / "frontend.config.json").read_text())
    assert config["hostedOn"] == "ipfs"
    assert config["contracts"] == {"events": dep.address("events"), "tickets": dep.address("tickets")}


def test_every_wired_edge_has_a_call_event(deployment):
    dep = deployment("ticketing.yaml")
    dep.deploy()
    for name, entry in dep.record.entries.items():
        for key in entry.wired:
            fn, target = key.split("->")
            assert any(e["event"] == "wired" and e["node"] == name and e["target"] == target and e["function"] == fn
                       for e in dep.record.history)


@pytest.mark.parametrize("name", FIXTURES_DEPLOYABLE)
def test_order_conformance(deployment, name):
    dep = deployment(name)
    assert dep.deploy().ok
    order = [dep.node_of(a) for a in dep.chain.deploy_sequence()]
    hard = [(e.source, e.target) for e in dep.graph.hard_edges()]
    assert oracles.is_linear_extension(order, hard) == []
    assert order == [s.node for s in dep.plan.steps() if s.action in DEPLOY_ACTIONS]


@pytest.mark.parametrize("name", FIXTURES_DEPLOYABLE)
def test_second_run_is_a_no_op(deployment, name):
    dep = deployment(name)
    dep.deploy()
    before_record, before_log = dep.record.to_json(), list(dep.chain.call_log)
    report = dep.deploy()
    assert report.ok and report.count("executed") == 0
    assert report.count("skipped") == len(dep.plan.steps())
    assert dep.record.to_json() == before_record and dep.chain.call_log == before_log


@pytest.mark.parametrize("name", FIXTURES_DEPLOYABLE)
def test_cold_runs_produce_identical_records(deployment, name):
    a, b = deployment(name), deployment(name)
    a.deploy()
    b.deploy()
    assert a.record.path.read_bytes() == b.record.path.read_bytes()


def test_changed_parameter_redeploys_only_that_node(deployment, inputs):
    dep = deployment("voting_deployable.yaml")
    dep.deploy()
    old = dep.address("votingContract")
    changed = parse_model((FIXTURES / "voting_deployable.yaml").read_text().replace("- 100\n", "- 200\n"), inputs)
    dep.model = changed
    dep.graph = build_dependency_graph(changed)
    dep.plan = deployment_plan(dep.graph, changed)
    report = dep.deploy()
    executed = [(s.action, s.node) for s in report.executed_steps()]
    assert executed == [("link_and_deploy", "votingContract"), ("configure_offchain", "backend")]
    assert dep.record.get("votingContract").superseded == [old]


# -- halting and resuming ---------------------------------------------------------


@pytest.mark.parametrize("name", ["ticketing.yaml", "diamond.yaml", "voting_deployable.yaml"])
def test_prefix_consistency_and_resume(deployment, name):
    full = deployment(name)
    full.deploy()
    total = len(full.chain.call_log)
    for k in range(total):
        halted = deployment(name, MockChain(fail_at_tx=k))
        report = halted.deploy()
        assert not report.ok and "injected" in report.error
        done = report.failed_index
        assert done == len(halted.record.history)  # first divergence between plan and record
        assert [o.index for o in report.outcomes if o.status == "executed"] == list(range(done))
        reference = deployment(name)
        reference.orchestrator().deploy(reference.plan.prefix(done))
        assert halted.record.to_json() == reference.record.to_json()
        assert halted.record.path.exists() == reference.record.path.exists() == (done > 0)
        if done:
            assert halted.record.path.read_text() == halted.record.to_json()
        # resume on the same chain once the fault clears
        halted.chain.fail_at_tx = None
        assert halted.deploy().ok
        assert halted.record.to_json() == full.record.to_json()


# -- upgrade -----------------------------------------------------------------------


def test_ticketing_upgrade_math(deployment):
    dep = deployment("ticketing.yaml")
    dep.deploy()
    before = {n: dep.address(n) for n in ("math", "utils", "admin", "events", "tickets")}
    log_start = len(dep.chain.call_log)
    plan, report = _upgrade(dep, "math")
    assert report.ok, report.error
    tail = mock_sequence(dep.chain, dep.record)[log_start:]
    redeployed = [role for role, sel in tail if sel == "deploy"]
    assert redeployed == ["math", "utils", "admin", "events"]
    assert tail.count(("tickets", _sel("setAdmin(address)"))) == 1
    assert ("tickets", "deploy") not in tail
    assert dep.address("tickets") == before["tickets"]
    for n in ("math", "utils", "admin", "events"):
        assert dep.address(n) != before[n]
        assert dep.record.get(n).superseded == [before[n]]
    last_wire = dep.chain.call_log[[i for i, (r, _) in enumerate(mock_sequence(dep.chain, dep.record)) if r == "tickets"][-1]]
    assert last_wire["args"][-40:] == dep.address("admin")[2:].lower()
    # no live wiring or config points at a superseded address
    superseded = {a for e in dep.record.entries.values() for a in e.superseded}
    assert not superseded & {a for e in dep.record.entries.values() for a in e.wired.values()}
    config = json.loads((dep.dir / "frontend.config.json").read_text())
    assert config["contracts"]["events"] == dep.address("events")
    assert not superseded & set(config["contracts"].values())


def test_upgrade_leaf_is_a_single_redeploy(deployment):
    dep = deployment("registry_pair.yaml")
    dep.deploy()
    start = len(dep.chain.call_log)
    _, report = _upgrade(dep, "resolver")
    assert report.ok
    assert [e["kind"] for e in dep.chain.call_log[start:]] == ["deploy"]


def test_upgrade_requires_record(deployment):
    dep = deployment("ticketing.yaml")
    with pytest.raises(OrchestrationError, match="upgrade needs"):
        _upgrade(dep, "math")


def test_proxy_upgrade_rewires_proxy(deployment):
    dep = deployment("proxy.yaml")
    dep.deploy()
    proxy = dep.address("boxProxy")
    _, report = _upgrade(dep, "box")
    assert report.ok
    assert dep.address("boxProxy") == proxy
    calls = [e for e in dep.chain.call_log if e["kind"] == "call"]
    assert [c["selector"] for c in calls] == [_sel("upgradeTo(address)")] * 2
    assert calls[-1]["args"][-40:] == dep.address("box")[2:].lower()


def test_facet_upgrade_replaces_routes(deployment):
    dep = deployment("diamond.yaml")
    dep.deploy()
    _, report = _upgrade(dep, "counter")
    assert report.ok
    routes = dep.chain.routes(dep.address("diamond"))
    assert routes[_sel("increment()")] == dep.address("counter")
    assert dep.record.get("diamond").facets["counter"]["address"] == dep.address("counter")


# -- diamonds and destroy ------------------------------------------------------------


def test_diamond_routes_after_deploy(deployment):
    dep = deployment("diamond.yaml")
    assert dep.deploy().ok
    routes = dep.chain.routes(dep.address("diamond"))
    loupe, counter = dep.address("diamondLoupe"), dep.address("counter")
    assert routes == {
        **{_sel(s): counter for s in ("increment()", "count()")},
        **{_sel(s): loupe for s in ("facets()", "facetFunctionSelectors(address)", "facetAddresses()", "facetAddress(bytes4)")},
    }
    cut_calls = [e for e in dep.chain.call_log if e["selector"] == "0x1f931c1c"]
    assert len(cut_calls) == 2


def test_destroy_facet_detaches_then_destroys(deployment):
    dep = deployment("diamond.yaml")
    dep.deploy()
    diamond, counter = dep.address("diamond"), dep.address("counter")
    steps = destroy_plan(dep.graph, dep.model, "counter")
    start = len(dep.chain.call_log)
    report = dep.orchestrator().destroy(steps)
    assert report.ok, report.error
    kinds = [(e["kind"], e["target"]) for e in dep.chain.call_log[start:]]
    assert kinds == [("call", diamond), ("destroy", counter)]
    assert dep.chain.call_log[-1]["refund"] == REFUND
    assert dep.chain.call_log[-1]["selector"] == _sel("kill(address)")
    assert set(dep.chain.routes(diamond).values()) == {dep.address("diamondLoupe")}
    assert dep.record.get("counter").status == "destroyed"
    assert "counter" not in dep.record.get("diamond").facets


def test_destroyed_nodes_are_never_redeployed(deployment):
    dep = deployment("ticketing.yaml")
    dep.deploy()
    assert dep.orchestrator().destroy(destroy_plan(dep.graph, dep.model, "tickets")).ok
    assert not dep.chain.is_alive(dep.record.get("tickets").address)
    report = dep.deploy()
    assert not report.ok and "destroyed" in report.error
    assert dep.record.get("tickets").status == "destroyed"


def test_destroy_requires_deployment(deployment):
    dep = deployment("ticketing.yaml")
    with pytest.raises(OrchestrationError, match="not deployed"):
        dep.orchestrator().destroy(destroy_plan(dep.graph, dep.model, "tickets"))


# -- off-chain payloads -------------------------------------------------------------


def test_offchain_without_contracts_has_endpoint_only():
    model = parse_model_data({
        "ipfs": {"type": "katena.nodes.offchain.decentralizedStorage"},
        "site": {"type": "katena.nodes.offchain", "requirements": [{"hostedOn": "ipfs"}]},
    })
    payload = build_offchain_config(model["site"], model, DeploymentRecord())
    assert payload == {"node": "site", "endpoint": {}, "contracts": {}, "hostedOn": "ipfs"}


def test_provider_secret_never_reaches_payload(inputs, store, tmp_path):
    doc = {
        "infura": {"type": "katena.nodes.network.nodeServiceProvider",
                   "properties": {"url": "https://net.example/v3", "secret": "TOPSECRET"}},
        "w": {"type": "katena.nodes.wallet", "properties": {"privateKey": {"get_input": "UserKeyEthereum"}}},
        "reg": {"type": "katena.nodes.smartcontract", "properties": {"abi": "Registry"},
                "requirements": [{"useNetwork": "infura"}, {"useWallet": "w"}]},
        "app": {"type": "katena.nodes.offchain", "requirements": [{"useContract": "reg"}]},
    }
    model = parse_model_data(doc, inputs)
    record = DeploymentRecord(tmp_path / "m.katena-state.json")
    report = execute_deploy(deployment_plan(build_dependency_graph(model), model), model, MockChain(), store, record)
    assert report.ok
    text = (tmp_path / "app.config.json").read_text()
    assert "TOPSECRET" not in text and json.loads(text)["endpoint"]["url"] == "https://net.example/v3"


# -- concurrency ------------------------------------------------------------------


def test_parallel_mode_deploys_everything_in_order(deployment):
    dep = deployment("ticketing.yaml")
    report = dep.deploy(parallel=True)
    assert report.ok
    order = [dep.node_of(a) for a in dep.chain.deploy_sequence()]
    assert oracles.is_linear_extension(order, [(e.source, e.target) for e in dep.graph.hard_edges()]) == []
    layer = dep.plan.layer_index()
    ranks = [layer[next(s for s in dep.plan.steps() if s.node == n and s.action in DEPLOY_ACTIONS)] for n in order]
    assert ranks == sorted(ranks)
    assert dep.deploy(parallel=True).count("executed") == 0


def test_record_lock_blocks_a_concurrent_run(deployment):
    dep = deployment("voting_deployable.yaml")
    held = threading.Event()
    release = threading.Event()

    def holder():
        with FileLock(str(dep.record.path) + ".lock"):
            held.set()
            release.wait(5)

    t = threading.Thread(target=holder)
    t.start()
    held.wait(5)
    try:
        report = dep.orchestrator(lock_timeout=0.2).deploy(dep.plan)
        assert not report.ok and "locked" in report.error
        assert dep.chain.call_log == []
    finally:
        release.set()
        t.join()
    assert dep.deploy().ok


def test_record_round_trip_and_corruption(tmp_path, deployment):
    dep = deployment("diamond.yaml")
    dep.deploy()
    loaded = DeploymentRecord.load(dep.record.path)
    assert loaded.to_json() == dep.record.to_json()
    bad = tmp_path / "bad.katena-state.json"
    bad.write_text("{")
    with pytest.raises(OrchestrationError, match="corrupt"):
        DeploymentRecord.load(bad)
