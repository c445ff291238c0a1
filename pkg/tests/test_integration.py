import pytest

from conftest import DEV_ADDRESS, Deployment
from katena.chain import MockChain, RpcBackend
from katena.graph import upgrade_plan
from parity import chain_sequence, mock_sequence, nonce_of

pytestmark = pytest.mark.integration


def _rpc_run(dev_chain, load, store, tmp_path, name):
    rpc_dir, mock_dir = tmp_path / "rpc", tmp_path / "mock"
    rpc_dir.mkdir(), mock_dir.mkdir()
    start = nonce_of(dev_chain, DEV_ADDRESS)
    live = Deployment(load(name), store, rpc_dir, RpcBackend(dev_chain, chain_id=1337, poll_interval=0.05))
    mock = Deployment(load(name), store, mock_dir, MockChain())
    return live, mock, start


@pytest.mark.parametrize("name", ["registry_pair.yaml", "ticketing.yaml", "diamond.yaml", "proxy.yaml"])
def test_live_chain_matches_mock(dev_chain, load, store, tmp_path, name):
    live, mock, start = _rpc_run(dev_chain, load, store, tmp_path, name)
    report = live.deploy()
    assert report.ok, report.error
    assert mock.deploy().ok
    assert chain_sequence(dev_chain, live.record, DEV_ADDRESS, start) == mock_sequence(mock.chain, mock.record)
    deployed = [e for e in live.record.history if e.get("address") and "tx" in e]
    assert deployed
    for event in deployed:
        receipt = live.chain.rpc("eth_getTransactionReceipt", [event["tx"]])
        assert receipt["contractAddress"].lower() == event["address"].lower()

    again = live.deploy()
    assert again.ok and again.succeeded == 0
    assert nonce_of(dev_chain, DEV_ADDRESS) == start + len(mock.chain.call_log)


def test_live_upgrade_matches_mock(dev_chain, load, store, tmp_path):
    live, mock, start = _rpc_run(dev_chain, load, store, tmp_path, "ticketing.yaml")
    assert live.deploy().ok and mock.deploy().ok
    assert live.orchestrator().upgrade(upgrade_plan(live.graph, live.model, "math")).ok
    assert mock.orchestrator().upgrade(upgrade_plan(mock.graph, mock.model, "math")).ok
    assert chain_sequence(dev_chain, live.record, DEV_ADDRESS, start) == mock_sequence(mock.chain, mock.record)
