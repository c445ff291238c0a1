from __future__ import annotations

import os
import shutil
import socket
import subprocess
import sys
import time
from pathlib import Path

import pytest
import requests

sys.path.insert(0, str(Path(__file__).parent))

from katena.chain import MockChain  # noqa: E402
from katena.graph import build_dependency_graph, deployment_plan  # noqa: E402
from katena.model import ArtifactStore, load_inputs, parse_model  # noqa: E402
from katena.orchestrator import DeploymentRecord, Orchestrator  # noqa: E402

FIXTURES = Path(__file__).parent / "fixtures"
DEV_KEY = "0xac0974bec39a17e36ba4a6b4d238ff944bacb478cbed5efcae784d7bf4f2ff80"
DEV_ADDRESS = "0xf39Fd6e51aad88F6F4ce6aB8827279cffFb92266"
REFUND = "0x70997970C51812dc3A010C7d01b50e0d17dc79C8"


@pytest.fixture(scope="session")
def inputs():
    return load_inputs(FIXTURES / "inputs.yaml")


@pytest.fixture(scope="session")
def store():
    return ArtifactStore(FIXTURES / "artifacts")


@pytest.fixture
def load(inputs):
    def _load(name: str):
        return parse_model((FIXTURES / name).read_text(), inputs)

    return _load


class Deployment:
    """A model deployed on a fresh mock into a scratch directory."""

    def __init__(self, model, store, directory: Path, chain: MockChain | None = None):
        self.model = model
        self.graph = build_dependency_graph(model)
        self.plan = deployment_plan(self.graph, model)
        self.store = store
        self.chain = chain or MockChain()
        self.dir = directory
        self.record = DeploymentRecord(directory / "model.katena-state.json", model.source_hash)

    def orchestrator(self, **kwargs):
        return Orchestrator(self.model, self.chain, self.store, self.record, **kwargs)

    def deploy(self, **kwargs):
        return self.orchestrator(**kwargs).deploy(self.plan)

    def address(self, node):
        return self.record.address_of(node)

    def node_of(self, address):
        for name, entry in self.record.entries.items():
            if entry.address == address or address in entry.superseded:
                return name
        return None


@pytest.fixture
def deployment(load, store, tmp_path):
    counter = iter(range(1000))

    def _make(name: str, chain: MockChain | None = None) -> Deployment:
        directory = tmp_path / f"run{next(counter)}"
        directory.mkdir()
        return Deployment(load(name), store, directory, chain)

    return _make


def _free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def _wait_rpc(url: str, deadline: float) -> bool:
    while time.time() < deadline:
        try:
            requests.post(url, json={"jsonrpc": "2.0", "id": 1, "method": "eth_chainId", "params": []}, timeout=1)
            return True
        except requests.RequestException:
            time.sleep(0.3)
    return False


@pytest.fixture(scope="session")
def dev_chain():
    """URL of a live dev chain: KATENA_DEV_RPC_URL, or a ganache started for the session.

    Skips when neither is available.  The dev key must be funded on an
    external chain (it is on the usual local dev chains).
    """
    url = os.environ.get("KATENA_DEV_RPC_URL")
    if url:
        yield url
        return
    exe = os.environ.get("KATENA_GANACHE") or shutil.which("ganache")
    if not exe:
        pytest.skip("no dev chain: set KATENA_DEV_RPC_URL or put ganache on PATH")
    port = _free_port()
    proc = subprocess.Popen(
        [exe, "--port", str(port), "--chain.chainId", "1337", "--logging.quiet",
         "--wallet.accounts", f"{DEV_KEY},1000000000000000000000"],
        stdout=subprocess.DEVNULL,
        stderr=subprocess.DEVNULL,
    )
    url = f"http://127.0.0.1:{port}"
    try:
        if not _wait_rpc(url, time.time() + 60):
            pytest.skip("ganache did not come up")
        yield url
    finally:
        proc.terminate()
        try:
            proc.wait(10)
        except subprocess.TimeoutExpired:
            proc.kill()
