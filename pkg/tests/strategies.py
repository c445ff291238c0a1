"""Hypothesis strategies producing random, hard-acyclic deployment models."""

from __future__ import annotations

from hypothesis import strategies as st

from katena.model import parse_model_data

HARD = {"useLibrary", "useContractInConstructor"}


@st.composite
def model_docs(draw, max_nodes: int = 12):
    """(document, hard edge list) with hard edges only from later to earlier nodes.

    Names are drawn independently of creation order so that sorting by name
    says nothing about dependency order.  Lazy edges go in either direction.
    """
    n = draw(st.integers(1, max_nodes))
    names = draw(st.lists(st.from_regex(r"[a-z][a-zA-Z0-9]{0,6}", fullmatch=True), min_size=n, max_size=n, unique=True))
    names = [f"c_{name}" for name in names]  # cannot clash with the context nodes
    kinds = [draw(st.sampled_from(["library", "contract", "contract"])) for _ in range(n)]
    nodes = {
        "net": {"type": "katena.nodes.network.ganache"},
        "wallet": {"type": "katena.nodes.wallet", "properties": {"privateKey": {"get_input": "key"}}},
    }
    hard_edges = []
    for j, name in enumerate(names):
        reqs = [{"useNetwork": "net"}, {"useWallet": "wallet"}]
        for i in range(j):
            if not draw(st.booleans()) or not draw(st.booleans()):
                continue  # keep graphs sparse-ish
            dep = names[i]
            if kinds[i] == "library":
                reqs.append({"useLibrary": dep})
                hard_edges.append((name, dep))
            elif kinds[j] == "contract":
                if draw(st.booleans()):
                    reqs.append({"useContractInConstructor": dep})
                    hard_edges.append((name, dep))
                else:
                    reqs.append({"useContract": {"node": dep, "functionName": "setPeer"}})
        if kinds[j] == "contract" and j + 1 < n and draw(st.booleans()):
            later = names[draw(st.integers(j + 1, n - 1))]
            if kinds[names.index(later)] == "contract":
                reqs.append({"useContract": {"node": later, "functionName": "setPeer"}})
        nodes[name] = {
            "type": "katena.nodes.library" if kinds[j] == "library" else "katena.nodes.smartcontract",
            "requirements": reqs,
            "properties": {"abi": "PeerLazy"},
        }
    contracts = [nm for nm, k in zip(names, kinds) if k == "contract"]
    if contracts and draw(st.booleans()):
        uses = draw(st.lists(st.sampled_from(contracts), min_size=1, max_size=3, unique=True))
        nodes["zfrontend"] = {"type": "katena.nodes.offchain", "requirements": [{"useContract": c} for c in uses]}
    order = draw(st.permutations(list(nodes)))
    return {k: nodes[k] for k in order}, hard_edges


def build(doc):
    return parse_model_data(doc, {"key": "0x" + "11" * 32})
